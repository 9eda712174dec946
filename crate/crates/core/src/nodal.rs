//! Sign-changing solutions: mountain pass between `−w` and `w`, least-energy
//! nodal estimates from seed families, equivariant solutions, and the
//! dumbbell experiment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{EnergyFunctional, Nonlinearity};
use crate::error::{Error, Result};
use crate::geometry::{is_point_symmetric, is_reflection_symmetric, DomainShape};
use crate::grid::{integrate_raw, laplacian_into, Field, Grid};
use crate::optimize::{
    exterior_sweep, metric_direction, newton_critical, DescentOptions, Symmetry, TRUNCATION,
};
use crate::solver::{
    best_multiple, config_hash, make_record, relax, solve_ground_state, Init, ProblemSpec,
    Provenance, Relaxed, SolutionRecord, SolveConfig, StageRecord,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodalLevel {
    MountainPass,
    LeastEnergyNodal,
    Equivariant,
}

impl NodalLevel {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodalLevel::MountainPass => "mountain_pass",
            NodalLevel::LeastEnergyNodal => "least_energy_nodal",
            NodalLevel::Equivariant => "equivariant",
        }
    }
}

/// A sign-changing critical point.
#[derive(Clone, Debug)]
pub struct NodalRecord {
    pub solution: SolutionRecord,
    pub level: NodalLevel,
    /// Level estimate. For `LeastEnergyNodal` this is an upper bound for the
    /// least nodal energy, since only a finite seed family is searched.
    pub estimate: f64,
    /// `∫u⁺` and `∫u⁻`.
    pub positive_mass: f64,
    pub negative_mass: f64,
    /// Ground-state energy `μ_p` on the same grid.
    pub ground_energy: f64,
    /// Path height after each iteration (mountain pass only).
    pub path_maxima: Vec<f64>,
    pub notes: Vec<String>,
}

impl NodalRecord {
    pub fn energy(&self) -> f64 {
        self.solution.energy()
    }

    pub fn field(&self) -> &Field {
        &self.solution.field
    }

    pub const CSV_HEADER: &'static str =
        "level,p,n,half_extent,energy,ground_energy,residual,positive_mass,negative_mass";

    pub fn csv_row(&self) -> String {
        let g = self.solution.grid();
        format!(
            "{},{:?},{},{:?},{:.12e},{:.12e},{:.6e},{:.8e},{:.8e}",
            self.level.as_str(),
            self.solution.p,
            g.n(),
            g.half_extent(),
            self.energy(),
            self.ground_energy,
            self.solution.report.residual,
            self.positive_mass,
            self.negative_mass
        )
    }
}

/// Settings of the path iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    /// Number of images `M`, endpoints included.
    pub images: usize,
    pub max_iter: usize,
    /// Stop once the gradient of the highest image, in the local metric, is
    /// below this fraction of its `H¹` norm.
    pub tol: f64,
    /// Smoothing used along the path when `p = 1`.
    pub eps: f64,
    /// Reparametrize by arclength every this many iterations.
    pub redistribute_every: usize,
    /// Stop after this many iterations without progress in the height.
    pub stall: usize,
    /// Energy evaluations per segment when measuring the height.
    pub samples: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            images: 17,
            max_iter: 3000,
            tol: 1e-3,
            eps: 1e-2,
            redistribute_every: 5,
            stall: 40,
            samples: 8,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.images < 3 {
            return Err(Error::InvalidInput(format!(
                "a path needs at least 3 images, got {}",
                self.images
            )));
        }
        if !(self.tol > 0.0)
            || !(self.eps > 0.0)
            || self.redistribute_every == 0
            || self.stall == 0
            || self.samples < 2
        {
            return Err(Error::InvalidInput(
                "path tolerances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Discretized path: a polyline through `M` images with fixed endpoints.
/// Its height is the largest energy over `samples` points on every segment,
/// so a coarse path cannot hide a barrier between two images.
#[derive(Clone, Debug)]
pub struct Path {
    grid: Grid,
    images: Vec<Vec<f64>>,
    energies: Vec<f64>,
    /// Highest sample on segment `k` (images `k`, `k + 1`) and its position.
    peaks: Vec<(f64, f64)>,
    samples: usize,
}

fn combine(a: &[f64], b: &[f64], th: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| (1.0 - th) * x + th * y)
        .collect()
}

fn l2_distance(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * grid.cell_volume()).sqrt()
}

/// Highest of `samples + 1` equispaced points on the segment `a → b`.
fn segment_peak(
    func: &EnergyFunctional,
    a: &[f64],
    b: &[f64],
    ea: f64,
    eb: f64,
    samples: usize,
) -> (f64, f64) {
    let mut best = if ea >= eb { (ea, 0.0) } else { (eb, 1.0) };
    for i in 1..samples {
        let th = i as f64 / samples as f64;
        let e = energy_of(func, &combine(a, b, th));
        if e > best.0 {
            best = (e, th);
        }
    }
    best
}

impl Path {
    /// Piecewise linear path `start → mid → end` with `images` images and
    /// `samples` evaluation intervals per segment.
    pub fn through(
        func: &EnergyFunctional,
        start: &[f64],
        mid: &[f64],
        end: &[f64],
        images: usize,
        samples: usize,
    ) -> Result<Self> {
        if images < 3 || samples < 2 {
            return Err(Error::InvalidInput(format!(
                "a path needs at least 3 images and 2 samples per segment, got {images} and {samples}"
            )));
        }
        let grid = *func.grid();
        let m = images - 1;
        let images: Vec<Vec<f64>> = (0..=m)
            .map(|j| {
                let t = 2.0 * j as f64 / m as f64;
                if t <= 1.0 {
                    combine(start, mid, t)
                } else {
                    combine(mid, end, t - 1.0)
                }
            })
            .collect();
        let mut path = Self {
            grid,
            energies: Vec::new(),
            peaks: Vec::new(),
            samples,
            images,
        };
        path.evaluate(func);
        Ok(path)
    }

    fn evaluate(&mut self, func: &EnergyFunctional) {
        self.energies = self.images.par_iter().map(|u| energy_of(func, u)).collect();
        self.peaks = (0..self.len() - 1)
            .into_par_iter()
            .map(|k| {
                segment_peak(
                    func,
                    &self.images[k],
                    &self.images[k + 1],
                    self.energies[k],
                    self.energies[k + 1],
                    self.samples,
                )
            })
            .collect();
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn image(&self, j: usize) -> Result<Field> {
        Field::from_values(self.grid, self.images[j].clone())
    }

    /// Segment holding the highest sample, and the position on it.
    pub fn peak(&self) -> (usize, f64) {
        let (k, &(_, th)) = self
            .peaks
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .expect("a path has at least two segments");
        (k, th)
    }

    /// Height of the path.
    pub fn max_energy(&self) -> f64 {
        self.peaks
            .iter()
            .map(|p| p.0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The highest sampled point.
    pub fn peak_point(&self) -> Vec<f64> {
        let (k, th) = self.peak();
        combine(&self.images[k], &self.images[k + 1], th)
    }

    /// Replaces images `k` and `k + 1` if every affected segment stays at or
    /// below `height`.
    fn try_replace(
        &mut self,
        func: &EnergyFunctional,
        k: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        height: f64,
    ) -> bool {
        let ea = energy_of(func, &a);
        let eb = energy_of(func, &b);
        let mut images = [self.images[k].clone(), self.images[k + 1].clone()];
        images[0] = a;
        images[1] = b;
        let mut energies = [ea, eb];
        if k == 0 {
            energies[0] = self.energies[0];
        }
        if k + 2 == self.len() {
            energies[1] = self.energies[k + 1];
        }
        let mut new_peaks = Vec::new();
        if k >= 1 {
            let p = segment_peak(
                func,
                &self.images[k - 1],
                &images[0],
                self.energies[k - 1],
                energies[0],
                self.samples,
            );
            if p.0 > height {
                return false;
            }
            new_peaks.push((k - 1, p));
        }
        let p = segment_peak(
            func,
            &images[0],
            &images[1],
            energies[0],
            energies[1],
            self.samples,
        );
        if p.0 > height {
            return false;
        }
        new_peaks.push((k, p));
        if k + 2 < self.len() {
            let p = segment_peak(
                func,
                &images[1],
                &self.images[k + 2],
                energies[1],
                self.energies[k + 2],
                self.samples,
            );
            if p.0 > height {
                return false;
            }
            new_peaks.push((k + 1, p));
        }
        let [a, b] = images;
        self.images[k] = a;
        self.images[k + 1] = b;
        self.energies[k] = energies[0];
        self.energies[k + 1] = energies[1];
        for (s, p) in new_peaks {
            self.peaks[s] = p;
        }
        true
    }

    /// Equal-arclength reparametrization in `L²`; rejected if it would raise
    /// the height by more than `1e−10`.
    fn redistribute(&mut self, func: &EnergyFunctional) -> bool {
        let m = self.len() - 1;
        let mut s = vec![0.0; m + 1];
        for j in 0..m {
            s[j + 1] = s[j] + l2_distance(&self.grid, &self.images[j + 1], &self.images[j]);
        }
        let total = s[m];
        if !(total > 0.0) {
            return false;
        }
        let mut images = self.images.clone();
        let mut seg = 0;
        for (j, image) in images.iter_mut().enumerate().take(m).skip(1) {
            let target = total * j as f64 / m as f64;
            while seg + 1 < m && s[seg + 1] < target {
                seg += 1;
            }
            let len = s[seg + 1] - s[seg];
            let th = if len > 0.0 {
                ((target - s[seg]) / len).clamp(0.0, 1.0)
            } else {
                0.0
            };
            *image = combine(&self.images[seg], &self.images[seg + 1], th);
        }
        let mut next = Self {
            grid: self.grid,
            images,
            energies: Vec::new(),
            peaks: Vec::new(),
            samples: self.samples,
        };
        next.evaluate(func);
        if next.max_energy() > self.max_energy() + 1e-10 {
            return false;
        }
        *self = next;
        true
    }
}

/// Relative height decrease that counts as progress in [`climb`].
const STALL_FRACTION: f64 = 1e-4;

/// Outcome of [`climb`].
#[derive(Clone, Debug)]
pub struct Climb {
    /// Highest sampled point of the final path.
    pub point: Vec<f64>,
    /// Path height after each iteration.
    pub maxima: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn energy_of(func: &EnergyFunctional, u: &[f64]) -> f64 {
    let mut lap = vec![0.0; u.len()];
    laplacian_into(func.grid(), u, &mut lap);
    let mut scratch = vec![0.0; u.len()];
    func.smooth_part(u, &lap, &mut scratch) + func.convex_part(u)
}

/// Lowers the path at its highest point `x = (1 − θ) σ_k + θ σ_{k+1}` by a
/// gradient step in the metric `−Δ_h + diag(f′(x))`, shared between the two
/// images by their barycentric weights. Steps that would raise any sample
/// of the touched segments above the current height are refused, so the
/// height never increases.
pub fn climb(func: &EnergyFunctional, path: &mut Path, cfg: &PathConfig) -> Climb {
    let grid = *func.grid();
    let len = grid.len();
    let w = grid.cell_volume();
    let h2 = grid.spacing() * grid.spacing();
    let nl = *func.nonlinearity();
    let mut maxima = Vec::new();
    let mut lap = vec![0.0; len];
    let mut g = vec![0.0; len];
    let mut alpha: f64 = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut best = path.max_energy();
    let mut since_best = 0;
    let last = path.len() - 1;
    while iterations < cfg.max_iter {
        let (k, th) = path.peak();
        let x = combine(&path.images[k], &path.images[k + 1], th);
        let ex = energy_of(func, &x);
        laplacian_into(&grid, &x, &mut lap);
        func.l2_gradient(&x, &lap, &mut g);
        let mut shift = vec![0.0; len];
        let mut free = vec![false; len];
        for i in 0..len {
            if grid.is_boundary(i) {
                continue;
            }
            let c = nl.df(x[i]);
            if c * h2 <= TRUNCATION {
                free[i] = true;
                shift[i] = c;
            }
        }
        let mut d = metric_direction(&grid, &shift, &free, &g);
        let full: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() * w;
        let norm: f64 = -x.iter().zip(&lap).map(|(a, b)| a * b).sum::<f64>() * w;
        if full.max(0.0).sqrt() <= cfg.tol * norm.max(0.0).sqrt() {
            converged = true;
            break;
        }
        // Remove the component along the path so the point moves across the
        // path instead of sliding down it; the projection is orthogonal in
        // the same metric, which keeps `d` a descent direction.
        let t: Vec<f64> = (0..len)
            .map(|i| {
                if free[i] {
                    path.images[k + 1][i] - path.images[k][i]
                } else {
                    0.0
                }
            })
            .collect();
        let mut lt = vec![0.0; len];
        laplacian_into(&grid, &t, &mut lt);
        let tmt: f64 = (0..len).map(|i| t[i] * (shift[i] * t[i] - lt[i])).sum();
        if tmt > 0.0 {
            let c = (0..len).map(|i| g[i] * t[i]).sum::<f64>() / tmt;
            for i in 0..len {
                d[i] -= c * t[i];
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() * w;
        iterations += 1;
        let wa = if k == 0 { 0.0 } else { 1.0 - th };
        let wb = if k + 1 == last { 0.0 } else { th };
        let reach = wa * (1.0 - th) + wb * th;
        if !(reach > 0.0) || !(slope > 0.0) {
            break;
        }
        let height = path.max_energy();
        alpha = (2.0 * alpha).min(1.0 / reach);
        let mut moved = false;
        for _ in 0..20 {
            let trial: Vec<f64> = x
                .iter()
                .zip(&d)
                .map(|(a, b)| a - alpha * reach * b)
                .collect();
            if energy_of(func, &trial) <= ex - 1e-4 * alpha * reach * slope {
                let a: Vec<f64> = path.images[k]
                    .iter()
                    .zip(&d)
                    .map(|(u, v)| u - alpha * wa * v)
                    .collect();
                let b: Vec<f64> = path.images[k + 1]
                    .iter()
                    .zip(&d)
                    .map(|(u, v)| u - alpha * wb * v)
                    .collect();
                if path.try_replace(func, k, a, b, height) {
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            break;
        }
        for j in [k, k + 1] {
            if j == 0 || j == last {
                continue;
            }
            let mut v = path.images[j].clone();
            exterior_sweep(func, &mut v, iterations % 2 == 0);
            let (s, a, b) = if j == k {
                (k, v, path.images[k + 1].clone())
            } else {
                (k, path.images[k].clone(), v)
            };
            path.try_replace(func, s, a, b, path.max_energy());
        }
        if iterations % cfg.redistribute_every == 0 {
            path.redistribute(func);
        }
        let height = path.max_energy();
        maxima.push(height);
        if height < best - STALL_FRACTION * best.abs() {
            best = height;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.stall {
                break;
            }
        }
    }
    Climb {
        point: path.peak_point(),
        maxima,
        iterations,
        converged,
    }
}

/// `(x₁ − c₁) w`, odd about the center of the bounding box of `Ω`.
fn odd_split(shape: &DomainShape, grid: &Grid, w: &[f64]) -> Vec<f64> {
    let (lo, hi) = shape.bounding_box();
    let c = 0.5 * (lo[0] + hi[0]);
    (0..grid.len())
        .map(|k| (grid.coords(k)[0] - c) * w[k])
        .collect()
}

/// `w` with its sign flipped across `x₁ = c₁`, smoothed over four cells.
fn sign_split(shape: &DomainShape, grid: &Grid, w: &[f64]) -> Vec<f64> {
    let (lo, hi) = shape.bounding_box();
    let c = 0.5 * (lo[0] + hi[0]);
    let ell = 4.0 * grid.spacing();
    (0..grid.len())
        .map(|k| ((grid.coords(k)[0] - c) / ell).tanh() * w[k])
        .collect()
}

/// Optimal multiple of `v` when one exists, otherwise `v` scaled to the
/// sup norm of `w`.
fn scaled(func: &EnergyFunctional, v: Vec<f64>, w: &[f64]) -> Vec<f64> {
    let sup = |u: &[f64]| u.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let s = best_multiple(func, &v).unwrap_or_else(|| sup(w) / sup(&v).max(f64::MIN_POSITIVE));
    v.into_iter().map(|x| s * x).collect()
}

fn symmetric_under(shape: &DomainShape, grid: &Grid, s: Symmetry) -> bool {
    match s {
        Symmetry::None => true,
        Symmetry::Odd => is_point_symmetric(shape, grid),
        Symmetry::OddFirstAxis => grid.dim() == 2 && is_reflection_symmetric(shape, grid),
    }
}

/// Symmetry of `Ω` under which `u` is nearly odd, if any.
fn near_symmetry(shape: &DomainShape, grid: &Grid, u: &[f64]) -> Option<Symmetry> {
    let sup = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    [Symmetry::Odd, Symmetry::OddFirstAxis]
        .into_iter()
        .find(|&s| symmetric_under(shape, grid, s) && s.defect(grid, u) <= 0.05 * sup)
}

fn path_functional(
    shape: &DomainShape,
    grid: &Grid,
    p: f64,
    pc: &PathConfig,
) -> Result<EnergyFunctional> {
    let eps = if p == 1.0 { pc.eps } else { 0.0 };
    Ok(EnergyFunctional::new(
        grid.sample_q(shape),
        Nonlinearity::new(p, eps)?,
    ))
}

/// Converges a rough sign-changing state to a nearby critical point:
/// minimization in the odd subspace when the state is nearly odd, Newton on
/// the Euler–Lagrange equation otherwise. With `fallback`, a stalled Newton
/// run on a symmetric domain is replaced by minimization over the odd part.
fn polish(
    shape: &DomainShape,
    grid: &Grid,
    p: f64,
    cfg: &SolveConfig,
    pc: &PathConfig,
    u: &[f64],
    fallback: Option<&mut Vec<String>>,
) -> Result<Relaxed> {
    let field = Field::from_values(*grid, u.to_vec())?;
    if let Some(s) = near_symmetry(shape, grid, u) {
        return relax(shape, grid, p, cfg, &Init::Guess(field), s);
    }
    let q = grid.sample_q(shape);
    let epss: Vec<f64> = if p == 1.0 {
        cfg.eps_schedule()
            .into_iter()
            .filter(|&e| e <= pc.eps * (1.0 + 1e-12))
            .collect()
    } else {
        vec![0.0]
    };
    let mut values = u.to_vec();
    let mut stages = Vec::new();
    let mut last = None;
    for (i, &eps) in epss.iter().enumerate() {
        let func = EnergyFunctional::new(q.clone(), Nonlinearity::new(p, eps)?);
        let tol = if i + 1 == epss.len() {
            cfg.tol
        } else {
            cfg.tol * 100.0
        };
        let opts = DescentOptions {
            max_iter: 60,
            tol,
            ..Default::default()
        };
        let out = newton_critical(&func, &values, &opts);
        stages.push(StageRecord {
            n: grid.n(),
            half_extent: grid.half_extent(),
            eps,
            iterations: out.iterations,
            energy: out.energy,
            residual: out.residual,
            converged: out.converged,
        });
        values = out.values;
        last = Some((func, out.converged, out.residual));
    }
    let (func, converged, residual) = last.expect("at least one stage");
    if !converged {
        if let Some(notes) = fallback {
            let odd = [Symmetry::Odd, Symmetry::OddFirstAxis]
                .into_iter()
                .find(|&s| symmetric_under(shape, grid, s));
            if let Some(s) = odd {
                notes.push(format!(
                    "Newton polish stalled at residual {residual:.3e}; minimized over the {} part instead",
                    s.as_str()
                ));
                let mut v = u.to_vec();
                s.project(grid, &mut v);
                return relax(
                    shape,
                    grid,
                    p,
                    cfg,
                    &Init::Guess(Field::from_values(*grid, v)?),
                    s,
                );
            }
        }
    }
    Ok(Relaxed {
        values,
        func,
        stages,
        converged,
        residual,
    })
}

fn degenerate(level: NodalLevel, what: String) -> Error {
    match level {
        NodalLevel::MountainPass => Error::MountainPassDegenerated(what),
        _ => Error::NoNodalSolution(what),
    }
}

/// Validates a relaxed state as a sign-changing critical point.
#[allow(clippy::too_many_arguments)]
fn finish(
    spec: &ProblemSpec,
    cfg: &SolveConfig,
    ground: &SolutionRecord,
    relaxed: Relaxed,
    level: NodalLevel,
    path_maxima: Vec<f64>,
    mut notes: Vec<String>,
) -> Result<NodalRecord> {
    if !relaxed.converged {
        return Err(Error::NoConvergence {
            iterations: relaxed.stages.iter().map(|s| s.iterations).sum(),
            residual: relaxed.residual,
            tolerance: cfg.tol,
        });
    }
    let provenance = Provenance {
        config_hash: config_hash(spec, cfg),
        engine: if matches!(level, NodalLevel::Equivariant) {
            "newton"
        } else {
            "path+newton"
        },
        iterations: relaxed.stages.iter().map(|s| s.iterations).sum(),
        stages: relaxed.stages.clone(),
    };
    let record = make_record(&relaxed.func, relaxed.values, cfg.tol, provenance)?;
    let tau = record.tau();
    let u = record.field.values();
    let pos = u.iter().filter(|&&v| v > tau).count();
    let neg = u.iter().filter(|&&v| v < -tau).count();
    if pos < 3 || neg < 3 {
        return Err(degenerate(
            level,
            format!("critical point is not sign-changing ({pos} positive, {neg} negative nodes)"),
        ));
    }
    let e = record.energy();
    let mu = ground.energy();
    let slack = 2.0 * cfg.tol;
    if !(e < 0.0) || !(e > mu - slack) {
        return Err(degenerate(
            level,
            format!("energy {e:.6e} outside (μ_p, 0) with μ_p = {mu:.6e}"),
        ));
    }
    if e <= mu {
        notes.push(format!("energy within {slack:.1e} of μ_p"));
    }
    let grid = *record.grid();
    let plus: Vec<f64> = u.iter().map(|v| v.max(0.0)).collect();
    let minus: Vec<f64> = u.iter().map(|v| (-v).max(0.0)).collect();
    Ok(NodalRecord {
        positive_mass: integrate_raw(&grid, &plus),
        negative_mass: integrate_raw(&grid, &minus),
        estimate: e,
        ground_energy: mu,
        level,
        path_maxima,
        notes,
        solution: record,
    })
}

/// Mountain-pass critical point between `−w` and `w`, where `w` is the
/// ground state.
pub fn mountain_pass(
    spec: &ProblemSpec,
    cfg: &SolveConfig,
    pc: &PathConfig,
) -> Result<NodalRecord> {
    let ground = solve_ground_state(spec, cfg)?;
    mountain_pass_from(spec, cfg, pc, &ground)
}

/// [`mountain_pass`] with a precomputed ground state.
pub fn mountain_pass_from(
    spec: &ProblemSpec,
    cfg: &SolveConfig,
    pc: &PathConfig,
    ground: &SolutionRecord,
) -> Result<NodalRecord> {
    pc.validate()?;
    let grid = *ground.grid();
    let func = path_functional(&spec.shape, &grid, spec.p, pc)?;
    let w = ground.field.values();
    let mid = scaled(&func, odd_split(&spec.shape, &grid, w), w);
    climb_and_polish(spec, cfg, pc, ground, &func, &mid, NodalLevel::MountainPass)
}

fn climb_and_polish(
    spec: &ProblemSpec,
    cfg: &SolveConfig,
    pc: &PathConfig,
    ground: &SolutionRecord,
    func: &EnergyFunctional,
    mid: &[f64],
    level: NodalLevel,
) -> Result<NodalRecord> {
    let grid = *ground.grid();
    let mut notes = Vec::new();
    if spec.shape.component_split(&grid)?.len() > 1 {
        notes.push("Ω is not connected".to_string());
    }
    let w = ground.field.values();
    let minus: Vec<f64> = w.iter().map(|v| -v).collect();
    let mut path = Path::through(func, &minus, mid, w, pc.images, pc.samples)?;
    let climb = climb(func, &mut path, pc);
    if !climb.converged {
        notes.push(format!(
            "path stopped after {} iterations above tolerance {:.1e}",
            climb.iterations, pc.tol
        ));
    }
    let top = climb.point.clone();
    let tau = grid.spacing().powi(2);
    if !(top.iter().any(|&v| v > tau) && top.iter().any(|&v| v < -tau)) {
        return Err(degenerate(
            level,
            "highest path image is not sign-changing".into(),
        ));
    }
    let relaxed = polish(&spec.shape, &grid, spec.p, cfg, pc, &top, Some(&mut notes))?;
    finish(spec, cfg, ground, relaxed, level, climb.maxima, notes)
}

/// Starting points for [`least_energy_nodal`].
#[derive(Clone, Debug)]
pub enum Seed {
    /// The ground state itself; never sign-changing.
    GroundState,
    /// Local descent from a given field.
    Field(Field),
    /// The mountain-pass solution.
    MountainPass,
    /// `(x₁ − c) w`, relaxed in an odd subspace when `Ω` admits one.
    OddSplit,
    /// `w` with the sign flipped across `x₁ = c`, relaxed by local descent.
    SignSplit,
    /// Newton polish from a given field toward the nearest critical point,
    /// whatever its Morse index.
    Nearby(Field),
}

impl Seed {
    pub fn defaults() -> Vec<Seed> {
        vec![Seed::MountainPass, Seed::OddSplit, Seed::SignSplit]
    }

    pub fn label(&self) -> String {
        match self {
            Seed::GroundState => "ground-state".into(),
            Seed::Field(_) => "field".into(),
            Seed::MountainPass => "mountain-pass".into(),
            Seed::OddSplit => "odd-split".into(),
            Seed::SignSplit => "sign-split".into(),
            Seed::Nearby(_) => "nearby".into(),
        }
    }
}

/// Lowest-energy sign-changing critical point reached from `seeds`.
pub fn least_energy_nodal(
    spec: &ProblemSpec,
    cfg: &SolveConfig,
    seeds: &[Seed],
) -> Result<NodalRecord> {
    let ground = solve_ground_state(spec, cfg)?;
    least_energy_nodal_from(spec, cfg, &PathConfig::default(), seeds, &ground)
}

/// [`least_energy_nodal`] with a precomputed ground state.
pub fn least_energy_nodal_from(
    spec: &ProblemSpec,
    cfg: &SolveConfig,
    pc: &PathConfig,
    seeds: &[Seed],
    ground: &SolutionRecord,
) -> Result<NodalRecord> {
    let outcomes: Vec<(String, Result<NodalRecord>)> = seeds
        .par_iter()
        .map(|s| (s.label(), from_seed(spec, cfg, pc, ground, s)))
        .collect();
    let mut notes = Vec::new();
    let mut best: Option<NodalRecord> = None;
    for (label, out) in outcomes {
        match out {
            Ok(r) => {
                notes.push(format!("{label}: energy {:.10e}", r.energy()));
                if best.as_ref().is_none_or(|b| r.energy() < b.energy()) {
                    best = Some(r);
                }
            }
            Err(e) => notes.push(format!("{label}: {e}")),
        }
    }
    let mut best =
        best.ok_or_else(|| Error::NoNodalSolution(format!("none of {} seeds", seeds.len())))?;
    best.level = NodalLevel::LeastEnergyNodal;
    best.notes.extend(notes);
    Ok(best)
}

fn from_seed(
    spec: &ProblemSpec,
    cfg: &SolveConfig,
    pc: &PathConfig,
    ground: &SolutionRecord,
    seed: &Seed,
) -> Result<NodalRecord> {
    let grid = *ground.grid();
    let w = ground.field.values();
    let level = NodalLevel::LeastEnergyNodal;
    let descend = |v: Vec<f64>, s: Symmetry| -> Result<NodalRecord> {
        let field = Field::from_values(grid, v)?;
        let relaxed = relax(&spec.shape, &grid, spec.p, cfg, &Init::Guess(field), s)?;
        finish(spec, cfg, ground, relaxed, level, Vec::new(), Vec::new())
    };
    match seed {
        Seed::GroundState => descend(w.to_vec(), Symmetry::None),
        Seed::Field(f) => descend(resample(f, &grid), Symmetry::None),
        Seed::MountainPass => mountain_pass_from(spec, cfg, pc, ground),
        Seed::OddSplit => {
            let v = odd_split(&spec.shape, &grid, w);
            let s = [Symmetry::Odd, Symmetry::OddFirstAxis]
                .into_iter()
                .find(|&s| symmetric_under(&spec.shape, &grid, s))
                .unwrap_or(Symmetry::None);
            descend(v, s)
        }
        Seed::SignSplit => descend(sign_split(&spec.shape, &grid, w), Symmetry::None),
        Seed::Nearby(f) => {
            let v = resample(f, &grid);
            let relaxed = polish(&spec.shape, &grid, spec.p, cfg, pc, &v, None)?;
            finish(spec, cfg, ground, relaxed, level, Vec::new(), Vec::new())
        }
    }
}

fn resample(f: &Field, grid: &Grid) -> Vec<f64> {
    if f.grid() == grid {
        f.values().to_vec()
    } else {
        grid.sample(|x| f.interpolate(x)).into_values()
    }
}

/// Minimizer of the energy over functions odd under `symmetry`.
pub fn equivariant_solve(
    spec: &ProblemSpec,
    cfg: &SolveConfig,
    symmetry: Symmetry,
) -> Result<NodalRecord> {
    if symmetry == Symmetry::None {
        return Err(Error::InvalidInput(
            "equivariant solve needs a symmetry".into(),
        ));
    }
    spec.validate()?;
    if !symmetric_under(&spec.shape, &spec.grid, symmetry) {
        return Err(Error::NotSymmetric);
    }
    let ground = solve_ground_state(spec, cfg)?;
    let grid = *ground.grid();
    let mut v = odd_split(&spec.shape, &grid, ground.field.values());
    symmetry.project(&grid, &mut v);
    let field = Field::from_values(grid, v)?;
    let relaxed = relax(
        &spec.shape,
        &grid,
        spec.p,
        cfg,
        &Init::Guess(field),
        symmetry,
    )?;
    let mut rec = finish(
        spec,
        cfg,
        &ground,
        relaxed,
        NodalLevel::Equivariant,
        Vec::new(),
        Vec::new(),
    )?;
    rec.notes.push(format!("symmetry {}", symmetry.as_str()));
    Ok(rec)
}

/// Two unit balls whose boundaries are `gap` apart along `x₁`, joined by a
/// tube of width `delta` (no tube when `delta = 0`).
pub fn dumbbell(gap: f64, delta: f64) -> DomainShape {
    let c = 1.0 + 0.5 * gap;
    if delta == 0.0 {
        DomainShape::union(vec![
            DomainShape::ball(&[-c, 0.0], 1.0),
            DomainShape::ball(&[c, 0.0], 1.0),
        ])
    } else {
        DomainShape::Dumbbell {
            center1: vec![-c, 0.0],
            center2: vec![c, 0.0],
            ball_radius: 1.0,
            half_width: 0.5 * delta,
        }
    }
}

/// One row of the dumbbell experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct DumbbellRow {
    pub delta: f64,
    pub ground_energy: Option<f64>,
    /// `|μ(Ω_δ) − μ(Ω₀)|`.
    pub limit_distance: Option<f64>,
    pub mountain_pass: Option<f64>,
    pub nodal: Option<f64>,
    /// Mountain-pass estimate minus best nodal energy.
    pub gap: Option<f64>,
    /// Tube no narrower than the balls: outside the thin-tube regime.
    pub out_of_regime: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DumbbellTable {
    pub ball_gap: f64,
    pub p: f64,
    /// `μ(Ω₀)` for the two balls without a tube.
    pub limit_energy: f64,
    pub rows: Vec<DumbbellRow>,
}

impl DumbbellTable {
    pub const CSV_HEADER: &'static str =
        "delta,ground_energy,limit_distance,mountain_pass,nodal,gap,out_of_regime,error";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{:?},{},{},{},{},{},{},{}\n",
                r.delta,
                opt(r.ground_energy),
                opt(r.limit_distance),
                opt(r.mountain_pass),
                opt(r.nodal),
                opt(r.gap),
                r.out_of_regime,
                r.error.as_deref().unwrap_or("").replace(',', ";")
            ));
        }
        s
    }

    /// `|μ(Ω_δ) − μ(Ω₀)|` nonincreasing along the rows (which run in
    /// decreasing `δ`).
    pub fn limit_is_monotone(&self) -> bool {
        let d: Vec<f64> = self.rows.iter().filter_map(|r| r.limit_distance).collect();
        d.len() == self.rows.len() && d.windows(2).all(|p| p[1] <= p[0])
    }
}

/// Ground, mountain-pass and best nodal energies on `Ω_δ` for each `δ`.
pub fn dumbbell_experiment(
    ball_gap: f64,
    deltas: &[f64],
    p: f64,
    grid: Grid,
    cfg: &SolveConfig,
    pc: &PathConfig,
) -> Result<DumbbellTable> {
    if grid.dim() != 2 {
        return Err(Error::InvalidInput(
            "the dumbbell experiment is two-dimensional".into(),
        ));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) || deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidInput(
            "δ values must be positive and decreasing".into(),
        ));
    }
    let limit = solve_ground_state(&ProblemSpec::new(p, dumbbell(ball_gap, 0.0), grid)?, cfg)?;
    let limit_energy = limit.energy();
    let rows = deltas
        .iter()
        .map(|&delta| {
            let mut row = DumbbellRow {
                delta,
                ground_energy: None,
                limit_distance: None,
                mountain_pass: None,
                nodal: None,
                gap: None,
                out_of_regime: delta >= 1.0,
                error: None,
            };
            let run = |row: &mut DumbbellRow| -> Result<()> {
                let spec = ProblemSpec::new(p, dumbbell(ball_gap, delta), grid)?;
                let ground = solve_ground_state(&spec, cfg)?;
                row.ground_energy = Some(ground.energy());
                row.limit_distance = Some((ground.energy() - limit_energy).abs());
                let mp = mountain_pass_from(&spec, cfg, pc, &ground)?;
                row.mountain_pass = Some(mp.energy());
                let seeds = [
                    Seed::Field(mp.solution.field.clone()),
                    Seed::SignSplit,
                    Seed::OddSplit,
                ];
                let nodal = least_energy_nodal_from(&spec, cfg, pc, &seeds, &ground)?;
                row.nodal = Some(nodal.energy());
                row.gap = Some(mp.energy() - nodal.energy());
                Ok(())
            };
            if let Err(e) = run(&mut row) {
                row.error = Some(e.to_string());
            }
            row
        })
        .collect();
    Ok(DumbbellTable {
        ball_gap,
        p,
        limit_energy,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::explicit_nodal_1d;

    fn interval_spec(p: f64, n: usize, l: f64) -> ProblemSpec {
        ProblemSpec::new(
            p,
            DomainShape::interval(-1.0, 1.0),
            Grid::new(1, n, l).unwrap(),
        )
        .unwrap()
    }

    fn assert_sign_changing(r: &NodalRecord) {
        assert!(r.positive_mass > 0.0 && r.negative_mass > 0.0);
        assert!(
            r.energy() > r.ground_energy && r.energy() < 0.0,
            "{} vs {}",
            r.energy(),
            r.ground_energy
        );
    }

    #[test]
    fn path_config_validation() {
        assert!(PathConfig::default().validate().is_ok());
        let pc = PathConfig {
            images: 2,
            ..Default::default()
        };
        assert!(pc.validate().is_err());
    }

    #[test]
    fn path_endpoints_carry_ground_energy() {
        let spec = interval_spec(1.0, 257, 4.0);
        let cfg = SolveConfig::default();
        let gs = solve_ground_state(&spec, &cfg).unwrap();
        let grid = *gs.grid();
        let func = path_functional(&spec.shape, &grid, 1.0, &PathConfig::default()).unwrap();
        let w = gs.field.values();
        let minus: Vec<f64> = w.iter().map(|v| -v).collect();
        let mid = odd_split(&spec.shape, &grid, w);
        let path = Path::through(&func, &minus, &mid, w, 9, 4).unwrap();
        let e = path.energies();
        assert_eq!(path.len(), 9);
        assert!((e[0] - e[8]).abs() < 1e-12);
        assert!(path.max_energy() >= e.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn mountain_pass_1d_p1() {
        let spec = interval_spec(1.0, 513, 4.0);
        let cfg = SolveConfig::default();
        let r = mountain_pass(&spec, &cfg, &PathConfig::default()).unwrap();
        assert_eq!(r.level, NodalLevel::MountainPass);
        assert_sign_changing(&r);
        assert!(r.solution.report.residual <= cfg.tol);
        assert!(r.path_maxima.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        assert_eq!(
            r.csv_row().split(',').count(),
            NodalRecord::CSV_HEADER.split(',').count()
        );
    }

    #[test]
    fn least_nodal_is_below_mountain_pass_p15() {
        let spec = interval_spec(1.5, 257, 4.0);
        let cfg = SolveConfig::default();
        let pc = PathConfig::default();
        let gs = solve_ground_state(&spec, &cfg).unwrap();
        let mp = mountain_pass_from(&spec, &cfg, &pc, &gs).unwrap();
        assert_sign_changing(&mp);
        let least = least_energy_nodal_from(&spec, &cfg, &pc, &Seed::defaults(), &gs).unwrap();
        assert_eq!(least.level, NodalLevel::LeastEnergyNodal);
        assert!(least.energy() <= mp.energy() + 1e-10);
        assert!(least.estimate <= mp.energy() + 1e-10);
    }

    #[test]
    fn closed_form_profile_is_a_discrete_critical_point() {
        let spec = interval_spec(1.0, 513, 4.0);
        let cfg = SolveConfig::default();
        let gs = solve_ground_state(&spec, &cfg).unwrap();
        let prof = gs.grid().sample(|x| explicit_nodal_1d(x[0]));
        let r = least_energy_nodal_from(
            &spec,
            &cfg,
            &PathConfig::default(),
            &[Seed::Nearby(prof.clone())],
            &gs,
        )
        .unwrap();
        assert!(r.field().sup_distance(&prof).unwrap() <= 1e-2);
        assert_sign_changing(&r);
    }

    #[test]
    fn equivariant_solution_is_exactly_odd() {
        let spec = interval_spec(1.0, 513, 4.0);
        let r = equivariant_solve(&spec, &SolveConfig::default(), Symmetry::Odd).unwrap();
        let grid = *r.solution.grid();
        assert!(Symmetry::Odd.defect(&grid, r.field().values()) <= 1e-12);
        assert!(r.energy() < 0.0);
        assert_sign_changing(&r);
    }

    #[test]
    fn off_centre_domain_is_not_symmetric() {
        let spec = ProblemSpec::new(
            1.0,
            DomainShape::interval(-0.5, 1.5),
            Grid::new(1, 257, 4.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            equivariant_solve(&spec, &SolveConfig::default(), Symmetry::Odd),
            Err(Error::NotSymmetric)
        ));
    }

    #[test]
    fn ground_state_seed_finds_nothing() {
        let spec = interval_spec(1.0, 257, 4.0);
        assert!(matches!(
            least_energy_nodal(&spec, &SolveConfig::default(), &[Seed::GroundState]),
            Err(Error::NoNodalSolution(_))
        ));
    }

    #[test]
    fn three_images_give_a_result_or_a_clean_error() {
        let spec = interval_spec(1.0, 257, 4.0);
        let pc = PathConfig {
            images: 3,
            ..Default::default()
        };
        match mountain_pass(&spec, &SolveConfig::default(), &pc) {
            Ok(r) => assert_sign_changing(&r),
            Err(e) => assert!(matches!(
                e,
                Error::MountainPassDegenerated(_) | Error::NoConvergence { .. }
            )),
        }
    }

    #[test]
    fn dumbbell_rejects_bad_input() {
        let cfg = SolveConfig::default();
        let pc = PathConfig::default();
        let g1 = Grid::new(1, 65, 4.0).unwrap();
        assert!(dumbbell_experiment(1.0, &[0.4], 1.0, g1, &cfg, &pc).is_err());
        let g2 = Grid::new(2, 33, 4.0).unwrap();
        assert!(dumbbell_experiment(1.0, &[0.2, 0.4], 1.0, g2, &cfg, &pc).is_err());
        let tube = dumbbell(1.0, 0.4);
        assert!(tube.contains(&[0.0, 0.0]));
        assert!(!tube.contains(&[0.0, 0.3]));
        assert!(!dumbbell(1.0, 0.0).contains(&[0.0, 0.0]));
    }
}
