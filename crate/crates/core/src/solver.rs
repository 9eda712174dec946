//! Ground states, the indefinite-weight eigenvalue `Λ₁`, and sweeps in `p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{support_of, SupportDescriptor};
use crate::energy::{EnergyFunctional, EnergyReport, Nonlinearity, SignClass};
use crate::error::{Error, Result};
use crate::geometry::DomainShape;
use crate::grid::{dirichlet_energy_raw, integrate_raw, laplacian_into, Field, Grid, QField};
use crate::optimize::{minimize, solve_poisson, DescentOptions, Engine, Symmetry};

/// Problem data: exponent, `Ω`, and the truncated box grid.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub p: f64,
    pub shape: DomainShape,
    pub grid: Grid,
}

impl ProblemSpec {
    pub fn new(p: f64, shape: DomainShape, grid: Grid) -> Result<Self> {
        let spec = Self { p, shape, grid };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1.0..2.0).contains(&self.p) {
            return Err(Error::ExponentOutOfRange(self.p));
        }
        self.shape.validate()?;
        if self.shape.dim() != self.grid.dim() {
            return Err(Error::InvalidProblem(format!(
                "shape is {}-dimensional, grid is {}-dimensional",
                self.shape.dim(),
                self.grid.dim()
            )));
        }
        let (lo, hi) = self.shape.bounding_box();
        let limit = self.grid.half_extent() - self.grid.spacing();
        if lo
            .iter()
            .chain(&hi)
            .any(|v| !v.is_finite() || v.abs() >= limit)
        {
            return Err(Error::InvalidProblem(
                "Ω must be bounded with positive distance to the box boundary".into(),
            ));
        }
        if !self.q().values().iter().any(|&v| v > 0.0) {
            return Err(Error::EmptyShape);
        }
        Ok(())
    }

    pub fn q(&self) -> QField {
        self.grid.sample_q(&self.shape)
    }

    pub fn with_grid(&self, grid: Grid) -> Self {
        Self {
            grid,
            ..self.clone()
        }
    }

    pub fn with_p(&self, p: f64) -> Self {
        Self { p, ..self.clone() }
    }

    /// Support threshold `τ = h²`.
    pub fn tau(&self) -> f64 {
        self.grid.spacing().powi(2)
    }

    fn canonical(&self) -> String {
        format!(
            "p = {:?}\ndim = {}\nn = {}\nhalf_extent = {:?}\n{}",
            self.p,
            self.grid.dim(),
            self.grid.n(),
            self.grid.half_extent(),
            self.shape.to_toml_string()
        )
    }
}

/// Solver settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Iteration cap per stage.
    pub max_iter: usize,
    /// Sup-norm Euler–Lagrange residual required at the final stage.
    pub tol: f64,
    pub engine: EngineName,
    /// Nonmonotone window and Armijo constant (spectral engine; the Newton
    /// engine uses the Armijo constant for its line search).
    pub window: usize,
    pub armijo: f64,
    /// Smoothing schedule at `p = 1`: `eps_start`, `eps_start / eps_factor`,
    /// … down to `eps_end`.
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_factor: f64,
    pub starts: usize,
    pub seed: u64,
    /// Fraction of the half extent that the support must keep clear.
    pub clearance: f64,
    pub max_enlarge: usize,
    /// Solve on coarser grids first and interpolate.
    pub nested: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EngineName {
    #[default]
    Newton,
    Spectral,
}

impl From<EngineName> for Engine {
    fn from(e: EngineName) -> Self {
        match e {
            EngineName::Newton => Engine::Newton,
            EngineName::Spectral => Engine::Spectral,
        }
    }
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iter: 2_000,
            tol: 1e-8,
            engine: EngineName::Newton,
            window: 10,
            armijo: 1e-4,
            eps_start: 1e-2,
            eps_end: 1e-8,
            eps_factor: 10.0,
            starts: 5,
            seed: 0,
            clearance: 0.1,
            max_enlarge: 3,
            nested: true,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol, self.armijo, self.eps_start, self.eps_end];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config(
                "tolerances and smoothing parameters must be positive".into(),
            ));
        }
        if !(self.eps_factor > 1.0) || self.eps_end > self.eps_start {
            return Err(Error::Config("smoothing schedule must decrease".into()));
        }
        if !(0.0..0.5).contains(&self.clearance) {
            return Err(Error::Config(format!(
                "clearance {} not in [0, 0.5)",
                self.clearance
            )));
        }
        if self.max_iter == 0 || self.window == 0 {
            return Err(Error::Config("max_iter and window must be positive".into()));
        }
        Ok(())
    }

    /// Smoothing values used at `p = 1`, coarse to fine.
    pub fn eps_schedule(&self) -> Vec<f64> {
        let mut out = vec![self.eps_start];
        let mut e = self.eps_start;
        while e > self.eps_end * (1.0 + 1e-9) {
            e = (e / self.eps_factor).max(self.eps_end);
            out.push(e);
        }
        out
    }

    pub(crate) fn descent(&self, tol: f64, symmetry: Symmetry) -> DescentOptions {
        let mut opts = DescentOptions {
            engine: self.engine.into(),
            max_iter: self.max_iter,
            tol,
            window: self.window,
            armijo: self.armijo,
            symmetry,
            ..Default::default()
        };
        if opts.engine == Engine::Spectral {
            opts.max_iter = self.max_iter.max(200_000);
        }
        opts
    }

    fn canonical(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

/// SHA-256 of the canonical problem and config text.
pub fn config_hash(spec: &ProblemSpec, cfg: &SolveConfig) -> String {
    let mut h = Sha256::new();
    h.update(spec.canonical().as_bytes());
    h.update(b"\n--\n");
    h.update(cfg.canonical().as_bytes());
    hex::encode(h.finalize())
}

/// One relaxation run inside a solve.
#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub n: usize,
    pub half_extent: f64,
    pub eps: f64,
    pub iterations: usize,
    pub energy: f64,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub engine: &'static str,
    pub iterations: usize,
    pub stages: Vec<StageRecord>,
}

impl Provenance {
    /// Lowest energy seen so far after each stage.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.stages
            .iter()
            .map(|s| {
                best = best.min(s.energy);
                best
            })
            .collect()
    }
}

/// A converged critical point with its diagnostics.
#[derive(Clone, Debug)]
pub struct SolutionRecord {
    pub field: Field,
    pub p: f64,
    /// Smoothing in force at the final stage (0 for `p > 1`).
    pub eps: f64,
    pub report: EnergyReport,
    pub classification: SignClass,
    pub support: SupportDescriptor,
    pub tol: f64,
    pub provenance: Provenance,
}

impl SolutionRecord {
    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn energy(&self) -> f64 {
        self.report.value
    }

    pub fn tau(&self) -> f64 {
        self.grid().spacing().powi(2)
    }

    pub const CSV_HEADER: &'static str =
        "p,eps,n,half_extent,energy,dirichlet,potential,residual,identity_defect,classification,support_measure,bounding_radius,inradius,iterations,config_hash";

    pub fn csv_row(&self) -> String {
        let g = self.grid();
        format!(
            "{:?},{:e},{},{:?},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e},{},{:.8e},{:.8e},{:.8e},{},{}",
            self.p,
            self.eps,
            g.n(),
            g.half_extent(),
            self.report.value,
            self.report.dirichlet,
            self.report.potential,
            self.report.residual,
            self.report.identity_defect,
            self.classification.as_str(),
            self.support.measure,
            self.support.bounding_radius,
            self.support.inradius,
            self.provenance.iterations,
            self.provenance.config_hash
        )
    }
}

/// Starting point of a solve.
#[derive(Clone, Debug)]
pub enum Init {
    /// Scaled torsion function of `Ω`.
    Torsion,
    /// Seeded random positive field.
    Random(u64),
    /// Warm start, interpolated onto the working grid.
    Field(Field),
    /// Rough guess: like `Field`, but `p = 1` runs the full smoothing
    /// schedule.
    Guess(Field),
}

/// Torsion function `−Δv = χ_Ω` with zero box data.
pub fn torsion(grid: &Grid, q: &QField) -> Vec<f64> {
    let b: Vec<f64> = q
        .values()
        .iter()
        .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
        .collect();
    solve_poisson(grid, &b, 1e-10, 20 * grid.n() * grid.dim())
}

/// Multiple `s v` of `v` minimizing `I_p(s v)` over `s > 0`, if the
/// potential part of `v` is positive.
pub(crate) fn best_multiple(func: &EnergyFunctional, v: &[f64]) -> Option<f64> {
    let grid = func.grid();
    let nl = func.nonlinearity();
    let d = dirichlet_energy_raw(grid, v);
    let pot: Vec<f64> = (0..v.len())
        .map(|i| func.q().values()[i] * v[i].abs().powf(nl.p()))
        .collect();
    let pot = integrate_raw(grid, &pot);
    (d > 0.0 && pot > 0.0).then(|| (pot / d).powf(1.0 / (2.0 - nl.p())))
}

fn torsion_start(func: &EnergyFunctional) -> Vec<f64> {
    let grid = func.grid();
    let mut v = torsion(grid, func.q());
    let s = best_multiple(func, &v).or_else(|| {
        // A large box can make ∫Q|v|^p negative; keep only the part over Ω.
        for (i, x) in v.iter_mut().enumerate() {
            if func.q().values()[i] < 0.0 {
                *x = 0.0;
            }
        }
        best_multiple(func, &v)
    });
    let s = s.unwrap_or(1.0);
    v.iter().map(|x| s * x).collect()
}

fn random_start(func: &EnergyFunctional, seed: u64) -> Vec<f64> {
    let grid = func.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = torsion_start(func);
    let amp = base.iter().cloned().fold(0.0, f64::max).max(1e-3);
    let scale = rng.gen_range(0.2..2.0) * amp;
    let reach = grid.half_extent() / rng.gen_range(1.0..2.0);
    (0..grid.len())
        .map(|i| {
            if grid.is_boundary(i) || grid.inf_radius(i) > reach {
                0.0
            } else {
                scale * rng.gen::<f64>()
            }
        })
        .collect()
}

/// Grids of the nested-iteration hierarchy ending at `grid`.
fn hierarchy(grid: &Grid, nested: bool) -> Vec<Grid> {
    let mut levels = vec![*grid];
    if !nested {
        return levels;
    }
    let mut n = grid.n();
    while (n - 1).is_multiple_of(2) && (n - 1) / 2 + 1 >= 17 {
        n = (n - 1) / 2 + 1;
        if let Ok(g) = Grid::new(grid.dim(), n, grid.half_extent()) {
            levels.push(g);
        }
    }
    levels.reverse();
    levels
}

/// Result of [`relax`].
pub(crate) struct Relaxed {
    pub values: Vec<f64>,
    pub func: EnergyFunctional,
    pub stages: Vec<StageRecord>,
    pub converged: bool,
    pub residual: f64,
}

/// Drives the optimizer through the level hierarchy and smoothing stages.
pub(crate) fn relax(
    shape: &DomainShape,
    grid: &Grid,
    p: f64,
    cfg: &SolveConfig,
    init: &Init,
    symmetry: Symmetry,
) -> Result<Relaxed> {
    let final_eps = if p == 1.0 { cfg.eps_end } else { 0.0 };
    let continuation = p == 1.0 && !matches!(init, Init::Field(_));
    let levels = match init {
        Init::Torsion => hierarchy(grid, cfg.nested),
        _ => vec![*grid],
    };
    let mut stages = Vec::new();
    let mut values: Option<Vec<f64>> = None;
    let mut last = None;
    for (li, level) in levels.iter().enumerate() {
        let q = level.sample_q(shape);
        let epss = if continuation && li == 0 {
            cfg.eps_schedule()
        } else {
            vec![final_eps]
        };
        for (si, &eps) in epss.iter().enumerate() {
            let nl = Nonlinearity::new(p, eps)?;
            let func = EnergyFunctional::new(q.clone(), nl);
            let u0 = match (&values, init) {
                (Some(v), _) => v.clone(),
                (None, Init::Torsion) => torsion_start(&func),
                (None, Init::Random(seed)) => random_start(&func, *seed),
                (None, Init::Field(f)) | (None, Init::Guess(f)) => {
                    if f.grid() == level {
                        f.values().to_vec()
                    } else {
                        level.sample(|x| f.interpolate(x)).into_values()
                    }
                }
            };
            let is_final = li + 1 == levels.len() && si + 1 == epss.len();
            let tol = if is_final { cfg.tol } else { cfg.tol * 100.0 };
            let out = minimize(&func, &u0, &cfg.descent(tol, symmetry));
            stages.push(StageRecord {
                n: level.n(),
                half_extent: level.half_extent(),
                eps,
                iterations: out.iterations,
                energy: out.energy,
                residual: out.residual,
                converged: out.converged,
            });
            values = Some(out.values);
            last = Some((func, out.converged, out.residual));
        }
        if li + 1 < levels.len() {
            let coarse = Field::from_values(*level, values.take().unwrap())?;
            let next = levels[li + 1];
            values = Some(next.sample(|x| coarse.interpolate(x)).into_values());
        }
    }
    let (func, converged, residual) = last.expect("at least one stage");
    Ok(Relaxed {
        values: values.unwrap(),
        func,
        stages,
        converged,
        residual,
    })
}

/// Builds the record for converged values on `func`'s grid.
pub(crate) fn make_record(
    func: &EnergyFunctional,
    values: Vec<f64>,
    tol: f64,
    provenance: Provenance,
) -> Result<SolutionRecord> {
    let grid = *func.grid();
    let field = Field::from_values(grid, values)?;
    let mut lap = vec![0.0; grid.len()];
    laplacian_into(&grid, field.values(), &mut lap);
    let report = func.report_with_laplacian(field.values(), &lap);
    let tau = grid.spacing().powi(2);
    let support = support_of(&field, tau);
    Ok(SolutionRecord {
        classification: SignClass::of(&field, tau),
        p: func.nonlinearity().p(),
        eps: func.nonlinearity().eps(),
        field,
        report,
        support,
        tol,
        provenance,
    })
}

fn clears_margin(support: &SupportDescriptor, grid: &Grid, clearance: f64) -> bool {
    support.max_inf_radius <= (1.0 - clearance) * grid.half_extent()
}

/// Next box in the enlarge-and-retry loop: `1.5 L`, rounded to keep `h`.
fn enlarged(grid: &Grid) -> Result<Grid> {
    let h = grid.spacing();
    let l = (1.5 * grid.half_extent() / h).ceil() * h;
    Grid::with_spacing(grid.dim(), l, h)
}

/// Computes the nonnegative ground state.
pub fn solve_ground_state(spec: &ProblemSpec, cfg: &SolveConfig) -> Result<SolutionRecord> {
    solve_from(spec, cfg, Init::Torsion)
}

/// Ground-state solve from a chosen starting point.
pub fn solve_from(spec: &ProblemSpec, cfg: &SolveConfig, init: Init) -> Result<SolutionRecord> {
    spec.validate()?;
    cfg.validate()?;
    let hash = config_hash(spec, cfg);
    let mut grid = spec.grid;
    let mut init = init;
    let mut stages = Vec::new();
    let mut attempt = 0;
    let mut restarts = 0;
    loop {
        let relaxed = relax(&spec.shape, &grid, spec.p, cfg, &init, Symmetry::None)?;
        stages.extend(relaxed.stages);
        if !relaxed.converged {
            return Err(Error::NoConvergence {
                iterations: stages.iter().map(|s| s.iterations).sum(),
                residual: relaxed.residual,
                tolerance: cfg.tol,
            });
        }
        let mut values = relaxed.values;
        // A sign-changing critical point is a saddle; |u| has no larger
        // energy and is not critical, so descent resumes from there.
        let tau = grid.spacing().powi(2);
        if values.iter().any(|&v| v > tau)
            && values.iter().any(|&v| v < -tau)
            && restarts < MAX_SIGN_RESTARTS
        {
            restarts += 1;
            init = Init::Field(Field::from_values(
                grid,
                values.iter().map(|v| v.abs()).collect(),
            )?);
            continue;
        }
        // The energy is even; report the representative with positive mass.
        let (mx, mn) = values
            .iter()
            .fold((0.0f64, 0.0f64), |(a, b), &v| (a.max(v), b.min(v)));
        if -mn > mx {
            values.iter_mut().for_each(|v| *v = -*v);
        }
        let provenance = Provenance {
            config_hash: hash.clone(),
            engine: Engine::from(cfg.engine).as_str(),
            iterations: stages.iter().map(|s| s.iterations).sum(),
            stages: stages.clone(),
        };
        let record = make_record(&relaxed.func, values, cfg.tol, provenance)?;
        if !(record.report.value < 0.0) {
            return Err(Error::InvalidProblem(format!(
                "descent ended at a critical point with energy {:.3e} ≥ 0",
                record.report.value
            )));
        }
        if clears_margin(&record.support, &grid, cfg.clearance) {
            return Ok(record);
        }
        if attempt == cfg.max_enlarge {
            return Err(Error::IncreaseBox);
        }
        attempt += 1;
        grid = enlarged(&grid)?;
        init = Init::Field(record.field);
    }
}

/// Restarts from `|u|` allowed when a ground-state descent stops at a
/// sign-changing critical point.
const MAX_SIGN_RESTARTS: usize = 2;

/// Outcome of one start in [`verify_uniqueness`].
#[derive(Clone, Debug)]
pub struct StartOutcome {
    pub index: usize,
    pub seed: u64,
    pub record: Option<SolutionRecord>,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct UniquenessReport {
    pub starts: Vec<StartOutcome>,
    /// `(i, j, sup-distance)` for every pair of converged starts.
    pub distances: Vec<(usize, usize, f64)>,
    pub max_distance: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Sup-distance between fields that may live on different boxes with the
/// same spacing; values outside a box count as 0.
pub fn sup_distance_any(a: &Field, b: &Field) -> f64 {
    if a.grid() == b.grid() {
        return a.sup_distance(b).unwrap_or(f64::INFINITY);
    }
    let (big, small) = if a.grid().half_extent() >= b.grid().half_extent() {
        (a, b)
    } else {
        (b, a)
    };
    let g = big.grid();
    (0..g.len())
        .map(|i| {
            let x = g.coords(i);
            let inside = x.iter().all(|v| v.abs() <= small.grid().half_extent());
            let s = if inside { small.interpolate(&x) } else { 0.0 };
            (big.values()[i] - s).abs()
        })
        .fold(0.0, f64::max)
}

/// Runs `starts` seeded random positive starts and compares the results.
pub fn verify_uniqueness(
    spec: &ProblemSpec,
    cfg: &SolveConfig,
    starts: usize,
) -> Result<UniquenessReport> {
    if starts == 0 {
        return Err(Error::InvalidInput("need at least one start".into()));
    }
    spec.validate()?;
    let outcomes: Vec<StartOutcome> = (0..starts)
        .into_par_iter()
        .map(|index| {
            let seed = cfg.seed.wrapping_add(index as u64);
            match solve_from(spec, cfg, Init::Random(seed)) {
                Ok(r) => StartOutcome {
                    index,
                    seed,
                    record: Some(r),
                    failure: None,
                },
                Err(e) => StartOutcome {
                    index,
                    seed,
                    record: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut distances = Vec::new();
    for i in 0..outcomes.len() {
        for j in i + 1..outcomes.len() {
            if let (Some(a), Some(b)) = (&outcomes[i].record, &outcomes[j].record) {
                distances.push((i, j, sup_distance_any(&a.field, &b.field)));
            }
        }
    }
    let max_distance = distances.iter().map(|d| d.2).fold(0.0, f64::max);
    let threshold = 10.0 * (cfg.tol + spec.tau());
    let all_ok = outcomes.iter().all(|o| o.record.is_some());
    Ok(UniquenessReport {
        pass: all_ok && max_distance <= threshold,
        starts: outcomes,
        distances,
        max_distance,
        threshold,
    })
}

/// First eigenpair of `−Δ φ = Λ Q φ` under `∫Qφ² = 1`.
#[derive(Clone, Debug)]
pub struct EigenRecord {
    pub lambda: f64,
    pub field: Field,
    /// `∫Qφ²`.
    pub constraint: f64,
    /// Sup-norm of `−Δ_h φ − Λ Q φ`.
    pub residual: f64,
    pub iterations: usize,
    pub reinitializations: usize,
}

/// Applies `(−Δ_h)⁻¹` with zero box data.
fn inverse_laplacian(grid: &Grid, r: &[f64]) -> Vec<f64> {
    solve_poisson(grid, r, 1e-12, 40 * grid.n() * grid.dim())
}

/// Smallest Ritz value with positive weighted norm in `span(basis)`.
/// Returns `(Λ, coefficients)`.
fn ritz(a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<(f64, Vec<f64>)> {
    use nalgebra::{DMatrix, SymmetricEigen};
    let k = a.len();
    let am = DMatrix::from_fn(k, k, |i, j| a[i][j]);
    let bm = DMatrix::from_fn(k, k, |i, j| b[i][j]);
    let chol = am.clone().cholesky()?;
    let l = chol.l();
    let linv = l.clone().try_inverse()?;
    // B c = θ A c  ⇔  (L⁻¹ B L⁻ᵀ) y = θ y with c = L⁻ᵀ y, θ = 1/Λ.
    let m = &linv * bm * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let (idx, theta) =
        eig.eigenvalues
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &t)| if t > acc.1 { (i, t) } else { acc },
            );
    if !(theta > 0.0) {
        return None;
    }
    let y = eig.eigenvectors.column(idx).into_owned();
    let c = linv.transpose() * y;
    Some((1.0 / theta, c.iter().cloned().collect()))
}

/// `Λ₁` by preconditioned projected-gradient iteration: the gradient of the
/// Rayleigh quotient is preconditioned by `(−Δ_h)⁻¹`, the step is chosen
/// optimally in the span of the iterate, the direction and the previous
/// step, and the iterate is renormalized to `∫Qv² = 1`.
pub fn solve_lambda1(spec: &ProblemSpec, cfg: &SolveConfig) -> Result<EigenRecord> {
    spec.validate()?;
    let grid = spec.grid;
    let q = spec.q();
    let w = grid.cell_volume();
    let len = grid.len();
    let qv = q.values();
    let interior: Vec<bool> = (0..len).map(|i| !grid.is_boundary(i)).collect();
    let apply_a = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; len];
        laplacian_into(&grid, v, &mut out);
        out.iter_mut().for_each(|x| *x = -*x);
        out
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * w;
    let bdot = |a: &[f64], b: &[f64]| (0..len).map(|i| qv[i] * a[i] * b[i]).sum::<f64>() * w;
    let bump = || -> Vec<f64> {
        let t = torsion(&grid, &q);
        (0..len)
            .map(|i| if qv[i] > 0.0 { t[i] } else { 0.0 })
            .collect()
    };
    let mut v = bump();
    let mut reinit = 0;
    let mut prev: Option<Vec<f64>> = None;
    let mut lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    let tol = cfg.tol;
    let max_iter = cfg.max_iter.max(500);
    let mut iterations = 0;
    while iterations < max_iter {
        let c = bdot(&v, &v);
        if !(c > 0.0) {
            if reinit >= 3 {
                return Err(Error::ConstraintUnreachable(format!("∫Qv² = {c:.3e}")));
            }
            reinit += 1;
            v = bump();
            prev = None;
            continue;
        }
        let s = 1.0 / c.sqrt();
        v.iter_mut().for_each(|x| *x *= s);
        let av = apply_a(&v);
        lambda = dot(&v, &av);
        let r: Vec<f64> = (0..len)
            .map(|i| {
                if interior[i] {
                    av[i] - lambda * qv[i] * v[i]
                } else {
                    0.0
                }
            })
            .collect();
        residual = r.iter().fold(0.0, |m, x| m.max(x.abs()));
        if residual <= tol * lambda.abs().max(1.0) {
            break;
        }
        iterations += 1;
        let d = inverse_laplacian(&grid, &r);
        let mut basis = vec![v.clone(), d];
        if let Some(p) = prev.take() {
            basis.push(p);
        }
        let abasis: Vec<Vec<f64>> = basis.iter().map(|b| apply_a(b)).collect();
        let k = basis.len();
        let am: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| dot(&basis[i], &abasis[j])).collect())
            .collect();
        let bm: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| bdot(&basis[i], &basis[j])).collect())
            .collect();
        let Some((_, coef)) = ritz(&am, &bm).or_else(|| {
            ritz(
                &am[..2].iter().map(|r| r[..2].to_vec()).collect::<Vec<_>>(),
                &bm[..2].iter().map(|r| r[..2].to_vec()).collect::<Vec<_>>(),
            )
        }) else {
            break;
        };
        let next: Vec<f64> = (0..len)
            .map(|i| (0..coef.len()).map(|j| coef[j] * basis[j][i]).sum())
            .collect();
        // Search direction for the next step: the part of the update not along v.
        let step: Vec<f64> = (0..len)
            .map(|i| (1..coef.len()).map(|j| coef[j] * basis[j][i]).sum())
            .collect();
        prev = Some(step);
        v = next;
    }
    let constraint = bdot(&v, &v);
    let s = if constraint > 0.0 {
        1.0 / constraint.sqrt()
    } else {
        1.0
    };
    let vals: Vec<f64> = v.iter().map(|x| (x * s).abs()).collect();
    let field = Field::from_values(grid, vals)?;
    let constraint = bdot(field.values(), field.values());
    if !(lambda > 0.0) || residual > tol * lambda.abs().max(1.0) {
        return Err(Error::NoConvergence {
            iterations,
            residual,
            tolerance: tol,
        });
    }
    Ok(EigenRecord {
        lambda,
        field,
        constraint,
        residual,
        iterations,
        reinitializations: reinit,
    })
}

/// `Λ₁` from the dense generalized eigenproblem `A φ = Λ B φ` with
/// `A = −Δ_h` and `B = diag(Q)` on interior nodes: the largest eigenvalue `θ`
/// of `L⁻¹ B L⁻ᵀ` (`A = L Lᵀ`) gives `Λ₁ = 1/θ`. Cost is cubic in the
/// number of interior nodes, so this is for small grids only.
pub fn dense_lambda1(spec: &ProblemSpec) -> Result<f64> {
    use nalgebra::{DMatrix, SymmetricEigen};
    spec.validate()?;
    let grid = spec.grid;
    let q = spec.q();
    let interior: Vec<usize> = (0..grid.len()).filter(|&i| !grid.is_boundary(i)).collect();
    let m = interior.len();
    if m > 4096 {
        return Err(Error::InvalidInput(format!(
            "{m} unknowns is too many for a dense solve"
        )));
    }
    let mut pos = vec![usize::MAX; grid.len()];
    for (k, &i) in interior.iter().enumerate() {
        pos[i] = k;
    }
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let mut a = DMatrix::<f64>::zeros(m, m);
    let n = grid.n();
    for (k, &i) in interior.iter().enumerate() {
        a[(k, k)] = 2.0 * grid.dim() as f64 * inv_h2;
        let mut nbrs = vec![i - 1, i + 1];
        if grid.dim() == 2 {
            nbrs.extend([i - n, i + n]);
        }
        for j in nbrs {
            if pos[j] != usize::MAX {
                a[(k, pos[j])] = -inv_h2;
            }
        }
    }
    let l = a
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("−Δ_h is not positive definite".into()))?
        .l();
    let linv = l
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("singular Cholesky factor".into()))?;
    let b = DMatrix::from_fn(
        m,
        m,
        |r, c| if r == c { q.values()[interior[r]] } else { 0.0 },
    );
    let c = &linv * b * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let theta = SymmetricEigen::new(c)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(theta > 0.0) {
        return Err(Error::ConstraintUnreachable(
            "Q has no positive part on the grid".into(),
        ));
    }
    Ok(1.0 / theta)
}

/// One row of [`sweep_p`].
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub p: f64,
    pub energy: f64,
    pub sup: f64,
    pub support_measure: f64,
    pub bounding_radius: f64,
    pub inradius: f64,
    /// Sup-distance to the previous row's solution (`NaN` for the first).
    pub dist_prev: f64,
    pub half_extent: f64,
    pub residual: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "p,energy,sup,support_measure,bounding_radius,inradius,dist_prev,half_extent,residual";

    pub fn csv_row(&self) -> String {
        format!(
            "{:?},{:.12e},{:.12e},{:.8e},{:.8e},{:.8e},{:.6e},{:?},{:.3e}",
            self.p,
            self.energy,
            self.sup,
            self.support_measure,
            self.bounding_radius,
            self.inradius,
            self.dist_prev,
            self.half_extent,
            self.residual
        )
    }
}

/// Ground states for each `p` in order, each warm-started from the previous
/// one. Rows whose solve fails carry the error instead.
pub fn sweep_p(
    spec: &ProblemSpec,
    ps: &[f64],
    cfg: &SolveConfig,
) -> Vec<Result<(SweepRow, SolutionRecord)>> {
    let mut out = Vec::with_capacity(ps.len());
    let mut prev: Option<SolutionRecord> = None;
    for &p in ps {
        let mut s = spec.with_p(p);
        let init = match &prev {
            Some(r) => {
                s.grid = *r.grid();
                Init::Field(r.field.clone())
            }
            None => Init::Torsion,
        };
        let res = solve_from(&s, cfg, init).map(|r| {
            let row = SweepRow {
                p,
                energy: r.report.value,
                sup: r.field.sup_norm(),
                support_measure: r.support.measure,
                bounding_radius: r.support.bounding_radius,
                inradius: r.support.inradius,
                dist_prev: prev
                    .as_ref()
                    .map_or(f64::NAN, |q| sup_distance_any(&q.field, &r.field)),
                half_extent: r.grid().half_extent(),
                residual: r.report.residual,
            };
            (row, r)
        });
        if let Ok((_, r)) = &res {
            prev = Some(r.clone());
        }
        out.push(res);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::explicit_w;

    fn interval_spec(p: f64, n: usize, l: f64) -> ProblemSpec {
        ProblemSpec::new(
            p,
            DomainShape::interval(-1.0, 1.0),
            Grid::new(1, n, l).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn spec_validation() {
        let g = Grid::new(1, 65, 4.0).unwrap();
        assert!(matches!(
            ProblemSpec::new(2.0, DomainShape::interval(-1.0, 1.0), g),
            Err(Error::ExponentOutOfRange(_))
        ));
        assert!(matches!(
            ProblemSpec::new(1.5, DomainShape::interval(-4.0, 4.0), g),
            Err(Error::InvalidProblem(_))
        ));
        let g2 = Grid::new(2, 33, 4.0).unwrap();
        assert!(ProblemSpec::new(1.5, DomainShape::interval(-1.0, 1.0), g2).is_err());
    }

    #[test]
    fn eps_schedule_is_geometric() {
        let s = SolveConfig::default().eps_schedule();
        assert_eq!(s.len(), 7);
        assert_eq!(s[0], 1e-2);
        assert!((s[6] - 1e-8).abs() < 1e-20);
    }

    #[test]
    fn p1_ground_state_matches_closed_form() {
        let spec = interval_spec(1.0, 2049, 4.0);
        let r = solve_ground_state(&spec, &SolveConfig::default()).unwrap();
        let g = *r.grid();
        let err = (0..g.len())
            .map(|i| (r.field.values()[i] - explicit_w(1, 1.0, g.radius(i)).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-2, "sup error {err}");
        assert!((r.energy() + 2.0 / 3.0).abs() <= 1e-2);
        assert_eq!(r.classification, SignClass::Nonnegative);
        assert!(r.report.residual <= 1e-8);
        // Continuation stages on the coarse level, then one stage per level.
        assert!(r.provenance.stages.iter().any(|s| s.eps == 1e-2));
        let best = r.provenance.best_so_far();
        assert!(best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn box_is_enlarged_when_support_is_too_wide() {
        // At p = 1.5 the support radius is about 4.5, beyond 0.9 · 4.
        let spec = interval_spec(1.5, 257, 4.0);
        let r = solve_ground_state(&spec, &SolveConfig::default()).unwrap();
        assert!(r.grid().half_extent() > 4.0);
        assert!((r.grid().spacing() - spec.grid.spacing()).abs() < 1e-12);
        assert!(r.support.max_inf_radius <= 0.9 * r.grid().half_extent());
    }

    #[test]
    fn enlarge_limit_reports_increase_box() {
        let spec = interval_spec(1.9, 129, 4.0);
        let cfg = SolveConfig {
            max_enlarge: 0,
            ..Default::default()
        };
        assert!(matches!(
            solve_ground_state(&spec, &cfg),
            Err(Error::IncreaseBox)
        ));
    }

    #[test]
    fn uniqueness_from_random_starts() {
        let spec = interval_spec(1.5, 513, 8.0);
        let rep = verify_uniqueness(&spec, &SolveConfig::default(), 4).unwrap();
        assert!(
            rep.pass,
            "max distance {} vs {}",
            rep.max_distance, rep.threshold
        );
        assert_eq!(rep.distances.len(), 6);
    }

    #[test]
    fn two_far_components_are_both_positive() {
        let shape = DomainShape::union(vec![
            DomainShape::interval(-7.0, -5.0),
            DomainShape::interval(5.0, 7.0),
        ]);
        let spec = ProblemSpec::new(1.5, shape, Grid::new(1, 1025, 16.0).unwrap()).unwrap();
        let r = solve_ground_state(&spec, &SolveConfig::default()).unwrap();
        let g = r.grid();
        let at = |x: f64| r.field.values()[g.nearest_node(&[x]).unwrap()];
        assert!(at(-6.0) > 0.1 && at(6.0) > 0.1);
        assert_eq!(r.support.components, 2);
    }

    #[test]
    fn config_hash_is_stable() {
        let spec = interval_spec(1.5, 129, 4.0);
        let cfg = SolveConfig::default();
        assert_eq!(config_hash(&spec, &cfg), config_hash(&spec, &cfg));
        let other = SolveConfig {
            seed: 1,
            ..cfg.clone()
        };
        assert_ne!(config_hash(&spec, &cfg), config_hash(&spec, &other));
        assert_eq!(config_hash(&spec, &cfg).len(), 64);
    }

    #[test]
    fn lambda1_is_positive_with_unit_constraint() {
        let spec = interval_spec(1.5, 257, 4.0);
        let e = solve_lambda1(&spec, &SolveConfig::default()).unwrap();
        assert!(e.lambda > 0.0);
        assert!((e.constraint - 1.0).abs() <= 1e-10);
        assert!(e.field.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn lambda1_matches_dense_oracle() {
        let spec = interval_spec(1.0, 257, 4.0);
        let e = solve_lambda1(&spec, &SolveConfig::default()).unwrap();
        let dense = dense_lambda1(&spec).unwrap();
        assert!(
            (e.lambda - dense).abs() <= 1e-6 * dense,
            "{} vs {dense}",
            e.lambda
        );
        let g2 = Grid::new(2, 33, 3.0).unwrap();
        let spec2 = ProblemSpec::new(1.0, DomainShape::ball(&[0.0, 0.0], 1.0), g2).unwrap();
        let e2 = solve_lambda1(&spec2, &SolveConfig::default()).unwrap();
        let d2 = dense_lambda1(&spec2).unwrap();
        assert!((e2.lambda - d2).abs() <= 1e-6 * d2, "{} vs {d2}", e2.lambda);
    }

    #[test]
    fn random_starts_never_stop_at_a_saddle() {
        // Seed 2 used to end at a small sign-changing critical point.
        let spec = interval_spec(1.5, 1025, 4.0);
        let rep = verify_uniqueness(&spec, &SolveConfig::default(), 5).unwrap();
        assert!(rep.pass, "max distance {}", rep.max_distance);
        for s in &rep.starts {
            assert_eq!(
                s.record.as_ref().unwrap().classification,
                SignClass::Nonnegative
            );
        }
    }
}
