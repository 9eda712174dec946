//! Support geometry and structural checks on computed solutions.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::energy::{EnergyFunctional, Nonlinearity};
use crate::error::{Error, Result};
use crate::geometry::DomainShape;
use crate::grid::{Field, Grid, QField};
use crate::solver::{solve_ground_state, ProblemSpec, SolutionRecord, SolveConfig, SweepRow};

/// 4-connected (2D) or 2-connected (1D) labelling of `mask`; returns a label
/// per node and the component count. Labels follow scan order.
pub fn label_components(grid: &Grid, mask: &[bool]) -> (Vec<Option<usize>>, usize) {
    let n = grid.n();
    let mut labels = vec![None; mask.len()];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(count);
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let [i, j] = grid.multi_index(idx);
            let mut visit = |k: usize| {
                if mask[k] && labels[k].is_none() {
                    labels[k] = Some(count);
                    queue.push_back(k);
                }
            };
            if i > 0 {
                visit(grid.flat_index(i - 1, j));
            }
            if i + 1 < n {
                visit(grid.flat_index(i + 1, j));
            }
            if grid.dim() == 2 {
                if j > 0 {
                    visit(grid.flat_index(i, j - 1));
                }
                if j + 1 < n {
                    visit(grid.flat_index(i, j + 1));
                }
            }
        }
        count += 1;
    }
    (labels, count)
}

// --- support ------------------------------------------------------------

/// `τ`-thresholded support of a field.
#[derive(Clone, Debug, PartialEq)]
pub struct SupportDescriptor {
    pub grid: Grid,
    pub tau: f64,
    pub mask: Vec<bool>,
    /// Node count times `h^N`.
    pub measure: f64,
    pub components: usize,
    /// Largest Euclidean radius of a support node.
    pub bounding_radius: f64,
    /// Largest sup-norm radius of a support node.
    pub max_inf_radius: f64,
    /// Radius of the largest origin-centered ball whose nodes all lie in the
    /// support.
    pub inradius: f64,
}

impl SupportDescriptor {
    pub fn from_mask(grid: Grid, tau: f64, mask: Vec<bool>) -> Self {
        let count = mask.iter().filter(|&&m| m).count();
        let (_, components) = label_components(&grid, &mask);
        let mut bounding_radius: f64 = 0.0;
        let mut max_inf_radius: f64 = 0.0;
        let mut inradius = f64::INFINITY;
        for (i, &m) in mask.iter().enumerate() {
            if m {
                bounding_radius = bounding_radius.max(grid.radius(i));
                max_inf_radius = max_inf_radius.max(grid.inf_radius(i));
            } else {
                inradius = inradius.min(grid.radius(i));
            }
        }
        Self {
            measure: count as f64 * grid.cell_volume(),
            grid,
            tau,
            mask,
            components,
            bounding_radius,
            max_inf_radius,
            inradius,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn contains_node(&self, i: usize) -> bool {
        self.mask[i]
    }
}

/// Support `{|u| > τ}` without the clearance test.
pub fn support_of(u: &Field, tau: f64) -> SupportDescriptor {
    let mask = u.values().iter().map(|v| v.abs() > tau).collect();
    SupportDescriptor::from_mask(*u.grid(), tau, mask)
}

/// Support `{|u| > τ}`; fails if it reaches into the outer `clearance`
/// fraction of the box.
pub fn extract_support(u: &Field, tau: f64, clearance: f64) -> Result<SupportDescriptor> {
    let s = support_of(u, tau);
    if s.max_inf_radius > (1.0 - clearance) * u.grid().half_extent() {
        return Err(Error::IncreaseBox);
    }
    Ok(s)
}

// --- compatibility ------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct CompatibilityReport {
    pub support_measure: f64,
    pub omega_measure: f64,
    /// `|K| / (2|Ω|) − 1`.
    pub relative_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Default tolerance of the `|K| = 2|Ω|` check: 0.5% in 1D, 2% in 2D.
pub fn compatibility_tolerance(dim: usize) -> f64 {
    if dim == 1 {
        5e-3
    } else {
        2e-2
    }
}

/// Compares the support measure of a `p = 1` ground state with `2|Ω|`.
pub fn compatibility_check(
    support: &SupportDescriptor,
    omega_measure: f64,
    p: f64,
    tolerance: f64,
) -> Result<CompatibilityReport> {
    if p != 1.0 {
        return Err(Error::InvalidInput(format!(
            "the measure identity holds for p = 1 only (got p = {p})"
        )));
    }
    let relative_error = support.measure / (2.0 * omega_measure) - 1.0;
    Ok(CompatibilityReport {
        support_measure: support.measure,
        omega_measure,
        relative_error,
        tolerance,
        pass: relative_error.abs() <= tolerance,
    })
}

// --- starshapedness -----------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct StarshapedReport {
    pub rays: usize,
    /// Angles (radians) of rays whose in-support samples are not an initial
    /// interval.
    pub failed: Vec<f64>,
    pub slack: f64,
    pub pass: bool,
}

/// Ray test: along each ray, every inside sample must lie within `slack` of
/// the first sample that is outside. Returns the angles of failing rays.
fn ray_test(
    origin: [f64; 2],
    reach: f64,
    step: f64,
    rays: usize,
    slack: f64,
    inside: impl Fn(&[f64; 2]) -> bool,
) -> Vec<f64> {
    let mut failed = Vec::new();
    for k in 0..rays {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / rays as f64;
        let (s, c) = theta.sin_cos();
        let mut first_out: Option<f64> = None;
        let mut last_in = 0.0;
        let mut t = 0.0;
        while t <= reach {
            if inside(&[origin[0] + t * c, origin[1] + t * s]) {
                last_in = t;
            } else if first_out.is_none() {
                first_out = Some(t);
            }
            t += step;
        }
        if let Some(out) = first_out {
            if last_in > out + slack {
                failed.push(theta);
            }
        }
    }
    failed
}

fn mask_ray_test(support: &SupportDescriptor, origin: [f64; 2], rays: usize) -> Vec<f64> {
    let grid = &support.grid;
    let h = grid.spacing();
    let reach = grid.half_extent() * std::f64::consts::SQRT_2;
    ray_test(origin, reach, 0.25 * h, rays, h, |x| {
        grid.nearest_node(x).is_some_and(|i| support.mask[i])
    })
}

/// Checks that the support is starshaped with respect to `origin` using
/// `rays` rays and a one-cell slack. `omega` itself must be starshaped with
/// respect to `origin`; this is tested on the exact shape.
pub fn starshaped_check(
    support: &SupportDescriptor,
    omega: &DomainShape,
    origin: [f64; 2],
    rays: usize,
) -> Result<StarshapedReport> {
    let grid = &support.grid;
    if grid.dim() != 2 || omega.dim() != 2 {
        return Err(Error::InvalidInput("starshapedness is tested in 2D".into()));
    }
    let centre = grid
        .nearest_node(&origin)
        .ok_or_else(|| Error::InvalidInput("origin outside the box".into()))?;
    if !support.mask[centre] {
        return Err(Error::InvalidInput("origin outside support".into()));
    }
    let h = grid.spacing();
    let reach = grid.half_extent() * std::f64::consts::SQRT_2;
    if !ray_test(origin, reach, 0.25 * h, rays, 0.0, |x| omega.contains(x)).is_empty() {
        return Err(Error::InvalidInput(
            "Ω is not starshaped with respect to the origin".into(),
        ));
    }
    let failed = mask_ray_test(support, origin, rays);
    Ok(StarshapedReport {
        rays,
        pass: failed.is_empty(),
        failed,
        slack: h,
    })
}

/// Ray test of an arbitrary mask around `origin`, with no precondition on
/// `Ω`. Used as a negative control on domains that are not starshaped.
pub fn ray_check(
    support: &SupportDescriptor,
    origin: [f64; 2],
    rays: usize,
) -> Result<StarshapedReport> {
    if support.grid.dim() != 2 {
        return Err(Error::InvalidInput("starshapedness is tested in 2D".into()));
    }
    let failed = mask_ray_test(support, origin, rays);
    Ok(StarshapedReport {
        rays,
        pass: failed.is_empty(),
        failed,
        slack: support.grid.spacing(),
    })
}

// --- containment growth -------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthReport {
    /// Largest drop of the inradius between consecutive rows.
    pub worst_drop: f64,
    pub monotone: bool,
    /// `inradius(p = 1.9) − inradius(p = 1.0)` when both rows exist.
    pub margin: Option<f64>,
    pub required_margin: f64,
    pub pass: bool,
}

/// Origin-centered inradius must be nondecreasing in `p` within `h`, and
/// exceed its `p = 1` value by `4h` at `p = 1.9`.
pub fn containment_growth(rows: &[SweepRow], h: f64) -> Result<GrowthReport> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty sweep".into()));
    }
    if rows
        .iter()
        .any(|r| !r.inradius.is_finite() || !r.p.is_finite())
    {
        return Err(Error::InvalidInput("missing inradius column".into()));
    }
    if rows.windows(2).any(|w| w[1].p < w[0].p) {
        return Err(Error::InvalidInput("sweep rows are not sorted by p".into()));
    }
    let worst_drop = rows
        .windows(2)
        .map(|w| w[0].inradius - w[1].inradius)
        .fold(0.0, f64::max);
    let monotone = worst_drop <= h;
    let find = |p: f64| {
        rows.iter()
            .find(|r| (r.p - p).abs() < 1e-12)
            .map(|r| r.inradius)
    };
    let margin = match (find(1.0), find(1.9)) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    let required_margin = 4.0 * h;
    Ok(GrowthReport {
        worst_drop,
        monotone,
        margin,
        required_margin,
        pass: monotone && margin.is_none_or(|m| m >= required_margin),
    })
}

// --- barrier ------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierReport {
    pub constant: f64,
    pub t0: f64,
    /// Largest `|u| − C (t₀ − |x|)₊^{2/(2−p)}` over all nodes.
    pub max_excess: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Fits `t₀` on `Ω` and checks `|u| ≤ C (t₀ − |x|)₊^{2/(2−p)} + h²` everywhere,
/// with `C = (2p/(2−p)²)^{1/(p−2)}`.
pub fn barrier_check(u: &Field, q: &QField, p: f64) -> Result<BarrierReport> {
    if !(1.0..2.0).contains(&p) {
        return Err(Error::ExponentOutOfRange(p));
    }
    let grid = u.grid();
    let c = (2.0 * p / (2.0 - p).powi(2)).powf(1.0 / (p - 2.0));
    let k = 2.0 / (2.0 - p);
    let t0 = (0..grid.len())
        .filter(|&i| q.values()[i] > 0.0)
        .map(|i| grid.radius(i) + (u.values()[i].abs() / c).powf(1.0 / k))
        .fold(0.0, f64::max);
    let max_excess = (0..grid.len())
        .map(|i| u.values()[i].abs() - c * (t0 - grid.radius(i)).max(0.0).powf(k))
        .fold(f64::NEG_INFINITY, f64::max);
    let slack = grid.spacing().powi(2);
    Ok(BarrierReport {
        constant: c,
        t0,
        max_excess,
        slack,
        pass: max_excess <= slack,
    })
}

// --- multiplicity -------------------------------------------------------

/// One candidate `w_J = Σ_{i∈J} w_i` of the census.
#[derive(Clone, Debug)]
pub struct CensusMember {
    /// Active component indices `J`.
    pub subset: Vec<usize>,
    pub field: Field,
    pub energy: f64,
    /// `Σ_{i∈J} I(w_i)`, all energies under the full weight.
    pub energy_sum: f64,
    /// Residual under the full weight.
    pub residual: f64,
    pub validated: bool,
}

#[derive(Clone, Debug)]
pub struct MultiplicityCensus {
    /// Number of connected components of `Ω`.
    pub ell: usize,
    pub members: Vec<CensusMember>,
    /// Smallest gap between component supports measured on the grid
    /// (`None` with a single component).
    pub separation: Option<f64>,
    /// Residual tolerance used for validation.
    pub tolerance: f64,
    /// Smallest pairwise sup-distance among validated members.
    pub min_distance: f64,
    /// Largest `|I(w_J) − Σ I(w_i)|` among validated members.
    pub additivity_defect: f64,
    /// All `2^ℓ − 1` members validated and pairwise distinct.
    pub pass: bool,
}

impl MultiplicityCensus {
    pub fn validated(&self) -> usize {
        self.members.iter().filter(|m| m.validated).count()
    }
}

/// Smallest distance between two components of a mask (node centers).
fn mask_gap(grid: &Grid, a: &[bool], b: &[bool]) -> f64 {
    let pa: Vec<Vec<f64>> = (0..grid.len())
        .filter(|&i| a[i])
        .map(|i| grid.coords(i))
        .collect();
    let pb: Vec<Vec<f64>> = (0..grid.len())
        .filter(|&i| b[i])
        .map(|i| grid.coords(i))
        .collect();
    let mut best = f64::INFINITY;
    for x in &pa {
        for y in &pb {
            let d = x
                .iter()
                .zip(y)
                .map(|(s, t)| (s - t) * (s - t))
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Solves each component alone, forms every nonempty sum, and validates the
/// sums against the residual under the full weight `Q_Ω`.
pub fn multiplicity_census(spec: &ProblemSpec, cfg: &SolveConfig) -> Result<MultiplicityCensus> {
    spec.validate()?;
    let components = spec.shape.component_split(&spec.grid)?;
    let ell = components.len();
    if ell > 12 {
        return Err(Error::InvalidInput(format!(
            "{ell} components is too many for a census"
        )));
    }
    // Per-component ground states; each may enlarge its own box, so the
    // census grid is the largest of them.
    let singles: Vec<SolutionRecord> = components
        .par_iter()
        .map(|c| {
            let s = ProblemSpec::new(spec.p, c.clone(), spec.grid)?;
            solve_ground_state(&s, cfg)
        })
        .collect::<Result<_>>()?;
    let grid = singles.iter().map(|r| *r.grid()).fold(spec.grid, |a, b| {
        if b.half_extent() > a.half_extent() {
            b
        } else {
            a
        }
    });
    let fields: Vec<Field> = singles
        .iter()
        .map(|r| {
            if *r.grid() == grid {
                r.field.clone()
            } else {
                grid.sample(|x| {
                    let inside = x.iter().all(|v| v.abs() <= r.grid().half_extent());
                    if inside {
                        r.field.interpolate(x)
                    } else {
                        0.0
                    }
                })
            }
        })
        .collect();
    let eps = singles[0].eps;
    let full = EnergyFunctional::new(grid.sample_q(&spec.shape), Nonlinearity::new(spec.p, eps)?);
    let single_energy: Vec<f64> = fields
        .iter()
        .map(|f| full.energy(f).map(|r| r.value))
        .collect::<Result<_>>()?;
    let tolerance = cfg.tol;
    let members: Vec<CensusMember> = (1usize..(1 << ell))
        .into_par_iter()
        .map(|bits| {
            let subset: Vec<usize> = (0..ell).filter(|i| bits & (1 << i) != 0).collect();
            let mut vals = vec![0.0; grid.len()];
            for &i in &subset {
                for (v, w) in vals.iter_mut().zip(fields[i].values()) {
                    *v += w;
                }
            }
            let field = Field::from_values(grid, vals)?;
            let rep = full.energy(&field)?;
            Ok(CensusMember {
                energy_sum: subset.iter().map(|&i| single_energy[i]).sum(),
                energy: rep.value,
                residual: rep.residual,
                validated: rep.residual <= tolerance,
                subset,
                field,
            })
        })
        .collect::<Result<_>>()?;
    let tau = grid.spacing().powi(2);
    let masks: Vec<Vec<bool>> = fields.iter().map(|f| support_of(f, tau).mask).collect();
    let separation = (ell > 1).then(|| {
        let mut best = f64::INFINITY;
        for i in 0..ell {
            for j in i + 1..ell {
                best = best.min(mask_gap(&grid, &masks[i], &masks[j]));
            }
        }
        best
    });
    let valid: Vec<&CensusMember> = members.iter().filter(|m| m.validated).collect();
    let mut min_distance = f64::INFINITY;
    for i in 0..valid.len() {
        for j in i + 1..valid.len() {
            min_distance = min_distance.min(valid[i].field.sup_distance(&valid[j].field)?);
        }
    }
    let additivity_defect = valid
        .iter()
        .map(|m| (m.energy - m.energy_sum).abs())
        .fold(0.0, f64::max);
    let pass = valid.len() == members.len() && (valid.len() < 2 || min_distance > 10.0 * tau);
    Ok(MultiplicityCensus {
        ell,
        members,
        separation,
        tolerance,
        min_distance,
        additivity_defect,
        pass,
    })
}

// --- separation threshold -----------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationReport {
    /// Largest tested gap at which the census failed.
    pub d_lo: f64,
    /// Smallest tested gap at which all three candidates validated.
    pub d_hi: f64,
    pub census_runs: usize,
    /// `2 (R_supp − R_ω)` from the radial shooting solver when the components
    /// are balls.
    pub radial_estimate: Option<f64>,
}

impl SeparationReport {
    pub fn width(&self) -> f64 {
        self.d_hi - self.d_lo
    }

    pub fn contains(&self, d: f64) -> bool {
        self.d_lo <= d && d <= self.d_hi
    }
}

/// Two copies of a ball of radius `radius` whose boundaries are `gap` apart
/// along the first axis.
pub fn twin_balls(dim: usize, radius: f64, gap: f64) -> DomainShape {
    let c = radius + 0.5 * gap;
    let centre = |s: f64| {
        let mut x = vec![0.0; dim];
        x[0] = s * c;
        x
    };
    DomainShape::union(vec![
        DomainShape::ball(&centre(-1.0), radius),
        DomainShape::ball(&centre(1.0), radius),
    ])
}

/// Bisection on the gap between two congruent balls for the smallest gap at
/// which all three census candidates validate. Gaps are multiples of `2h`,
/// so the result is an interval of width `2h`.
pub fn separation_threshold_search(
    dim: usize,
    radius: f64,
    p: f64,
    h: f64,
    bracket: (f64, f64),
    cfg: &SolveConfig,
) -> Result<SeparationReport> {
    let (lo, hi) = bracket;
    if !(0.0 <= lo && lo < hi) {
        return Err(Error::InvalidInput(format!("bad gap bracket [{lo}, {hi}]")));
    }
    let unit = 2.0 * h;
    let mut k_lo = (lo / unit).floor() as i64;
    let mut k_hi = (hi / unit).ceil() as i64;
    let mut runs = 0;
    let mut passes = |k: i64| -> Result<bool> {
        runs += 1;
        let gap = k as f64 * unit;
        let shape = twin_balls(dim, radius, gap);
        // Box: both components plus room for their supports.
        let half = ((2.0 * radius + 0.5 * gap) * 2.0 / h).ceil() * h;
        let grid = Grid::with_spacing(dim, half, h)?;
        let spec = ProblemSpec::new(p, shape, grid)?;
        Ok(multiplicity_census(&spec, cfg)?.pass)
    };
    if passes(k_lo)? {
        return Err(Error::InvalidInput(format!(
            "census already validates at the lower gap {:.4}",
            k_lo as f64 * unit
        )));
    }
    if !passes(k_hi)? {
        return Err(Error::InvalidInput(format!(
            "census does not validate at the upper gap {:.4}",
            k_hi as f64 * unit
        )));
    }
    while k_hi - k_lo > 1 {
        let mid = (k_lo + k_hi) / 2;
        if passes(mid)? {
            k_hi = mid;
        } else {
            k_lo = mid;
        }
    }
    let radial_estimate = crate::radial::shoot_ground_state(dim, p, radius, None)
        .ok()
        .map(|s| 2.0 * (s.profile.support_radius - radius));
    Ok(SeparationReport {
        d_lo: k_lo as f64 * unit,
        d_hi: k_hi as f64 * unit,
        census_runs: runs,
        radial_estimate,
    })
}

// --- uniqueness near p = 2 ----------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct NearTwoRow {
    pub p: f64,
    /// Validated census members (`None` when a component solve failed).
    pub validated: Option<usize>,
    pub expected: usize,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NearTwoReport {
    pub ell: usize,
    pub rows: Vec<NearTwoRow>,
    /// `(last p with the full census, first p where it breaks)`.
    pub p0_bracket: Option<(f64, f64)>,
    pub summary: String,
}

/// Runs the census for increasing `p` and reports where the single-component
/// candidates stop validating.
pub fn uniqueness_near_two(
    spec: &ProblemSpec,
    ps: &[f64],
    cfg: &SolveConfig,
) -> Result<NearTwoReport> {
    if ps.windows(2).any(|w| w[1] <= w[0]) || ps.iter().any(|&p| !(1.0..=1.95).contains(&p)) {
        return Err(Error::InvalidInput(
            "p list must ascend within [1, 1.95]".into(),
        ));
    }
    let ell = spec.shape.component_split(&spec.grid)?.len();
    let expected = (1usize << ell) - 1;
    let mut rows = Vec::new();
    for &p in ps {
        let row = match multiplicity_census(&spec.with_p(p), cfg) {
            Ok(c) => NearTwoRow {
                p,
                validated: Some(c.validated()),
                expected,
                note: if c.pass {
                    "census complete".into()
                } else {
                    "candidates fail validation".into()
                },
            },
            Err(e) => NearTwoRow {
                p,
                validated: None,
                expected,
                note: e.to_string(),
            },
        };
        rows.push(row);
    }
    let complete = |r: &NearTwoRow| r.validated == Some(r.expected);
    let p0_bracket = rows
        .windows(2)
        .find(|w| complete(&w[0]) && !complete(&w[1]))
        .map(|w| (w[0].p, w[1].p));
    let last = ps.last().copied().unwrap_or(1.0);
    let summary = if ell == 1 {
        "single component: the nonnegative solution is unique for every p".to_string()
    } else if let Some((a, b)) = p0_bracket {
        format!("single-component candidates stop validating between p = {a} and p = {b}")
    } else if rows.iter().all(complete) {
        format!("p₀ > {last} at this scale")
    } else {
        "census incomplete already at the smallest p".to_string()
    };
    Ok(NearTwoReport {
        ell,
        rows,
        p0_bracket,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::explicit_w;
    use proptest::prelude::*;

    fn row(p: f64, inradius: f64) -> SweepRow {
        SweepRow {
            p,
            energy: -1.0,
            sup: 1.0,
            support_measure: 1.0,
            bounding_radius: inradius,
            inradius,
            dist_prev: f64::NAN,
            half_extent: 8.0,
            residual: 0.0,
        }
    }

    #[test]
    fn labels_count_components() {
        let g = Grid::new(2, 17, 1.0).unwrap();
        let mask: Vec<bool> = (0..g.len())
            .map(|i| {
                let [a, _] = g.multi_index(i);
                a == 1 || a == 15
            })
            .collect();
        let (labels, count) = label_components(&g, &mask);
        assert_eq!(count, 2);
        assert!(labels.iter().zip(&mask).all(|(l, m)| l.is_some() == *m));
    }

    #[test]
    fn support_of_explicit_profile() {
        let g = Grid::new(1, 2049, 4.0).unwrap();
        let w = g.sample(|x| explicit_w(1, 1.0, x[0].abs()).unwrap());
        let s = extract_support(&w, g.spacing().powi(2), 0.1).unwrap();
        assert_eq!(s.components, 1);
        // Nodes with `w > h²` stop about `√2 h` short of `|x| = 2`.
        assert!((s.measure - 4.0).abs() <= 4.0 * g.spacing());
        assert!((s.inradius - 2.0).abs() <= 2.0 * g.spacing());
        let c = compatibility_check(&s, 2.0, 1.0, compatibility_tolerance(1)).unwrap();
        assert!(c.pass, "{}", c.relative_error);
        assert!(compatibility_check(&s, 2.0, 1.5, 1e-2).is_err());
    }

    #[test]
    fn support_near_the_box_edge_asks_for_a_larger_box() {
        let g = Grid::new(1, 257, 2.1).unwrap();
        let w = g.sample(|x| explicit_w(1, 1.0, x[0].abs()).unwrap());
        assert!(matches!(
            extract_support(&w, 1e-6, 0.1),
            Err(Error::IncreaseBox)
        ));
    }

    #[test]
    fn rays_accept_a_disc_and_reject_an_annulus() {
        let g = Grid::new(2, 129, 2.0).unwrap();
        let disc: Vec<bool> = (0..g.len()).map(|i| g.radius(i) < 1.0).collect();
        let ring: Vec<bool> = (0..g.len())
            .map(|i| g.radius(i) < 0.3 || (0.6..1.0).contains(&g.radius(i)))
            .collect();
        let omega = DomainShape::ball(&[0.0, 0.0], 1.0);
        let s = SupportDescriptor::from_mask(g, 0.0, disc.clone());
        let r = starshaped_check(&s, &omega, [0.0, 0.0], 720).unwrap();
        assert!(r.pass);
        let annulus = DomainShape::Annulus {
            center: vec![0.0, 0.0],
            r_inner: 0.5,
            r_outer: 1.0,
        };
        assert!(starshaped_check(&s, &annulus, [0.0, 0.0], 720).is_err());
        let s = SupportDescriptor::from_mask(g, 0.0, ring);
        let r = starshaped_check(&s, &omega, [0.0, 0.0], 720).unwrap();
        assert!(!r.pass);
        assert_eq!(r.failed.len(), 720);
        let r = ray_check(&s, [0.0, 0.0], 720).unwrap();
        assert_eq!(r.failed.len(), 720);
    }

    #[test]
    fn growth_report() {
        let h = 0.01;
        let good = [row(1.0, 2.0), row(1.5, 2.2), row(1.9, 3.0)];
        assert!(containment_growth(&good, h).unwrap().pass);
        let dip = [row(1.0, 2.0), row(1.5, 1.9), row(1.9, 3.0)];
        assert!(!containment_growth(&dip, h).unwrap().pass);
        let flat = [row(1.0, 2.0), row(1.9, 2.02)];
        assert!(!containment_growth(&flat, h).unwrap().pass);
        assert!(containment_growth(&[row(1.5, 1.0), row(1.0, 2.0)], h).is_err());
        assert!(containment_growth(&[], h).is_err());
    }

    #[test]
    fn explicit_profile_sits_below_its_barrier() {
        let g = Grid::new(1, 1025, 4.0).unwrap();
        let w = g.sample(|x| explicit_w(1, 1.0, x[0].abs()).unwrap());
        let q = g.sample_q(&DomainShape::interval(-1.0, 1.0));
        let r = barrier_check(&w, &q, 1.0).unwrap();
        assert!(r.pass, "excess {}", r.max_excess);
        assert!(barrier_check(&w, &q, 2.0).is_err());
    }

    #[test]
    fn census_of_two_far_intervals() {
        let shape = twin_balls(1, 1.0, 8.0);
        let spec = ProblemSpec::new(1.0, shape, Grid::new(1, 1025, 8.0).unwrap()).unwrap();
        let c = multiplicity_census(&spec, &SolveConfig::default()).unwrap();
        assert_eq!(c.ell, 2);
        assert_eq!(c.members.len(), 3);
        assert_eq!(c.validated(), 3);
        assert!(c.pass);
        assert!(c.additivity_defect <= 1e-8);
        assert!(c.separation.unwrap() > 2.0);
    }

    #[test]
    fn overlapping_supports_fail_the_census() {
        let shape = twin_balls(1, 1.0, 1.0);
        let spec = ProblemSpec::new(1.0, shape, Grid::new(1, 513, 8.0).unwrap()).unwrap();
        let c = multiplicity_census(&spec, &SolveConfig::default()).unwrap();
        assert!(!c.pass);
        assert!(c.validated() < 3);
    }

    #[test]
    fn near_two_rejects_bad_lists() {
        let spec = ProblemSpec::new(
            1.0,
            twin_balls(1, 1.0, 8.0),
            Grid::new(1, 129, 8.0).unwrap(),
        )
        .unwrap();
        let cfg = SolveConfig::default();
        assert!(uniqueness_near_two(&spec, &[1.5, 1.2], &cfg).is_err());
        assert!(uniqueness_near_two(&spec, &[1.5, 1.99], &cfg).is_err());
    }

    #[test]
    fn separation_bracket_is_checked() {
        let cfg = SolveConfig::default();
        assert!(separation_threshold_search(1, 1.0, 1.0, 1.0 / 64.0, (2.0, 1.0), &cfg).is_err());
    }

    proptest! {
        #[test]
        fn twin_balls_are_mirror_images(gap in 0.1f64..5.0, r in 0.2f64..2.0, x in -8.0f64..8.0) {
            let s = twin_balls(1, r, gap);
            prop_assert_eq!(s.contains(&[x]), s.contains(&[-x]));
            prop_assert!(!s.contains(&[0.0]));
            prop_assert!(s.contains(&[r + 0.5 * gap]));
        }

        #[test]
        fn component_count_of_random_1d_masks(bits in proptest::collection::vec(any::<bool>(), 16..60)) {
            let g = Grid::new(1, bits.len(), 1.0).unwrap();
            let (_, count) = label_components(&g, &bits);
            let runs = bits.windows(2).filter(|w| w[1] && !w[0]).count() + usize::from(bits[0]);
            prop_assert_eq!(count, runs);
        }
    }
}
