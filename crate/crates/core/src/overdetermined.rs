//! Outer-set problem: for a given `D`, the set `U ⊃⊃ D` carrying a positive
//! `τ` with `−Δτ = χ_D − χ_{U∖D}` in `U` and `τ = ∂_ν τ = 0` on `∂U`. The
//! `p = 1` ground state on `Ω = D` is such a `τ`, with `U` its support.

use crate::analysis::{support_of, SupportDescriptor};
use crate::error::{Error, Result};
use crate::geometry::DomainShape;
use crate::grid::{Field, Grid};
use crate::solver::{solve_from, Init, ProblemSpec, SolutionRecord, SolveConfig};

/// `|τ|` and central-difference `|∇τ|` on the band of nodes within `2h` of
/// `∂U`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandStats {
    pub nodes: usize,
    pub max_tau: f64,
    pub max_grad: f64,
}

#[derive(Clone, Debug)]
pub struct OuterSetResult {
    pub tau: Field,
    /// `U`, the thresholded support of `τ`.
    pub support: SupportDescriptor,
    pub d_mask: Vec<bool>,
    pub d_measure: f64,
    pub band: BandStats,
    /// Every node of `D` has all its neighbours in `U`.
    pub compactly_inside: bool,
    /// Ground-state record when `τ` came from a solve.
    pub record: Option<SolutionRecord>,
}

impl OuterSetResult {
    /// `|U| / (2|D|) − 1`.
    pub fn measure_ratio_error(&self) -> f64 {
        self.support.measure / (2.0 * self.d_measure) - 1.0
    }

    /// Radius of the centered ball (half-length in 1D) with the measure of
    /// the thresholded support.
    pub fn equivalent_radius(&self) -> f64 {
        let m = self.support.measure;
        if self.tau.grid().dim() == 1 {
            0.5 * m
        } else {
            (m / std::f64::consts::PI).sqrt()
        }
    }

    /// Equivalent radius moved out to `τ = 0`. Off `∂U` the solution grows
    /// like `dist²/2`, so the level `τ_thr` sits `√(2 τ_thr)` inside `∂U`.
    pub fn contact_radius(&self) -> f64 {
        self.equivalent_radius() + (2.0 * self.support.tau).sqrt()
    }
}

fn neighbours(grid: &Grid, idx: usize) -> Vec<usize> {
    let n = grid.n();
    let [i, j] = grid.multi_index(idx);
    let mut out = Vec::with_capacity(4);
    if i > 0 {
        out.push(grid.flat_index(i - 1, j));
    }
    if i + 1 < n {
        out.push(grid.flat_index(i + 1, j));
    }
    if grid.dim() == 2 {
        if j > 0 {
            out.push(grid.flat_index(i, j - 1));
        }
        if j + 1 < n {
            out.push(grid.flat_index(i, j + 1));
        }
    }
    out
}

fn grad_norm(u: &Field, idx: usize) -> f64 {
    let grid = u.grid();
    let n = grid.n();
    let v = u.values();
    let [i, j] = grid.multi_index(idx);
    let h2 = 2.0 * grid.spacing();
    let axis = |lo: usize, hi: usize| (v[hi] - v[lo]) / h2;
    let mut s = 0.0;
    if i > 0 && i + 1 < n {
        s += axis(grid.flat_index(i - 1, j), grid.flat_index(i + 1, j)).powi(2);
    }
    if grid.dim() == 2 && j > 0 && j + 1 < n {
        s += axis(grid.flat_index(i, j - 1), grid.flat_index(i, j + 1)).powi(2);
    }
    s.sqrt()
}

/// Statistics on the nodes within `2h` of `∂U`, located at the midpoints of
/// grid edges across which `mask` changes.
pub fn boundary_band(u: &Field, mask: &[bool]) -> BandStats {
    let grid = *u.grid();
    let n = grid.n() as i64;
    let two_d = grid.dim() == 2;
    let mut band = vec![false; grid.len()];
    let mut mark = |i: i64, j: i64| {
        if i >= 0 && j >= 0 && i < n && (!two_d && j == 0 || two_d && j < n) {
            band[grid.flat_index(i as usize, j as usize)] = true;
        }
    };
    for k in 0..grid.len() {
        let [i, j] = grid.multi_index(k);
        let (i, j) = (i as i64, j as i64);
        let axes: &[(i64, i64)] = if two_d { &[(1, 0), (0, 1)] } else { &[(1, 0)] };
        for &(di, dj) in axes {
            let (x, y) = (i + di, j + dj);
            if x >= n || y >= n || mask[grid.flat_index(x as usize, y as usize)] == mask[k] {
                continue;
            }
            // Offsets `a` along the edge direction, `b` across it, in cells
            // from node `k`; the midpoint sits at `a = ½`.
            let across = if two_d { 2 } else { 0 };
            for b in -across..=across {
                for a in -2..=3i64 {
                    let da = a as f64 - 0.5;
                    if da * da + (b * b) as f64 > 4.0 {
                        continue;
                    }
                    if di == 1 {
                        mark(i + a, j + b);
                    } else {
                        mark(i + b, j + a);
                    }
                }
            }
        }
    }
    let mut stats = BandStats {
        nodes: 0,
        max_tau: 0.0,
        max_grad: 0.0,
    };
    for (k, &b) in band.iter().enumerate() {
        if b {
            stats.nodes += 1;
            stats.max_tau = stats.max_tau.max(u.values()[k].abs());
            stats.max_grad = stats.max_grad.max(grad_norm(u, k));
        }
    }
    stats
}

/// Builds the outer-set descriptors from a given `τ`.
pub fn outer_set_from_field(d: &DomainShape, tau: Field) -> Result<OuterSetResult> {
    let grid = *tau.grid();
    let q = grid.sample_q(d);
    let d_mask = q.omega_mask();
    let count = d_mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::InvalidInput("D contains no grid node".into()));
    }
    let support = support_of(&tau, grid.spacing().powi(2));
    let compactly_inside = (0..grid.len())
        .filter(|&k| d_mask[k])
        .all(|k| support.mask[k] && neighbours(&grid, k).into_iter().all(|m| support.mask[m]));
    let band = boundary_band(&tau, &support.mask);
    Ok(OuterSetResult {
        d_measure: count as f64 * grid.cell_volume(),
        tau,
        support,
        d_mask,
        band,
        compactly_inside,
        record: None,
    })
}

/// `τ` is the `p = 1` ground state on `Ω = D`; `U` is its support.
pub fn outer_set_solve(d: &DomainShape, grid: Grid, cfg: &SolveConfig) -> Result<OuterSetResult> {
    outer_set_solve_from(d, grid, cfg, Init::Torsion)
}

pub fn outer_set_solve_from(
    d: &DomainShape,
    grid: Grid,
    cfg: &SolveConfig,
    init: Init,
) -> Result<OuterSetResult> {
    let spec = ProblemSpec::new(1.0, d.clone(), grid)?;
    let record = solve_from(&spec, cfg, init)?;
    let mut out = outer_set_from_field(d, record.field.clone())?;
    out.record = Some(record);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxReport {
    pub max_tau: f64,
    pub max_grad: f64,
    /// `10 τ_thr`.
    pub tau_limit: f64,
    /// `20 h`.
    pub grad_limit: f64,
    pub pass: bool,
}

impl FluxReport {
    pub const CSV_HEADER: &'static str = "max_tau,tau_limit,max_grad,grad_limit,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6e},{:.6e},{:.6e},{:.6e},{}",
            self.max_tau, self.tau_limit, self.max_grad, self.grad_limit, self.pass
        )
    }
}

/// `τ` and `∇τ` vanish on `∂U` up to grid scale. With quadratic contact both
/// `|τ| = O(h²)` and `|∇τ| = O(h)` on the band; a linear contact fails.
pub fn flux_check(result: &OuterSetResult) -> FluxReport {
    let h = result.tau.grid().spacing();
    let tau_limit = 10.0 * result.support.tau;
    let grad_limit = 20.0 * h;
    FluxReport {
        max_tau: result.band.max_tau,
        max_grad: result.band.max_grad,
        tau_limit,
        grad_limit,
        pass: result.band.nodes > 0
            && result.band.max_tau <= tau_limit
            && result.band.max_grad <= grad_limit,
    }
}

/// Measure comparison for an annular `D`. A ball `U ⊇ D` would need
/// `|U| ≥ |B_{r_outer}|`, which exceeds `2|D|` once the annulus is thin.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnulusReport {
    pub d_measure: f64,
    pub u_measure: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    /// Measure of the smallest centered ball containing `D`.
    pub enclosing_ball: f64,
    /// `|B_{r_outer}| > 2|D| (1 + tol)`: `U` cannot be a ball.
    pub excludes_ball: bool,
    /// The center of the annulus lies outside `U`.
    pub has_hole: bool,
    pub pass: bool,
}

pub fn annulus_report(
    result: &OuterSetResult,
    r_outer: f64,
    center: &[f64],
    tolerance: f64,
) -> Result<AnnulusReport> {
    let grid = result.tau.grid();
    if grid.dim() != 2 {
        return Err(Error::InvalidInput(
            "the annulus report is two-dimensional".into(),
        ));
    }
    let c = grid
        .nearest_node(center)
        .ok_or_else(|| Error::InvalidInput("annulus center outside the box".into()))?;
    let relative_error = result.measure_ratio_error();
    let enclosing_ball = std::f64::consts::PI * r_outer * r_outer;
    let excludes_ball = enclosing_ball > 2.0 * result.d_measure * (1.0 + tolerance);
    Ok(AnnulusReport {
        d_measure: result.d_measure,
        u_measure: result.support.measure,
        relative_error,
        tolerance,
        enclosing_ball,
        excludes_ball,
        has_hole: !result.support.mask[c],
        pass: relative_error.abs() <= tolerance,
    })
}

/// The inner-set question: given `U`, is there `D ⊂⊂ U` solving the same
/// overdetermined problem? No method is known; the command only says so.
pub fn inner_set_status() -> &'static str {
    "inner-set problem: given U, find D with D ⊂⊂ U and τ = ∂_ν τ = 0 on ∂U. \
     Existence and uniqueness are open; no solver is provided."
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::explicit_w;

    #[test]
    fn interval_outer_set_doubles_d() {
        let d = DomainShape::interval(-1.0, 1.0);
        let grid = Grid::new(1, 2049, 4.0).unwrap();
        let r = outer_set_solve(&d, grid, &SolveConfig::default()).unwrap();
        let h = grid.spacing();
        assert!(r.compactly_inside);
        assert!(
            (r.contact_radius() - 2.0).abs() <= 2.0 * h,
            "{}",
            r.contact_radius()
        );
        assert!(r.equivalent_radius() < r.contact_radius());
        assert!(r.measure_ratio_error().abs() <= 5e-3);
        let f = flux_check(&r);
        assert!(f.pass, "{f:?}");
        assert_eq!(f.csv_row().split(',').count(), 5);
    }

    #[test]
    fn linear_contact_fails_flux_check() {
        let d = DomainShape::interval(-1.0, 1.0);
        let grid = Grid::new(1, 1025, 4.0).unwrap();
        let tau = grid.sample(|x| (2.0 - x[0].abs()).max(0.0));
        let f = flux_check(&outer_set_from_field(&d, tau).unwrap());
        assert!(!f.pass);
        assert!(f.max_grad > f.grad_limit);
    }

    #[test]
    fn closed_form_disc_profile_passes() {
        let d = DomainShape::ball(&[0.0, 0.0], 1.0);
        let grid = Grid::new(2, 257, 2.0).unwrap();
        let tau = grid.sample(|x| explicit_w(2, 1.0, (x[0] * x[0] + x[1] * x[1]).sqrt()).unwrap());
        let r = outer_set_from_field(&d, tau).unwrap();
        assert!(flux_check(&r).pass);
        assert!(r.compactly_inside);
        let sqrt2 = std::f64::consts::SQRT_2;
        assert!(
            (r.contact_radius() - sqrt2).abs() <= grid.spacing(),
            "{}",
            r.contact_radius()
        );
    }

    #[test]
    fn empty_d_is_rejected() {
        let d = DomainShape::interval(3.9, 3.95);
        let grid = Grid::new(1, 33, 4.0).unwrap();
        assert!(outer_set_from_field(&d, grid.zeros()).is_err());
    }

    #[test]
    fn two_starts_agree_on_u() {
        let d = DomainShape::interval(-1.0, 1.0);
        let grid = Grid::new(1, 513, 4.0).unwrap();
        let cfg = SolveConfig::default();
        let a = outer_set_solve_from(&d, grid, &cfg, Init::Torsion).unwrap();
        let b = outer_set_solve_from(&d, grid, &cfg, Init::Random(7)).unwrap();
        let diff = a
            .support
            .mask
            .iter()
            .zip(&b.support.mask)
            .filter(|(x, y)| x != y)
            .count();
        assert!(diff <= 2);
    }

    #[test]
    fn thin_annulus_outer_set_is_not_a_ball() {
        let d = DomainShape::Annulus {
            center: vec![0.0, 0.0],
            r_inner: 0.8,
            r_outer: 1.0,
        };
        let grid = Grid::new(2, 97, 1.5).unwrap();
        let r = outer_set_solve(&d, grid, &SolveConfig::default()).unwrap();
        let a = annulus_report(&r, 1.0, &[0.0, 0.0], 2e-2).unwrap();
        assert!(a.excludes_ball);
        assert!(a.has_hole);
        assert!(r.compactly_inside);
        let one_d = outer_set_from_field(
            &DomainShape::interval(-1.0, 1.0),
            Grid::new(1, 65, 4.0).unwrap().zeros(),
        );
        assert!(annulus_report(&one_d.unwrap(), 1.0, &[0.0], 2e-2).is_err());
    }

    #[test]
    fn inner_set_is_reported_open() {
        assert!(inner_set_status().contains("open"));
    }
}
