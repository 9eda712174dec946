//! The nonlinearity `f_p`, the discrete energy `I_p` and its gradient.
//!
//! At `p = 1` the sign nonlinearity is smoothed to `t / √(t² + ε²)`, whose
//! primitive is `|t|_ε = √(t² + ε²) − ε`.

use crate::error::{Error, Result};
use crate::grid::{laplacian_into, Field, Grid, QField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nonlinearity {
    p: f64,
    eps: f64,
}

impl Nonlinearity {
    pub fn new(p: f64, eps: f64) -> Result<Self> {
        if !(1.0..2.0).contains(&p) {
            return Err(Error::ExponentOutOfRange(p));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidInput(format!("smoothing eps = {eps}")));
        }
        Ok(Self { p, eps })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn is_sign(&self) -> bool {
        self.p == 1.0
    }

    /// Whether a gradient exists everywhere.
    pub fn is_smooth(&self) -> bool {
        self.p > 1.0 || self.eps > 0.0
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { p: self.p, eps }
    }

    /// `f_p(t)`.
    #[inline]
    pub fn f(&self, t: f64) -> f64 {
        if self.p > 1.0 {
            if t == 0.0 {
                0.0
            } else {
                t.signum() * t.abs().powf(self.p - 1.0)
            }
        } else if self.eps > 0.0 {
            t / (t * t + self.eps * self.eps).sqrt()
        } else if t > 0.0 {
            1.0
        } else if t < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    /// `f_p′(t)`; infinite where `f_p` is not differentiable.
    #[inline]
    pub fn df(&self, t: f64) -> f64 {
        if self.p > 1.0 {
            if t == 0.0 {
                f64::INFINITY
            } else {
                (self.p - 1.0) * t.abs().powf(self.p - 2.0)
            }
        } else if self.eps > 0.0 {
            let e2 = self.eps * self.eps;
            e2 / (t * t + e2).powf(1.5)
        } else if t == 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    /// Global minimizer of `½ a t² − b t − F(t)` for `a > 1`; the sign of `b`
    /// (or of `hint` when `b = 0`) selects the branch.
    pub fn concave_coordinate_min(&self, a: f64, b: f64, hint: f64) -> f64 {
        let sign = if b > 0.0 || (b == 0.0 && hint >= 0.0) {
            1.0
        } else {
            -1.0
        };
        let b = b.abs();
        let g = |x: f64| a * x - b - self.f(x);
        // g is convex on x > 0 with g(0) ≤ 0; Newton from an upper bound
        // decreases monotonically to the root.
        let mut x = (b + 1.0) / (a - 1.0);
        let h = hint.abs();
        if hint * sign > 0.0 && h < x && g(h) >= 0.0 {
            x = h;
        }
        for _ in 0..100 {
            let gx = g(x);
            if gx <= 0.0 {
                break;
            }
            let next = x - gx / (a - self.df(x));
            if !(next < x) || next <= 0.0 {
                break;
            }
            if x - next <= 1e-16 * x {
                x = next;
                break;
            }
            x = next;
        }
        sign * x
    }

    /// Primitive `F` with `F(0) = 0`: `|t|^p / p`, or `|t|_ε` at `p = 1`.
    #[inline]
    pub fn primitive(&self, t: f64) -> f64 {
        if self.p > 1.0 {
            t.abs().powf(self.p) / self.p
        } else if self.eps > 0.0 {
            // Written to avoid cancellation for |t| << eps.
            t * t / ((t * t + self.eps * self.eps).sqrt() + self.eps)
        } else {
            t.abs()
        }
    }

    /// `F(v) − F(u)` without cancellation when `v ≈ u`.
    #[inline]
    pub fn primitive_change(&self, u: f64, v: f64) -> f64 {
        if u == v {
            return 0.0;
        }
        if self.p > 1.0 {
            if u != 0.0 && (v / u) > 0.0 {
                let x = (v - u) / u;
                u.abs().powf(self.p) / self.p * (self.p * x.ln_1p()).exp_m1()
            } else {
                self.primitive(v) - self.primitive(u)
            }
        } else if self.eps > 0.0 {
            let e2 = self.eps * self.eps;
            (v - u) * (v + u) / ((v * v + e2).sqrt() + (u * u + e2).sqrt())
        } else {
            v.abs() - u.abs()
        }
    }

    /// Solves `v + c f(v) = z` for `c ≥ 0`; the proximal map of `c F`.
    pub fn prox(&self, z: f64, c: f64) -> f64 {
        if z == 0.0 || c == 0.0 {
            return z;
        }
        let a = z.abs();
        let s = if self.p > 1.0 {
            prox_power(a, c, self.p - 1.0)
        } else if self.eps > 0.0 {
            prox_smoothed_abs(a, c, self.eps)
        } else {
            (a - c).max(0.0)
        };
        s.copysign(z)
    }
}

/// Root of `s + c s^q = a`, `q ∈ (0, 1)`, via Newton in `t = s^q`, where the
/// equation `t^{1/q} + c t = a` is convex and increasing; iterates decrease
/// monotonically from an upper bound.
fn prox_power(a: f64, c: f64, q: f64) -> f64 {
    let inv_q = 1.0 / q;
    let mut t = (a / c).min(a.powf(q));
    for _ in 0..100 {
        let tp = t.powf(inv_q - 1.0);
        let g = t * tp + c * t - a;
        let dg = inv_q * tp + c;
        let next = (t - g / dg).max(0.0);
        if next >= t || t - next <= 1e-16 * t {
            t = next.min(t);
            break;
        }
        t = next;
    }
    t.powf(inv_q)
}

/// Root of `s + c s / √(s² + ε²) = a`; the left side is concave increasing, so
/// Newton from `max(a − c, 0)` (a lower bound) increases monotonically.
fn prox_smoothed_abs(a: f64, c: f64, eps: f64) -> f64 {
    let mut s = (a - c).max(0.0);
    for _ in 0..200 {
        let r = (s * s + eps * eps).sqrt();
        let g = s + c * s / r - a;
        let dg = 1.0 + c * eps * eps / (r * r * r);
        let next = s - g / dg;
        if next <= s || next - s <= 1e-16 * next {
            s = next.max(s);
            break;
        }
        s = next;
    }
    s.min(a)
}

/// Parts of the discrete energy at one field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport {
    /// `I_p(u)`.
    pub value: f64,
    /// `½‖∇u‖²`.
    pub dirichlet: f64,
    /// `(1/p)∫Q|u|^p` (smoothed at `p = 1`).
    pub potential: f64,
    /// Sup-norm of `−Δ_h u − Q f_p(u)` over interior nodes.
    pub residual: f64,
    /// `|‖∇u‖² − ∫Q u f_p(u)|`; vanishes at critical points.
    pub identity_defect: f64,
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str = "value,dirichlet,potential,residual,identity_defect";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.12e},{:.12e},{:.12e},{:.6e},{:.6e}",
            self.value, self.dirichlet, self.potential, self.residual, self.identity_defect
        )
    }

    /// `identity_defect / ‖∇u‖²`.
    pub fn relative_identity_defect(&self) -> f64 {
        let grad2 = 2.0 * self.dirichlet;
        if grad2 > 0.0 {
            self.identity_defect / grad2
        } else {
            self.identity_defect
        }
    }
}

/// `I_p` on a grid with a fixed weight; the object every solver descends on.
#[derive(Clone, Debug)]
pub struct EnergyFunctional {
    grid: Grid,
    q: QField,
    nl: Nonlinearity,
}

impl EnergyFunctional {
    pub fn new(q: QField, nl: Nonlinearity) -> Self {
        Self {
            grid: *q.grid(),
            q,
            nl,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn q(&self) -> &QField {
        &self.q
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nl
    }

    pub fn with_nonlinearity(&self, nl: Nonlinearity) -> Self {
        Self {
            grid: self.grid,
            q: self.q.clone(),
            nl,
        }
    }

    fn check(&self, u: &Field) -> Result<()> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Full energy report.
    pub fn energy(&self, u: &Field) -> Result<EnergyReport> {
        self.check(u)?;
        let mut lap = vec![0.0; self.grid.len()];
        laplacian_into(&self.grid, u.values(), &mut lap);
        Ok(self.report_with_laplacian(u.values(), &lap))
    }

    /// Energy report when `Δ_h u` is already known.
    pub fn report_with_laplacian(&self, u: &[f64], lap: &[f64]) -> EnergyReport {
        let dirichlet = 0.5 * crate::grid::dirichlet_energy_raw(&self.grid, u);
        let w = self.grid.cell_volume();
        let q = self.q.values();
        let mut pot = 0.0;
        let mut pairing = 0.0;
        let mut residual: f64 = 0.0;
        for i in 0..u.len() {
            if self.grid.is_boundary(i) {
                continue;
            }
            pot += q[i] * self.nl.primitive(u[i]);
            let fu = self.nl.f(u[i]);
            pairing += q[i] * u[i] * fu;
            residual = residual.max((-lap[i] - q[i] * fu).abs());
        }
        let potential = pot * w;
        EnergyReport {
            value: dirichlet - potential,
            dirichlet,
            potential,
            residual,
            identity_defect: (2.0 * dirichlet - pairing * w).abs(),
        }
    }

    /// Nodal gradient `h^N (−Δ_h u − Q f_p(u))` of the discrete energy.
    pub fn gradient(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        if !self.nl.is_smooth() {
            return Err(Error::Nonsmooth);
        }
        let mut lap = vec![0.0; self.grid.len()];
        laplacian_into(&self.grid, u.values(), &mut lap);
        let w = self.grid.cell_volume();
        let q = self.q.values();
        let vals = (0..self.grid.len())
            .map(|i| {
                if self.grid.is_boundary(i) {
                    0.0
                } else {
                    w * (-lap[i] - q[i] * self.nl.f(u.values()[i]))
                }
            })
            .collect();
        Field::from_values(self.grid, vals)
    }

    pub fn residual(&self, u: &Field) -> Result<f64> {
        Ok(self.energy(u)?.residual)
    }

    // --- splitting used by the proximal-gradient solvers -----------------
    //
    // Smooth part: ½‖∇u‖² − ∫_{Q=+1} F(u)   (explicit steps)
    // Convex part: ∫_{Q=−1} F(u)            (exact proximal steps)

    /// Smooth part value and its `L²` gradient, given `lap = Δ_h u`.
    pub(crate) fn smooth_part(&self, u: &[f64], lap: &[f64], grad: &mut [f64]) -> f64 {
        let q = self.q.values();
        let mut d = 0.0;
        let mut pot = 0.0;
        for i in 0..u.len() {
            if self.grid.is_boundary(i) {
                grad[i] = 0.0;
                continue;
            }
            d -= u[i] * lap[i];
            if q[i] > 0.0 {
                pot += self.nl.primitive(u[i]);
                grad[i] = -lap[i] - self.nl.f(u[i]);
            } else {
                grad[i] = -lap[i];
            }
        }
        let w = self.grid.cell_volume();
        0.5 * d * w - pot * w
    }

    pub(crate) fn convex_part(&self, u: &[f64]) -> f64 {
        let q = self.q.values();
        let s: f64 = (0..u.len())
            .filter(|&i| q[i] < 0.0)
            .map(|i| self.nl.primitive(u[i]))
            .sum();
        s * self.grid.cell_volume()
    }

    /// `E(v) − E(u)` from the two fields and their Laplacians, accurate to
    /// round-off in the change itself rather than in the energies.
    pub(crate) fn energy_change(&self, u: &[f64], lap_u: &[f64], v: &[f64], lap_v: &[f64]) -> f64 {
        let q = self.q.values();
        let mut d = 0.0;
        let mut pot = 0.0;
        for i in 0..u.len() {
            if self.grid.is_boundary(i) {
                continue;
            }
            let s = v[i] - u[i];
            if s == 0.0 {
                continue;
            }
            d -= s * (lap_u[i] + lap_v[i]);
            pot += q[i] * self.nl.primitive_change(u[i], v[i]);
        }
        (0.5 * d - pot) * self.grid.cell_volume()
    }

    /// Proximal map of `step · (convex part)` in the `L²` metric.
    pub(crate) fn prox_into(&self, z: &[f64], step: f64, out: &mut [f64]) {
        let q = self.q.values();
        for i in 0..z.len() {
            out[i] = if self.grid.is_boundary(i) {
                0.0
            } else if q[i] < 0.0 {
                self.nl.prox(z[i], step)
            } else {
                z[i]
            };
        }
    }

    /// Full `L²` gradient `−Δ_h u − Q f(u)` and its sup norm.
    pub(crate) fn l2_gradient(&self, u: &[f64], lap: &[f64], out: &mut [f64]) -> f64 {
        let q = self.q.values();
        let mut m: f64 = 0.0;
        for i in 0..u.len() {
            out[i] = if self.grid.is_boundary(i) {
                0.0
            } else {
                -lap[i] - q[i] * self.nl.f(u[i])
            };
            m = m.max(out[i].abs());
        }
        m
    }
}

/// Two nonnegative `τ`-thresholded supports with a sign classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignClass {
    Nonnegative,
    Nonpositive,
    SignChanging,
    Zero,
}

impl SignClass {
    pub fn of(u: &Field, tau: f64) -> Self {
        let pos = u.values().iter().any(|&v| v > tau);
        let neg = u.values().iter().any(|&v| v < -tau);
        match (pos, neg) {
            (true, true) => SignClass::SignChanging,
            (true, false) => SignClass::Nonnegative,
            (false, true) => SignClass::Nonpositive,
            (false, false) => SignClass::Zero,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SignClass::Nonnegative => "nonnegative",
            SignClass::Nonpositive => "nonpositive",
            SignClass::SignChanging => "sign-changing",
            SignClass::Zero => "zero",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainShape;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn f_examples() {
        let nl = Nonlinearity::new(1.5, 0.0).unwrap();
        assert!((nl.f(4.0) - 2.0).abs() < 1e-15);
        assert_eq!(nl.f(0.0), 0.0);
        let sign = Nonlinearity::new(1.0, 0.0).unwrap();
        assert_eq!(sign.f(-0.3), -1.0);
        assert_eq!(sign.f(0.0), 0.0);
        let smooth = Nonlinearity::new(1.0, 1e-2).unwrap();
        assert_eq!(smooth.f(0.0), 0.0);
        assert!(Nonlinearity::new(2.0, 0.0).is_err());
        assert!(Nonlinearity::new(0.9, 0.0).is_err());
    }

    #[test]
    fn prox_solves_its_equation() {
        for &(p, eps) in &[
            (1.5, 0.0),
            (1.05, 0.0),
            (1.95, 0.0),
            (1.0, 1e-2),
            (1.0, 1e-8),
        ] {
            let nl = Nonlinearity::new(p, eps).unwrap();
            for &z in &[1e-12, 1e-6, 0.01, 0.3, 2.0, -0.7] {
                for &c in &[1e-6, 1e-3, 0.5, 10.0] {
                    let v = nl.prox(z, c);
                    let res = v + c * nl.f(v) - z;
                    assert!(
                        res.abs() <= 1e-12 * (1.0 + z.abs()) || (v == 0.0 && z.abs() <= c * 1e-300),
                        "p={p} eps={eps} z={z} c={c} v={v} res={res}"
                    );
                    assert!(v.abs() <= z.abs());
                }
            }
        }
        // Soft thresholding at eps = 0.
        let sign = Nonlinearity::new(1.0, 0.0).unwrap();
        assert_eq!(sign.prox(0.3, 0.5), 0.0);
        assert!((sign.prox(-0.8, 0.5) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn energy_examples() {
        let g = Grid::new(1, 257, 3.0).unwrap();
        let q = g.sample_q(&DomainShape::interval(-1.0, 1.0));
        let e = EnergyFunctional::new(q, Nonlinearity::new(1.5, 0.0).unwrap());
        let r = e.energy(&g.zeros()).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.residual, 0.0);

        // Homogeneity of the two parts under u -> 2u.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = g.sample(|_| rng.gen_range(-1.0..1.0));
        let a = e.energy(&u).unwrap();
        let b = e.energy(&u.scaled(2.0)).unwrap();
        assert!((b.dirichlet - 4.0 * a.dirichlet).abs() < 1e-10 * b.dirichlet);
        assert!((b.potential - 2f64.powf(1.5) * a.potential).abs() < 1e-10 * b.potential.abs());
        assert!((a.value - (a.dirichlet - a.potential)).abs() < 1e-12 * a.dirichlet);
    }

    #[test]
    fn explicit_ground_state_energy() {
        // I_1(w) = −½‖w′‖² = −2/3 for the closed-form 1D profile.
        let g = Grid::new(1, 2049, 4.0).unwrap();
        let q = g.sample_q(&DomainShape::interval(-1.0, 1.0));
        let e = EnergyFunctional::new(q, Nonlinearity::new(1.0, 0.0).unwrap());
        let w = g.sample(|x| crate::radial::explicit_w(1, 1.0, x[0].abs()).unwrap());
        let r = e.energy(&w).unwrap();
        assert!((r.value + 2.0 / 3.0).abs() < 1e-2, "{}", r.value);
    }

    #[test]
    fn gradient_preconditions() {
        let g = Grid::new(1, 65, 2.0).unwrap();
        let q = g.sample_q(&DomainShape::interval(-1.0, 1.0));
        let e = EnergyFunctional::new(q.clone(), Nonlinearity::new(1.0, 0.0).unwrap());
        assert!(matches!(e.gradient(&g.zeros()), Err(Error::Nonsmooth)));
        let e = EnergyFunctional::new(q, Nonlinearity::new(1.5, 0.0).unwrap());
        let grad = e.gradient(&g.zeros()).unwrap();
        assert!(grad.values().iter().all(|&v| v == 0.0));
    }

    /// Central-difference oracle for the directional derivative.
    fn fd_check(e: &EnergyFunctional, u: &Field, dir: &Field) -> (f64, f64) {
        let step = 1e-6;
        let plus = Field::from_values(
            *u.grid(),
            u.values()
                .iter()
                .zip(dir.values())
                .map(|(a, b)| a + step * b)
                .collect(),
        )
        .unwrap();
        let minus = Field::from_values(
            *u.grid(),
            u.values()
                .iter()
                .zip(dir.values())
                .map(|(a, b)| a - step * b)
                .collect(),
        )
        .unwrap();
        let fd = (e.energy(&plus).unwrap().value - e.energy(&minus).unwrap().value) / (2.0 * step);
        let g = e.gradient(u).unwrap();
        let ip: f64 = g
            .values()
            .iter()
            .zip(dir.values())
            .map(|(a, b)| a * b)
            .sum();
        (fd, ip)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = Grid::new(2, 21, 2.0).unwrap();
        let q = g.sample_q(&DomainShape::ball(&[0.0, 0.0], 1.0));
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = [1.25, 1.5, 1.75, 1.0][seed as usize % 4];
            let nl = Nonlinearity::new(p, if p == 1.0 { 1e-2 } else { 0.0 }).unwrap();
            let e = EnergyFunctional::new(q.clone(), nl);
            // Keep |u| away from 0 where f_p is not Lipschitz.
            let u = g.sample(|_| {
                let m = rng.gen_range(0.2..1.0);
                if rng.gen_bool(0.5) {
                    m
                } else {
                    -m
                }
            });
            let d = g.sample(|_| rng.gen_range(-1.0..1.0));
            let (fd, ip) = fd_check(&e, &u, &d);
            assert!(
                (fd - ip).abs() <= 1e-5 * (1.0 + ip.abs()),
                "seed {seed}: {fd} vs {ip}"
            );
        }
    }

    proptest! {
        #[test]
        fn primitive_change_matches_difference(u in -3.0..3.0f64, v in -3.0..3.0f64, p in 1.0..1.99f64) {
            let nl = Nonlinearity::new(p, if p < 1.01 { 1e-3 } else { 0.0 }).unwrap();
            let direct = nl.primitive(v) - nl.primitive(u);
            prop_assert!((nl.primitive_change(u, v) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }

        #[test]
        fn smoothed_abs_within_eps(t in -10.0..10.0f64, eps in 1e-8..1.0f64) {
            let nl = Nonlinearity::new(1.0, eps).unwrap();
            prop_assert!((nl.primitive(t) - t.abs()).abs() <= eps);
        }

        #[test]
        fn smoothed_abs_monotone_in_eps(t in -10.0..10.0f64, e1 in 1e-8..1.0f64, e2 in 1e-8..1.0f64) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let a = Nonlinearity::new(1.0, lo).unwrap().primitive(t);
            let b = Nonlinearity::new(1.0, hi).unwrap().primitive(t);
            prop_assert!((a - t.abs()).abs() <= (b - t.abs()).abs() + 1e-15);
        }
    }
}
