//! Radial ODE machinery: shooting with dead-core matching for any `N ≥ 1`,
//! and the closed-form profiles used as oracles.
//!
//! The radial equation is `u″ + (N−1)/r u′ + q f_p(u) = 0` with `q = +1` for
//! `r < R_Ω` and `q = −1` beyond.

use crate::energy::Nonlinearity;
use crate::error::{Error, Result};

/// `u″` of the radial equation. At `r = 0` the limit `Δu(0) = N u″(0)` gives
/// `u″(0) = −q f_p(u(0)) / N`.
pub fn radial_rhs(r: f64, u: f64, du: f64, n: usize, p: f64, q: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidInput(format!("negative radius {r}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let nl = Nonlinearity::new(p, 0.0)?;
    Ok(rhs(&nl, n, q, r, u, du))
}

#[inline]
fn rhs(nl: &Nonlinearity, n: usize, q: f64, r: f64, u: f64, du: f64) -> f64 {
    let source = -q * nl.f(u);
    if r == 0.0 {
        source / n as f64
    } else {
        source - (n as f64 - 1.0) / r * du
    }
}

// --- closed forms ---------------------------------------------------------

/// Ground state of the sign problem on the unit ball of `ℝ^N`, at radius `r`.
pub fn explicit_w(n: usize, p: f64, r: f64) -> Result<f64> {
    if p != 1.0 {
        return Err(Error::InvalidInput(format!(
            "closed-form ground state exists only for p = 1 (got {p})"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    Ok(w_branches(n, r.abs()).0)
}

/// `(u, u′, u″)` of the closed-form ground state.
fn w_branches(n: usize, r: f64) -> (f64, f64, f64) {
    let r_supp = 2f64.powf(1.0 / n as f64);
    let k = if r < 1.0 {
        0
    } else if r < r_supp {
        1
    } else {
        2
    };
    w_branch(n, k, r)
}

/// Branch `k` (inner, middle, tail) evaluated at any `r > 0`.
fn w_branch(n: usize, k: usize, r: f64) -> (f64, f64, f64) {
    let nf = n as f64;
    match k {
        0 => {
            let c = if n == 2 {
                std::f64::consts::LN_2 / 2.0
            } else {
                (1.0 - 2f64.powf((2.0 - nf) / nf)) / (nf - 2.0)
            };
            (c - r * r / (2.0 * nf), -r / nf, -1.0 / nf)
        }
        1 if n == 2 => {
            let c = (std::f64::consts::LN_2 - 1.0) / 2.0;
            (
                c - r.ln() + r * r / 4.0,
                -1.0 / r + r / 2.0,
                1.0 / (r * r) + 0.5,
            )
        }
        1 => {
            let c = -2f64.powf((2.0 - nf) / nf) / (nf - 2.0);
            let k = 2.0 / (nf * (nf - 2.0));
            (
                c + k * r.powf(2.0 - nf) + r * r / (2.0 * nf),
                k * (2.0 - nf) * r.powf(1.0 - nf) + r / nf,
                k * (2.0 - nf) * (1.0 - nf) * r.powf(-nf) + 1.0 / nf,
            )
        }
        _ => (0.0, 0.0, 0.0),
    }
}

/// Constants of the closed-form sign-changing profile on `(−1, 1)`.
pub mod nodal_constants {
    use std::f64::consts::SQRT_2;

    pub fn r1() -> f64 {
        (4.0 - SQRT_2) / 7.0
    }
    pub fn r2() -> f64 {
        2.0 * (3.0 + SQRT_2) / 7.0
    }
    pub fn c1() -> f64 {
        (9.0 - 4.0 * SQRT_2) / 49.0
    }
    pub fn c2() -> f64 {
        2.0 * (4.0 - SQRT_2) / 7.0
    }
    pub fn c3() -> f64 {
        c1()
    }
}

/// Closed-form 1D sign-changing solution for `Ω = (−1, 1)`, `p = 1`, extended
/// evenly to `x < 0`.
pub fn explicit_nodal_1d(x: f64) -> f64 {
    nodal_branch(nodal_branch_index(x.abs()), x.abs()).0
}

fn nodal_branch_index(r: f64) -> usize {
    if r < nodal_constants::r1() {
        0
    } else if r < 1.0 {
        1
    } else if r < nodal_constants::r2() {
        2
    } else {
        3
    }
}

fn nodal_branch(branch: usize, r: f64) -> (f64, f64, f64) {
    use nodal_constants::*;
    match branch {
        0 => (c1() - r * r / 2.0, -r, -1.0),
        1 => ((r - c2()).powi(2) / 2.0 - c3(), r - c2(), 1.0),
        2 => (-(r - r2()).powi(2) / 2.0, -(r - r2()), -1.0),
        _ => (0.0, 0.0, 0.0),
    }
}

// --- integrator -----------------------------------------------------------

/// One accepted step, kept for Hermite dense output.
#[derive(Clone, Copy, Debug)]
struct Segment {
    r0: f64,
    r1: f64,
    /// `(u, u′, u″)` at the left end.
    y0: [f64; 3],
    /// `(u, u′, u″)` at the right end.
    y1: [f64; 3],
}

impl Segment {
    /// Quintic Hermite interpolation of `u` matching value, slope and
    /// curvature at both ends; returns `(u, u′, u″)`.
    fn eval(&self, r: f64) -> [f64; 3] {
        let h = self.r1 - self.r0;
        if h <= 0.0 {
            return self.y0;
        }
        let t = ((r - self.r0) / h).clamp(0.0, 1.0);
        let (t2, t3, t4, t5) = (t * t, t * t * t, t.powi(4), t.powi(5));
        let [p0, m0, a0] = self.y0;
        let [p1, m1, a1] = self.y1;
        let (m0, m1, a0, a1) = (m0 * h, m1 * h, a0 * h * h, a1 * h * h);
        let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
        let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
        let h20 = 0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5;
        let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
        let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
        let h21 = 0.5 * t3 - t4 + 0.5 * t5;
        let d00 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
        let d10 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
        let d20 = t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4;
        let d11 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
        let d21 = 1.5 * t2 - 4.0 * t3 + 2.5 * t4;
        let s00 = -60.0 * t + 180.0 * t2 - 120.0 * t3;
        let s10 = -36.0 * t + 96.0 * t2 - 60.0 * t3;
        let s20 = 1.0 - 9.0 * t + 18.0 * t2 - 10.0 * t3;
        let s11 = -24.0 * t + 84.0 * t2 - 60.0 * t3;
        let s21 = 3.0 * t - 12.0 * t2 + 10.0 * t3;
        let u = h00 * p0 + h10 * m0 + h20 * a0 + h01 * p1 + h11 * m1 + h21 * a1;
        let du = (d00 * p0 + d10 * m0 + d20 * a0 - d00 * p1 + d11 * m1 + d21 * a1) / h;
        let ddu = (s00 * p0 + s10 * m0 + s20 * a0 - s00 * p1 + s11 * m1 + s21 * a1) / (h * h);
        [u, du, ddu]
    }
}

const ATOL: f64 = 1e-12;
const RTOL: f64 = 1e-10;
const H_MIN: f64 = 1e-9;
const EVENT_STEP: f64 = 1e-13;

/// Dormand–Prince 5(4) step on `y = (u, u′)`; returns the 5th-order state
/// and the scaled error norm.
fn dopri_step(
    g: &dyn Fn(f64, [f64; 2]) -> [f64; 2],
    r: f64,
    y: [f64; 2],
    k1: [f64; 2],
    h: f64,
) -> ([f64; 2], [f64; 2], f64) {
    let add = |y: [f64; 2], terms: &[(f64, [f64; 2])]| {
        let mut out = y;
        for &(c, k) in terms {
            out[0] += h * c * k[0];
            out[1] += h * c * k[1];
        }
        out
    };
    let k2 = g(r + h / 5.0, add(y, &[(1.0 / 5.0, k1)]));
    let k3 = g(
        r + 3.0 * h / 10.0,
        add(y, &[(3.0 / 40.0, k1), (9.0 / 40.0, k2)]),
    );
    let k4 = g(
        r + 4.0 * h / 5.0,
        add(
            y,
            &[(44.0 / 45.0, k1), (-56.0 / 15.0, k2), (32.0 / 9.0, k3)],
        ),
    );
    let k5 = g(
        r + 8.0 * h / 9.0,
        add(
            y,
            &[
                (19372.0 / 6561.0, k1),
                (-25360.0 / 2187.0, k2),
                (64448.0 / 6561.0, k3),
                (-212.0 / 729.0, k4),
            ],
        ),
    );
    let k6 = g(
        r + h,
        add(
            y,
            &[
                (9017.0 / 3168.0, k1),
                (-355.0 / 33.0, k2),
                (46732.0 / 5247.0, k3),
                (49.0 / 176.0, k4),
                (-5103.0 / 18656.0, k5),
            ],
        ),
    );
    let y1 = add(
        y,
        &[
            (35.0 / 384.0, k1),
            (500.0 / 1113.0, k3),
            (125.0 / 192.0, k4),
            (-2187.0 / 6784.0, k5),
            (11.0 / 84.0, k6),
        ],
    );
    let k7 = g(r + h, y1);
    let mut err2 = 0.0;
    for i in 0..2 {
        let e = h
            * (71.0 / 57600.0 * k1[i] - 71.0 / 16695.0 * k3[i] + 71.0 / 1920.0 * k4[i]
                - 17253.0 / 339200.0 * k5[i]
                + 22.0 / 525.0 * k6[i]
                - 1.0 / 40.0 * k7[i]);
        let sc = ATOL + RTOL * y[i].abs().max(y1[i].abs());
        err2 += (e / sc).powi(2);
    }
    (y1, k7, (err2 / 2.0).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShotOutcome {
    /// `u` reached zero while `u′ < 0`: center value too small.
    Overshoot,
    /// `u′` reached zero while `u > 0`: center value too large.
    Undershoot,
}

struct Trial {
    outcome: ShotOutcome,
    r_event: f64,
    /// `(u, u′)` at the event.
    event: [f64; 2],
    segments: Vec<Segment>,
}

/// Integrates from the origin with `u(0) = a`, `u′(0) = 0` until the first
/// zero of `u` or `u′`.
fn trial(n: usize, nl: &Nonlinearity, r_omega: f64, a: f64, r_max: f64) -> Trial {
    let nf = n as f64;
    let r0 = 1e-6 * r_omega.min(1.0);
    let f0 = nl.f(a);
    // Series start u ≈ a − q f(a) r²/(2N).
    let mut y = [a - f0 * r0 * r0 / (2.0 * nf), -f0 * r0 / nf];
    let mut r = r0;
    let mut segments = Vec::new();
    let mut h = 1e-3 * r_omega;
    for (q, r_end) in [(1.0, r_omega), (-1.0, r_max)] {
        let g = |s: f64, z: [f64; 2]| [z[1], rhs(nl, n, q, s, z[0], z[1])];
        let mut k1 = g(r, y);
        while r < r_end {
            let step = h.min(r_end - r);
            let (y1, k7, err) = dopri_step(&g, r, y, k1, step);
            if err > 1.0 && step > H_MIN {
                h = (step * (0.9 * err.powf(-0.2)).max(0.2)).max(H_MIN);
                continue;
            }
            let seg = Segment {
                r0: r,
                r1: r + step,
                y0: [y[0], y[1], k1[1]],
                y1: [y1[0], y1[1], k7[1]],
            };
            let hit_u = y1[0] <= 0.0;
            let hit_du = y1[1] >= 0.0;
            if (hit_u || hit_du) && step > EVENT_STEP * r.max(1.0) {
                // The right side is not smooth across u = 0; close in on the
                // event with steps that never straddle it.
                h = 0.5 * step;
                continue;
            }
            if hit_u || hit_du {
                let ru = if hit_u {
                    locate(&seg, 0)
                } else {
                    f64::INFINITY
                };
                let rd = if hit_du {
                    locate(&seg, 1)
                } else {
                    f64::INFINITY
                };
                let (outcome, r_event) = if ru <= rd {
                    (ShotOutcome::Overshoot, ru)
                } else {
                    (ShotOutcome::Undershoot, rd)
                };
                let at = seg.eval(r_event);
                let mut event = [at[0], at[1]];
                match outcome {
                    ShotOutcome::Overshoot => event[0] = 0.0,
                    ShotOutcome::Undershoot => event[1] = 0.0,
                }
                let mut last = seg;
                last.r1 = r_event;
                last.y1 = [
                    event[0],
                    event[1],
                    rhs(nl, n, q, r_event, event[0], event[1]),
                ];
                segments.push(last);
                return Trial {
                    outcome,
                    r_event,
                    event,
                    segments,
                };
            }
            segments.push(seg);
            r += step;
            y = y1;
            k1 = k7;
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (step * fac).max(H_MIN);
        }
        r = r_end;
    }
    // No event before r_max: u stays positive, treated as too large.
    Trial {
        outcome: ShotOutcome::Undershoot,
        r_event: r,
        event: y,
        segments,
    }
}

/// Bisection on the dense output for the zero of component `c` in a step.
fn locate(seg: &Segment, c: usize) -> f64 {
    let sign0 = seg.y0[c];
    let (mut lo, mut hi) = (seg.r0, seg.r1);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = seg.eval(mid)[c];
        if (v > 0.0) == (sign0 > 0.0) && v != 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

// --- profiles -------------------------------------------------------------

#[derive(Clone, Debug)]
enum Representation {
    Shot(Vec<Segment>),
    ExplicitW,
    ExplicitNodal1d,
}

/// A radial solution with its breakpoints and dead-core radius.
#[derive(Clone, Debug)]
pub struct RadialProfile {
    pub dim: usize,
    pub p: f64,
    pub r_omega: f64,
    /// `u(0)`.
    pub center_value: f64,
    /// `u ≡ 0` beyond this radius.
    pub support_radius: f64,
    pub breakpoints: Vec<f64>,
    repr: Representation,
}

impl RadialProfile {
    /// The closed-form ground state for `p = 1`, `Ω = B_1 ⊂ ℝ^N`.
    pub fn explicit_w(n: usize) -> Result<Self> {
        let a = explicit_w(n, 1.0, 0.0)?;
        let r_supp = 2f64.powf(1.0 / n as f64);
        Ok(Self {
            dim: n,
            p: 1.0,
            r_omega: 1.0,
            center_value: a,
            support_radius: r_supp,
            breakpoints: vec![1.0, r_supp],
            repr: Representation::ExplicitW,
        })
    }

    /// The closed-form sign-changing profile on `(−1, 1)`.
    pub fn explicit_nodal_1d() -> Self {
        Self {
            dim: 1,
            p: 1.0,
            r_omega: 1.0,
            center_value: nodal_constants::c1(),
            support_radius: nodal_constants::r2(),
            breakpoints: vec![nodal_constants::r1(), 1.0, nodal_constants::r2()],
            repr: Representation::ExplicitNodal1d,
        }
    }

    pub fn is_closed_form(&self) -> bool {
        !matches!(self.repr, Representation::Shot(_))
    }

    /// `(u(r), u′(r))`.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let d = self.derivatives(r);
        (d[0], d[1])
    }

    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    fn derivatives(&self, r: f64) -> [f64; 3] {
        let r = r.abs();
        match &self.repr {
            Representation::ExplicitW => {
                let (u, du, ddu) = w_branches(self.dim, r);
                [u, du, ddu]
            }
            Representation::ExplicitNodal1d => {
                let (u, du, ddu) = nodal_branch(nodal_branch_index(r), r);
                [u, du, ddu]
            }
            Representation::Shot(segs) => {
                if r >= self.support_radius {
                    return [0.0; 3];
                }
                let first = &segs[0];
                if r <= first.r0 {
                    let f = Nonlinearity::new(self.p, 0.0)
                        .map(|nl| nl.f(self.center_value))
                        .unwrap_or(0.0);
                    let nf = self.dim as f64;
                    return [
                        self.center_value - f * r * r / (2.0 * nf),
                        -f * r / nf,
                        -f / nf,
                    ];
                }
                let k = segs.partition_point(|s| s.r1 < r).min(segs.len() - 1);
                segs[k].eval(r)
            }
        }
    }

    fn q_at(&self, r: f64) -> f64 {
        if r < self.r_omega {
            1.0
        } else {
            -1.0
        }
    }

    /// Rows `(r, u, u′)` at `count` equispaced radii on `[0, 1.25 R_supp]`.
    pub fn samples(&self, count: usize) -> Vec<[f64; 3]> {
        let r_end = 1.25 * self.support_radius;
        (0..count)
            .map(|i| {
                let r = r_end * i as f64 / (count.max(2) - 1) as f64;
                let (u, du) = self.eval(r);
                [r, u, du]
            })
            .collect()
    }

    pub fn to_csv(&self, count: usize) -> String {
        let mut s = String::from("r,u,du\n");
        for [r, u, du] in self.samples(count) {
            s.push_str(&format!("{r:.12e},{u:.15e},{du:.15e}\n"));
        }
        s
    }

    /// A copy whose nodal values are perturbed by `amplitude·sin(k r)`; used
    /// as a negative control for [`verify_profile`].
    pub fn perturbed(&self, amplitude: f64, k: f64) -> Self {
        let segs = match &self.repr {
            Representation::Shot(segs) => segs.clone(),
            _ => {
                let m = 400;
                let r_end = self.support_radius;
                (0..m)
                    .map(|i| {
                        let r0 = r_end * i as f64 / m as f64;
                        let r1 = r_end * (i + 1) as f64 / m as f64;
                        Segment {
                            r0,
                            r1,
                            y0: self.derivatives(r0),
                            y1: self.derivatives(r1),
                        }
                    })
                    .collect()
            }
        };
        let bump = |y: [f64; 3], r: f64| {
            [
                y[0] + amplitude * (k * r).sin(),
                y[1] + amplitude * k * (k * r).cos(),
                y[2],
            ]
        };
        let segs = segs
            .into_iter()
            .map(|s| Segment {
                y0: bump(s.y0, s.r0),
                y1: bump(s.y1, s.r1),
                ..s
            })
            .collect();
        Self {
            repr: Representation::Shot(segs),
            ..self.clone()
        }
    }
}

/// Residual and `C¹` continuity of a radial profile.
#[derive(Clone, Debug)]
pub struct ProfileDefect {
    /// Max of `|u″ + (N−1)/r u′ + q f_p(u)|` over the sample radii.
    pub max_residual: f64,
    /// `(r, |[u]|, |[u′]|)` at each breakpoint.
    pub jumps: Vec<(f64, f64, f64)>,
}

impl ProfileDefect {
    pub fn max_jump(&self) -> f64 {
        self.jumps
            .iter()
            .map(|&(_, a, b)| a.max(b))
            .fold(0.0, f64::max)
    }
}

/// Residual of the radial equation along a profile, sampled at `samples`
/// radii away from breakpoints, plus jumps at breakpoints.
pub fn verify_profile(profile: &RadialProfile, samples: usize) -> ProfileDefect {
    let nl = Nonlinearity::new(profile.p, 0.0).expect("profile exponent validated at construction");
    let nf = profile.dim as f64;
    let r_end = profile.support_radius * 1.1;
    let mut max_residual: f64 = 0.0;
    for i in 0..samples {
        let r = r_end * (i as f64 + 0.5) / samples as f64;
        if profile.breakpoints.iter().any(|&b| (r - b).abs() < 1e-9) {
            continue;
        }
        let [u, du, ddu] = profile.derivatives(r);
        let res = ddu + (nf - 1.0) / r * du + profile.q_at(r) * nl.f(u);
        max_residual = max_residual.max(res.abs());
    }
    let jumps = profile
        .breakpoints
        .iter()
        .map(|&b| {
            let (left, right) = match &profile.repr {
                Representation::ExplicitW => {
                    let k = if b <= 1.0 { 0 } else { 1 };
                    (w_branch(profile.dim, k, b), w_branch(profile.dim, k + 1, b))
                }
                Representation::ExplicitNodal1d => {
                    let k = nodal_branch_index(b);
                    (nodal_branch(k - 1, b), nodal_branch(k, b))
                }
                Representation::Shot(_) => {
                    let d = 1e-9 * b.max(1.0);
                    let l = profile.derivatives(b - d);
                    let r = profile.derivatives(b + d);
                    ((l[0], l[1], l[2]), (r[0], r[1], r[2]))
                }
            };
            (b, (left.0 - right.0).abs(), (left.1 - right.1).abs())
        })
        .collect();
    ProfileDefect {
        max_residual,
        jumps,
    }
}

// --- shooting -------------------------------------------------------------

/// Outcome of the matching root-find.
#[derive(Clone, Debug)]
pub struct ShootResult {
    pub profile: RadialProfile,
    /// `(u, u′)` at the dead-core radius.
    pub defect: (f64, f64),
    pub iterations: usize,
    pub converged: bool,
}

pub const MATCH_TOLERANCE: f64 = 1e-10;

/// Finds `a = u(0)` such that `u` and `u′` vanish at a common radius, for the
/// ball `B_{R_Ω}`. Without a bracket, one is searched by doubling/halving.
pub fn shoot_ground_state(
    n: usize,
    p: f64,
    r_omega: f64,
    bracket: Option<(f64, f64)>,
) -> Result<ShootResult> {
    if n == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if !(r_omega > 0.0 && r_omega.is_finite()) {
        return Err(Error::InvalidInput(format!("ball radius {r_omega}")));
    }
    let nl = Nonlinearity::new(p, 0.0)?;
    let r_max = 1e3 * r_omega.max(1.0);
    let classify = |a: f64| trial(n, &nl, r_omega, a, r_max);
    let (mut lo, mut hi) = match bracket {
        Some((lo, hi)) => {
            if !(lo > 0.0 && hi > lo) {
                return Err(Error::Shooting(format!("invalid bracket [{lo}, {hi}]")));
            }
            if classify(lo).outcome != ShotOutcome::Overshoot
                || classify(hi).outcome != ShotOutcome::Undershoot
            {
                return Err(Error::Shooting(format!(
                    "no sign change of the matching defect on [{lo}, {hi}]"
                )));
            }
            (lo, hi)
        }
        None => {
            let mut hi = r_omega.powf(2.0 / (2.0 - p));
            let mut k = 0;
            while classify(hi).outcome == ShotOutcome::Overshoot {
                hi *= 2.0;
                k += 1;
                if k > 200 {
                    return Err(Error::Shooting(
                        "no undershooting center value found".into(),
                    ));
                }
            }
            let mut lo = hi / 2.0;
            while classify(lo).outcome == ShotOutcome::Undershoot {
                hi = lo;
                lo /= 2.0;
                k += 1;
                if k > 400 {
                    return Err(Error::Shooting("no overshooting center value found".into()));
                }
            }
            (lo, hi)
        }
    };
    let mut iterations = 0;
    let defect_of = |t: &Trial| t.event[0].abs().max(t.event[1].abs());
    let (t_lo, t_hi) = (classify(lo), classify(hi));
    let (mut a, mut best) = if defect_of(&t_lo) <= defect_of(&t_hi) {
        (lo, t_lo)
    } else {
        (hi, t_hi)
    };
    while iterations < 200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let t = classify(mid);
        let defect = defect_of(&t);
        match t.outcome {
            ShotOutcome::Overshoot => lo = mid,
            ShotOutcome::Undershoot => hi = mid,
        }
        if defect <= defect_of(&best) {
            a = mid;
            best = t;
        }
        if defect <= 1e-14 {
            break;
        }
    }
    let defect = (best.event[0], best.event[1]);
    let converged = defect.0.abs().max(defect.1.abs()) <= MATCH_TOLERANCE;
    let r_supp = best.r_event;
    let mut breakpoints = vec![r_omega];
    if r_supp > r_omega {
        breakpoints.push(r_supp);
    }
    Ok(ShootResult {
        profile: RadialProfile {
            dim: n,
            p,
            r_omega,
            center_value: a,
            support_radius: r_supp,
            breakpoints,
            repr: Representation::Shot(best.segments),
        },
        defect,
        iterations,
        converged,
    })
}

/// `I_p` of a radial profile, `|S^{N−1}| ∫ (½u′² − Q F(u)) r^{N−1} dr`, by
/// Gauss–Legendre quadrature between consecutive breakpoints.
pub fn radial_energy(profile: &RadialProfile, panels: usize) -> Result<f64> {
    let nl = Nonlinearity::new(profile.p, 0.0)?;
    let n = profile.dim;
    let sphere = n as f64 * crate::geometry::unit_ball_volume(n);
    // Five-point Gauss–Legendre nodes and weights on [−1, 1].
    const X: [f64; 5] = [
        0.0,
        0.538_469_310_105_683_1,
        -0.538_469_310_105_683_1,
        0.906_179_845_938_664,
        -0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let mut cuts = vec![0.0];
    cuts.extend(
        profile
            .breakpoints
            .iter()
            .copied()
            .filter(|&b| b > 0.0 && b < profile.support_radius),
    );
    cuts.push(profile.support_radius);
    cuts.dedup();
    let panels = panels.max(1);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let len = (w[1] - w[0]) / panels as f64;
        for k in 0..panels {
            let mid = w[0] + (k as f64 + 0.5) * len;
            for (x, wt) in X.iter().zip(W) {
                let r = mid + 0.5 * len * x;
                let (u, du) = profile.eval(r);
                let density = 0.5 * du * du - profile.q_at(r) * nl.primitive(u);
                total += wt * 0.5 * len * density * r.powi(n as i32 - 1);
            }
        }
    }
    Ok(sphere * total)
}

/// Volume of the `N`-ball of radius `r`.
pub fn ball_volume(n: usize, r: f64) -> f64 {
    crate::geometry::unit_ball_volume(n) * r.powi(n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{LN_2, SQRT_2};

    #[test]
    fn rhs_examples() {
        // N = 1 has no curvature term.
        assert_eq!(radial_rhs(0.7, 0.3, -2.0, 1, 1.0, 1.0).unwrap(), -1.0);
        // Inner N = 2 piece: u″ + u′/r = −1/2 − 1/2 = −1.
        let (r, u, du) = (0.5, LN_2 / 2.0 - 0.0625, -0.25);
        let ddu = radial_rhs(r, u, du, 2, 1.0, 1.0).unwrap();
        assert!((ddu + 0.5).abs() < 1e-15);
        assert_eq!(radial_rhs(1.0, 0.0, 0.0, 3, 1.5, -1.0).unwrap(), 0.0);
        assert!(radial_rhs(-1.0, 0.0, 0.0, 1, 1.5, 1.0).is_err());
    }

    #[test]
    fn explicit_w_examples() {
        assert!((explicit_w(1, 1.0, 1.5).unwrap() - 0.125).abs() < 1e-15);
        assert!(explicit_w(2, 1.0, SQRT_2).unwrap().abs() < 1e-15);
        assert!((explicit_w(2, 1.0, 0.0).unwrap() - LN_2 / 2.0).abs() < 1e-15);
        assert!(explicit_w(2, 1.5, 0.0).is_err());
        assert!((explicit_w(3, 1.0, 0.0).unwrap() - (1.0 - 2f64.powf(-1.0 / 3.0))).abs() < 1e-15);
    }

    #[test]
    fn nodal_constants_are_c1() {
        use nodal_constants::*;
        assert!(explicit_nodal_1d(r1()).abs() < 1e-15);
        assert!((explicit_nodal_1d(1.0) + (9.0 - 4.0 * SQRT_2) / 98.0).abs() < 1e-15);
        assert_eq!(explicit_nodal_1d(r2()), 0.0);
        let defect = verify_profile(&RadialProfile::explicit_nodal_1d(), 10_000);
        assert!(defect.max_jump() <= 1e-12, "{:?}", defect.jumps);
        assert!(defect.max_residual <= 1e-12);
        // Slope at x = 1 from either side.
        assert!((nodal_branch(1, 1.0).1 - (2.0 * SQRT_2 - 1.0) / 7.0).abs() < 1e-15);
        assert!((nodal_branch(2, 1.0).1 - (2.0 * SQRT_2 - 1.0) / 7.0).abs() < 1e-15);
    }

    #[test]
    fn explicit_profiles_are_exact() {
        for n in 1..=4 {
            let prof = RadialProfile::explicit_w(n).unwrap();
            let d = verify_profile(&prof, 10_000);
            assert!(d.max_residual <= 1e-10, "N={n}: {}", d.max_residual);
            assert!(d.max_jump() <= 1e-12, "N={n}: {:?}", d.jumps);
        }
    }

    #[test]
    fn closed_form_energies() {
        // 1D: ½∫w′² = 2/3 and ∫Q|w| = 4/3.
        let e1 = radial_energy(&RadialProfile::explicit_w(1).unwrap(), 64).unwrap();
        assert!((e1 + 2.0 / 3.0).abs() < 1e-13, "{e1}");
        // Ground states satisfy ‖∇w‖² = ∫Q|w|, so I₁ = −½∫Q|w| < 0 in every dimension.
        for n in 2..=3 {
            let e = radial_energy(&RadialProfile::explicit_w(n).unwrap(), 64).unwrap();
            assert!(e < 0.0);
        }
        let shot = shoot_ground_state(1, 1.5, 1.0, None).unwrap();
        assert!(radial_energy(&shot.profile, 64).unwrap() < 0.0);
    }

    #[test]
    fn perturbed_profile_has_defect() {
        let prof = RadialProfile::explicit_w(2).unwrap().perturbed(1e-3, 7.0);
        assert!(verify_profile(&prof, 1000).max_residual > 1e-4);
    }

    #[test]
    fn shooting_matches_closed_forms() {
        let cases = [
            (1, 1.0, 2.0),
            (2, LN_2 / 2.0, SQRT_2),
            (3, 1.0 - 2f64.powf(-1.0 / 3.0), 2f64.powf(1.0 / 3.0)),
        ];
        for (n, a, r_supp) in cases {
            let s = shoot_ground_state(n, 1.0, 1.0, None).unwrap();
            assert!(s.converged, "N={n}: {:?}", s.defect);
            assert!((s.profile.center_value - a).abs() < 1e-6, "N={n}");
            assert!(
                (s.profile.support_radius - r_supp).abs() < 1e-6,
                "N={n}: {}",
                s.profile.support_radius
            );
            let exact = RadialProfile::explicit_w(n).unwrap();
            let err = (0..2000)
                .map(|i| {
                    let r = 2.5 * i as f64 / 2000.0;
                    (s.profile.value(r) - exact.value(r)).abs()
                })
                .fold(0.0, f64::max);
            assert!(err < 1e-6, "N={n}: {err}");
        }
    }

    #[test]
    fn shooting_bracket_errors() {
        assert!(matches!(
            shoot_ground_state(1, 1.0, 1.0, Some((2.0, 3.0))),
            Err(Error::Shooting(_))
        ));
        assert!(shoot_ground_state(1, 2.0, 1.0, None).is_err());
    }

    #[test]
    fn scaling_law() {
        let p = 1.5;
        let one = shoot_ground_state(2, p, 1.0, None).unwrap();
        let two = shoot_ground_state(2, p, 2.0, None).unwrap();
        let k = 2f64.powf(2.0 / (2.0 - p));
        let err = (0..4000)
            .map(|i| {
                let r = 1.2 * two.profile.support_radius * i as f64 / 4000.0;
                (two.profile.value(r) - k * one.profile.value(r / 2.0)).abs()
            })
            .fold(0.0, f64::max);
        assert!(err <= 1e-8 * k, "{err}");
    }

    #[test]
    fn compatibility_at_p1() {
        for n in 1..=3 {
            let s = shoot_ground_state(n, 1.0, 1.0, None).unwrap();
            let ratio = ball_volume(n, s.profile.support_radius) / (2.0 * ball_volume(n, 1.0));
            assert!((ratio - 1.0).abs() < 1e-6, "N={n}: {ratio}");
        }
    }

    #[test]
    fn support_radius_grows_with_p() {
        let mut prev = 0.0;
        for i in 0..10 {
            let p = 1.0 + 0.1 * i as f64;
            let s = shoot_ground_state(1, p, 1.0, None).unwrap();
            assert!(s.profile.support_radius >= prev - 1e-9, "p={p}");
            prev = s.profile.support_radius;
        }
    }
}
