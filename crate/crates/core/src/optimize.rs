//! Local minimization of the discrete energy, and CG for the torsion problem.
//!
//! Two engines are available.
//!
//! * `Newton` (default): a truncated nonsmooth Newton method. Each iteration
//!   runs one sweep of exact coordinate minimization (nonlinear Gauss–Seidel,
//!   which resolves the dead core exactly) followed by a Newton correction on
//!   the nodes where `F` is twice differentiable, with the concave part of the
//!   Hessian dropped and an Armijo line search on the energy.
//! * `Spectral`: proximal gradient with Barzilai–Borwein steps and a
//!   nonmonotone Armijo test. The energy splits as `S(u) + C(u)` with
//!   `S = ½‖∇u‖² − ∫_{Ω} F(u)` treated explicitly and `C = ∫_{Ωᶜ} F(u)`
//!   treated by its exact per-node proximal map. Its iteration count grows
//!   with the condition number of `Δ_h`, so it suits coarse grids.

use std::collections::VecDeque;

use crate::energy::EnergyFunctional;
use crate::grid::{laplacian_into, Grid};

/// Discrete symmetry enforced by projection after every step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Symmetry {
    #[default]
    None,
    /// `u(−x) = −u(x)`.
    Odd,
    /// `u(−x₁, x₂) = −u(x₁, x₂)`.
    OddFirstAxis,
}

impl Symmetry {
    pub(crate) fn mirror(&self, grid: &Grid, i: usize) -> usize {
        match self {
            Symmetry::None => i,
            Symmetry::Odd => grid.mirror_point(i),
            Symmetry::OddFirstAxis => grid.mirror_first(i),
        }
    }

    /// Replaces `u` by its odd part; the result is odd to the last bit.
    pub fn project(&self, grid: &Grid, u: &mut [f64]) {
        if *self == Symmetry::None {
            return;
        }
        for i in 0..u.len() {
            let m = self.mirror(grid, i);
            if m == i {
                u[i] = 0.0;
            } else if i < m {
                let a = 0.5 * (u[i] - u[m]);
                u[i] = a;
                u[m] = -a;
            }
        }
    }

    /// Largest `|u(x) + u(g x)|`.
    pub fn defect(&self, grid: &Grid, u: &[f64]) -> f64 {
        if *self == Symmetry::None {
            return 0.0;
        }
        (0..u.len())
            .map(|i| (u[i] + u[self.mirror(grid, i)]).abs())
            .fold(0.0, f64::max)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Symmetry::None => "none",
            Symmetry::Odd => "odd",
            Symmetry::OddFirstAxis => "odd-first-axis",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Engine {
    #[default]
    Newton,
    Spectral,
}

impl Engine {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "newton" => Some(Engine::Newton),
            "spectral" => Some(Engine::Spectral),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Engine::Newton => "newton",
            Engine::Spectral => "spectral",
        }
    }
}

#[derive(Clone, Debug)]
pub struct DescentOptions {
    pub engine: Engine,
    pub max_iter: usize,
    /// Stop when the sup-norm Euler–Lagrange residual drops below this.
    pub tol: f64,
    pub window: usize,
    pub armijo: f64,
    pub step_min: f64,
    pub step_max: f64,
    pub symmetry: Symmetry,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self {
            engine: Engine::Newton,
            max_iter: 200_000,
            tol: 1e-8,
            window: 10,
            armijo: 1e-4,
            step_min: 1e-16,
            step_max: 1e4,
            symmetry: Symmetry::None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DescentOutcome {
    pub values: Vec<f64>,
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Energy after each accepted step.
    pub trace: Vec<f64>,
}

/// Scratch state of one descent iterate.
struct Point {
    u: Vec<f64>,
    lap: Vec<f64>,
    grad_s: Vec<f64>,
    energy: f64,
}

impl Point {
    fn new(func: &EnergyFunctional, u: Vec<f64>) -> Self {
        let n = u.len();
        let mut pt = Self {
            u,
            lap: vec![0.0; n],
            grad_s: vec![0.0; n],
            energy: 0.0,
        };
        pt.refresh(func);
        pt
    }

    fn refresh(&mut self, func: &EnergyFunctional) {
        laplacian_into(func.grid(), &self.u, &mut self.lap);
        let s = func.smooth_part(&self.u, &self.lap, &mut self.grad_s);
        self.energy = s + func.convex_part(&self.u);
    }
}

/// Minimizes the energy from `u0` with the engine selected in `opts`.
/// Boundary values of `u0` are ignored.
pub fn minimize(func: &EnergyFunctional, u0: &[f64], opts: &DescentOptions) -> DescentOutcome {
    match opts.engine {
        Engine::Newton => newton(func, u0, opts),
        Engine::Spectral => descend(func, u0, opts),
    }
}

/// Spectral proximal-gradient descent. The Armijo test compares energy *changes*, evaluated without cancellation,
/// so the descent keeps making progress after the energies themselves agree
/// to machine precision.
pub fn descend(func: &EnergyFunctional, u0: &[f64], opts: &DescentOptions) -> DescentOutcome {
    let grid = *func.grid();
    let w = grid.cell_volume();
    let mut u = u0.to_vec();
    for (i, v) in u.iter_mut().enumerate() {
        if grid.is_boundary(i) {
            *v = 0.0;
        }
    }
    opts.symmetry.project(&grid, &mut u);
    let mut cur = Point::new(func, u);
    let mut trial = Point::new(func, cur.u.clone());
    let mut z = vec![0.0; cur.u.len()];
    let mut full = vec![0.0; cur.u.len()];
    // Past energies stored relative to the current one.
    let mut history: VecDeque<f64> = VecDeque::with_capacity(opts.window);
    history.push_back(0.0);
    let base = cur.energy;
    let mut offset = 0.0;
    let mut trace = Vec::new();
    // Explicit stability bound of the Laplacian as a first step.
    let mut tau =
        (grid.spacing().powi(2) / (2.0 * grid.dim() as f64)).clamp(opts.step_min, opts.step_max);
    let mut residual = func.l2_gradient(&cur.u, &cur.lap, &mut full);
    let mut iterations = 0;
    let mut converged = residual <= opts.tol;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let slack = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut accepted = None;
        loop {
            for i in 0..z.len() {
                z[i] = cur.u[i] - tau * cur.grad_s[i];
            }
            func.prox_into(&z, tau, &mut trial.u);
            opts.symmetry.project(&grid, &mut trial.u);
            trial.refresh(func);
            let d2: f64 = trial
                .u
                .iter()
                .zip(&cur.u)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                * w;
            let change = func.energy_change(&cur.u, &cur.lap, &trial.u, &trial.lap);
            if change <= slack - opts.armijo / (2.0 * tau) * d2 {
                accepted = Some(change);
                break;
            }
            tau *= 0.5;
            if tau < opts.step_min {
                break;
            }
        }
        let Some(change) = accepted else { break };
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..z.len() {
            let s = trial.u[i] - cur.u[i];
            let y = trial.grad_s[i] - cur.grad_s[i];
            ss += s * s;
            sy += s * y;
        }
        std::mem::swap(&mut cur, &mut trial);
        if history.len() == opts.window {
            history.pop_front();
        }
        for h in history.iter_mut() {
            *h -= change;
        }
        history.push_back(0.0);
        offset += change;
        trace.push(base + offset);
        tau = if sy > 0.0 { ss / sy } else { opts.step_max };
        tau = tau.clamp(
            opts.step_min.max(1e-3 * grid.spacing().powi(2)),
            opts.step_max,
        );
        residual = func.l2_gradient(&cur.u, &cur.lap, &mut full);
        converged = residual <= opts.tol;
        if ss == 0.0 && !converged {
            break;
        }
    }
    DescentOutcome {
        energy: cur.energy,
        values: cur.u,
        residual,
        iterations,
        converged,
        trace,
    }
}

/// Nodes whose curvature exceeds this multiple of `h⁻²` are left to the
/// coordinate sweep.
pub(crate) const TRUNCATION: f64 = 1e8;

/// Stops after this many iterations without progress in residual or energy.
const STAGNATION: usize = 25;

const NEWTON_CG_TOL: f64 = 1e-2;

#[inline]
fn neighbour_sum(grid: &Grid, u: &[f64], k: usize) -> f64 {
    if grid.dim() == 1 {
        u[k - 1] + u[k + 1]
    } else {
        let n = grid.n();
        (u[k + 1] + u[k - 1]) + (u[k + n] + u[k - n])
    }
}

/// One lexicographic sweep of exact coordinate minimization. Under a
/// symmetry each mirror pair moves as one coordinate.
pub(crate) fn coordinate_sweep(
    func: &EnergyFunctional,
    u: &mut [f64],
    symmetry: Symmetry,
    backward: bool,
) {
    let grid = *func.grid();
    let nl = *func.nonlinearity();
    let q = func.q().values();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let a = 2.0 * grid.dim() as f64 * inv_h2;
    let len = u.len();
    for step in 0..len {
        let k = if backward { len - 1 - step } else { step };
        if grid.is_boundary(k) {
            continue;
        }
        let m = symmetry.mirror(&grid, k);
        if symmetry != Symmetry::None {
            if m == k {
                u[k] = 0.0;
                continue;
            }
            if m < k {
                continue;
            }
        }
        let b = neighbour_sum(&grid, u, k) * inv_h2;
        let t = if q[k] < 0.0 {
            nl.prox(b / a, 1.0 / a)
        } else {
            nl.concave_coordinate_min(a, b, u[k])
        };
        u[k] = t;
        if symmetry != Symmetry::None {
            u[m] = -t;
        }
    }
}

/// Exact coordinate minimization over the nodes outside `Ω`, where the
/// coordinate problems are convex.
pub(crate) fn exterior_sweep(func: &EnergyFunctional, u: &mut [f64], backward: bool) {
    let grid = *func.grid();
    let nl = *func.nonlinearity();
    let q = func.q().values();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let a = 2.0 * grid.dim() as f64 * inv_h2;
    let len = u.len();
    for step in 0..len {
        let k = if backward { len - 1 - step } else { step };
        if grid.is_boundary(k) || q[k] >= 0.0 {
            continue;
        }
        let b = neighbour_sum(&grid, u, k) * inv_h2;
        u[k] = nl.prox(b / a, 1.0 / a);
    }
}

/// Solves the tridiagonal system with diagonal `d` and off-diagonals `off`
/// (`off[i]` couples `i` and `i + 1`); `rhs` is overwritten by the solution.
fn thomas(d: &[f64], off: &[f64], rhs: &mut [f64]) {
    let n = d.len();
    let mut c = vec![0.0; n];
    let mut beta = d[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = off[i - 1] / beta;
        beta = d[i] - off[i - 1] * c[i];
        rhs[i] = (rhs[i] - off[i - 1] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i + 1] * rhs[i + 1];
    }
}

/// Five-point operator `diag(d) − h⁻² (neighbours)` restricted to free nodes,
/// with an incomplete Cholesky factor for preconditioning.
struct Stencil2d<'a> {
    n: usize,
    d: &'a [f64],
    free: &'a [bool],
    off: f64,
    pivots: Vec<f64>,
}

impl<'a> Stencil2d<'a> {
    /// Operator diagonal `d`; the factor is built from the diagonal `pd`,
    /// which must make the operator positive definite.
    fn new(n: usize, d: &'a [f64], pd: &[f64], free: &'a [bool], off: f64) -> Self {
        let mut pivots = vec![1.0; d.len()];
        for k in 0..d.len() {
            if !free[k] {
                continue;
            }
            let mut p = pd[k];
            if k >= 1 && free[k - 1] {
                p -= off * off / pivots[k - 1];
            }
            if k >= n && free[k - n] {
                p -= off * off / pivots[k - n];
            }
            pivots[k] = p;
        }
        Self {
            n,
            d,
            free,
            off,
            pivots,
        }
    }

    fn coupled(&self, k: usize, j: usize) -> bool {
        self.free[k] && self.free[j]
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let len = x.len();
        for k in 0..len {
            if !self.free[k] {
                y[k] = x[k];
                continue;
            }
            let mut s = 0.0;
            if k >= 1 && self.coupled(k, k - 1) {
                s += x[k - 1];
            }
            if k + 1 < len && self.coupled(k, k + 1) {
                s += x[k + 1];
            }
            if k >= n && self.coupled(k, k - n) {
                s += x[k - n];
            }
            if k + n < len && self.coupled(k, k + n) {
                s += x[k + n];
            }
            y[k] = self.d[k] * x[k] - self.off * s;
        }
    }

    /// `z = M⁻¹ r` with `M = (P + L) P⁻¹ (P + Lᵀ)`.
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let n = self.n;
        let len = r.len();
        for k in 0..len {
            let mut s = r[k];
            if self.free[k] {
                if k >= 1 && self.coupled(k, k - 1) {
                    s += self.off * z[k - 1];
                }
                if k >= n && self.coupled(k, k - n) {
                    s += self.off * z[k - n];
                }
            }
            z[k] = s / self.pivots[k];
        }
        for k in (0..len).rev() {
            if !self.free[k] {
                continue;
            }
            let mut s = 0.0;
            if k + 1 < len && self.coupled(k, k + 1) {
                s += z[k + 1];
            }
            if k + n < len && self.coupled(k, k + n) {
                s += z[k + n];
            }
            z[k] += self.off * s / self.pivots[k];
        }
    }

    /// Preconditioned CG; `None` when a direction of nonpositive curvature
    /// shows up.
    fn solve(&self, b: &[f64], rel_tol: f64, max_iter: usize) -> Option<Vec<f64>> {
        let len = b.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut x = vec![0.0; len];
        let mut r = b.to_vec();
        let mut z = vec![0.0; len];
        self.precondition(&r, &mut z);
        let mut p = z.clone();
        let mut ap = vec![0.0; len];
        let mut rz = dot(&r, &z);
        let stop = rel_tol * rel_tol * dot(&r, &r);
        for _ in 0..max_iter {
            if dot(&r, &r) <= stop || rz == 0.0 {
                break;
            }
            self.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return None;
            }
            let alpha = rz / pap;
            for k in 0..len {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            self.precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            for k in 0..len {
                p[k] = z[k] + beta * p[k];
            }
            rz = rz_new;
        }
        Some(x)
    }
    /// Preconditioned MINRES for symmetric indefinite operators; needs a
    /// positive definite factor.
    fn minres(&self, b: &[f64], rel_tol: f64, max_iter: usize) -> Vec<f64> {
        let len = b.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let mut x = vec![0.0; len];
        let mut r1 = b.to_vec();
        let mut y = vec![0.0; len];
        self.precondition(&r1, &mut y);
        let beta1 = dot(&r1, &y).sqrt();
        if !(beta1 > 0.0) {
            return x;
        }
        let mut r2 = r1.clone();
        let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
        let (mut cs, mut sn) = (-1.0, 0.0);
        let mut w = vec![0.0; len];
        let mut w2 = vec![0.0; len];
        let mut v = vec![0.0; len];
        for itn in 0..max_iter {
            let s = 1.0 / beta;
            for k in 0..len {
                v[k] = s * y[k];
            }
            self.apply(&v, &mut y);
            if itn > 0 {
                let c = beta / oldb;
                for k in 0..len {
                    y[k] -= c * r1[k];
                }
            }
            let alfa = dot(&v, &y);
            let c = alfa / beta;
            for k in 0..len {
                y[k] -= c * r2[k];
            }
            std::mem::swap(&mut r1, &mut r2);
            r2.copy_from_slice(&y);
            self.precondition(&r2, &mut y);
            oldb = beta;
            beta = dot(&r2, &y).max(0.0).sqrt();
            let oldeps = epsln;
            let delta = cs * dbar + sn * alfa;
            let gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            let gamma = gbar.hypot(beta).max(f64::EPSILON);
            cs = gbar / gamma;
            sn = beta / gamma;
            let phi = cs * phibar;
            phibar *= sn;
            for k in 0..len {
                let w1 = w2[k];
                w2[k] = w[k];
                w[k] = (v[k] - oldeps * w1 - delta * w2[k]) / gamma;
                x[k] += phi * w[k];
            }
            if phibar <= rel_tol * beta1 || beta == 0.0 {
                break;
            }
        }
        x
    }
}

/// Newton direction `H δ = −g` on the free nodes, `δ = 0` elsewhere, where
/// `H = −Δ_h + diag(curvature)`. `None` if `H` is not positive definite
/// on the free nodes (as far as the solver can tell).
fn newton_direction(
    grid: &Grid,
    curvature: &[f64],
    convex: &[f64],
    free: &[bool],
    g: &[f64],
) -> Option<Vec<f64>> {
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let centre = 2.0 * grid.dim() as f64 * inv_h2;
    let diag = |c: &[f64]| -> Vec<f64> {
        (0..g.len())
            .map(|k| if free[k] { centre + c[k] } else { 1.0 })
            .collect()
    };
    let d = diag(curvature);
    let rhs: Vec<f64> = (0..g.len())
        .map(|k| if free[k] { -g[k] } else { 0.0 })
        .collect();
    if grid.dim() == 1 {
        let off: Vec<f64> = (0..g.len() - 1)
            .map(|k| if free[k] && free[k + 1] { -inv_h2 } else { 0.0 })
            .collect();
        let mut x = rhs.clone();
        thomas(&d, &off, &mut x);
        let slope: f64 = x.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        (slope > 0.0 && x.iter().all(|v| v.is_finite())).then_some(x)
    } else {
        Stencil2d::new(grid.n(), &d, &diag(convex), free, inv_h2).solve(&rhs, NEWTON_CG_TOL, 2000)
    }
}

fn newton(func: &EnergyFunctional, u0: &[f64], opts: &DescentOptions) -> DescentOutcome {
    let grid = *func.grid();
    let len = grid.len();
    let w = grid.cell_volume();
    let nl = *func.nonlinearity();
    let q = func.q().values();
    let h2 = grid.spacing() * grid.spacing();
    let mut u = u0.to_vec();
    for (k, v) in u.iter_mut().enumerate() {
        if grid.is_boundary(k) {
            *v = 0.0;
        }
    }
    opts.symmetry.project(&grid, &mut u);
    let mut lap = vec![0.0; len];
    laplacian_into(&grid, &u, &mut lap);
    let base = func.smooth_part(&u, &lap, &mut vec![0.0; len]) + func.convex_part(&u);
    let mut offset = 0.0;
    let mut trace = Vec::new();
    let mut g = vec![0.0; len];
    let mut residual = func.l2_gradient(&u, &lap, &mut g);
    let mut best = residual;
    let mut since_best = 0;
    let mut last_offset = 0.0;
    let mut iterations = 0;
    let mut converged = residual <= opts.tol;
    let mut prev = vec![0.0; len];
    let mut prev_lap = vec![0.0; len];
    let mut trial = vec![0.0; len];
    let mut trial_lap = vec![0.0; len];
    while !converged && iterations < opts.max_iter {
        iterations += 1;

        prev.copy_from_slice(&u);
        prev_lap.copy_from_slice(&lap);
        coordinate_sweep(func, &mut u, opts.symmetry, iterations % 2 == 0);
        laplacian_into(&grid, &u, &mut lap);
        offset += func.energy_change(&prev, &prev_lap, &u, &lap).min(0.0);
        residual = func.l2_gradient(&u, &lap, &mut g);
        if residual <= opts.tol {
            converged = true;
            trace.push(base + offset);
            break;
        }

        let mut curvature = vec![0.0; len];
        let mut convex = vec![0.0; len];
        let mut free = vec![false; len];
        for k in 0..len {
            if grid.is_boundary(k) {
                continue;
            }
            if opts.symmetry != Symmetry::None && opts.symmetry.mirror(&grid, k) == k {
                continue;
            }
            let c = nl.df(u[k]);
            if !(c * h2 <= TRUNCATION) {
                continue;
            }
            free[k] = true;
            curvature[k] = -q[k] * c;
            convex[k] = curvature[k].max(0.0);
        }
        let mut delta = newton_direction(&grid, &curvature, &convex, &free, &g)
            .or_else(|| newton_direction(&grid, &convex, &convex, &free, &g))
            .unwrap_or_else(|| vec![0.0; len]);
        // Outside Ω the correction may take a node to zero but not across it.
        for k in 0..len {
            if free[k] && q[k] < 0.0 && u[k] * (u[k] + delta[k]) < 0.0 {
                delta[k] = -u[k];
            }
        }
        opts.symmetry.project(&grid, &mut delta);
        let slope: f64 = delta.iter().zip(&g).map(|(d, gk)| d * gk).sum::<f64>() * w;
        if slope < 0.0 {
            let mut alpha = 1.0;
            for _ in 0..40 {
                for k in 0..len {
                    trial[k] = u[k] + alpha * delta[k];
                }
                // The trivial critical point is never a useful target.
                if (0..len).all(|k| q[k] < 0.0 || trial[k] == 0.0) {
                    break;
                }
                laplacian_into(&grid, &trial, &mut trial_lap);
                let change = func.energy_change(&u, &lap, &trial, &trial_lap);
                if change <= opts.armijo * alpha * slope {
                    std::mem::swap(&mut u, &mut trial);
                    std::mem::swap(&mut lap, &mut trial_lap);
                    offset += change;
                    break;
                }
                alpha *= 0.5;
            }
        }
        trace.push(base + offset);
        residual = func.l2_gradient(&u, &lap, &mut g);
        converged = residual <= opts.tol;
        let decrease = last_offset - offset;
        last_offset = offset;
        if residual < best * (1.0 - 1e-3) || decrease > 1e-12 * (base + offset).abs() {
            best = best.min(residual);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STAGNATION {
                break;
            }
        }
    }
    let energy = func.smooth_part(&u, &lap, &mut g) + func.convex_part(&u);
    DescentOutcome {
        energy,
        values: u,
        residual,
        iterations,
        converged,
        trace,
    }
}

/// Gradient direction in the metric `−Δ_h + diag(shift)`: solves
/// `(−Δ_h + diag(shift)) d = g` on the nodes flagged in `free`, `d = 0`
/// elsewhere. `shift` must be nonnegative.
pub(crate) fn metric_direction(grid: &Grid, shift: &[f64], free: &[bool], g: &[f64]) -> Vec<f64> {
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let centre = 2.0 * grid.dim() as f64 * inv_h2;
    let d: Vec<f64> = (0..g.len())
        .map(|k| if free[k] { centre + shift[k] } else { 1.0 })
        .collect();
    let rhs: Vec<f64> = (0..g.len())
        .map(|k| if free[k] { g[k] } else { 0.0 })
        .collect();
    if grid.dim() == 1 {
        let off: Vec<f64> = (0..g.len() - 1)
            .map(|k| if free[k] && free[k + 1] { -inv_h2 } else { 0.0 })
            .collect();
        let mut x = rhs;
        thomas(&d, &off, &mut x);
        x
    } else {
        Stencil2d::new(grid.n(), &d, &d, free, inv_h2)
            .solve(&rhs, 1e-3, 500)
            .unwrap_or_else(|| vec![0.0; g.len()])
    }
}

/// Newton iteration on the Euler–Lagrange equation itself, with a line
/// search on `‖g‖₂`. Unlike [`minimize`] it converges to saddle points as
/// well as minimizers, so it is only useful from a good initial guess.
pub(crate) fn newton_critical(
    func: &EnergyFunctional,
    u0: &[f64],
    opts: &DescentOptions,
) -> DescentOutcome {
    let grid = *func.grid();
    let len = grid.len();
    let nl = *func.nonlinearity();
    let q = func.q().values();
    let h2 = grid.spacing() * grid.spacing();
    let inv_h2 = 1.0 / h2;
    let centre = 2.0 * grid.dim() as f64 * inv_h2;
    let mut u = u0.to_vec();
    for (k, v) in u.iter_mut().enumerate() {
        if grid.is_boundary(k) {
            *v = 0.0;
        }
    }
    opts.symmetry.project(&grid, &mut u);
    let norm2 = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>();
    let mut lap = vec![0.0; len];
    let mut g = vec![0.0; len];
    laplacian_into(&grid, &u, &mut lap);
    let mut residual = func.l2_gradient(&u, &lap, &mut g);
    let mut merit = norm2(&g);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = residual <= opts.tol;
    let mut trial = vec![0.0; len];
    let mut trial_lap = vec![0.0; len];
    let mut trial_g = vec![0.0; len];
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let mut d = vec![1.0; len];
        let mut pd = vec![1.0; len];
        let mut free = vec![false; len];
        for k in 0..len {
            if grid.is_boundary(k) {
                continue;
            }
            if opts.symmetry != Symmetry::None && opts.symmetry.mirror(&grid, k) == k {
                continue;
            }
            let c = nl.df(u[k]);
            if !(c * h2 <= TRUNCATION) {
                continue;
            }
            free[k] = true;
            d[k] = centre - q[k] * c;
            pd[k] = centre + c;
        }
        let rhs: Vec<f64> = (0..len)
            .map(|k| if free[k] { -g[k] } else { 0.0 })
            .collect();
        let mut delta = if grid.dim() == 1 {
            let off: Vec<f64> = (0..len - 1)
                .map(|k| if free[k] && free[k + 1] { -inv_h2 } else { 0.0 })
                .collect();
            let mut x = rhs;
            thomas(&d, &off, &mut x);
            x
        } else {
            Stencil2d::new(grid.n(), &d, &pd, &free, inv_h2).minres(&rhs, 1e-6, 4000)
        };
        if !delta.iter().all(|v| v.is_finite()) {
            break;
        }
        opts.symmetry.project(&grid, &mut delta);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            for k in 0..len {
                trial[k] = u[k] + alpha * delta[k];
            }
            laplacian_into(&grid, &trial, &mut trial_lap);
            let r = func.l2_gradient(&trial, &trial_lap, &mut trial_g);
            let m = norm2(&trial_g);
            if m <= (1.0 - 1e-4 * alpha).powi(2) * merit {
                std::mem::swap(&mut u, &mut trial);
                std::mem::swap(&mut lap, &mut trial_lap);
                std::mem::swap(&mut g, &mut trial_g);
                merit = m;
                residual = r;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        trace.push(func.smooth_part(&u, &lap, &mut trial_g) + func.convex_part(&u));
        converged = residual <= opts.tol;
        if !accepted {
            break;
        }
    }
    let energy = func.smooth_part(&u, &lap, &mut trial_g) + func.convex_part(&u);
    DescentOutcome {
        energy,
        values: u,
        residual,
        iterations,
        converged,
        trace,
    }
}

/// Solves `−Δ_h v = b` with zero boundary values by conjugate gradients.
pub fn solve_poisson(grid: &Grid, b: &[f64], rel_tol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let interior = |i: usize| !grid.is_boundary(i);
    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = (0..n)
        .map(|i| if interior(i) { b[i] } else { 0.0 })
        .collect();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let stop = rel_tol * rel_tol * rr;
    for _ in 0..max_iter {
        if rr <= stop || rr == 0.0 {
            break;
        }
        laplacian_into(grid, &p, &mut ap);
        for v in ap.iter_mut() {
            *v = -*v;
        }
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Nonlinearity;
    use crate::geometry::DomainShape;
    use crate::grid::laplacian_apply;

    #[test]
    fn torsion_solves_poisson() {
        let g = Grid::new(2, 65, 2.0).unwrap();
        let b: Vec<f64> = (0..g.len())
            .map(|i| if g.radius(i) < 1.0 { 1.0 } else { 0.0 })
            .collect();
        let x = solve_poisson(&g, &b, 1e-12, 10_000);
        let f = crate::grid::Field::from_values(g, x).unwrap();
        let lap = laplacian_apply(&f);
        for i in 0..g.len() {
            if !g.is_boundary(i) {
                assert!((lap.values()[i] + b[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn projection_is_exactly_odd() {
        let g = Grid::new(2, 33, 1.0).unwrap();
        let mut u: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        Symmetry::Odd.project(&g, &mut u);
        assert_eq!(Symmetry::Odd.defect(&g, &u), 0.0);
        let mut v: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        Symmetry::OddFirstAxis.project(&g, &mut v);
        assert_eq!(Symmetry::OddFirstAxis.defect(&g, &v), 0.0);
    }

    fn interval_problem(n: usize, p: f64, eps: f64) -> (Grid, EnergyFunctional) {
        let g = Grid::new(1, n, 4.0).unwrap();
        let q = g.sample_q(&DomainShape::interval(-1.0, 1.0));
        (
            g,
            EnergyFunctional::new(q, Nonlinearity::new(p, eps).unwrap()),
        )
    }

    #[test]
    fn engines_agree() {
        let (g, e) = interval_problem(129, 1.5, 0.0);
        let u0: Vec<f64> = (0..g.len())
            .map(|i| (1.0 - g.radius(i) / 4.0).max(0.0))
            .collect();
        let mut opts = DescentOptions {
            tol: 1e-9,
            ..Default::default()
        };
        let a = minimize(&e, &u0, &opts);
        opts.engine = Engine::Spectral;
        let b = minimize(&e, &u0, &opts);
        assert!(a.converged && b.converged);
        let d = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-7, "engines differ by {d}");
        assert!((a.energy - b.energy).abs() < 1e-10);
    }

    #[test]
    fn newton_matches_explicit_ground_state() {
        let (g, e) = interval_problem(1025, 1.0, 1e-8);
        let u0: Vec<f64> = (0..g.len())
            .map(|i| (1.0 - g.radius(i) / 4.0).max(0.0))
            .collect();
        let out = minimize(
            &e,
            &u0,
            &DescentOptions {
                tol: 1e-9,
                ..Default::default()
            },
        );
        assert!(out.converged);
        let err = (0..g.len())
            .map(|i| {
                (out.values[i] - crate::radial::explicit_w(1, 1.0, g.radius(i)).unwrap()).abs()
            })
            .fold(0.0, f64::max);
        // Node sampling of Q places the interface within h of its true position.
        assert!(err < 2.0 * g.spacing(), "error {err}");
        // Energy is monotone along the iteration.
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    }

    #[test]
    fn newton_in_two_dimensions() {
        let g = Grid::new(2, 65, 3.0).unwrap();
        let q = g.sample_q(&DomainShape::ball(&[0.0, 0.0], 1.0));
        let e = EnergyFunctional::new(q, Nonlinearity::new(1.5, 0.0).unwrap());
        let u0: Vec<f64> = (0..g.len())
            .map(|i| 0.1 * (1.0 - g.radius(i) / 3.0).max(0.0))
            .collect();
        let out = minimize(
            &e,
            &u0,
            &DescentOptions {
                tol: 1e-9,
                ..Default::default()
            },
        );
        assert!(out.converged, "residual {}", out.residual);
        assert!(out.energy < 0.0);
        assert!(out.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn odd_minimization_stays_odd() {
        let (g, e) = interval_problem(257, 1.0, 1e-8);
        let u0: Vec<f64> = (0..g.len())
            .map(|i| g.coords(i)[0] * (1.0 - g.radius(i) / 4.0))
            .collect();
        let opts = DescentOptions {
            tol: 1e-9,
            symmetry: Symmetry::Odd,
            ..Default::default()
        };
        let out = minimize(&e, &u0, &opts);
        assert!(out.converged, "residual {}", out.residual);
        assert_eq!(Symmetry::Odd.defect(&g, &out.values), 0.0);
        assert!(out.values.iter().any(|&v| v > 1e-3) && out.values.iter().any(|&v| v < -1e-3));
    }

    #[test]
    fn coordinate_sweep_never_raises_energy() {
        let (g, e) = interval_problem(65, 1.3, 0.0);
        let mut u: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        u[0] = 0.0;
        u[64] = 0.0;
        let mut last = e
            .energy(&crate::grid::Field::from_values(g, u.clone()).unwrap())
            .unwrap()
            .value;
        for pass in 0..10 {
            coordinate_sweep(&e, &mut u, Symmetry::None, pass % 2 == 1);
            let now = e
                .energy(&crate::grid::Field::from_values(g, u.clone()).unwrap())
                .unwrap()
                .value;
            assert!(now <= last + 1e-14);
            last = now;
        }
    }

    #[test]
    fn thomas_solves_tridiagonal() {
        let d = [4.0, 5.0, 6.0, 7.0];
        let off = [-1.0, -2.0, -1.5];
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut b: Vec<f64> = (0..4)
            .map(|i| {
                let mut v = d[i] * x[i];
                if i > 0 {
                    v += off[i - 1] * x[i - 1];
                }
                if i < 3 {
                    v += off[i] * x[i + 1];
                }
                v
            })
            .collect();
        thomas(&d, &off, &mut b);
        for i in 0..4 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn descent_reaches_critical_point() {
        let g = Grid::new(1, 257, 4.0).unwrap();
        let q = g.sample_q(&DomainShape::interval(-1.0, 1.0));
        let e = EnergyFunctional::new(q, Nonlinearity::new(1.5, 0.0).unwrap());
        let u0: Vec<f64> = (0..g.len())
            .map(|i| (1.0 - g.radius(i) / 4.0).max(0.0))
            .collect();
        let opts = DescentOptions {
            tol: 1e-9,
            engine: Engine::Spectral,
            ..Default::default()
        };
        let out = minimize(&e, &u0, &opts);
        assert!(out.converged, "residual {}", out.residual);
        assert!(out.energy < 0.0);
        // Nonmonotone descent still lowers the energy overall.
        assert!(out.trace.last().unwrap() <= &out.trace[0]);
    }
}
