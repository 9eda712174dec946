//! Truncated-box finite differences on `[−L, L]^N`, `N ∈ {1, 2}`.
//!
//! Boundary nodes carry homogeneous Dirichlet values. All reductions run in a
//! fixed sequential order so results are bit-reproducible.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{q_omega_eval, DomainShape};

/// Node count above which stencil maps are spread over threads.
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_extent: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, half_extent: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} not in {{1, 2}}"
            )));
        }
        if n < 16 {
            return Err(Error::InvalidGrid(format!("n = {n} < 16")));
        }
        if !(half_extent.is_finite() && half_extent > 0.0) {
            return Err(Error::InvalidGrid(format!("half extent {half_extent}")));
        }
        Ok(Self {
            dim,
            n,
            half_extent,
        })
    }

    /// Grid on `[−L, L]^N` with spacing as close as possible to `h`.
    pub fn with_spacing(dim: usize, half_extent: f64, h: f64) -> Result<Self> {
        let n = (2.0 * half_extent / h).round() as usize + 1;
        Self::new(dim, n, half_extent)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / (self.n - 1) as f64
    }

    /// `h^N`, the quadrature weight of an interior node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_extent + i as f64 * self.spacing()
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.n, idx / self.n]
        }
    }

    pub fn flat_index(&self, i: usize, j: usize) -> usize {
        if self.dim == 1 {
            i
        } else {
            j * self.n + i
        }
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let [i, j] = self.multi_index(idx);
        if self.dim == 1 {
            vec![self.axis_coord(i)]
        } else {
            vec![self.axis_coord(i), self.axis_coord(j)]
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let [i, j] = self.multi_index(idx);
        let edge = |k: usize| k == 0 || k == self.n - 1;
        edge(i) || (self.dim == 2 && edge(j))
    }

    /// Node mirrored through the origin (`x ↦ −x`).
    pub fn mirror_point(&self, idx: usize) -> usize {
        let [i, j] = self.multi_index(idx);
        if self.dim == 1 {
            self.n - 1 - i
        } else {
            self.flat_index(self.n - 1 - i, self.n - 1 - j)
        }
    }

    /// Node mirrored across the first coordinate axis (`x₁ ↦ −x₁`).
    pub fn mirror_first(&self, idx: usize) -> usize {
        let [i, j] = self.multi_index(idx);
        self.flat_index(self.n - 1 - i, j)
    }

    /// Same box, `factor` times finer spacing.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.dim, factor * (self.n - 1) + 1, self.half_extent)
    }

    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let h = self.spacing();
        let mut ij = [0usize; 2];
        for k in 0..self.dim {
            let t = ((x[k] + self.half_extent) / h).round();
            if !(0.0..=(self.n - 1) as f64).contains(&t) {
                return None;
            }
            ij[k] = t as usize;
        }
        Some(self.flat_index(ij[0], ij[1]))
    }

    pub fn zeros(&self) -> Field {
        Field {
            grid: *self,
            values: vec![0.0; self.len()],
        }
    }

    /// Samples `f` at interior nodes; boundary nodes are set to 0.
    pub fn sample(&self, mut f: impl FnMut(&[f64]) -> f64) -> Field {
        let values = (0..self.len())
            .map(|i| {
                if self.is_boundary(i) {
                    0.0
                } else {
                    f(&self.coords(i))
                }
            })
            .collect();
        Field {
            grid: *self,
            values,
        }
    }

    /// Node-sampled `Q_Ω`.
    pub fn sample_q(&self, shape: &DomainShape) -> QField {
        QField {
            grid: *self,
            values: (0..self.len())
                .map(|i| q_omega_eval(shape, &self.coords(i)))
                .collect(),
        }
    }

    /// Euclidean radius of node `idx`.
    pub fn radius(&self, idx: usize) -> f64 {
        self.coords(idx).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Sup-norm distance of node `idx` from the origin.
    pub fn inf_radius(&self, idx: usize) -> f64 {
        self.coords(idx).iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Nodal values on a [`Grid`]; boundary nodes hold 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: Grid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field holds non-finite values".into()));
        }
        for (i, v) in values.iter_mut().enumerate() {
            if grid.is_boundary(i) {
                *v = 0.0;
            }
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &Field) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn negated(&self) -> Field {
        self.map(|v| -v)
    }

    /// Field with nodes mirrored through the origin.
    pub fn reflected(&self) -> Field {
        let values = (0..self.grid.len())
            .map(|i| self.values[self.grid.mirror_point(i)])
            .collect();
        Field {
            grid: self.grid,
            values,
        }
    }

    /// Multilinear interpolation; 0 outside the box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let h = g.spacing();
        let n = g.n;
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for k in 0..g.dim {
            let t = (x[k] + g.half_extent) / h;
            if !(0.0..=(n - 1) as f64).contains(&t) {
                return 0.0;
            }
            let b = (t.floor() as usize).min(n - 2);
            base[k] = b;
            frac[k] = t - b as f64;
        }
        if g.dim == 1 {
            let (a, b) = (self.values[base[0]], self.values[base[0] + 1]);
            a + frac[0] * (b - a)
        } else {
            let v = |i: usize, j: usize| self.values[g.flat_index(i, j)];
            let (i, j) = (base[0], base[1]);
            let (s, t) = (frac[0], frac[1]);
            (1.0 - s) * (1.0 - t) * v(i, j)
                + s * (1.0 - t) * v(i + 1, j)
                + (1.0 - s) * t * v(i, j + 1)
                + s * t * v(i + 1, j + 1)
        }
    }
}

/// Node-sampled indefinite weight, values in `{+1, −1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct QField {
    grid: Grid,
    values: Vec<f64>,
}

impl QField {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|&v| v != 1.0 && v != -1.0) {
            return Err(Error::InvalidInput("Q values must be +1 or -1".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn inside(&self, idx: usize) -> bool {
        self.values[idx] > 0.0
    }

    /// Interior nodes where `Q = +1`.
    pub fn omega_mask(&self) -> Vec<bool> {
        (0..self.grid.len())
            .map(|i| self.values[i] > 0.0 && !self.grid.is_boundary(i))
            .collect()
    }
}

/// Raw discrete Laplacian `out = Δ_h u` on interior nodes, 0 on the boundary.
pub fn laplacian_into(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let n = grid.n;
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    if grid.dim == 1 {
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for i in 1..n - 1 {
            out[i] = ((u[i + 1] + u[i - 1]) - 2.0 * u[i]) * inv_h2;
        }
        return;
    }
    let row = |j: usize, o: &mut [f64]| {
        if j == 0 || j == n - 1 {
            o.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        o[0] = 0.0;
        o[n - 1] = 0.0;
        let c = j * n;
        for i in 1..n - 1 {
            let k = c + i;
            // Grouped so that mirror-symmetric inputs give exactly mirrored outputs.
            o[i] = (((u[k + 1] + u[k - 1]) + (u[k + n] + u[k - n])) - 4.0 * u[k]) * inv_h2;
        }
    };
    if grid.len() >= PAR_THRESHOLD {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(j, o)| row(j, o));
    } else {
        out.chunks_mut(n).enumerate().for_each(|(j, o)| row(j, o));
    }
}

/// `Δ_h u` with the standard 3-point / 5-point stencil.
pub fn laplacian_apply(u: &Field) -> Field {
    let mut out = vec![0.0; u.grid.len()];
    laplacian_into(&u.grid, &u.values, &mut out);
    Field {
        grid: u.grid,
        values: out,
    }
}

/// Same as [`laplacian_apply`] but checks the operand against `grid`.
pub fn laplacian_on(grid: &Grid, u: &Field) -> Result<Field> {
    if *grid != u.grid {
        return Err(Error::GridMismatch);
    }
    Ok(laplacian_apply(u))
}

/// Sum of squared forward differences over all edges, times `h^{N−2}`.
pub fn dirichlet_energy_raw(grid: &Grid, u: &[f64]) -> f64 {
    let n = grid.n;
    let scale = grid.spacing().powi(grid.dim as i32 - 2);
    let mut s = 0.0;
    if grid.dim == 1 {
        for i in 0..n - 1 {
            let d = u[i + 1] - u[i];
            s += d * d;
        }
    } else {
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                if i + 1 < n {
                    let d = u[k + 1] - u[k];
                    s += d * d;
                }
                if j + 1 < n {
                    let d = u[k + n] - u[k];
                    s += d * d;
                }
            }
        }
    }
    s * scale
}

/// Discrete `‖∇u‖²`.
pub fn dirichlet_energy(u: &Field) -> f64 {
    dirichlet_energy_raw(&u.grid, &u.values)
}

/// Trapezoid weight of node `idx` relative to `h^N`.
fn trapezoid_weight(grid: &Grid, idx: usize) -> f64 {
    let [i, j] = grid.multi_index(idx);
    let w = |k: usize| if k == 0 || k == grid.n - 1 { 0.5 } else { 1.0 };
    if grid.dim == 1 {
        w(i)
    } else {
        w(i) * w(j)
    }
}

pub fn integrate_raw(grid: &Grid, g: &[f64]) -> f64 {
    let s: f64 = g
        .iter()
        .enumerate()
        .map(|(i, v)| trapezoid_weight(grid, i) * v)
        .sum();
    s * grid.cell_volume()
}

/// `∫ g` by the trapezoid rule.
pub fn integrate(g: &Field) -> f64 {
    integrate_raw(&g.grid, &g.values)
}

pub fn integrate_q(q: &QField) -> f64 {
    integrate_raw(&q.grid, &q.values)
}

/// Evaluates `r^{2/(2−p)} u(x / r)` on `target` by multilinear interpolation.
pub fn restrict_rescale(u: &Field, r: f64, p: f64, target: &Grid) -> Result<Field> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "scale factor {r} must be positive"
        )));
    }
    if !(1.0..2.0).contains(&p) {
        return Err(Error::ExponentOutOfRange(p));
    }
    if target.dim != u.grid.dim {
        return Err(Error::GridMismatch);
    }
    let src = &u.grid;
    // Values at round-off level relative to the peak do not count as support.
    let floor = 1e-14 * u.sup_norm();
    let support = (0..src.len())
        .filter(|&i| u.values[i].abs() > floor)
        .map(|i| src.inf_radius(i))
        .fold(0.0, f64::max);
    if r * support >= target.half_extent {
        return Err(Error::SupportOutsideTarget(format!(
            "rescaled support radius {:.4} vs target half extent {:.4}",
            r * support,
            target.half_extent
        )));
    }
    let amp = r.powf(2.0 / (2.0 - p));
    let out = target.sample(|x| {
        let y: Vec<f64> = x.iter().map(|v| v / r).collect();
        amp * u.interpolate(&y)
    });
    Ok(out)
}

/// Writes the plain-text field dump: header then row-major values.
pub fn write_field(path: &Path, u: &Field, p: f64) -> Result<()> {
    let mut s = String::with_capacity(u.values.len() * 24 + 64);
    let g = &u.grid;
    let _ = writeln!(s, "sublinear-field 1");
    let _ = writeln!(s, "dim {}", g.dim);
    let _ = writeln!(s, "n {}", g.n);
    let _ = writeln!(s, "half_extent {:?}", g.half_extent);
    let _ = writeln!(s, "p {p:?}");
    for v in &u.values {
        let _ = writeln!(s, "{v:?}");
    }
    write_atomic(path, s.as_bytes())
}

/// Reads a field dump; returns the field and the recorded exponent.
pub fn read_field(path: &Path) -> Result<(Field, f64)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let bad = |m: &str| Error::InvalidInput(format!("{}: {m}", path.display()));
    if lines.next() != Some("sublinear-field 1") {
        return Err(bad("missing field header"));
    }
    let mut header = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad("truncated header"))?;
        line.strip_prefix(key)
            .map(|v| v.trim().to_string())
            .ok_or_else(|| bad(&format!("expected `{key}`")))
    };
    let dim: usize = header("dim")?.parse().map_err(|_| bad("dim"))?;
    let n: usize = header("n")?.parse().map_err(|_| bad("n"))?;
    let l: f64 = header("half_extent")?
        .parse()
        .map_err(|_| bad("half_extent"))?;
    let p: f64 = header("p")?.parse().map_err(|_| bad("p"))?;
    let grid = Grid::new(dim, n, l)?;
    let values: Vec<f64> = lines
        .map(|l| l.trim().parse::<f64>().map_err(|_| bad("value")))
        .collect::<Result<_>>()?;
    Ok((Field::from_values(grid, values)?, p))
}

/// Portable graymap (ASCII `P2`) of a 2D field, rows from top (`y = L`).
pub fn write_pgm(path: &Path, u: &Field) -> Result<()> {
    let g = &u.grid;
    if g.dim != 2 {
        return Err(Error::InvalidInput(
            "graymap export needs a 2D field".into(),
        ));
    }
    let lo = u.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = u.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = format!("P2\n{} {}\n255\n", g.n, g.n);
    for j in (0..g.n).rev() {
        let row: Vec<String> = (0..g.n)
            .map(|i| {
                let v = u.values[g.flat_index(i, j)];
                (((v - lo) / span) * 255.0).round().to_string()
            })
            .collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Write to a temporary sibling then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Grid, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        grid.sample(|_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1, 15, 1.0).is_err());
        assert!(Grid::new(3, 32, 1.0).is_err());
        assert!(Grid::new(1, 32, 0.0).is_err());
        let g = Grid::new(1, 2049, 4.0).unwrap();
        assert_eq!(g.spacing(), 1.0 / 256.0);
    }

    #[test]
    fn laplacian_examples() {
        let g = Grid::new(1, 65, 1.0).unwrap();
        let zero = laplacian_apply(&g.zeros());
        assert!(zero.values().iter().all(|&v| v == 0.0));

        let lin = g.sample(|x| x[0]);
        let d = laplacian_apply(&lin);
        for i in 2..g.n() - 2 {
            assert!(d.values()[i].abs() < 1e-10);
        }
        let quad = g.sample(|x| x[0] * x[0]);
        let d = laplacian_apply(&quad);
        for i in 2..g.n() - 2 {
            assert!((d.values()[i] - 2.0).abs() < 1e-9);
        }
        assert_eq!(d.values()[0], 0.0);
        assert_eq!(d.values()[g.n() - 1], 0.0);

        let g2 = Grid::new(2, 33, 1.0).unwrap();
        let quad2 = g2.sample(|x| x[0] * x[0] + 3.0 * x[1] * x[1]);
        let d2 = laplacian_apply(&quad2);
        let k = g2.flat_index(10, 20);
        assert!((d2.values()[k] - 8.0).abs() < 1e-9);
    }

    #[test]
    fn laplacian_rejects_mismatch() {
        let a = Grid::new(1, 33, 1.0).unwrap();
        let b = Grid::new(1, 65, 1.0).unwrap();
        assert!(matches!(
            laplacian_on(&a, &b.zeros()),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn dirichlet_energy_examples() {
        let g = Grid::new(1, 257, 1.0).unwrap();
        assert_eq!(dirichlet_energy(&g.zeros()), 0.0);
        let tent = g.sample(|x| 1.0 - x[0].abs());
        assert!((dirichlet_energy(&tent) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn integrate_examples() {
        let g = Grid::new(1, 257, 1.0).unwrap();
        let one = g.sample(|_| 1.0);
        assert!((integrate(&one) - 2.0).abs() <= 2.0 * g.spacing());
        let odd = g.sample(|x| x[0].powi(3) - x[0]);
        assert!(integrate(&odd).abs() < 1e-12);

        let g2 = Grid::new(2, 129, 2.0).unwrap();
        let q = g2.sample_q(&DomainShape::Box {
            lo: vec![-1.0, -1.0],
            hi: vec![1.0, 1.0],
        });
        let expect = 2.0 * 4.0 - 16.0;
        assert!((integrate_q(&q) - expect).abs() < 20.0 * g2.spacing());
    }

    #[test]
    fn restrict_rescale_examples() {
        let g = Grid::new(1, 257, 4.0).unwrap();
        let w = g.sample(|x| crate::radial::explicit_w(1, 1.0, x[0].abs()).unwrap());
        let same = restrict_rescale(&w, 1.0, 1.5, &g).unwrap();
        assert!(same.sup_distance(&w).unwrap() < 1e-12);

        // p = 1, r = 2 multiplies values by 4: check at nodes hit exactly.
        let target = Grid::new(1, 513, 8.0).unwrap();
        let big = restrict_rescale(&w, 2.0, 1.0, &target).unwrap();
        for i in (0..target.n()).step_by(14) {
            let x = target.axis_coord(i);
            let src = g.nearest_node(&[x / 2.0]).unwrap();
            assert!((big.values()[i] - 4.0 * w.values()[src]).abs() < 1e-12);
        }

        let small = Grid::new(1, 193, 3.0).unwrap();
        assert!(matches!(
            restrict_rescale(&w, 2.0, 1.0, &small),
            Err(Error::SupportOutsideTarget(_))
        ));
    }

    #[test]
    fn field_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 17, 1.5).unwrap();
        let u = random_field(&g, 3);
        let path = dir.path().join("u.field");
        write_field(&path, &u, 1.25).unwrap();
        let (back, p) = read_field(&path).unwrap();
        assert_eq!(back, u);
        assert_eq!(p, 1.25);
        write_pgm(&dir.path().join("u.pgm"), &u).unwrap();
    }

    proptest! {
        #[test]
        fn integration_by_parts_identity(seed in 0u64..1000, dim in 1usize..=2) {
            let g = if dim == 1 { Grid::new(1, 101, 1.7).unwrap() } else { Grid::new(2, 23, 1.3).unwrap() };
            let u = random_field(&g, seed);
            let lap = laplacian_apply(&u);
            let lhs = dirichlet_energy(&u);
            let rhs: f64 = u.values().iter().zip(lap.values()).map(|(a, b)| -a * b).sum::<f64>()
                * g.cell_volume();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
            prop_assert!(lhs > 0.0);
        }

        #[test]
        fn laplacian_is_linear(seed in 0u64..1000) {
            let g = Grid::new(2, 19, 1.0).unwrap();
            let u = random_field(&g, seed);
            let v = random_field(&g, seed + 7);
            let sum = Field::from_values(g, u.values().iter().zip(v.values()).map(|(a, b)| a + b).collect()).unwrap();
            let lhs = laplacian_apply(&sum);
            let (lu, lv) = (laplacian_apply(&u), laplacian_apply(&v));
            let scale = 1.0 / (g.spacing() * g.spacing());
            for i in 0..g.len() {
                prop_assert!((lhs.values()[i] - lu.values()[i] - lv.values()[i]).abs() <= 1e-12 * scale * 8.0);
            }
        }
    }
}
