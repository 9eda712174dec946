//! Bounded open sets `Ω` built from primitives, and the indefinite weight
//! `Q_Ω` (+1 inside, −1 outside; boundary points count as outside).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Rigid motion `x ↦ R x + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Isometry {
    /// Row-major `dim × dim` orthogonal matrix.
    rotation: Vec<f64>,
    translation: Vec<f64>,
}

impl Isometry {
    pub fn new(rotation: Vec<f64>, translation: Vec<f64>) -> Result<Self> {
        let dim = translation.len();
        if dim == 0 || rotation.len() != dim * dim {
            return Err(Error::InvalidShape(format!(
                "rotation has {} entries for dimension {dim}",
                rotation.len()
            )));
        }
        if rotation.iter().chain(&translation).any(|v| !v.is_finite()) {
            return Err(Error::Unbounded);
        }
        for i in 0..dim {
            for j in 0..dim {
                let dot: f64 = (0..dim)
                    .map(|k| rotation[k * dim + i] * rotation[k * dim + j])
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (dot - expect).abs() > 1e-12 {
                    return Err(Error::InvalidShape("rotation is not orthogonal".into()));
                }
            }
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn translation(t: Vec<f64>) -> Self {
        let dim = t.len();
        let mut rotation = vec![0.0; dim * dim];
        for i in 0..dim {
            rotation[i * dim + i] = 1.0;
        }
        Self {
            rotation,
            translation: t,
        }
    }

    /// Planar rotation by `angle` about the origin followed by `t`.
    pub fn planar(angle: f64, t: [f64; 2]) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: vec![c, -s, s, c],
            translation: t.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn rotation(&self) -> &[f64] {
        &self.rotation
    }

    pub fn translation_part(&self) -> &[f64] {
        &self.translation
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                (0..d).map(|k| self.rotation[i * d + k] * x[k]).sum::<f64>() + self.translation[i]
            })
            .collect()
    }

    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|k| self.rotation[k * d + i] * (x[k] - self.translation[k]))
                    .sum()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DomainShape {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Annulus {
        center: Vec<f64>,
        r_inner: f64,
        r_outer: f64,
    },
    /// Two balls joined along the segment between their centers by a tube of
    /// half-width `half_width`; the junctions are filleted with radius
    /// `half_width / 2`.
    Dumbbell {
        center1: Vec<f64>,
        center2: Vec<f64>,
        ball_radius: f64,
        half_width: f64,
    },
    /// Planar star-shaped set `{ |x − origin| < ρ(θ) }` with `ρ` sampled at
    /// equally spaced angles `2πk/m` and interpolated linearly.
    StarPolar {
        origin: [f64; 2],
        radii: Vec<f64>,
    },
    Union(Vec<DomainShape>),
    Transformed {
        shape: std::boxed::Box<DomainShape>,
        isometry: Isometry,
    },
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Volume of the unit ball in `n` dimensions.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(n - 2) * 2.0 * PI / n as f64,
    }
}

/// Result of [`DomainShape::measure`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measure {
    pub value: f64,
    /// True when the value came from midpoint-rule quadrature.
    pub quadrature: bool,
}

/// Resolution (cells per axis) used by quadrature-based measures.
pub const MEASURE_QUADRATURE_RESOLUTION: usize = 1024;

impl DomainShape {
    pub fn ball(center: &[f64], radius: f64) -> Self {
        DomainShape::Ball {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        DomainShape::Box {
            lo: vec![lo],
            hi: vec![hi],
        }
    }

    pub fn union(members: Vec<DomainShape>) -> Self {
        DomainShape::Union(members)
    }

    pub fn transformed(self, isometry: Isometry) -> Self {
        DomainShape::Transformed {
            shape: std::boxed::Box::new(self),
            isometry,
        }
    }

    /// Ellipse `x²/a² + y²/b² < 1` centered at the origin, as a polar star.
    pub fn ellipse(a: f64, b: f64, samples: usize) -> Self {
        let radii = (0..samples)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / samples as f64;
                1.0 / ((t.cos() / a).powi(2) + (t.sin() / b).powi(2)).sqrt()
            })
            .collect();
        DomainShape::StarPolar {
            origin: [0.0, 0.0],
            radii,
        }
    }

    /// `ρ(θ) = r0 (1 + amp cos(petals θ))`.
    pub fn petal_star(r0: f64, amp: f64, petals: usize, samples: usize) -> Self {
        let radii = (0..samples)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / samples as f64;
                r0 * (1.0 + amp * (petals as f64 * t).cos())
            })
            .collect();
        DomainShape::StarPolar {
            origin: [0.0, 0.0],
            radii,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainShape::Ball { center, .. } => center.len(),
            DomainShape::Box { lo, .. } => lo.len(),
            DomainShape::Annulus { center, .. } => center.len(),
            DomainShape::Dumbbell { center1, .. } => center1.len(),
            DomainShape::StarPolar { .. } => 2,
            DomainShape::Union(m) => m.first().map_or(0, |s| s.dim()),
            DomainShape::Transformed { shape, .. } => shape.dim(),
        }
    }

    /// Checks the size/periodicity invariants of every primitive.
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        match self {
            DomainShape::Ball { center, radius } => {
                if !finite(center) || !radius.is_finite() {
                    return Err(Error::Unbounded);
                }
                if center.is_empty() || *radius <= 0.0 {
                    return Err(Error::InvalidShape("ball needs radius > 0".into()));
                }
            }
            DomainShape::Box { lo, hi } => {
                if !finite(lo) || !finite(hi) {
                    return Err(Error::Unbounded);
                }
                if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| a >= b) {
                    return Err(Error::InvalidShape("box needs lo < hi".into()));
                }
            }
            DomainShape::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                if !finite(center) || !r_inner.is_finite() || !r_outer.is_finite() {
                    return Err(Error::Unbounded);
                }
                if *r_inner <= 0.0 || r_outer <= r_inner {
                    return Err(Error::InvalidShape(
                        "annulus needs 0 < r_inner < r_outer".into(),
                    ));
                }
            }
            DomainShape::Dumbbell {
                center1,
                center2,
                ball_radius,
                half_width,
            } => {
                if !finite(center1) || !finite(center2) || !ball_radius.is_finite() {
                    return Err(Error::Unbounded);
                }
                if center1.len() != center2.len() || center1.len() < 2 {
                    return Err(Error::InvalidShape("dumbbell needs dimension >= 2".into()));
                }
                if *ball_radius <= 0.0 || *half_width <= 0.0 || 1.5 * half_width >= *ball_radius {
                    return Err(Error::InvalidShape(
                        "dumbbell needs 0 < 1.5 * half_width < ball_radius".into(),
                    ));
                }
                if dist(center1, center2) <= 0.0 {
                    return Err(Error::InvalidShape("dumbbell centers coincide".into()));
                }
            }
            DomainShape::StarPolar { origin, radii } => {
                if !finite(origin) || !finite(radii) {
                    return Err(Error::Unbounded);
                }
                if radii.len() < 3 || radii.iter().any(|&r| r <= 0.0) {
                    return Err(Error::InvalidShape(
                        "star radius table needs >= 3 strictly positive entries".into(),
                    ));
                }
            }
            DomainShape::Union(members) => {
                if members.is_empty() {
                    return Err(Error::EmptyShape);
                }
                let d = members[0].dim();
                for m in members {
                    m.validate()?;
                    if m.dim() != d {
                        return Err(Error::InvalidShape(
                            "union members differ in dimension".into(),
                        ));
                    }
                }
            }
            DomainShape::Transformed { shape, isometry } => {
                shape.validate()?;
                if isometry.dim() != shape.dim() {
                    return Err(Error::InvalidShape("isometry dimension mismatch".into()));
                }
            }
        }
        Ok(())
    }

    /// Membership in the open set.
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            DomainShape::Ball { center, radius } => dist(x, center) < *radius,
            DomainShape::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *a < *v && *v < *b),
            DomainShape::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                let r = dist(x, center);
                *r_inner < r && r < *r_outer
            }
            DomainShape::Dumbbell {
                center1,
                center2,
                ball_radius,
                half_width,
            } => dumbbell_contains(x, center1, center2, *ball_radius, *half_width),
            DomainShape::StarPolar { origin, radii } => {
                let dx = x[0] - origin[0];
                let dy = x[1] - origin[1];
                let r = dx.hypot(dy);
                r < star_radius(radii, dy.atan2(dx))
            }
            DomainShape::Union(members) => members.iter().any(|m| m.contains(x)),
            DomainShape::Transformed { shape, isometry } => {
                shape.contains(&isometry.apply_inverse(x))
            }
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            DomainShape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            DomainShape::Box { lo, hi } => (lo.clone(), hi.clone()),
            DomainShape::Annulus {
                center, r_outer, ..
            } => (
                center.iter().map(|c| c - r_outer).collect(),
                center.iter().map(|c| c + r_outer).collect(),
            ),
            DomainShape::Dumbbell {
                center1,
                center2,
                ball_radius,
                ..
            } => (
                center1
                    .iter()
                    .zip(center2)
                    .map(|(a, b)| a.min(*b) - ball_radius)
                    .collect(),
                center1
                    .iter()
                    .zip(center2)
                    .map(|(a, b)| a.max(*b) + ball_radius)
                    .collect(),
            ),
            DomainShape::StarPolar { origin, radii } => {
                let rmax = radii.iter().cloned().fold(0.0, f64::max);
                (
                    vec![origin[0] - rmax, origin[1] - rmax],
                    vec![origin[0] + rmax, origin[1] + rmax],
                )
            }
            DomainShape::Union(members) => {
                let d = self.dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for m in members {
                    let (a, b) = m.bounding_box();
                    for i in 0..d {
                        lo[i] = lo[i].min(a[i]);
                        hi[i] = hi[i].max(b[i]);
                    }
                }
                (lo, hi)
            }
            DomainShape::Transformed { shape, isometry } => {
                // Bound the image of the inner box by its circumscribed ball.
                let (a, b) = shape.bounding_box();
                let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
                let rad = 0.5 * dist(&a, &b);
                let c = isometry.apply(&mid);
                (
                    c.iter().map(|v| v - rad).collect(),
                    c.iter().map(|v| v + rad).collect(),
                )
            }
        }
    }

    fn analytic_measure(&self) -> Option<f64> {
        let n = self.dim();
        match self {
            DomainShape::Ball { radius, .. } => Some(unit_ball_volume(n) * radius.powi(n as i32)),
            DomainShape::Box { lo, hi } => Some(lo.iter().zip(hi).map(|(a, b)| b - a).product()),
            DomainShape::Annulus {
                r_inner, r_outer, ..
            } => Some(unit_ball_volume(n) * (r_outer.powi(n as i32) - r_inner.powi(n as i32))),
            DomainShape::StarPolar { radii, .. } => {
                let m = radii.len();
                let dt = 2.0 * PI / m as f64;
                let s: f64 = (0..m)
                    .map(|k| {
                        let a = radii[k];
                        let b = radii[(k + 1) % m];
                        (a * a + a * b + b * b) / 3.0
                    })
                    .sum();
                Some(0.5 * dt * s)
            }
            DomainShape::Transformed { shape, .. } => shape.analytic_measure(),
            DomainShape::Union(members) => {
                let boxes: Vec<_> = members.iter().map(|m| m.bounding_box()).collect();
                for i in 0..boxes.len() {
                    for j in i + 1..boxes.len() {
                        let overlap = (0..n).all(|k| {
                            boxes[i].0[k] < boxes[j].1[k] && boxes[j].0[k] < boxes[i].1[k]
                        });
                        if overlap {
                            return None;
                        }
                    }
                }
                members.iter().map(|m| m.analytic_measure()).sum()
            }
            DomainShape::Dumbbell { .. } => None,
        }
    }

    /// Lebesgue measure; analytic where possible, otherwise midpoint-rule
    /// quadrature with [`MEASURE_QUADRATURE_RESOLUTION`] cells per axis.
    pub fn measure(&self) -> Result<Measure> {
        self.validate()?;
        if let Some(value) = self.analytic_measure() {
            return Ok(Measure {
                value,
                quadrature: false,
            });
        }
        let (lo, hi) = self.bounding_box();
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(Error::Unbounded);
        }
        let n = self.dim();
        let res = MEASURE_QUADRATURE_RESOLUTION;
        let steps: Vec<f64> = lo
            .iter()
            .zip(&hi)
            .map(|(a, b)| (b - a) / res as f64)
            .collect();
        let cell: f64 = steps.iter().product();
        let total = res.pow(n as u32);
        let mut x = vec![0.0; n];
        let mut count = 0usize;
        for idx in 0..total {
            let mut rem = idx;
            for k in 0..n {
                x[k] = lo[k] + (rem % res) as f64 * steps[k] + 0.5 * steps[k];
                rem /= res;
            }
            if self.contains(&x) {
                count += 1;
            }
        }
        Ok(Measure {
            value: count as f64 * cell,
            quadrature: true,
        })
    }

    /// Members of a (possibly nested) union, with transforms pushed down.
    pub fn flatten(&self) -> Vec<DomainShape> {
        match self {
            DomainShape::Union(m) => m.iter().flat_map(|s| s.flatten()).collect(),
            DomainShape::Transformed { shape, isometry } => shape
                .flatten()
                .into_iter()
                .map(|m| m.transformed(isometry.clone()))
                .collect(),
            other => vec![other.clone()],
        }
    }

    /// A point strictly inside the shape (used to locate members on rasters).
    fn interior_point(&self) -> Vec<f64> {
        match self {
            DomainShape::Ball { center, .. } => center.clone(),
            DomainShape::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            DomainShape::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                let mut p = center.clone();
                p[0] += 0.5 * (r_inner + r_outer);
                p
            }
            DomainShape::Dumbbell { center1, .. } => center1.clone(),
            DomainShape::StarPolar { origin, .. } => origin.to_vec(),
            DomainShape::Union(m) => m[0].interior_point(),
            DomainShape::Transformed { shape, isometry } => isometry.apply(&shape.interior_point()),
        }
    }

    /// Splits the shape into connected components, determined by flood fill
    /// on an indicator raster four times finer than `grid`.
    pub fn component_split(&self, grid: &Grid) -> Result<Vec<DomainShape>> {
        self.validate()?;
        let raster = grid.refined(4)?;
        let mask: Vec<bool> = (0..raster.len())
            .map(|i| self.contains(&raster.coords(i)))
            .collect();
        let (labels, count) = crate::analysis::label_components(&raster, &mask);
        if count == 0 {
            return Err(Error::EmptyShape);
        }
        if count == 1 {
            return Ok(vec![self.clone()]);
        }
        let members = self.flatten();
        let mut groups: BTreeMap<usize, Vec<DomainShape>> = BTreeMap::new();
        for m in members {
            let p = m.interior_point();
            let label = raster
                .nearest_node(&p)
                .and_then(|i| labels[i])
                .ok_or_else(|| Error::InvalidShape("member not resolved on raster".into()))?;
            groups.entry(label).or_default().push(m);
        }
        if groups.len() != count {
            return Err(Error::InvalidShape(
                "a single primitive spans several raster components".into(),
            ));
        }
        Ok(groups
            .into_values()
            .map(|mut g| {
                if g.len() == 1 {
                    g.pop().unwrap()
                } else {
                    DomainShape::Union(g)
                }
            })
            .collect())
    }

    /// True if the shape has corners (boxes), which violates the smoothness
    /// assumption of the theory.
    pub fn has_corners(&self) -> bool {
        match self {
            DomainShape::Box { lo, .. } => lo.len() > 1,
            DomainShape::Union(m) => m.iter().any(|s| s.has_corners()),
            DomainShape::Transformed { shape, .. } => shape.has_corners(),
            _ => false,
        }
    }

    /// Loads a shape description file (see `docs/shape-format.md`).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let names = doc
            .get("union")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::Config("shape file needs a top-level `union` list".into()))?;
        let mut members = Vec::new();
        for n in names {
            let name = n
                .as_str()
                .ok_or_else(|| Error::Config("`union` entries must be section names".into()))?;
            members.push(parse_section(&doc, name, 0)?);
        }
        let shape = if members.len() == 1 {
            members.pop().unwrap()
        } else {
            DomainShape::Union(members)
        };
        shape.validate()?;
        Ok(shape)
    }

    /// Inverse of [`DomainShape::from_toml_str`].
    pub fn to_toml_string(&self) -> String {
        let mut sections = Vec::new();
        let mut top = Vec::new();
        for m in match self {
            DomainShape::Union(m) => m.clone(),
            other => vec![other.clone()],
        } {
            top.push(write_section(&m, &mut sections));
        }
        let mut out = format!(
            "union = [{}]\n",
            top.iter()
                .map(|s| format!("\"{s}\""))
                .collect::<Vec<_>>()
                .join(", ")
        );
        for s in sections {
            out.push('\n');
            out.push_str(&s);
        }
        out
    }
}

fn fmt_vec(v: &[f64]) -> String {
    format!(
        "[{}]",
        v.iter()
            .map(|x| format!("{x:?}"))
            .collect::<Vec<_>>()
            .join(", ")
    )
}

fn write_section(shape: &DomainShape, sections: &mut Vec<String>) -> String {
    let name = format!("s{}", sections.len());
    sections.push(String::new());
    let slot = sections.len() - 1;
    let body = match shape {
        DomainShape::Ball { center, radius } => {
            format!("kind = \"ball\"\ncenter = {}\nradius = {radius:?}\n", fmt_vec(center))
        }
        DomainShape::Box { lo, hi } => {
            format!("kind = \"box\"\nlo = {}\nhi = {}\n", fmt_vec(lo), fmt_vec(hi))
        }
        DomainShape::Annulus {
            center,
            r_inner,
            r_outer,
        } => format!(
            "kind = \"annulus\"\ncenter = {}\nr_inner = {r_inner:?}\nr_outer = {r_outer:?}\n",
            fmt_vec(center)
        ),
        DomainShape::Dumbbell {
            center1,
            center2,
            ball_radius,
            half_width,
        } => format!(
            "kind = \"dumbbell\"\ncenter1 = {}\ncenter2 = {}\nball_radius = {ball_radius:?}\nhalf_width = {half_width:?}\n",
            fmt_vec(center1),
            fmt_vec(center2)
        ),
        DomainShape::StarPolar { origin, radii } => format!(
            "kind = \"star_polar\"\norigin = {}\nradii = {}\n",
            fmt_vec(origin),
            fmt_vec(radii)
        ),
        DomainShape::Union(members) => {
            let names: Vec<String> = members
                .iter()
                .map(|m| format!("\"{}\"", write_section(m, sections)))
                .collect();
            format!("kind = \"union\"\nmembers = [{}]\n", names.join(", "))
        }
        DomainShape::Transformed { shape, isometry } => {
            let inner = write_section(shape, sections);
            format!(
                "kind = \"transformed\"\nshape = \"{inner}\"\nrotation = {}\ntranslation = {}\n",
                fmt_vec(isometry.rotation()),
                fmt_vec(isometry.translation_part())
            )
        }
    };
    sections[slot] = format!("[{name}]\n{body}");
    name
}

fn floats(t: &toml::Table, key: &str, section: &str) -> Result<Vec<f64>> {
    let arr = t
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| Error::Config(format!("[{section}] missing array `{key}`")))?;
    arr.iter()
        .map(|v| {
            v.as_float()
                .or_else(|| v.as_integer().map(|i| i as f64))
                .ok_or_else(|| Error::Config(format!("[{section}] `{key}` must hold numbers")))
        })
        .collect()
}

fn float(t: &toml::Table, key: &str, section: &str) -> Result<f64> {
    t.get(key)
        .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
        .ok_or_else(|| Error::Config(format!("[{section}] missing number `{key}`")))
}

fn parse_section(doc: &toml::Table, name: &str, depth: usize) -> Result<DomainShape> {
    if depth > 32 {
        return Err(Error::Config("shape sections nest too deeply".into()));
    }
    let t = doc
        .get(name)
        .and_then(|v| v.as_table())
        .ok_or_else(|| Error::Config(format!("missing section [{name}]")))?;
    let kind = t
        .get("kind")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Config(format!("[{name}] missing `kind`")))?;
    let shape = match kind {
        "ball" => DomainShape::Ball {
            center: floats(t, "center", name)?,
            radius: float(t, "radius", name)?,
        },
        "box" => DomainShape::Box {
            lo: floats(t, "lo", name)?,
            hi: floats(t, "hi", name)?,
        },
        "annulus" => DomainShape::Annulus {
            center: floats(t, "center", name)?,
            r_inner: float(t, "r_inner", name)?,
            r_outer: float(t, "r_outer", name)?,
        },
        "dumbbell" => DomainShape::Dumbbell {
            center1: floats(t, "center1", name)?,
            center2: floats(t, "center2", name)?,
            ball_radius: float(t, "ball_radius", name)?,
            half_width: float(t, "half_width", name)?,
        },
        "star_polar" => {
            let o = floats(t, "origin", name)?;
            if o.len() != 2 {
                return Err(Error::Config(format!("[{name}] origin must be planar")));
            }
            DomainShape::StarPolar {
                origin: [o[0], o[1]],
                radii: floats(t, "radii", name)?,
            }
        }
        "union" => {
            let members = t
                .get("members")
                .and_then(|v| v.as_array())
                .ok_or_else(|| Error::Config(format!("[{name}] missing `members`")))?;
            let mut out = Vec::new();
            for m in members {
                let child = m
                    .as_str()
                    .ok_or_else(|| Error::Config(format!("[{name}] members must be names")))?;
                out.push(parse_section(doc, child, depth + 1)?);
            }
            DomainShape::Union(out)
        }
        "transformed" => {
            let inner = t
                .get("shape")
                .and_then(|v| v.as_str())
                .ok_or_else(|| Error::Config(format!("[{name}] missing `shape`")))?;
            let shape = parse_section(doc, inner, depth + 1)?;
            let isometry = Isometry::new(
                floats(t, "rotation", name)?,
                floats(t, "translation", name)?,
            )?;
            DomainShape::Transformed {
                shape: std::boxed::Box::new(shape),
                isometry,
            }
        }
        other => return Err(Error::Config(format!("[{name}] unknown kind `{other}`"))),
    };
    Ok(shape)
}

fn star_radius(radii: &[f64], angle: f64) -> f64 {
    let m = radii.len();
    let t = angle.rem_euclid(2.0 * PI) / (2.0 * PI) * m as f64;
    let k = (t.floor() as usize).min(m - 1);
    let frac = t - k as f64;
    radii[k] * (1.0 - frac) + radii[(k + 1) % m] * frac
}

fn dumbbell_contains(x: &[f64], c1: &[f64], c2: &[f64], radius: f64, a: f64) -> bool {
    if dist(x, c1) < radius || dist(x, c2) < radius {
        return true;
    }
    // Axial coordinate `s` from c1 toward c2 and distance `rho` to the axis.
    let len = dist(c1, c2);
    let axis: Vec<f64> = c2.iter().zip(c1).map(|(b, a)| (b - a) / len).collect();
    let rel: Vec<f64> = x.iter().zip(c1).map(|(v, c)| v - c).collect();
    let s: f64 = rel.iter().zip(&axis).map(|(r, e)| r * e).sum();
    let perp: Vec<f64> = rel.iter().zip(&axis).map(|(r, e)| r - s * e).collect();
    let rho = norm(&perp);
    if (0.0..=len).contains(&s) && rho < a {
        return true;
    }
    let s_near = if s <= 0.5 * len { s } else { len - s };
    in_fillet(s_near, rho, radius, a)
}

/// Fillet between a ball (center at the origin of the `(s, rho)` half-plane)
/// and the tube `rho < a`: triangle (O, F, P) minus the fillet disc, where F
/// is the fillet center and P its foot on the tube wall.
fn in_fillet(s: f64, rho: f64, radius: f64, a: f64) -> bool {
    let f = 0.5 * a;
    let fy = a + f;
    let fx = ((radius + f).powi(2) - fy * fy).sqrt();
    if !(rho >= a && rho < fy && s > 0.0 && s < fx) {
        return false;
    }
    // Left of the ray O -> F means outside the triangle.
    if fx * rho - fy * s > 0.0 {
        return false;
    }
    (s - fx).powi(2) + (rho - fy).powi(2) > f * f
}

/// Evaluates `Q_Ω(x)`.
pub fn q_omega_eval(shape: &DomainShape, x: &[f64]) -> f64 {
    if shape.contains(x) {
        1.0
    } else {
        -1.0
    }
}

/// True when `Ω` is invariant under `x ↦ −x` (checked on the raster of
/// `grid`, which is symmetric about the origin).
pub fn is_point_symmetric(shape: &DomainShape, grid: &Grid) -> bool {
    (0..grid.len()).all(|i| {
        let x = grid.coords(i);
        let mx: Vec<f64> = x.iter().map(|v| -v).collect();
        shape.contains(&x) == shape.contains(&mx)
    })
}

/// True when `Ω` is invariant under reflection of the first coordinate.
pub fn is_reflection_symmetric(shape: &DomainShape, grid: &Grid) -> bool {
    (0..grid.len()).all(|i| {
        let x = grid.coords(i);
        let mut mx = x.clone();
        mx[0] = -mx[0];
        shape.contains(&x) == shape.contains(&mx)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn q_eval_examples() {
        let ball = DomainShape::ball(&[0.0, 0.0], 1.0);
        assert_eq!(q_omega_eval(&ball, &[0.0, 0.0]), 1.0);
        assert_eq!(q_omega_eval(&ball, &[2.0, 0.0]), -1.0);
        // Boundary counts as outside.
        assert_eq!(q_omega_eval(&ball, &[1.0, 0.0]), -1.0);
        let two = DomainShape::union(vec![
            DomainShape::ball(&[-2.0, 0.0], 1.0),
            DomainShape::ball(&[2.0, 0.0], 1.0),
        ]);
        assert_eq!(q_omega_eval(&two, &[0.0, 0.0]), -1.0);
    }

    #[test]
    fn measure_examples() {
        let m = DomainShape::interval(-1.0, 1.0).measure().unwrap();
        assert_eq!(m.value, 2.0);
        assert!(!m.quadrature);
        let disc = DomainShape::ball(&[0.0, 0.0], 1.0).measure().unwrap();
        assert!((disc.value - PI).abs() < 1e-14);
        let two = DomainShape::union(vec![
            DomainShape::ball(&[-2.0, 0.0], 1.0),
            DomainShape::ball(&[2.0, 0.0], 1.0),
        ]);
        assert!((two.measure().unwrap().value - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn quadrature_measure_agrees_with_analytic() {
        // Overlapping bounding boxes force the quadrature route.
        let overlap = DomainShape::union(vec![
            DomainShape::ball(&[-0.5, 0.0], 1.0),
            DomainShape::ball(&[0.5, 0.0], 1.0),
        ]);
        let m = overlap.measure().unwrap();
        assert!(m.quadrature);
        // Two unit discs at center distance 1 share a lens of area 2π/3 − √3/2.
        let exact = 4.0 * PI / 3.0 + 3f64.sqrt() / 2.0;
        assert!((m.value - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn star_measure_matches_ellipse_area() {
        let e = DomainShape::ellipse(1.0, 0.5, 2048);
        let m = e.measure().unwrap();
        assert!((m.value - PI * 0.5).abs() / (PI * 0.5) < 1e-5);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(DomainShape::ball(&[0.0], -1.0).validate().is_err());
        assert!(matches!(
            DomainShape::ball(&[f64::NAN], 1.0).measure(),
            Err(Error::Unbounded)
        ));
        assert!(matches!(
            DomainShape::Union(vec![]).validate(),
            Err(Error::EmptyShape)
        ));
        assert!(Isometry::new(vec![1.0, 0.1, 0.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn components() {
        let grid = Grid::new(2, 33, 4.0).unwrap();
        let ball = DomainShape::ball(&[0.0, 0.0], 1.0);
        assert_eq!(ball.component_split(&grid).unwrap().len(), 1);
        let two = DomainShape::union(vec![
            DomainShape::ball(&[-2.0, 0.0], 1.0),
            DomainShape::ball(&[2.0, 0.0], 1.0),
        ]);
        assert_eq!(two.component_split(&grid).unwrap().len(), 2);
        let bell = DomainShape::Dumbbell {
            center1: vec![-2.0, 0.0],
            center2: vec![2.0, 0.0],
            ball_radius: 1.0,
            half_width: 0.2,
        };
        assert_eq!(bell.component_split(&grid).unwrap().len(), 1);
        let grid1 = Grid::new(1, 65, 8.0).unwrap();
        let far = DomainShape::union(vec![
            DomainShape::interval(-6.0, -4.0),
            DomainShape::interval(4.0, 6.0),
        ]);
        let parts = far.component_split(&grid1).unwrap();
        assert_eq!(parts.len(), 2);
    }

    #[test]
    fn dumbbell_fillet_is_smooth_junction() {
        let bell = DomainShape::Dumbbell {
            center1: vec![-2.0, 0.0],
            center2: vec![2.0, 0.0],
            ball_radius: 1.0,
            half_width: 0.2,
        };
        // Tube midpoint is inside, far off-axis is not.
        assert!(bell.contains(&[0.0, 0.1]));
        assert!(!bell.contains(&[0.0, 0.3]));
        // A point just outside the ball near the junction lies in the fillet.
        assert!(bell.contains(&[-1.0, 0.21]));
        assert!(!bell.contains(&[-1.0, 0.26]));
        // Dumbbell is symmetric about both axes.
        for &(x, y) in &[(0.5, 0.19), (-0.95, 0.25), (-1.0, 0.21)] {
            assert_eq!(bell.contains(&[x, y]), bell.contains(&[-x, y]));
            assert_eq!(bell.contains(&[x, y]), bell.contains(&[x, -y]));
        }
    }

    #[test]
    fn shape_file_round_trip() {
        let shape = DomainShape::union(vec![
            DomainShape::ball(&[-2.0, 0.0], 1.0),
            DomainShape::Annulus {
                center: vec![2.0, 0.0],
                r_inner: 0.5,
                r_outer: 1.0,
            }
            .transformed(Isometry::planar(0.3, [0.1, 0.2])),
        ]);
        let text = shape.to_toml_string();
        let back = DomainShape::from_toml_str(&text).unwrap();
        assert_eq!(back, shape);
    }

    #[test]
    fn shape_file_errors() {
        assert!(DomainShape::from_toml_str("[a]\nkind='ball'").is_err());
        assert!(DomainShape::from_toml_str("union=['a']\n[a]\nkind='blob'").is_err());
        assert!(
            DomainShape::from_toml_str("union=['a']\n[a]\nkind='ball'\ncenter=[0]\nradius=-1")
                .is_err()
        );
    }

    proptest! {
        #[test]
        fn q_is_isometry_equivariant(
            angle in 0.0..(2.0 * PI),
            tx in -3.0..3.0f64,
            ty in -3.0..3.0f64,
            px in -3.0..3.0f64,
            py in -3.0..3.0f64,
        ) {
            let shape = DomainShape::union(vec![
                DomainShape::ball(&[-1.0, 0.5], 1.0),
                DomainShape::Annulus { center: vec![1.0, -0.5], r_inner: 0.4, r_outer: 0.9 },
            ]);
            let g = Isometry::planar(angle, [tx, ty]);
            let moved = shape.clone().transformed(g.clone());
            let x = [px, py];
            // Stay away from boundaries where round-off could flip membership.
            let d1 = ((px + 1.0).powi(2) + (py - 0.5).powi(2)).sqrt();
            let d2 = ((px - 1.0).powi(2) + (py + 0.5).powi(2)).sqrt();
            prop_assume!((d1 - 1.0).abs() > 1e-9 && (d2 - 0.4).abs() > 1e-9 && (d2 - 0.9).abs() > 1e-9);
            prop_assert_eq!(q_omega_eval(&moved, &g.apply(&x)), q_omega_eval(&shape, &x));
        }

        #[test]
        fn component_count_isometry_invariant(angle in 0.0..(2.0 * PI), tx in -0.5..0.5f64) {
            let grid = Grid::new(2, 41, 5.0).unwrap();
            let shape = DomainShape::union(vec![
                DomainShape::ball(&[-1.8, 0.0], 0.8),
                DomainShape::ball(&[1.8, 0.0], 0.8),
            ]);
            let moved = shape.clone().transformed(Isometry::planar(angle, [tx, 0.0]));
            prop_assert_eq!(
                shape.component_split(&grid).unwrap().len(),
                moved.component_split(&grid).unwrap().len()
            );
        }
    }
}
