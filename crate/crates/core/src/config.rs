//! Run configuration: one TOML file naming an experiment, the problem, the
//! solver settings and experiment parameters.
//!
//! ```toml
//! experiment = "ground-state"
//! seed = 0
//!
//! [problem]
//! p = 1.0
//! dim = 1
//! n = 2049
//! half_extent = 4.0
//! shape = "interval.toml"   # optional; default is the unit ball
//!
//! [solver]
//! tol = 1e-8
//!
//! [path]
//! images = 17
//!
//! [params]
//! refine = true
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::DomainShape;
use crate::grid::Grid;
use crate::nodal::PathConfig;
use crate::solver::{ProblemSpec, SolveConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub p: f64,
    pub dim: usize,
    pub n: usize,
    pub half_extent: f64,
    /// Shape file, relative to the config file.
    pub shape: Option<PathBuf>,
    /// Inline shape in the same format as a shape file.
    pub domain: Option<toml::Table>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            p: 1.0,
            dim: 1,
            n: 1025,
            half_extent: 4.0,
            shape: None,
            domain: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the command line takes precedence.
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolveConfig,
    #[serde(default)]
    pub path: PathConfig,
    #[serde(default)]
    pub params: toml::Table,
    /// Directory that relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            seed: 0,
            out: None,
            problem: ProblemSection::default(),
            solver: SolveConfig::default(),
            path: PathConfig::default(),
            params: toml::Table::new(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    /// Solver settings with the run seed applied.
    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            seed: self.seed,
            ..self.solver.clone()
        }
    }

    pub fn shape(&self) -> Result<DomainShape> {
        let pr = &self.problem;
        match (&pr.shape, &pr.domain) {
            (Some(_), Some(_)) => Err(Error::Config(
                "give either `shape` or `domain`, not both".into(),
            )),
            (Some(file), None) => {
                let path = self.base_dir.join(file);
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "shape file {} not found",
                        path.display()
                    )));
                }
                DomainShape::from_file(&path)
            }
            (None, Some(table)) => {
                DomainShape::from_toml_str(&toml::to_string(table).unwrap_or_default())
            }
            (None, None) => Ok(DomainShape::ball(&vec![0.0; pr.dim], 1.0)),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.problem.dim, self.problem.n, self.problem.half_extent)
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        ProblemSpec::new(self.problem.p, self.shape()?, self.grid()?)
    }

    /// Checks everything that can be checked without solving. Returns
    /// warnings for legal but unusual settings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.validate_settings()?;
        let spec = self.problem()?;
        let mut warnings = Vec::new();
        if spec.shape.has_corners() {
            warnings
                .push("Ω has corners; outside theory assumptions (smooth boundary)".to_string());
        }
        let n = self.problem.n;
        if !(n - 1).is_power_of_two() {
            warnings.push(format!(
                "n = {n} is not 2^k + 1; nested solves are disabled"
            ));
        }
        Ok(warnings)
    }

    /// Checks the exponent and the solver settings but not the grid or the
    /// shape; enough for experiments that never discretize.
    pub fn validate_settings(&self) -> Result<()> {
        if !(1.0..2.0).contains(&self.problem.p) {
            return Err(Error::ExponentOutOfRange(self.problem.p));
        }
        if self.problem.dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        // TOML integers are signed.
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!(
                "seed {} exceeds {}",
                self.seed,
                i64::MAX
            )));
        }
        self.solver.validate()?;
        self.path.validate()
    }

    fn param(&self, key: &str) -> Option<&toml::Value> {
        self.params.get(key)
    }

    pub fn param_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.param(key) {
            None => Ok(default),
            Some(toml::Value::Float(v)) => Ok(*v),
            Some(toml::Value::Integer(v)) => Ok(*v as f64),
            Some(v) => Err(Error::Config(format!(
                "param `{key}` must be a number, got {v}"
            ))),
        }
    }

    pub fn param_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.param(key) {
            None => Ok(default),
            Some(toml::Value::Integer(v)) if *v >= 0 => Ok(*v as usize),
            Some(v) => Err(Error::Config(format!(
                "param `{key}` must be a nonnegative integer, got {v}"
            ))),
        }
    }

    pub fn param_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.param(key) {
            None => Ok(default),
            Some(toml::Value::Boolean(v)) => Ok(*v),
            Some(v) => Err(Error::Config(format!(
                "param `{key}` must be a boolean, got {v}"
            ))),
        }
    }

    pub fn param_str(&self, key: &str, default: &str) -> Result<String> {
        match self.param(key) {
            None => Ok(default.to_string()),
            Some(toml::Value::String(v)) => Ok(v.clone()),
            Some(v) => Err(Error::Config(format!(
                "param `{key}` must be a string, got {v}"
            ))),
        }
    }

    pub fn param_f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.param(key) {
            None => Ok(default.to_vec()),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Float(x) => Ok(*x),
                    toml::Value::Integer(x) => Ok(*x as f64),
                    other => Err(Error::Config(format!(
                        "param `{key}` must list numbers, got {other}"
                    ))),
                })
                .collect(),
            Some(v) => Err(Error::Config(format!(
                "param `{key}` must be a list, got {v}"
            ))),
        }
    }

    pub fn set_param(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.params.insert(key.to_string(), value.into());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_defaults() {
        let text = r#"
            experiment = "ground-state"
            seed = 3
            [problem]
            p = 1.5
            n = 513
            [solver]
            tol = 1e-9
            [params]
            refine = true
            ps = [1.0, 1.5]
        "#;
        let cfg = RunConfig::from_toml_str(text, Path::new(".")).unwrap();
        assert_eq!(cfg.problem.dim, 1);
        assert_eq!(cfg.solver.tol, 1e-9);
        assert_eq!(cfg.solve_config().seed, 3);
        assert!(cfg.param_bool("refine", false).unwrap());
        assert_eq!(cfg.param_f64_list("ps", &[]).unwrap(), vec![1.0, 1.5]);
        assert!(cfg.param_f64("refine", 0.0).is_err());
        assert!(cfg.validate().unwrap().is_empty());
        let spec = cfg.problem().unwrap();
        assert_eq!(spec.p, 1.5);
    }

    #[test]
    fn rejects_bad_exponent_and_unknown_keys() {
        let cfg =
            RunConfig::from_toml_str("experiment = \"x\"\n[problem]\np = 2.0\n", Path::new("."))
                .unwrap();
        assert!(cfg.validate().is_err());
        assert!(
            RunConfig::from_toml_str("experiment = \"x\"\nbogus = 1\n", Path::new(".")).is_err()
        );
        let mut big = RunConfig::new("x");
        big.seed = u64::MAX;
        assert!(big.validate_settings().is_err());
        assert!(RunConfig::from_toml_str(
            "experiment = \"x\"\n[solver]\nbogus = 1\n",
            Path::new(".")
        )
        .is_err());
    }

    #[test]
    fn missing_shape_file_is_an_error() {
        let cfg = RunConfig::from_toml_str(
            "experiment = \"x\"\n[problem]\nshape = \"nowhere.toml\"\n",
            Path::new("/nonexistent"),
        )
        .unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn inline_domain_and_warnings() {
        let text = r#"
            experiment = "x"
            [problem]
            n = 1000
            [problem.domain]
            union = ["a"]
            [problem.domain.a]
            kind = "box"
            lo = [-1.0]
            hi = [1.0]
        "#;
        let cfg = RunConfig::from_toml_str(text, Path::new(".")).unwrap();
        assert_eq!(cfg.shape().unwrap(), DomainShape::interval(-1.0, 1.0));
        assert_eq!(cfg.validate().unwrap().len(), 1);
    }

    #[test]
    fn planar_boxes_are_flagged() {
        let text = r#"
            experiment = "x"
            [problem]
            dim = 2
            n = 65
            [problem.domain]
            union = ["b"]
            [problem.domain.b]
            kind = "box"
            lo = [-1.0, -1.0]
            hi = [1.0, 1.0]
        "#;
        let cfg = RunConfig::from_toml_str(text, Path::new(".")).unwrap();
        let warnings = cfg.validate().unwrap();
        assert!(
            warnings.iter().any(|w| w.contains("corners")),
            "{warnings:?}"
        );
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::new("ground-state");
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        let back = RunConfig::from_toml_str(&a.to_toml_string(), Path::new(".")).unwrap();
        assert_eq!(back, a);
    }
}
