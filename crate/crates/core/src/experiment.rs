//! Experiment runner: a registry of named experiments, per-run artifacts,
//! and a manifest listing every check with its tolerance.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{write_atomic, write_field, write_pgm, Field};

/// How a measured value is compared with its target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `value ≤ target + tolerance`.
    AtMost,
    /// `value ≥ target − tolerance`.
    AtLeast,
    /// `value > target`.
    Above,
    /// `|value − target| ≤ tolerance`.
    Near,
    /// A boolean property; `value` is 1 or 0.
    Holds,
}

/// One registered invariant of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, value: f64, relation: Relation, target: f64, tolerance: f64) -> Self {
        let pass = match relation {
            Relation::AtMost => value <= target + tolerance,
            Relation::AtLeast => value >= target - tolerance,
            Relation::Above => value > target,
            Relation::Near => (value - target).abs() <= tolerance,
            Relation::Holds => value == 1.0,
        };
        Self {
            name: name.to_string(),
            value,
            relation,
            target,
            tolerance,
            pass,
        }
    }

    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self::new(name, value, Relation::AtMost, limit, 0.0)
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self::new(name, value, Relation::AtLeast, limit, 0.0)
    }

    pub fn above(name: &str, value: f64, limit: f64) -> Self {
        Self::new(name, value, Relation::Above, limit, 0.0)
    }

    pub fn near(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self::new(name, value, Relation::Near, target, tolerance)
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Relation::Holds, 1.0, 0.0)
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        match self.relation {
            Relation::Holds => format!("{verdict} {}", self.name),
            Relation::AtMost => format!(
                "{verdict} {}: {:.6e} <= {:.6e}",
                self.name, self.value, self.target
            ),
            Relation::AtLeast => format!(
                "{verdict} {}: {:.6e} >= {:.6e}",
                self.name, self.value, self.target
            ),
            Relation::Above => format!(
                "{verdict} {}: {:.6e} > {:.6e}",
                self.name, self.value, self.target
            ),
            Relation::Near => format!(
                "{verdict} {}: |{:.10e} - {:.10e}| <= {:.1e}",
                self.name, self.value, self.target, self.tolerance
            ),
        }
    }
}

/// Record of one run, written as `manifest.toml` in the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    /// True only if the run finished and every check passed.
    pub pass: bool,
    pub wall_time_s: f64,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub checks: Vec<Check>,
}

impl RunManifest {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&c.line());
            s.push('\n');
        }
        for n in &self.notes {
            s.push_str(&format!("note: {n}\n"));
        }
        if let Some(e) = &self.error {
            s.push_str(&format!("error: {e}\n"));
        }
        s.push_str(&format!(
            "{} {} ({:.2} s)\n",
            if self.pass { "PASS" } else { "FAIL" },
            self.experiment,
            self.wall_time_s
        ));
        s
    }
}

/// What an experiment sees while it runs.
pub struct Context<'a> {
    pub config: &'a RunConfig,
    out: PathBuf,
    checks: Vec<Check>,
    artifacts: Vec<String>,
    notes: Vec<String>,
}

impl<'a> Context<'a> {
    fn new(config: &'a RunConfig, out: &Path) -> Self {
        Self {
            config,
            out: out.to_path_buf(),
            checks: Vec::new(),
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    fn artifact(&mut self, name: &str) -> PathBuf {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
        self.out.join(name)
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.artifact(name);
        write_atomic(&path, contents.as_bytes())
    }

    pub fn write_field(&mut self, name: &str, u: &Field, p: f64) -> Result<()> {
        let path = self.artifact(name);
        write_field(&path, u, p)
    }

    /// Graymap of a 2D field; ignored in other dimensions.
    pub fn write_pgm(&mut self, name: &str, u: &Field) -> Result<()> {
        if u.grid().dim() != 2 {
            return Ok(());
        }
        let path = self.artifact(name);
        write_pgm(&path, u)
    }

    /// Registers a check and returns whether it passed.
    pub fn check(&mut self, c: Check) -> bool {
        let pass = c.pass;
        self.checks.push(c);
        pass
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }
}

/// A named computation that registers checks and writes artifacts.
pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// Keys accepted in the `[params]` table.
    fn params(&self) -> &'static [&'static str];
    /// False for experiments that never build a grid or a shape.
    fn discretized(&self) -> bool {
        true
    }
    fn run(&self, ctx: &mut Context) -> Result<()>;
}

/// Params every experiment accepts.
pub const COMMON_PARAMS: &[&str] = &["max_seconds"];

#[derive(Default)]
pub struct Registry {
    entries: BTreeMap<&'static str, Box<dyn Experiment>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding every built-in experiment.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        crate::experiments::register_all(&mut r);
        r
    }

    pub fn register(&mut self, e: Box<dyn Experiment>) {
        self.entries.insert(e.name(), e);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Experiment> {
        self.entries
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::UnknownExperiment(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Experiment> {
        self.entries.values().map(|b| b.as_ref())
    }

    /// Validates `config`, runs the named experiment in `out` and writes the
    /// manifest. Configuration errors are returned; failures inside the
    /// experiment are recorded in the manifest.
    /// Checks the experiment name, its params and the config without running.
    /// Returns the config warnings.
    pub fn validate(&self, config: &RunConfig) -> Result<Vec<String>> {
        let exp = self.get(&config.experiment)?;
        for key in config.params.keys() {
            if !exp.params().contains(&key.as_str()) && !COMMON_PARAMS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "experiment `{}` has no parameter `{key}` (accepted: {})",
                    exp.name(),
                    exp.params().join(", ")
                )));
            }
        }
        if exp.discretized() {
            config.validate()
        } else {
            config.validate_settings()?;
            Ok(Vec::new())
        }
    }

    pub fn run(&self, config: &RunConfig, out: &Path) -> Result<RunManifest> {
        let exp = self.get(&config.experiment)?;
        let warnings = self.validate(config)?;
        let max_seconds = match config.params.get("max_seconds") {
            Some(_) => Some(config.param_f64("max_seconds", 0.0)?),
            None => None,
        };
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let mut ctx = Context::new(config, out);
        for w in warnings {
            ctx.note(w);
        }
        ctx.write("config.toml", &config.to_toml_string())?;
        let start = Instant::now();
        let outcome = exp.run(&mut ctx);
        let wall = start.elapsed().as_secs_f64();
        if let Some(limit) = max_seconds {
            ctx.check(Check::at_most("wall time [s]", wall, limit));
        }
        let error = outcome.err().map(|e| e.to_string());
        let mut manifest = RunManifest {
            experiment: exp.name().to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            pass: error.is_none() && ctx.checks.iter().all(|c| c.pass),
            wall_time_s: wall,
            artifacts: ctx.artifacts,
            notes: ctx.notes,
            error,
            checks: ctx.checks,
        };
        manifest.artifacts.push("manifest.toml".into());
        let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        write_atomic(&out.join("manifest.toml"), text.as_bytes())?;
        Ok(manifest)
    }
}

/// Runs `config` with the built-in registry.
pub fn run(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    Registry::builtin().run(config, out)
}

// --- suites ---------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tier {
    /// One-dimensional radial checks and energy identities; seconds.
    Smoke,
    /// Every acceptance criterion at its stated resolution.
    Desk,
    /// Desk plus finer 2D grids and a longer dumbbell sweep.
    Full,
}

impl std::str::FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Tier::Smoke),
            "desk" => Ok(Tier::Desk),
            "full" => Ok(Tier::Full),
            other => Err(Error::UnknownTier(other.to_string())),
        }
    }
}

impl Tier {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tier::Smoke => "smoke",
            Tier::Desk => "desk",
            Tier::Full => "full",
        }
    }

    pub fn members(&self) -> Vec<(String, RunConfig)> {
        match self {
            Tier::Smoke => crate::experiments::smoke_members(),
            Tier::Desk => crate::experiments::acceptance_members()
                .into_iter()
                .map(|(_, label, cfg)| (label, cfg))
                .collect(),
            Tier::Full => crate::experiments::full_members(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteMember {
    pub label: String,
    pub experiment: String,
    pub pass: bool,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub failed_checks: Vec<String>,
}

/// Aggregated record of a suite, written as `suite.toml`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub tier: String,
    pub pass: bool,
    pub failed: Vec<String>,
    pub wall_time_s: f64,
    pub members: Vec<SuiteMember>,
}

/// Worker count from `SUBLINEAR_WORKERS`, defaulting to the core count.
pub fn workers_from_env() -> usize {
    std::env::var("SUBLINEAR_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `members` concurrently on `workers` threads, each in `out/<label>`.
pub fn run_members(
    registry: &Registry,
    tier: &str,
    members: &[(String, RunConfig)],
    out: &Path,
    workers: usize,
) -> Result<SuiteManifest> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let start = Instant::now();
    let results: Vec<SuiteMember> = pool.install(|| {
        members
            .par_iter()
            .map(|(label, cfg)| {
                let outcome = registry.run(cfg, &out.join(label));
                match outcome {
                    Ok(m) => SuiteMember {
                        label: label.clone(),
                        experiment: m.experiment.clone(),
                        pass: m.pass,
                        wall_time_s: m.wall_time_s,
                        failed_checks: m.failed_checks().map(|c| c.name.clone()).collect(),
                        error: m.error,
                    },
                    Err(e) => SuiteMember {
                        label: label.clone(),
                        experiment: cfg.experiment.clone(),
                        pass: false,
                        wall_time_s: 0.0,
                        failed_checks: Vec::new(),
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });
    let failed: Vec<String> = results
        .iter()
        .filter(|m| !m.pass)
        .map(|m| m.label.clone())
        .collect();
    let manifest = SuiteManifest {
        tier: tier.to_string(),
        pass: failed.is_empty(),
        failed,
        wall_time_s: start.elapsed().as_secs_f64(),
        members: results,
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&out.join("suite.toml"), text.as_bytes())?;
    Ok(manifest)
}

/// Runs every member of `tier`.
pub fn suite(tier: Tier, out: &Path, workers: usize) -> Result<SuiteManifest> {
    run_members(
        &Registry::builtin(),
        tier.as_str(),
        &tier.members(),
        out,
        workers,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_relations() {
        assert!(Check::at_most("a", 1.0, 1.0).pass);
        assert!(!Check::at_most("a", 1.1, 1.0).pass);
        assert!(Check::at_least("a", 2.0, 1.0).pass);
        assert!(Check::at_least("a", 0.0, 0.0).pass && !Check::above("a", 0.0, 0.0).pass);
        assert!(Check::near("a", 1.0 + 1e-7, 1.0, 1e-6).pass);
        assert!(!Check::near("a", 1.1, 1.0, 1e-6).pass);
        assert!(!Check::near("a", f64::NAN, 1.0, 1e-6).pass);
        assert!(!Check::at_most("a", f64::NAN, 1.0).pass);
        assert!(Check::holds("a", true).pass && !Check::holds("a", false).pass);
    }

    #[test]
    fn tiers_parse() {
        assert_eq!("desk".parse::<Tier>().unwrap(), Tier::Desk);
        assert!(matches!(
            "nightly".parse::<Tier>(),
            Err(Error::UnknownTier(_))
        ));
    }

    #[test]
    fn unknown_experiment_and_params_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = Registry::builtin();
        let cfg = RunConfig::new("no-such-thing");
        assert!(matches!(
            r.run(&cfg, dir.path()),
            Err(Error::UnknownExperiment(_))
        ));
        let mut cfg = RunConfig::new("radial.shoot");
        cfg.set_param("bogus", 1.0);
        assert!(matches!(r.run(&cfg, dir.path()), Err(Error::Config(_))));
        let mut cfg = RunConfig::new("radial.shoot");
        cfg.problem.p = 2.0;
        assert!(r.run(&cfg, dir.path()).is_err());
    }

    #[test]
    fn every_member_names_a_registered_experiment() {
        let r = Registry::builtin();
        for tier in [Tier::Smoke, Tier::Desk, Tier::Full] {
            let members = tier.members();
            assert!(!members.is_empty());
            let mut labels: Vec<&str> = members.iter().map(|(l, _)| l.as_str()).collect();
            labels.sort();
            labels.dedup();
            assert_eq!(
                labels.len(),
                members.len(),
                "duplicate labels in {}",
                tier.as_str()
            );
            for (label, cfg) in &members {
                if let Err(e) = r.validate(cfg) {
                    panic!("{label}: {e}");
                }
            }
        }
    }
}
