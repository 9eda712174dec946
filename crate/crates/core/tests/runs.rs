use std::path::{Path, PathBuf};

use proptest::prelude::*;
use sublinear::config::RunConfig;
use sublinear::error::Error;
use sublinear::experiment::{Registry, RunManifest};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn small_ground_state() -> RunConfig {
    let mut cfg = RunConfig::new("ground-state");
    cfg.problem.n = 257;
    cfg.problem.half_extent = 4.0;
    cfg
}

#[test]
fn shipped_configs_validate() {
    let registry = Registry::builtin();
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "toml") {
            continue;
        }
        let cfg = RunConfig::from_file(&path).unwrap();
        registry
            .validate(&cfg)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 4);
}

#[test]
fn same_config_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_ground_state();
    let a = Registry::builtin()
        .run(&cfg, &dir.path().join("a"))
        .unwrap();
    let b = Registry::builtin()
        .run(&cfg, &dir.path().join("b"))
        .unwrap();
    assert_eq!(a.config_hash, b.config_hash);
    assert_eq!(a.artifacts, b.artifacts);
    for name in a
        .artifacts
        .iter()
        .filter(|n| n.ends_with(".csv") || n.ends_with(".txt"))
    {
        let x = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn manifest_lists_every_file_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let manifest = Registry::builtin()
        .run(&small_ground_state(), &out)
        .unwrap();
    let mut on_disk: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    on_disk.sort();
    let mut listed = manifest.artifacts.clone();
    listed.sort();
    listed.dedup();
    assert_eq!(on_disk, listed);
    let text = std::fs::read_to_string(out.join("manifest.toml")).unwrap();
    let back: RunManifest = toml::from_str(&text).unwrap();
    assert_eq!(back.pass, manifest.pass);
    assert_eq!(back.checks.len(), manifest.checks.len());
}

#[test]
fn exponent_two_is_rejected_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut cfg = small_ground_state();
    cfg.problem.p = 2.0;
    assert!(matches!(
        Registry::builtin().run(&cfg, &out),
        Err(Error::ExponentOutOfRange(_))
    ));
    assert!(!out.exists());
}

#[test]
fn radial_shooting_in_the_plane_passes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new("radial.shoot");
    cfg.problem.dim = 2;
    let m = Registry::builtin().run(&cfg, dir.path()).unwrap();
    assert!(m.pass, "{}", m.summary());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exponents_outside_the_range_never_validate(p in prop_oneof![-4.0..1.0f64, 2.0..8.0f64]) {
        let mut cfg = RunConfig::new("ground-state");
        cfg.problem.p = p;
        prop_assert!(matches!(cfg.validate(), Err(Error::ExponentOutOfRange(_))));
    }

    #[test]
    fn config_round_trips_through_toml(seed in 0..=i64::MAX as u64, p in 1.0..2.0f64, n in 3usize..5000) {
        let mut cfg = RunConfig::new("sweep-p");
        cfg.seed = seed;
        cfg.problem.p = p;
        cfg.problem.n = n;
        cfg.set_param("ps", toml::Value::Array(vec![toml::Value::Float(p)]));
        let back = RunConfig::from_toml_str(&cfg.to_toml_string(), Path::new(".")).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}
