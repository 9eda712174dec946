use std::process::Command;

fn sublinear(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_sublinear"))
        .args(args)
        .output()
        .unwrap();
    let text =
        String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn list_names_the_experiments() {
    let (code, text) = sublinear(&["list"]);
    assert_eq!(code, 0);
    for name in [
        "ground-state",
        "nodal.mountain-pass",
        "radial.shoot",
        "outer-set",
    ] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn passing_run_exits_zero_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("explicit");
    let (code, text) = sublinear(&[
        "radial",
        "explicit",
        "--dim",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{text}");
    assert!(out.join("manifest.toml").exists());
    assert!(out.join("config.toml").exists());
}

#[test]
fn errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(sublinear(&["solve", "--p", "2", "--out", out]).0, 2);
    assert_eq!(
        sublinear(&["solve", "--param", "bogus=1", "--out", out]).0,
        2
    );
    assert_eq!(sublinear(&["run", "--out", out]).0, 2);
}

#[test]
fn saved_config_reruns_with_the_same_hash() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let (code, text) = sublinear(&[
        "radial",
        "shoot",
        "--dim",
        "3",
        "--param",
        "radius=1.5",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{text}");
    let saved = a.join("config.toml");
    let (code, text) = sublinear(&[
        "run",
        "--config",
        saved.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{text}");
    let hash = |d: &std::path::Path| {
        let m: toml::Table = std::fs::read_to_string(d.join("manifest.toml"))
            .unwrap()
            .parse()
            .unwrap();
        m["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash(&a), hash(&b));
}

#[test]
fn sweep_takes_a_p_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let (code, text) = sublinear(&[
        "sweep",
        "--p-list",
        "1.2,1.6",
        "--n",
        "257",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(code < 2, "{text}");
    let cfg: toml::Table = std::fs::read_to_string(out.join("config.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(cfg["params"]["ps"].as_array().unwrap().len(), 2);
}
