//! Acceptance harness: runs the desk-tier members grouped by criterion and
//! prints one PASS/FAIL line per criterion.
//!
//! Environment:
//! - `ACCEPTANCE_ONLY=2,10` runs a subset of criteria.
//! - `ACCEPTANCE_OUT=dir` keeps the run directories (default: a temp dir).
//! - `ACCEPTANCE_STRICT=1` exits nonzero when any criterion fails.
//! - `SUBLINEAR_WORKERS` caps concurrent members.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use sublinear::experiment::{run_members, workers_from_env, Registry, SuiteMember};
use sublinear::experiments::acceptance_members;

const TITLES: [&str; 16] = [
    "radial shooting reproduces the closed forms",
    "1D ground state vs closed form, second-order trend",
    "1D energy equals -2/3",
    "|K| = 2|Ω| in 1D and on the disc",
    "energy identity at ground states",
    "scaling covariance",
    "uniqueness over random starts",
    "multiplicity census",
    "separation threshold",
    "mountain pass matches the nodal profile",
    "Λ₁ against the dense oracle",
    "support growth in p",
    "starshaped supports and annulus control",
    "outer-set problem",
    "dumbbell energies",
    "equivariant solutions",
];

fn main() -> ExitCode {
    // libtest flags such as `--nocapture` or filters may be passed through.
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|k| k.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let keep = std::env::var("ACCEPTANCE_OUT").ok().map(PathBuf::from);
    let tmp = tempfile::tempdir().expect("temp dir");
    let out = keep.unwrap_or_else(|| tmp.path().to_path_buf());

    let members: Vec<(u32, String, _)> = acceptance_members()
        .into_iter()
        .filter(|(k, _, _)| only.as_ref().is_none_or(|o| o.contains(k)))
        .collect();
    let criterion: BTreeMap<String, u32> =
        members.iter().map(|(k, l, _)| (l.clone(), *k)).collect();
    let runs: Vec<_> = members.into_iter().map(|(_, l, c)| (l, c)).collect();
    let registry = Registry::builtin();
    let suite = run_members(&registry, "acceptance", &runs, &out, workers_from_env())
        .expect("acceptance run");

    let mut by_criterion: BTreeMap<u32, Vec<&SuiteMember>> = BTreeMap::new();
    for m in &suite.members {
        by_criterion.entry(criterion[&m.label]).or_default().push(m);
    }
    let mut failed = 0;
    println!();
    for (k, ms) in &by_criterion {
        let pass = ms.iter().all(|m| m.pass);
        if !pass {
            failed += 1;
        }
        let secs: f64 = ms.iter().map(|m| m.wall_time_s).sum();
        println!(
            "{} criterion {k:>2}: {} ({secs:.1} s)",
            if pass { "PASS" } else { "FAIL" },
            TITLES[*k as usize - 1]
        );
        for m in ms.iter().filter(|m| !m.pass) {
            let why = m
                .error
                .clone()
                .unwrap_or_else(|| m.failed_checks.join("; "));
            println!("       {}: {why}", m.label);
        }
    }
    println!(
        "\nacceptance: {} of {} criteria pass ({:.1} s); manifests under {}",
        by_criterion.len() - failed,
        by_criterion.len(),
        suite.wall_time_s,
        out.display()
    );
    if strict && failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
