use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context as _, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use sublinear::config::RunConfig;
use sublinear::experiment::{run_members, workers_from_env, Registry, Tier};

#[derive(Parser)]
#[command(
    name = "sublinear",
    version,
    about = "Experiments for −Δu = Q_Ω f_p(u)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `out` in the config, then `runs/<experiment>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exponent `p ∈ [1, 2)`.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Grid points per axis.
    #[arg(long)]
    n: Option<usize>,
    /// Box half extent `L`.
    #[arg(long)]
    half_extent: Option<f64>,
    /// Experiment parameter `key=value`, value in TOML syntax; repeatable.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NodalKind {
    #[value(alias = "mp")]
    MountainPass,
    LeastEnergy,
    Equivariant,
    Dumbbell,
    CompareBall,
}

#[derive(Clone, Copy, ValueEnum)]
enum RadialKind {
    Shoot,
    Explicit,
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum TierArg {
    Smoke,
    Desk,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Ground state with its checks.
    Solve(Common),
    /// Ground states along a list of exponents.
    Sweep {
        /// Exponents, comma separated; same as `--param ps=[...]`.
        #[arg(long, value_delimiter = ',')]
        p_list: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Sign-changing solutions.
    Nodal {
        kind: NodalKind,
        #[command(flatten)]
        common: Common,
    },
    /// Radial ODE profiles.
    Radial {
        kind: RadialKind,
        #[command(flatten)]
        common: Common,
    },
    /// Census of solutions on separated components.
    Multiplicity(Common),
    /// Separation threshold between two balls.
    Separation(Common),
    /// Outer-set problem for a given `D`.
    OuterSet(Common),
    /// Status of the inner-set problem.
    InnerSet(Common),
    /// First weighted eigenvalue.
    Lambda1(Common),
    /// Runs the experiment named in the config.
    Run(Common),
    /// Runs every member of a tier; workers from `SUBLINEAR_WORKERS`.
    Suite {
        #[arg(long, value_enum)]
        tier: TierArg,
        #[arg(long, default_value = "runs/suite")]
        out: PathBuf,
    },
    /// Lists the registered experiments.
    List,
}

fn load(common: &Common, experiment: Option<&str>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            RunConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?
        }
        None => RunConfig::new(experiment.ok_or_else(|| anyhow!("`run` needs --config"))?),
    };
    if let Some(e) = experiment {
        if common.config.is_some() && cfg.experiment != e {
            eprintln!("note: config names `{}`; running `{e}`", cfg.experiment);
        }
        cfg.experiment = e.to_string();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = common.p {
        cfg.problem.p = p;
    }
    if let Some(d) = common.dim {
        cfg.problem.dim = d;
    }
    if let Some(n) = common.n {
        cfg.problem.n = n;
    }
    if let Some(l) = common.half_extent {
        cfg.problem.half_extent = l;
    }
    for kv in &common.params {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--param expects KEY=VALUE, got `{kv}`"))?;
        let value: toml::Value = format!("v = {v}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(v.to_string()));
        cfg.set_param(k.trim(), value);
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &RunConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.out.as_ref().map(|o| cfg.base_dir.join(o)))
        .unwrap_or_else(|| Path::new("runs").join(&cfg.experiment))
}

/// 0 when every check passed, 1 when a check failed, 2 on errors.
fn single(common: &Common, experiment: Option<&str>) -> Result<ExitCode> {
    let cfg = load(common, experiment)?;
    let out = out_dir(common, &cfg);
    let manifest = Registry::builtin().run(&cfg, &out)?;
    print!("{}", manifest.summary());
    println!("artifacts in {}", out.display());
    Ok(if manifest.error.is_some() {
        ExitCode::from(2)
    } else if manifest.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve(c) => single(&c, Some("ground-state")),
        Command::Sweep { p_list, mut common } => {
            if !p_list.is_empty() {
                let list: Vec<String> = p_list.iter().map(|p| format!("{p:?}")).collect();
                common.params.push(format!("ps=[{}]", list.join(", ")));
            }
            single(&common, Some("sweep-p"))
        }
        Command::Nodal { kind, common } => {
            let name = match kind {
                NodalKind::MountainPass => "nodal.mountain-pass",
                NodalKind::LeastEnergy => "nodal.least-energy",
                NodalKind::Equivariant => "nodal.equivariant",
                NodalKind::Dumbbell => "nodal.dumbbell",
                NodalKind::CompareBall => "nodal.compare-ball",
            };
            single(&common, Some(name))
        }
        Command::Radial { kind, common } => {
            let name = match kind {
                RadialKind::Shoot => "radial.shoot",
                RadialKind::Explicit => "radial.explicit",
                RadialKind::Verify => "radial.verify",
            };
            single(&common, Some(name))
        }
        Command::Multiplicity(c) => single(&c, Some("multiplicity")),
        Command::Separation(c) => single(&c, Some("separation-search")),
        Command::OuterSet(c) => single(&c, Some("outer-set")),
        Command::InnerSet(c) => single(&c, Some("inner-set")),
        Command::Lambda1(c) => single(&c, Some("lambda1")),
        Command::Run(c) => single(&c, None),
        Command::Suite { tier, out } => {
            let tier = match tier {
                TierArg::Smoke => Tier::Smoke,
                TierArg::Desk => Tier::Desk,
                TierArg::Full => Tier::Full,
            };
            let workers = workers_from_env();
            let m = run_members(
                &Registry::builtin(),
                tier.as_str(),
                &tier.members(),
                &out,
                workers,
            )?;
            for member in &m.members {
                println!(
                    "{} {:<28} {:>9.2} s {}",
                    if member.pass { "PASS" } else { "FAIL" },
                    member.label,
                    member.wall_time_s,
                    member
                        .error
                        .clone()
                        .unwrap_or_else(|| member.failed_checks.join("; "))
                );
            }
            println!(
                "{} suite {} ({} members, {:.1} s); summary in {}",
                if m.pass { "PASS" } else { "FAIL" },
                m.tier,
                m.members.len(),
                m.wall_time_s,
                out.join("suite.toml").display()
            );
            Ok(if m.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::List => {
            for e in Registry::builtin().iter() {
                println!("{:<22} {}", e.name(), e.summary());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
