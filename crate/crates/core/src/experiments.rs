//! Built-in experiments and the run lists of the suites.

use std::time::Instant;

use crate::analysis::{
    barrier_check, compatibility_check, compatibility_tolerance, containment_growth,
    multiplicity_census, ray_check, separation_threshold_search, starshaped_check, twin_balls,
    uniqueness_near_two,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::experiment::{Check, Context, Experiment, Registry};
use crate::geometry::DomainShape;
use crate::grid::{restrict_rescale, Field, Grid};
use crate::nodal::{
    dumbbell_experiment, equivariant_solve, least_energy_nodal_from, mountain_pass_from,
    NodalRecord, Seed,
};
use crate::optimize::Symmetry;
use crate::overdetermined::{
    annulus_report, flux_check, inner_set_status, outer_set_solve, FluxReport,
};
use crate::radial::{
    explicit_nodal_1d, explicit_w, radial_energy, shoot_ground_state, verify_profile, RadialProfile,
};
use crate::solver::{
    dense_lambda1, solve_from, solve_ground_state, solve_lambda1, sweep_p, verify_uniqueness, Init,
    ProblemSpec, SolutionRecord, SweepRow,
};

pub fn register_all(r: &mut Registry) {
    r.register(Box::new(RadialShoot));
    r.register(Box::new(RadialExplicit));
    r.register(Box::new(RadialVerify));
    r.register(Box::new(GroundState));
    r.register(Box::new(Uniqueness));
    r.register(Box::new(Scaling));
    r.register(Box::new(EnergyIdentity));
    r.register(Box::new(SweepP));
    r.register(Box::new(Multiplicity));
    r.register(Box::new(SeparationSearch));
    r.register(Box::new(NearTwo));
    r.register(Box::new(MountainPass));
    r.register(Box::new(LeastEnergy));
    r.register(Box::new(Equivariant));
    r.register(Box::new(Dumbbell));
    r.register(Box::new(CompareBall));
    r.register(Box::new(Lambda1));
    r.register(Box::new(Starshaped));
    r.register(Box::new(OuterSet));
    r.register(Box::new(InnerSet));
}

// --- helpers ----------------------------------------------------------------

/// True when `shape` is the unit ball centered at the origin.
fn is_unit_ball(shape: &DomainShape, dim: usize) -> bool {
    *shape == DomainShape::ball(&vec![0.0; dim], 1.0)
        || (dim == 1 && *shape == DomainShape::interval(-1.0, 1.0))
}

fn has_explicit_shape(cfg: &RunConfig) -> bool {
    cfg.problem.shape.is_some() || cfg.problem.domain.is_some()
}

/// Sup-distance from `u` to the closed-form `p = 1` ground state on `B_1`.
fn oracle_error(u: &Field) -> Result<f64> {
    let g = u.grid();
    let mut err: f64 = 0.0;
    for i in 0..g.len() {
        err = err.max((u.values()[i] - explicit_w(g.dim(), 1.0, g.radius(i))?).abs());
    }
    Ok(err)
}

/// Sup-distance to the closed-form nodal profile, minimized over sign and
/// reflection.
fn nodal_profile_error(u: &Field) -> f64 {
    let g = u.grid();
    let mut best = f64::INFINITY;
    for s in [1.0, -1.0] {
        for mirror in [1.0, -1.0] {
            let e = (0..g.len())
                .map(|i| (s * u.values()[i] - explicit_nodal_1d(mirror * g.coords(i)[0])).abs())
                .fold(0.0, f64::max);
            best = best.min(e);
        }
    }
    best
}

fn write_solution(ctx: &mut Context, stem: &str, rec: &SolutionRecord) -> Result<()> {
    ctx.write(
        &format!("{stem}.csv"),
        &format!("{}\n{}\n", SolutionRecord::CSV_HEADER, rec.csv_row()),
    )?;
    ctx.write_field(&format!("{stem}_field.txt"), &rec.field, rec.p)?;
    ctx.write_pgm(&format!("{stem}_field.pgm"), &rec.field)?;
    let mut stages = String::from("n,half_extent,eps,iterations,energy,residual,converged\n");
    for s in &rec.provenance.stages {
        stages.push_str(&format!(
            "{},{:?},{:e},{},{:.12e},{:.6e},{}\n",
            s.n, s.half_extent, s.eps, s.iterations, s.energy, s.residual, s.converged
        ));
    }
    ctx.write(&format!("{stem}_stages.csv"), &stages)
}

fn write_nodal(ctx: &mut Context, stem: &str, rec: &NodalRecord) -> Result<()> {
    ctx.write(
        &format!("{stem}.csv"),
        &format!("{}\n{}\n", NodalRecord::CSV_HEADER, rec.csv_row()),
    )?;
    ctx.write_field(&format!("{stem}_field.txt"), rec.field(), rec.solution.p)?;
    ctx.write_pgm(&format!("{stem}_field.pgm"), rec.field())?;
    if !rec.path_maxima.is_empty() {
        let mut s = String::from("iteration,height\n");
        for (k, m) in rec.path_maxima.iter().enumerate() {
            s.push_str(&format!("{k},{m:.12e}\n"));
        }
        ctx.write(&format!("{stem}_path.csv"), &s)?;
    }
    for n in &rec.notes {
        ctx.note(n.clone());
    }
    Ok(())
}

/// `μ_p < E < 0` and both signs present.
fn check_nodal(ctx: &mut Context, rec: &NodalRecord) {
    ctx.check(Check::holds(
        "sign-changing",
        rec.positive_mass > 0.0 && rec.negative_mass > 0.0,
    ));
    ctx.check(Check::above(
        "energy above ground energy",
        rec.energy(),
        rec.ground_energy,
    ));
    ctx.check(Check::above("energy below zero", -rec.energy(), 0.0));
}

fn parse_symmetry(name: &str) -> Result<Symmetry> {
    match name {
        "odd" => Ok(Symmetry::Odd),
        "odd-first-axis" => Ok(Symmetry::OddFirstAxis),
        other => Err(Error::Config(format!(
            "unknown symmetry `{other}` (odd, odd-first-axis)"
        ))),
    }
}

/// `r Ω` for shapes built from balls, boxes and annuli centered anywhere.
fn dilate(shape: &DomainShape, r: f64) -> Result<DomainShape> {
    let s = |v: &[f64]| v.iter().map(|x| r * x).collect::<Vec<_>>();
    Ok(match shape {
        DomainShape::Ball { center, radius } => DomainShape::Ball {
            center: s(center),
            radius: r * radius,
        },
        DomainShape::Box { lo, hi } => DomainShape::Box {
            lo: s(lo),
            hi: s(hi),
        },
        DomainShape::Annulus {
            center,
            r_inner,
            r_outer,
        } => DomainShape::Annulus {
            center: s(center),
            r_inner: r * r_inner,
            r_outer: r * r_outer,
        },
        DomainShape::Union(m) => {
            DomainShape::Union(m.iter().map(|x| dilate(x, r)).collect::<Result<_>>()?)
        }
        _ => {
            return Err(Error::InvalidInput(
                "scaling is implemented for balls, boxes, annuli and their unions".into(),
            ))
        }
    })
}

// --- radial ------------------------------------------------------------------

struct RadialShoot;

impl Experiment for RadialShoot {
    fn name(&self) -> &'static str {
        "radial.shoot"
    }

    fn discretized(&self) -> bool {
        false
    }

    fn summary(&self) -> &'static str {
        "radial ground state on B_R by shooting; compared with the closed form when p = 1, R = 1"
    }

    fn params(&self) -> &'static [&'static str] {
        &["radius", "samples"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let (n, p) = (cfg.problem.dim, cfg.problem.p);
        let radius = cfg.param_f64("radius", 1.0)?;
        let samples = cfg.param_usize("samples", 401)?;
        let t = Instant::now();
        let shot = shoot_ground_state(n, p, radius, None)?;
        let elapsed = t.elapsed().as_secs_f64();
        ctx.check(Check::holds("matching converged", shot.converged));
        let prof = &shot.profile;
        if p == 1.0 && radius == 1.0 {
            let a = explicit_w(n, 1.0, 0.0)?;
            ctx.check(Check::near("center value a", prof.center_value, a, 1e-6));
            let r_supp = 2f64.powf(1.0 / n as f64);
            ctx.check(Check::near(
                "support radius",
                prof.support_radius,
                r_supp,
                1e-6,
            ));
        }
        let defect = verify_profile(prof, 2000);
        let energy = radial_energy(prof, 64)?;
        ctx.note(format!(
            "a = {:.12}, R_supp = {:.12}, energy = {energy:.12}, ODE residual {:.2e}, shooting {elapsed:.3} s",
            prof.center_value, prof.support_radius, defect.max_residual
        ));
        ctx.write("profile.csv", &prof.to_csv(samples))?;
        ctx.write(
            "shoot.csv",
            &format!(
                "dim,p,radius,center_value,support_radius,energy,iterations,defect_u,defect_du\n{n},{p:?},{radius:?},{:.15e},{:.15e},{energy:.15e},{},{:.3e},{:.3e}\n",
                prof.center_value, prof.support_radius, shot.iterations, shot.defect.0, shot.defect.1
            ),
        )
    }
}

struct RadialExplicit;

impl Experiment for RadialExplicit {
    fn name(&self) -> &'static str {
        "radial.explicit"
    }

    fn discretized(&self) -> bool {
        false
    }

    fn summary(&self) -> &'static str {
        "closed-form p = 1 profiles: ODE residual, C¹ matching and energy"
    }

    fn params(&self) -> &'static [&'static str] {
        &["samples"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let n = ctx.config.problem.dim;
        let samples = ctx.config.param_usize("samples", 401)?;
        let w = RadialProfile::explicit_w(n)?;
        let d = verify_profile(&w, 10_000);
        ctx.check(Check::at_most(
            "ground profile ODE residual",
            d.max_residual,
            1e-10,
        ));
        ctx.check(Check::at_most(
            "ground profile C¹ jump",
            d.max_jump(),
            1e-12,
        ));
        let e = radial_energy(&w, 64)?;
        if n == 1 {
            // ½∫w′² = 2/3 and ∫Q|w| = 4/3 by direct integration.
            ctx.check(Check::near("energy", e, -2.0 / 3.0, 1e-12));
        } else {
            ctx.check(Check::above("minus energy", -e, 0.0));
        }
        ctx.write("ground_profile.csv", &w.to_csv(samples))?;
        if n == 1 {
            let z = RadialProfile::explicit_nodal_1d();
            let d = verify_profile(&z, 10_000);
            ctx.check(Check::at_most(
                "nodal profile ODE residual",
                d.max_residual,
                1e-10,
            ));
            ctx.check(Check::at_most("nodal profile C¹ jump", d.max_jump(), 1e-12));
            ctx.write("nodal_profile.csv", &z.to_csv(samples))?;
        }
        ctx.note(format!("energy {e:.15}"));
        Ok(())
    }
}

struct RadialVerify;

impl Experiment for RadialVerify {
    fn name(&self) -> &'static str {
        "radial.verify"
    }

    fn discretized(&self) -> bool {
        false
    }

    fn summary(&self) -> &'static str {
        "ODE residual of a shot profile, with a perturbed profile as negative control"
    }

    fn params(&self) -> &'static [&'static str] {
        &["radius", "tolerance", "amplitude"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let radius = cfg.param_f64("radius", 1.0)?;
        let tol = cfg.param_f64("tolerance", 1e-6)?;
        let amp = cfg.param_f64("amplitude", 1e-3)?;
        let shot = shoot_ground_state(cfg.problem.dim, cfg.problem.p, radius, None)?;
        let d = verify_profile(&shot.profile, 2000);
        ctx.check(Check::at_most("ODE residual", d.max_residual, tol));
        ctx.check(Check::at_most("C¹ jump", d.max_jump(), tol));
        let bad = verify_profile(&shot.profile.perturbed(amp, 7.0), 2000);
        ctx.check(Check::above("perturbed residual", bad.max_residual, tol));
        ctx.write("profile.csv", &shot.profile.to_csv(401))
    }
}

// --- ground states -------------------------------------------------------------

struct GroundState;

impl Experiment for GroundState {
    fn name(&self) -> &'static str {
        "ground-state"
    }

    fn summary(&self) -> &'static str {
        "nonnegative ground state with oracle, energy, measure and identity checks"
    }

    fn params(&self) -> &'static [&'static str] {
        &["refine", "oracle_tol", "energy_tol"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = cfg.problem()?;
        let scfg = cfg.solve_config();
        let refine = cfg.param_bool("refine", false)?;
        let oracle_tol = cfg.param_f64("oracle_tol", 1e-2)?;
        let energy_tol = cfg.param_f64("energy_tol", 1e-2)?;
        let rec = solve_ground_state(&spec, &scfg)?;
        write_solution(ctx, "ground", &rec)?;
        let dim = spec.grid.dim();
        ctx.check(Check::holds(
            "nonnegative",
            rec.classification == crate::SignClass::Nonnegative,
        ));
        ctx.check(Check::at_most(
            "identity defect (relative)",
            rec.report.relative_identity_defect(),
            1e-6,
        ));
        let barrier = barrier_check(&rec.field, &spec.q(), spec.p)?;
        ctx.note(format!(
            "barrier t0 = {:.6}, max excess {:.3e} (slack {:.3e})",
            barrier.t0, barrier.max_excess, barrier.slack
        ));
        let oracle = spec.p == 1.0 && is_unit_ball(&spec.shape, dim);
        if oracle {
            let err = oracle_error(&rec.field)?;
            ctx.check(Check::at_most("sup error vs closed form", err, oracle_tol));
            let exact = radial_energy(&RadialProfile::explicit_w(dim)?, 64)?;
            ctx.check(Check::near(
                "energy vs closed form",
                rec.energy(),
                exact,
                energy_tol,
            ));
            if refine {
                let fine = spec.with_grid(rec.grid().refined(2)?);
                let rec2 = solve_from(&fine, &scfg, Init::Field(rec.field.clone()))?;
                let err2 = oracle_error(&rec2.field)?;
                ctx.note(format!("sup error h: {err:.4e}, h/2: {err2:.4e}"));
                ctx.check(Check::near(
                    "error ratio under halving",
                    err / err2,
                    4.0,
                    1.0,
                ));
                write_solution(ctx, "ground_refined", &rec2)?;
            }
        } else if refine {
            ctx.note("refinement study needs the closed form (p = 1 on the unit ball)");
        }
        if spec.p == 1.0 {
            let omega = spec.shape.measure()?.value;
            let c = compatibility_check(&rec.support, omega, 1.0, compatibility_tolerance(dim))?;
            ctx.check(Check::at_most(
                "|K|/(2|Ω|) − 1",
                c.relative_error.abs(),
                c.tolerance,
            ));
        }
        Ok(())
    }
}

struct Uniqueness;

impl Experiment for Uniqueness {
    fn name(&self) -> &'static str {
        "uniqueness"
    }

    fn summary(&self) -> &'static str {
        "seeded random positive starts must reach the same ground state"
    }

    fn params(&self) -> &'static [&'static str] {
        &["starts"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = cfg.problem()?;
        let scfg = cfg.solve_config();
        let starts = cfg.param_usize("starts", scfg.starts)?;
        let rep = verify_uniqueness(&spec, &scfg, starts)?;
        let converged = rep.starts.iter().filter(|s| s.record.is_some()).count();
        ctx.check(Check::near(
            "converged starts",
            converged as f64,
            starts as f64,
            0.0,
        ));
        ctx.check(Check::at_most(
            "largest pairwise sup distance",
            rep.max_distance,
            rep.threshold,
        ));
        let mut s = String::from("i,j,sup_distance\n");
        for (i, j, d) in &rep.distances {
            s.push_str(&format!("{i},{j},{d:.6e}\n"));
        }
        ctx.write("distances.csv", &s)?;
        for st in &rep.starts {
            if let Some(f) = &st.failure {
                ctx.note(format!("start {} (seed {}): {f}", st.index, st.seed));
            }
        }
        Ok(())
    }
}

struct Scaling;

impl Experiment for Scaling {
    fn name(&self) -> &'static str {
        "scaling"
    }

    fn summary(&self) -> &'static str {
        "ground state on rΩ against r^{2/(2−p)} w(x/r) at equal spacing"
    }

    fn params(&self) -> &'static [&'static str] {
        &["factor"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = cfg.problem()?;
        let scfg = cfg.solve_config();
        let r = cfg.param_f64("factor", 2.0)?;
        let h = spec.grid.spacing();
        let small = solve_ground_state(&spec, &scfg)?;
        let sl = small.grid().half_extent();
        let big_grid = Grid::with_spacing(spec.grid.dim(), (r * sl / h).ceil() * h, h)?;
        let big_spec = ProblemSpec::new(spec.p, dilate(&spec.shape, r)?, big_grid)?;
        let big = solve_ground_state(&big_spec, &scfg)?;
        // Compared on the scale of Ω: the solution on rΩ mapped back by 1/r.
        let back = restrict_rescale(&big.field, 1.0 / r, spec.p, small.grid())?;
        let defect = small.field.sup_distance(&back)?;
        ctx.check(Check::at_most("sup defect", defect, 10.0 * (h + scfg.tol)));
        let forward = restrict_rescale(&small.field, r, spec.p, big.grid())?;
        ctx.note(format!(
            "sup defect on the scale of rΩ: {:.4e}",
            big.field.sup_distance(&forward)?
        ));
        ctx.note(format!(
            "energies {:.10e} (Ω) and {:.10e} (rΩ); expected ratio r^(N+2p/(2-p)) = {:.6}",
            small.energy(),
            big.energy(),
            r.powf(spec.grid.dim() as f64 + 2.0 * spec.p / (2.0 - spec.p))
        ));
        write_solution(ctx, "small", &small)?;
        write_solution(ctx, "large", &big)
    }
}

struct EnergyIdentity;

impl Experiment for EnergyIdentity {
    fn name(&self) -> &'static str {
        "energy-identity"
    }

    fn summary(&self) -> &'static str {
        "‖∇u‖² = ∫Q|u|^p at ground states for several p"
    }

    fn params(&self) -> &'static [&'static str] {
        &["ps"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = cfg.problem()?;
        let scfg = cfg.solve_config();
        let ps = cfg.param_f64_list("ps", &[1.25, 1.5, 1.75])?;
        let mut rows = format!("{}\n", SolutionRecord::CSV_HEADER);
        for &p in &ps {
            let rec = solve_ground_state(&spec.with_p(p), &scfg)?;
            ctx.check(Check::at_most(
                &format!("identity defect p={p}"),
                rec.report.relative_identity_defect(),
                1e-6,
            ));
            rows.push_str(&rec.csv_row());
            rows.push('\n');
        }
        ctx.write("identity.csv", &rows)
    }
}

struct SweepP;

impl Experiment for SweepP {
    fn name(&self) -> &'static str {
        "sweep-p"
    }

    fn summary(&self) -> &'static str {
        "ground states along p with the support-growth check"
    }

    fn params(&self) -> &'static [&'static str] {
        &["ps"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = cfg.problem()?;
        let default: Vec<f64> = (0..10).map(|k| 1.0 + 0.1 * k as f64).collect();
        let ps = cfg.param_f64_list("ps", &default)?;
        let out = sweep_p(&spec, &ps, &cfg.solve_config());
        let mut rows: Vec<SweepRow> = Vec::new();
        let mut csv = format!("{}\n", SweepRow::CSV_HEADER);
        for (p, r) in ps.iter().zip(out) {
            match r {
                Ok((row, _)) => {
                    csv.push_str(&row.csv_row());
                    csv.push('\n');
                    rows.push(row);
                }
                Err(e) => ctx.note(format!("p = {p}: {e}")),
            }
        }
        ctx.write("sweep.csv", &csv)?;
        ctx.check(Check::near(
            "solved rows",
            rows.len() as f64,
            ps.len() as f64,
            0.0,
        ));
        let h = spec.grid.spacing();
        let g = containment_growth(&rows, h)?;
        ctx.check(Check::at_most("largest inradius drop", g.worst_drop, h));
        if let Some(m) = g.margin {
            ctx.check(Check::at_least(
                "inradius(1.9) − inradius(1.0)",
                m,
                g.required_margin,
            ));
        }
        Ok(())
    }
}

// --- several components -----------------------------------------------------------

/// The configured shape, or two unit balls `gap` apart when none is given.
fn components_shape(cfg: &RunConfig) -> Result<DomainShape> {
    if has_explicit_shape(cfg) {
        cfg.shape()
    } else {
        Ok(twin_balls(
            cfg.problem.dim,
            cfg.param_f64("radius", 1.0)?,
            cfg.param_f64("gap", 8.0)?,
        ))
    }
}

struct Multiplicity;

impl Experiment for Multiplicity {
    fn name(&self) -> &'static str {
        "multiplicity"
    }

    fn summary(&self) -> &'static str {
        "census of the 2^ℓ − 1 nonnegative solutions on ℓ separated components"
    }

    fn params(&self) -> &'static [&'static str] {
        &["gap", "radius"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = ProblemSpec::new(cfg.problem.p, components_shape(cfg)?, cfg.grid()?)?;
        let c = multiplicity_census(&spec, &cfg.solve_config())?;
        let expected = (1usize << c.ell) - 1;
        ctx.check(Check::near(
            "validated solutions",
            c.validated() as f64,
            expected as f64,
            0.0,
        ));
        ctx.check(Check::above("support separation", c.min_distance, 0.0));
        ctx.check(Check::at_most(
            "energy additivity defect",
            c.additivity_defect,
            1e-8,
        ));
        let worst = c.members.iter().map(|m| m.residual).fold(0.0, f64::max);
        ctx.check(Check::at_most(
            "largest member residual",
            worst,
            c.tolerance,
        ));
        let mut s = String::from("subset,energy,energy_sum,residual,validated\n");
        for m in &c.members {
            let subset: Vec<String> = m.subset.iter().map(|i| i.to_string()).collect();
            s.push_str(&format!(
                "{},{:.12e},{:.12e},{:.6e},{}\n",
                subset.join(" "),
                m.energy,
                m.energy_sum,
                m.residual,
                m.validated
            ));
        }
        ctx.write("census.csv", &s)
    }
}

struct SeparationSearch;

impl Experiment for SeparationSearch {
    fn name(&self) -> &'static str {
        "separation-search"
    }

    fn summary(&self) -> &'static str {
        "smallest gap between two balls at which the census validates"
    }

    fn params(&self) -> &'static [&'static str] {
        &["radius", "bracket"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let radius = cfg.param_f64("radius", 1.0)?;
        let bracket = cfg.param_f64_list("bracket", &[1.0, 3.0])?;
        if bracket.len() != 2 {
            return Err(Error::Config("`bracket` takes two gaps".into()));
        }
        let h = cfg.grid()?.spacing();
        let (dim, p) = (cfg.problem.dim, cfg.problem.p);
        let rep = separation_threshold_search(
            dim,
            radius,
            p,
            h,
            (bracket[0], bracket[1]),
            &cfg.solve_config(),
        )?;
        let target = if p == 1.0 && radius == 1.0 {
            2.0 * (2f64.powf(1.0 / dim as f64) - 1.0)
        } else {
            rep.radial_estimate.ok_or_else(|| {
                Error::InvalidInput("no radial estimate of the support radius".into())
            })?
        };
        ctx.check(Check::holds(
            &format!("[{:.4}, {:.4}] contains {target:.4}", rep.d_lo, rep.d_hi),
            rep.contains(target),
        ));
        ctx.check(Check::at_most("interval width", rep.width(), 4.0 * h));
        ctx.write(
            "separation.csv",
            &format!(
                "d_lo,d_hi,target,census_runs\n{:?},{:?},{target:?},{}\n",
                rep.d_lo, rep.d_hi, rep.census_runs
            ),
        )
    }
}

struct NearTwo;

impl Experiment for NearTwo {
    fn name(&self) -> &'static str {
        "near-two"
    }

    fn summary(&self) -> &'static str {
        "census on two components for p rising toward 2 (report)"
    }

    fn params(&self) -> &'static [&'static str] {
        &["ps", "gap", "radius"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = ProblemSpec::new(cfg.problem.p, components_shape(cfg)?, cfg.grid()?)?;
        let ps = cfg.param_f64_list("ps", &[1.0, 1.2, 1.4, 1.6, 1.8])?;
        let rep = uniqueness_near_two(&spec, &ps, &cfg.solve_config())?;
        let mut s = String::from("p,validated,expected,note\n");
        for r in &rep.rows {
            s.push_str(&format!(
                "{:?},{},{},{}\n",
                r.p,
                r.validated.map(|v| v.to_string()).unwrap_or_default(),
                r.expected,
                r.note.replace(',', ";")
            ));
        }
        ctx.write("near_two.csv", &s)?;
        if let Some(first) = rep.rows.first() {
            ctx.check(Check::holds(
                &format!("full census at p = {}", first.p),
                first.validated == Some(first.expected),
            ));
        }
        ctx.note(rep.summary);
        Ok(())
    }
}

// --- sign-changing solutions --------------------------------------------------------

struct MountainPass;

impl Experiment for MountainPass {
    fn name(&self) -> &'static str {
        "nodal.mountain-pass"
    }

    fn summary(&self) -> &'static str {
        "mountain pass between −w and w, polished to a critical point"
    }

    fn params(&self) -> &'static [&'static str] {
        &["oracle_tol"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = cfg.problem()?;
        let scfg = cfg.solve_config();
        let tol = cfg.param_f64("oracle_tol", 1e-2)?;
        let ground = solve_ground_state(&spec, &scfg)?;
        let mp = mountain_pass_from(&spec, &scfg, &cfg.path, &ground)?;
        write_nodal(ctx, "mountain_pass", &mp)?;
        check_nodal(ctx, &mp);
        let oracle = spec.p == 1.0 && spec.grid.dim() == 1 && is_unit_ball(&spec.shape, 1);
        if oracle {
            ctx.check(Check::at_most(
                "sup error vs nodal profile",
                nodal_profile_error(mp.field()),
                tol,
            ));
            // Newton started on the profile shows whether the profile is a
            // discrete critical point and what its energy is.
            let prof = mp.field().grid().sample(|x| explicit_nodal_1d(x[0]));
            match least_energy_nodal_from(
                &spec,
                &scfg,
                &cfg.path,
                &[Seed::Nearby(prof.clone())],
                &ground,
            ) {
                Ok(near) => ctx.note(format!(
                    "critical point next to the profile: energy {:.8e}, sup distance {:.3e}",
                    near.energy(),
                    near.field().sup_distance(&prof)?
                )),
                Err(e) => ctx.note(format!("no critical point next to the profile: {e}")),
            }
        }
        Ok(())
    }
}

struct LeastEnergy;

impl Experiment for LeastEnergy {
    fn name(&self) -> &'static str {
        "nodal.least-energy"
    }

    fn summary(&self) -> &'static str {
        "lowest sign-changing critical point over the seed family (an upper bound for c_nod)"
    }

    fn params(&self) -> &'static [&'static str] {
        &[]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = cfg.problem()?;
        let scfg = cfg.solve_config();
        let ground = solve_ground_state(&spec, &scfg)?;
        let rec = least_energy_nodal_from(&spec, &scfg, &cfg.path, &Seed::defaults(), &ground)?;
        write_nodal(ctx, "least_energy", &rec)?;
        check_nodal(ctx, &rec);
        ctx.note("the estimate is an upper bound: only a finite seed family is searched");
        Ok(())
    }
}

struct Equivariant;

impl Experiment for Equivariant {
    fn name(&self) -> &'static str {
        "nodal.equivariant"
    }

    fn summary(&self) -> &'static str {
        "energy minimizer among functions odd under a symmetry of Ω"
    }

    fn params(&self) -> &'static [&'static str] {
        &["symmetry"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = cfg.problem()?;
        let sym = parse_symmetry(&cfg.param_str("symmetry", "odd")?)?;
        let rec = equivariant_solve(&spec, &cfg.solve_config(), sym)?;
        write_nodal(ctx, "equivariant", &rec)?;
        check_nodal(ctx, &rec);
        let defect = sym.defect(rec.field().grid(), rec.field().values());
        ctx.check(Check::at_most("oddness defect", defect, 0.0));
        Ok(())
    }
}

struct Dumbbell;

impl Experiment for Dumbbell {
    fn name(&self) -> &'static str {
        "nodal.dumbbell"
    }

    fn summary(&self) -> &'static str {
        "ground, mountain-pass and nodal energies as the dumbbell tube narrows"
    }

    fn params(&self) -> &'static [&'static str] {
        &["gap", "deltas"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let gap = cfg.param_f64("gap", 1.0)?;
        let deltas = cfg.param_f64_list("deltas", &[0.4, 0.2, 0.1])?;
        let table = dumbbell_experiment(
            gap,
            &deltas,
            cfg.problem.p,
            cfg.grid()?,
            &cfg.solve_config(),
            &cfg.path,
        )?;
        ctx.write("dumbbell.csv", &table.to_csv())?;
        ctx.note(format!("μ(Ω₀) = {:.10e}", table.limit_energy));
        for r in &table.rows {
            if let Some(e) = &r.error {
                ctx.note(format!("δ = {}: {e}", r.delta));
            }
        }
        ctx.check(Check::holds(
            "every δ solved",
            table.rows.iter().all(|r| r.error.is_none()),
        ));
        ctx.check(Check::holds(
            "|μ(Ω_δ) − μ(Ω₀)| nonincreasing as δ shrinks",
            table.limit_is_monotone(),
        ));
        let margin = table.rows.last().and_then(|r| r.gap).unwrap_or(f64::NAN);
        ctx.check(Check::above(
            "mountain pass minus best nodal at smallest δ",
            margin,
            0.0,
        ));
        Ok(())
    }
}

struct CompareBall;

impl Experiment for CompareBall {
    fn name(&self) -> &'static str {
        "nodal.compare-ball"
    }

    fn summary(&self) -> &'static str {
        "mountain-pass and least nodal energies side by side (report)"
    }

    fn params(&self) -> &'static [&'static str] {
        &[]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = cfg.problem()?;
        let scfg = cfg.solve_config();
        let ground = solve_ground_state(&spec, &scfg)?;
        let mp = mountain_pass_from(&spec, &scfg, &cfg.path, &ground)?;
        let seeds = [
            Seed::Field(mp.field().clone()),
            Seed::OddSplit,
            Seed::SignSplit,
        ];
        let best = least_energy_nodal_from(&spec, &scfg, &cfg.path, &seeds, &ground)?;
        ctx.write(
            "compare.csv",
            &format!(
                "{}\n{}\n{}\n",
                NodalRecord::CSV_HEADER,
                mp.csv_row(),
                best.csv_row()
            ),
        )?;
        check_nodal(ctx, &mp);
        ctx.check(Check::at_most(
            "best nodal energy minus mountain pass",
            best.energy() - mp.energy(),
            0.0,
        ));
        ctx.note(format!(
            "μ = {:.8e}, c_mp ≈ {:.8e}, c_nod ≤ {:.8e}",
            ground.energy(),
            mp.energy(),
            best.energy()
        ));
        Ok(())
    }
}

// --- eigenvalue, support shape, outer set -------------------------------------------

struct Lambda1;

impl Experiment for Lambda1 {
    fn name(&self) -> &'static str {
        "lambda1"
    }

    fn summary(&self) -> &'static str {
        "first eigenvalue of −Δ with the indefinite weight, against a dense oracle"
    }

    fn params(&self) -> &'static [&'static str] {
        &[]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = cfg.problem()?;
        let eig = solve_lambda1(&spec, &cfg.solve_config())?;
        ctx.check(Check::above("Λ₁", eig.lambda, 0.0));
        ctx.check(Check::near("∫Qφ²", eig.constraint, 1.0, 1e-10));
        match dense_lambda1(&spec) {
            Ok(dense) => {
                ctx.check(Check::at_most(
                    "relative error vs dense",
                    (eig.lambda - dense).abs() / dense,
                    1e-6,
                ));
                ctx.note(format!("dense Λ₁ = {dense:.15e}"));
            }
            Err(e) => ctx.note(format!("dense oracle skipped: {e}")),
        }
        ctx.note(format!(
            "Λ₁ = {:.15e}, residual {:.3e}",
            eig.lambda, eig.residual
        ));
        ctx.write_field("phi1.txt", &eig.field, 2.0)?;
        ctx.write_pgm("phi1.pgm", &eig.field)
    }
}

struct Starshaped;

impl Experiment for Starshaped {
    fn name(&self) -> &'static str {
        "starshaped"
    }

    fn summary(&self) -> &'static str {
        "ray test of the ground-state support in 2D; `expect = \"fail\"` for controls"
    }

    fn params(&self) -> &'static [&'static str] {
        &["origin", "rays", "expect"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let spec = cfg.problem()?;
        let origin = cfg.param_f64_list("origin", &[0.0, 0.0])?;
        if origin.len() != 2 {
            return Err(Error::Config("`origin` takes two coordinates".into()));
        }
        let origin = [origin[0], origin[1]];
        let rays = cfg.param_usize("rays", 720)?;
        let expect = cfg.param_str("expect", "pass")?;
        let rec = solve_ground_state(&spec, &cfg.solve_config())?;
        write_solution(ctx, "ground", &rec)?;
        match expect.as_str() {
            "pass" => {
                let r = starshaped_check(&rec.support, &spec.shape, origin, rays)?;
                ctx.check(Check::near(
                    "rays leaving K more than once",
                    r.failed.len() as f64,
                    0.0,
                    0.0,
                ));
            }
            "fail" => {
                let r = ray_check(&rec.support, origin, rays)?;
                ctx.check(Check::above(
                    "rays leaving K more than once",
                    r.failed.len() as f64,
                    0.0,
                ));
            }
            other => {
                return Err(Error::Config(format!(
                    "`expect` is pass or fail, got `{other}`"
                )))
            }
        }
        Ok(())
    }
}

struct OuterSet;

impl Experiment for OuterSet {
    fn name(&self) -> &'static str {
        "outer-set"
    }

    fn summary(&self) -> &'static str {
        "outer set U ⊃ D with zero Dirichlet and Neumann data for the two-phase torsion function"
    }

    fn params(&self) -> &'static [&'static str] {
        &["contact_radius", "annulus_outer", "measure_tol"]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        let cfg = ctx.config;
        let d = cfg.shape()?;
        let grid = cfg.grid()?;
        let dim = grid.dim();
        let res = outer_set_solve(&d, grid, &cfg.solve_config())?;
        let h = res.tau.grid().spacing();
        ctx.write_field("tau.txt", &res.tau, 1.0)?;
        ctx.write_pgm("tau.pgm", &res.tau)?;
        let flux = flux_check(&res);
        ctx.write(
            "flux.csv",
            &format!("{}\n{}\n", FluxReport::CSV_HEADER, flux.csv_row()),
        )?;
        ctx.check(Check::holds("flux check", flux.pass));
        ctx.check(Check::holds("D compactly inside U", res.compactly_inside));
        ctx.note(format!(
            "|U| = {:.6}, |D| = {:.6}, equivalent radius {:.6}, contact radius {:.6}",
            res.support.measure,
            res.d_measure,
            res.equivalent_radius(),
            res.contact_radius()
        ));
        if cfg.params.contains_key("contact_radius") {
            let r = cfg.param_f64("contact_radius", 0.0)?;
            ctx.check(Check::near("contact radius", res.contact_radius(), r, h));
        }
        let tol = cfg.param_f64("measure_tol", compatibility_tolerance(dim))?;
        if cfg.params.contains_key("annulus_outer") {
            let r_outer = cfg.param_f64("annulus_outer", 1.0)?;
            let rep = annulus_report(&res, r_outer, &vec![0.0; dim], tol)?;
            ctx.check(Check::at_most(
                "||U|/(2|D|) − 1|",
                rep.relative_error.abs(),
                rep.tolerance,
            ));
            ctx.note(format!(
                "enclosing ball radius {:.4}; U excludes that ball: {}; U has a hole: {}",
                rep.enclosing_ball, rep.excludes_ball, rep.has_hole
            ));
        } else {
            ctx.check(Check::at_most(
                "||U|/(2|D|) − 1|",
                res.measure_ratio_error().abs(),
                tol,
            ));
        }
        Ok(())
    }
}

struct InnerSet;

impl Experiment for InnerSet {
    fn name(&self) -> &'static str {
        "inner-set"
    }

    fn discretized(&self) -> bool {
        false
    }

    fn summary(&self) -> &'static str {
        "status of the inner-set problem (no solver)"
    }

    fn params(&self) -> &'static [&'static str] {
        &[]
    }

    fn run(&self, ctx: &mut Context) -> Result<()> {
        ctx.note(inner_set_status());
        Ok(())
    }
}

// --- run lists ------------------------------------------------------------------

fn config(experiment: &str, dim: usize, p: f64, n: usize, half_extent: f64) -> RunConfig {
    let mut c = RunConfig::new(experiment);
    c.problem.dim = dim;
    c.problem.p = p;
    c.problem.n = n;
    c.problem.half_extent = half_extent;
    c
}

fn with_shape(mut c: RunConfig, shape: &DomainShape) -> RunConfig {
    c.problem.domain = Some(
        shape
            .to_toml_string()
            .parse()
            .expect("shape text is valid TOML"),
    );
    c
}

fn interval() -> DomainShape {
    DomainShape::interval(-1.0, 1.0)
}

/// Members of the smoke tier.
pub fn smoke_members() -> Vec<(String, RunConfig)> {
    let mut v = Vec::new();
    for n in 1..=3 {
        v.push((
            format!("shoot-n{n}"),
            config("radial.shoot", n, 1.0, 1025, 4.0),
        ));
    }
    v.push((
        "shoot-p1.5".into(),
        config("radial.shoot", 1, 1.5, 1025, 4.0),
    ));
    v.push((
        "explicit-n1".into(),
        config("radial.explicit", 1, 1.0, 1025, 4.0),
    ));
    v.push((
        "explicit-n2".into(),
        config("radial.explicit", 2, 1.0, 1025, 4.0),
    ));
    v.push((
        "verify-n2-p1.5".into(),
        config("radial.verify", 2, 1.5, 1025, 4.0),
    ));
    v.push((
        "identity-1d".into(),
        with_shape(config("energy-identity", 1, 1.0, 513, 4.0), &interval()),
    ));
    v.push((
        "ground-1d".into(),
        with_shape(config("ground-state", 1, 1.0, 2049, 4.0), &interval()),
    ));
    v.push((
        "lambda1-1d".into(),
        with_shape(config("lambda1", 1, 1.0, 257, 4.0), &interval()),
    ));
    v
}

/// Members checking each acceptance criterion, tagged with its number.
pub fn acceptance_members() -> Vec<(u32, String, RunConfig)> {
    let mut v: Vec<(u32, String, RunConfig)> = Vec::new();
    let mut push = |k: u32, label: &str, c: RunConfig| v.push((k, format!("c{k:02}-{label}"), c));

    for n in 1..=3 {
        let mut c = config("radial.shoot", n, 1.0, 1025, 4.0);
        c.set_param("max_seconds", 1.0);
        push(1, &format!("shoot-n{n}"), c);
    }

    // h = 1/256 on (−4, 4).
    let mut c = with_shape(config("ground-state", 1, 1.0, 2049, 4.0), &interval());
    c.set_param("refine", true);
    c.set_param("max_seconds", 30.0);
    push(2, "oracle-1d", c);
    push(
        3,
        "energy-1d",
        with_shape(config("ground-state", 1, 1.0, 2049, 4.0), &interval()),
    );

    push(
        4,
        "measure-1d",
        with_shape(config("ground-state", 1, 1.0, 2049, 4.0), &interval()),
    );
    let mut c = config("ground-state", 2, 1.0, 513, 2.0);
    c.set_param("max_seconds", 300.0);
    push(4, "measure-disc", c);

    push(
        5,
        "identity-1d",
        with_shape(config("energy-identity", 1, 1.0, 1025, 4.0), &interval()),
    );

    push(
        6,
        "scaling-1d",
        with_shape(config("scaling", 1, 1.5, 1025, 4.0), &interval()),
    );

    push(
        7,
        "uniqueness-1d",
        with_shape(config("uniqueness", 1, 1.5, 1025, 4.0), &interval()),
    );
    push(7, "uniqueness-disc", config("uniqueness", 2, 1.5, 129, 3.0));

    let mut c = config("multiplicity", 1, 1.0, 2049, 8.0);
    c.set_param("gap", 8.0);
    c.set_param("max_seconds", 120.0);
    push(8, "census-1d", c);

    let mut c = config("separation-search", 1, 1.0, 1025, 4.0);
    c.set_param("bracket", vec![1.0, 3.0]);
    push(9, "threshold-1d", c);

    let mut c = with_shape(
        config("nodal.mountain-pass", 1, 1.0, 2049, 4.0),
        &interval(),
    );
    c.set_param("max_seconds", 300.0);
    push(10, "mountain-pass-1d", c);

    push(
        11,
        "lambda1-1d",
        with_shape(config("lambda1", 1, 1.0, 513, 4.0), &interval()),
    );

    push(
        12,
        "sweep-1d",
        with_shape(config("sweep-p", 1, 1.0, 1025, 4.0), &interval()),
    );

    let ellipse = DomainShape::ellipse(1.3, 0.8, 720);
    let petals = DomainShape::petal_star(1.0, 0.3, 5, 720);
    for p in [1.2, 1.5, 1.8] {
        push(
            13,
            &format!("ellipse-p{p}"),
            with_shape(config("starshaped", 2, p, 257, 4.0), &ellipse),
        );
        push(
            13,
            &format!("petals-p{p}"),
            with_shape(config("starshaped", 2, p, 257, 4.0), &petals),
        );
    }
    let ring = DomainShape::Annulus {
        center: vec![0.0, 0.0],
        r_inner: 0.5,
        r_outer: 1.0,
    };
    let mut c = with_shape(config("starshaped", 2, 1.0, 257, 4.0), &ring);
    c.set_param("expect", "fail");
    push(13, "annulus-control", c);

    let mut c = config("outer-set", 2, 1.0, 513, 2.0);
    c.set_param("contact_radius", std::f64::consts::SQRT_2);
    push(14, "disc", c);
    // Thin annulus at h = 1/512.
    let thin = DomainShape::Annulus {
        center: vec![0.0, 0.0],
        r_inner: 0.8,
        r_outer: 1.0,
    };
    let mut c = with_shape(config("outer-set", 2, 1.0, 1537, 1.5), &thin);
    c.set_param("annulus_outer", 1.0);
    push(14, "thin-annulus", c);

    // h = 1/64 on (−3.5, 3.5)².
    let mut c = config("nodal.dumbbell", 2, 1.0, 449, 3.5);
    c.set_param("gap", 1.0);
    c.set_param("deltas", vec![0.4, 0.2, 0.1]);
    c.set_param("max_seconds", 1800.0);
    push(15, "dumbbell", c);

    push(
        16,
        "odd-1d",
        with_shape(config("nodal.equivariant", 1, 1.0, 1025, 4.0), &interval()),
    );
    let mut c = with_shape(config("nodal.equivariant", 2, 1.0, 161, 2.5), &ring);
    c.set_param("symmetry", "odd");
    push(16, "rotation-annulus", c);
    v
}

/// Desk members plus finer 2D grids and a longer dumbbell sweep.
pub fn full_members() -> Vec<(String, RunConfig)> {
    let mut v: Vec<(String, RunConfig)> = acceptance_members()
        .into_iter()
        .map(|(_, l, c)| (l, c))
        .collect();
    v.push((
        "full-measure-disc-256".into(),
        config("ground-state", 2, 1.0, 1025, 2.0),
    ));
    let mut c = config("nodal.dumbbell", 2, 1.0, 673, 3.5);
    c.set_param("gap", 1.0);
    c.set_param("deltas", vec![0.4, 0.3, 0.2, 0.1, 0.05]);
    v.push(("full-dumbbell-96".into(), c));
    v.push((
        "full-compare-ball".into(),
        config("nodal.compare-ball", 2, 1.0, 129, 2.5),
    ));
    v.push((
        "full-least-energy-1d".into(),
        with_shape(config("nodal.least-energy", 1, 1.5, 1025, 4.0), &interval()),
    ));
    let mut c = config("near-two", 1, 1.0, 1025, 8.0);
    c.set_param("gap", 4.0);
    v.push(("full-near-two".into(), c));
    v.push((
        "full-inner-set".into(),
        config("inner-set", 1, 1.0, 1025, 4.0),
    ));
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_detection() {
        assert!(is_unit_ball(&DomainShape::interval(-1.0, 1.0), 1));
        assert!(is_unit_ball(&DomainShape::ball(&[0.0, 0.0], 1.0), 2));
        assert!(!is_unit_ball(&DomainShape::ball(&[0.1, 0.0], 1.0), 2));
    }

    #[test]
    fn dilation_scales_measure() {
        let a = DomainShape::Annulus {
            center: vec![0.0, 0.0],
            r_inner: 0.5,
            r_outer: 1.0,
        };
        let m = a.measure().unwrap().value;
        let m2 = dilate(&a, 2.0).unwrap().measure().unwrap().value;
        assert!((m2 - 4.0 * m).abs() < 1e-12);
        assert!(dilate(&DomainShape::ellipse(1.0, 0.5, 64), 2.0).is_err());
    }

    #[test]
    fn nodal_profile_error_ignores_sign_and_reflection() {
        let g = Grid::new(1, 257, 4.0).unwrap();
        let z = g.sample(|x| -explicit_nodal_1d(-x[0]));
        assert_eq!(nodal_profile_error(&z), 0.0);
        let w = g.sample(|x| explicit_w(1, 1.0, x[0].abs()).unwrap());
        assert_eq!(oracle_error(&w).unwrap(), 0.0);
    }

    #[test]
    fn inline_shapes_round_trip_through_configs() {
        for (_, _, c) in acceptance_members() {
            let back =
                RunConfig::from_toml_str(&c.to_toml_string(), std::path::Path::new(".")).unwrap();
            assert_eq!(back.shape().unwrap(), c.shape().unwrap());
        }
    }
}
