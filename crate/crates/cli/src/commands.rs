//! One function per subcommand. Each writes its outputs through [`Run`] and
//! records its acceptance checks there.

use rayon::prelude::*;

use parinv::carleman::{
    build_weight, carleman_ratio, default_tau_grid, sample_cutoff_solution, weight_alpha_phi,
};
use parinv::coefficients::{sample_initial, sample_potential};
use parinv::hyperbolic::{cfl_number, energy_envelope, max_stable_step, solve_wave, CFL_LIMIT};
use parinv::inverse::{recover_difference, StabilityCase, StabilityExperiment};
use parinv::io::{write_trace_csv, write_trajectory};
use parinv::mesh::integrate;
use parinv::parabolic::{extract_trace, positivity_floor, solve_parabolic, solve_parabolic_source};
use parinv::reznitskaya::bridge_transform;
use parinv::volterra::{recover_source, residual_profile};
use parinv::{EllipticOperator, Grid, Result, SubboundarySpec};

use crate::config::{Command, ExperimentConfig};
use crate::manifest::Run;

/// Grid, operator and fields materialized during validation.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cfg: ExperimentConfig,
    pub grid: Grid,
    pub op: EllipticOperator,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub a: Vec<f64>,
    pub f: Vec<f64>,
    pub observation: SubboundarySpec,
    pub gamma0: SubboundarySpec,
}

impl Prepared {
    pub fn new(cfg: ExperimentConfig, command: Command) -> std::result::Result<Self, String> {
        cfg.validate()?;
        let grid = cfg.build_grid()?;
        let op = cfg.build_operator(&grid)?;
        if op.has_drift() && matches!(command, Command::ForwardWave | Command::BridgeCheck) {
            return Err(format!("{} does not support a drift term", command.name()));
        }
        let fs = &cfg.fields;
        let p = cfg.field(&grid, Some(&op), &fs.p)?;
        let q = cfg.field(&grid, Some(&op), &fs.q)?;
        let a = cfg.field(&grid, Some(&op), &fs.a)?;
        let f = cfg.field(&grid, Some(&op), &fs.f)?;
        let observation = cfg.observation(&grid)?;
        let gamma0 = cfg.gamma0(&grid)?;
        Ok(Self {
            cfg,
            grid,
            op,
            p,
            q,
            a,
            f,
            observation,
            gamma0,
        })
    }
}

fn l2(grid: &Grid, v: &[f64]) -> f64 {
    integrate(grid, &v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn gap(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `|err| / |reference|`, or `|err|` when the reference vanishes.
fn relative(err: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        err / reference
    } else {
        err
    }
}

pub fn dispatch(command: Command, pre: &Prepared, run: &mut Run) -> Result<()> {
    match command {
        Command::ForwardParabolic => forward_parabolic(pre, run),
        Command::ForwardWave => forward_wave(pre, run),
        Command::BridgeCheck => bridge_check(pre, run),
        Command::InvertSource => invert_source(pre, run),
        Command::StabilitySweep => stability_sweep(pre, run),
        Command::LipschitzSweep => lipschitz(pre, run),
        Command::CarlemanCheck => carleman_check(pre, run),
        Command::RecoverDelta => recover_delta(pre, run),
        Command::Report => unreachable!("report does not run a solver"),
    }
}

fn forward_parabolic(pre: &Prepared, run: &mut Run) -> Result<()> {
    let t = &pre.cfg.time;
    let u = solve_parabolic(&pre.op, &pre.p, &pre.a, t.horizon, t.steps)?;
    let written = write_trajectory(&run.dir().join("trajectory"), &u, pre.cfg.output.stride)?;
    run.track(written);
    run.field("final", &pre.grid, u.final_snapshot())?;
    let trace_path = run.dir().join("trace.csv");
    write_trace_csv(&trace_path, &extract_trace(&u, &pre.observation)?)?;
    run.track([trace_path]);
    let (defect, tol) = u.neumann_defect(&pre.op)?;
    run.value("positivity_floor", positivity_floor(&u));
    run.value("mass_initial", integrate(&pre.grid, &pre.a));
    run.value("mass_final", integrate(&pre.grid, u.final_snapshot()));
    run.check_below("neumann_defect", defect, tol);
    Ok(())
}

fn forward_wave(pre: &Prepared, run: &mut Run) -> Result<()> {
    let cfg = &pre.cfg;
    let ds = cfg.bridge.cfl_fraction * max_stable_step(&pre.op, &pre.p);
    let steps = (cfg.time.horizon / ds).ceil() as usize;
    let ds = cfg.time.horizon / steps as f64;
    let w = solve_wave(&pre.op, &pre.p, &pre.a, cfg.time.horizon, steps)?;
    let env = energy_envelope(&w, &pre.op, &pre.p)?;
    run.field("final", &pre.grid, w.snapshot(w.len() - 1))?;
    let rows: Vec<Vec<f64>> = env
        .samples
        .iter()
        .enumerate()
        .map(|(n, e)| vec![w.time(n), *e, env.mass[n]])
        .collect();
    run.csv("energy.csv", &["s", "energy", "mass"], &rows)?;
    run.value("ds", ds);
    run.value("c2", env.c2);
    run.value("energy_drift", env.relative_drift());
    run.check_below("cfl", cfl_number(&pre.op, &pre.p, ds), CFL_LIMIT);
    run.check_below(
        "energy_drift",
        env.relative_drift(),
        cfg.tolerances.energy_drift,
    );
    Ok(())
}

fn bridge_check(pre: &Prepared, run: &mut Run) -> Result<()> {
    let cfg = &pre.cfg;
    let (horizon, steps, n) = (cfg.time.horizon, cfg.time.steps, cfg.bridge.targets);
    let targets: Vec<f64> = (1..=n).map(|k| horizon * k as f64 / n as f64).collect();
    let ds = cfg.bridge.cfl_fraction * max_stable_step(&pre.op, &pre.p);
    let b = bridge_transform(
        &pre.op,
        &pre.p,
        &pre.a,
        &targets,
        cfg.tolerances.transform,
        cfg.bridge.cap,
        ds,
    )?;
    let u = solve_parabolic(&pre.op, &pre.p, &pre.a, horizon, steps)?;
    let mut rows = Vec::with_capacity(n);
    let mut worst = 0.0f64;
    for (k, t) in targets.iter().enumerate() {
        let exact = u.snapshot((k + 1) * steps / n);
        let err = sup(&gap(&b.heat.values[k], exact));
        let rel = relative(err, sup(exact));
        worst = worst.max(rel);
        rows.push(vec![*t, err, rel]);
    }
    run.csv(
        "bridge.csv",
        &["t", "max_abs_error", "relative_error"],
        &rows,
    )?;
    run.field("heat_final", &pre.grid, &b.heat.values[n - 1])?;
    run.value("c2", b.plan.c2);
    run.value("s_max", b.plan.s_max);
    run.value("tail_bound", b.plan.tail_bound);
    run.value("ds", b.wave.ds());
    run.value("max_relative_error", worst);
    run.check_below("bridge_relative_error", worst, cfg.tolerances.bridge);
    Ok(())
}

fn invert_source(pre: &Prepared, run: &mut Run) -> Result<()> {
    let t = &pre.cfg.time;
    let mu = t.mu.build(t.horizon, t.steps)?;
    let y = solve_parabolic_source(&pre.op, &pre.p, &pre.f, &mu, t.horizon, t.steps)?;
    let rec = recover_source(&pre.op, &pre.p, &mu, &y)?;
    let res = residual_profile(&pre.op, &pre.p, &rec.z)?;
    run.field("recovered_f", &pre.grid, &rec.f)?;
    let rows: Vec<Vec<f64>> = res
        .times
        .iter()
        .zip(&res.residuals)
        .map(|(a, b)| vec![*a, *b])
        .collect();
    run.csv("residual.csv", &["t", "residual"], &rows)?;
    let err = gap(&rec.f, &pre.f);
    let rel = relative(l2(&pre.grid, &err), l2(&pre.grid, &pre.f));
    run.value("max_abs_error", sup(&err));
    run.value("relative_l2_error", rel);
    run.value("max_residual", res.max);
    run.check_below("source_relative_l2_error", rel, pre.cfg.tolerances.source);
    Ok(())
}

fn cases(pre: &Prepared) -> Result<Vec<StabilityCase>> {
    let params = pre.cfg.case_params();
    (0..pre.cfg.sweep.cases as u64)
        .map(|k| StabilityCase::sample(pre.cfg.seed.wrapping_add(k), &pre.op, &params))
        .collect()
}

fn stability_sweep(pre: &Prepared, run: &mut Run) -> Result<()> {
    let exp =
        StabilityExperiment::new(pre.op.clone(), pre.observation.clone(), pre.cfg.time.steps)?;
    let cases = cases(pre)?;
    let records = exp.sweep(&cases)?;
    let rows: Vec<Vec<f64>> = records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let degenerate = if r.degenerate { 1.0 } else { 0.0 };
            vec![
                k as f64,
                r.numerator,
                r.final_term,
                r.trace_term,
                r.ratio,
                degenerate,
            ]
        })
        .collect();
    run.csv(
        "stability.csv",
        &[
            "case",
            "numerator",
            "final_term",
            "trace_term",
            "ratio",
            "degenerate",
        ],
        &rows,
    )?;
    let c_gamma = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    run.value("cases", records.len());
    run.value("c_gamma", c_gamma);
    run.check_true("ratios_finite", records.iter().all(|r| r.ratio.is_finite()));
    Ok(())
}

fn lipschitz(pre: &Prepared, run: &mut Run) -> Result<()> {
    let exp =
        StabilityExperiment::new(pre.op.clone(), pre.observation.clone(), pre.cfg.time.steps)?;
    let eps = &pre.cfg.sweep.epsilons;
    let cases = cases(pre)?;
    let sweeps: Vec<Vec<f64>> = cases
        .par_iter()
        .map(|c| {
            Ok(exp
                .lipschitz_sweep(c, eps)?
                .iter()
                .map(|r| r.ratio)
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut worst = 1.0f64;
    for (k, ratios) in sweeps.iter().enumerate() {
        for (e, r) in eps.iter().zip(ratios) {
            rows.push(vec![k as f64, *e, *r]);
        }
        let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.max(if lo > 0.0 { hi / lo } else { f64::INFINITY });
    }
    run.csv("lipschitz.csv", &["case", "epsilon", "ratio"], &rows)?;
    run.value("max_spread", worst);
    run.check_below(
        "lipschitz_spread",
        worst,
        pre.cfg.tolerances.lipschitz_spread,
    );
    Ok(())
}

fn carleman_check(pre: &Prepared, run: &mut Run) -> Result<()> {
    let cfg = &pre.cfg;
    let (horizon, steps) = (cfg.time.horizon, cfg.time.steps);
    let c = &cfg.carleman;
    let w = build_weight(&pre.grid, &pre.gamma0, c.lambda, horizon)?;
    let dt = horizon / steps as f64;
    let mut signs = true;
    for n in 1..steps {
        for k in 0..pre.grid.len() {
            let (alpha, phi) = weight_alpha_phi(&w, n as f64 * dt, k)?;
            signs &= alpha < 0.0 && phi > 0.0;
        }
    }
    let taus = default_tau_grid(c.tau0);
    let adm = &cfg.admissible;
    let reports = (0..c.samples as u64)
        .into_par_iter()
        .map(|k| {
            let seed = cfg.seed.wrapping_add(2 * k);
            let p = sample_potential(seed, adm.gamma1, adm.potential_bound, &pre.grid)?.field;
            let a =
                sample_initial(seed + 1, adm.gamma2, adm.initial_bound, adm.floor, &pre.op)?.field;
            let z = sample_cutoff_solution(&pre.op, &p, &a, horizon, steps, c.margin)?;
            carleman_ratio(&w, &pre.op, &p, &z, &taus)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (k, r) in reports.iter().enumerate() {
        for j in 0..r.tau_grid.len() {
            rows.push(vec![
                k as f64,
                r.tau_grid[j],
                r.lhs[j],
                r.rhs[j],
                r.ratios[j],
                r.log_scale[j],
            ]);
        }
    }
    run.csv(
        "carleman.csv",
        &["sample", "tau", "lhs", "rhs", "ratio", "log_scale"],
        &rows,
    )?;
    let max_ratio = reports.iter().map(|r| r.max_ratio()).fold(0.0, f64::max);
    run.value("max_ratio", max_ratio);
    run.check_true("weight_conditions", w.satisfies_conditions(&pre.grid));
    run.check_true("weight_signs", signs);
    run.check_true(
        "ratios_finite",
        reports
            .iter()
            .all(|r| r.ratios.iter().all(|x| x.is_finite())),
    );
    Ok(())
}

fn recover_delta(pre: &Prepared, run: &mut Run) -> Result<()> {
    let t = &pre.cfg.time;
    let up = solve_parabolic(&pre.op, &pre.p, &pre.a, t.horizon, t.steps)?;
    let uq = solve_parabolic(&pre.op, &pre.q, &pre.a, t.horizon, t.steps)?;
    let window = uq.tail(t.window)?;
    let delta = recover_difference(&pre.op, &pre.p, &window, &up)?;
    let truth = gap(&pre.q, &pre.p);
    run.field("delta", &pre.grid, &delta)?;
    let err = gap(&delta, &truth);
    let rel = relative(l2(&pre.grid, &err), l2(&pre.grid, &truth));
    run.value("window", t.window);
    run.value("positivity_floor", positivity_floor(&window));
    run.value("max_abs_error", sup(&err));
    run.value("relative_l2_error", rel);
    run.check_below("delta_relative_l2_error", rel, pre.cfg.tolerances.delta);
    Ok(())
}
