//! End-to-end checks that chain several modules.

use parinv::carleman::{build_weight, weight_alpha_phi};
use parinv::coefficients::{sample_initial, sample_potential};
use parinv::hyperbolic::{max_stable_step, solve_wave};
use parinv::inverse::{CaseParams, StabilityCase, StabilityExperiment};
use parinv::mesh::integrate;
use parinv::parabolic::{positivity_floor, solve_parabolic, solve_parabolic_source, SourceProfile};
use parinv::reznitskaya::{bridge_transform, moment_ladder, moment_transform, DEFAULT_CAP};
use parinv::volterra::{recover_source, residual_check};
use parinv::{EllipticOperator, Face, Grid, SubboundarySpec};

fn l2(grid: &Grid, v: &[f64]) -> f64 {
    integrate(grid, &v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt()
}

fn variable_profile(horizon: f64, steps: usize) -> SourceProfile {
    SourceProfile::from_fn(horizon, steps, |t| 1.0 + 0.5 * t, |_| 0.5).unwrap()
}

fn bump_source(grid: &Grid) -> Vec<f64> {
    grid.sample(|x| {
        (-20.0 * (x[0] - 0.4).powi(2)).exp() + 0.3 * (std::f64::consts::PI * x[0]).cos()
    })
}

#[test]
fn recovered_z_solves_the_homogeneous_problem() {
    let g = Grid::unit_interval(101).unwrap();
    let op = EllipticOperator::laplacian(&g);
    let p = sample_potential(3, 0.5, 2.0, &g).unwrap().field;
    let f = bump_source(&g);
    let mu = variable_profile(0.5, 1000);
    let y = solve_parabolic_source(&op, &p, &f, &mu, 0.5, 1000).unwrap();
    let rec = recover_source(&op, &p, &mu, &y).unwrap();
    let baseline =
        residual_check(&op, &p, &solve_parabolic(&op, &p, &f, 0.5, 1000).unwrap()).unwrap();
    let got = residual_check(&op, &p, &rec.z).unwrap();
    assert!(
        got <= 10.0 * baseline + 1e-10,
        "recovered {got:.3e} vs baseline {baseline:.3e}"
    );
}

#[test]
fn recovery_is_a_fixed_point() {
    let g = Grid::unit_interval(81).unwrap();
    let op = EllipticOperator::laplacian(&g);
    let p = sample_potential(11, 0.5, 2.0, &g).unwrap().field;
    let mu = variable_profile(0.4, 800);
    let y = solve_parabolic_source(&op, &p, &bump_source(&g), &mu, 0.4, 800).unwrap();
    let f1 = recover_source(&op, &p, &mu, &y).unwrap().f;
    let y2 = solve_parabolic_source(&op, &p, &f1, &mu, 0.4, 800).unwrap();
    let f2 = recover_source(&op, &p, &mu, &y2).unwrap().f;
    let scale = l2(&g, &f1);
    let gap: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a - b).collect();
    assert!(l2(&g, &gap) <= 1e-3 * scale);
}

#[test]
fn recovered_source_matches_initial_slope() {
    let g = Grid::unit_interval(101).unwrap();
    let op = EllipticOperator::laplacian(&g);
    let p = vec![0.5; 101];
    let mu = variable_profile(0.5, 2000);
    let y = solve_parabolic_source(&op, &p, &bump_source(&g), &mu, 0.5, 2000).unwrap();
    let f = recover_source(&op, &p, &mu, &y).unwrap().f;
    // third-order one-sided difference, independent of the recovery stencil
    let dt = y.dt();
    let slope: Vec<f64> = (0..g.len())
        .map(|k| {
            let s = |n: usize| y.snapshot(n)[k];
            (-11.0 * s(0) + 18.0 * s(1) - 9.0 * s(2) + 2.0 * s(3)) / (6.0 * dt) / mu.mu0()
        })
        .collect();
    let gap: Vec<f64> = f.iter().zip(&slope).map(|(a, b)| a - b).collect();
    assert!(l2(&g, &gap) <= 1e-3 * l2(&g, &slope));
}

#[test]
fn moments_separate_distinct_potentials() {
    let g = Grid::unit_interval(101).unwrap();
    let op = EllipticOperator::laplacian(&g);
    let u0 = g.sample(|x| 2.0 + (std::f64::consts::PI * x[0]).cos());
    let p = vec![0.0; 101];
    let q = g.sample(|x| 1.0 + 0.5 * x[0]);
    let ds = 0.8 * max_stable_step(&op, &q);
    let steps = (20.0 / ds).ceil() as usize;
    let wp = solve_wave(&op, &p, &u0, steps as f64 * ds, steps).unwrap();
    let wq = solve_wave(&op, &q, &u0, steps as f64 * ds, steps).unwrap();
    let node = g.len() - 1;
    let diff: Vec<f64> = wp
        .series(node)
        .iter()
        .zip(wq.series(node))
        .map(|(a, b)| a - b)
        .collect();
    let ts = moment_ladder(4.0 * ds * ds, 8);
    let m = moment_transform(&diff, ds, &ts).unwrap();
    let tol = 1e-8;
    assert!(m.iter().any(|x| x.abs() > 10.0 * tol), "moments {m:?}");
}

#[test]
fn bridge_recovers_initial_data_as_time_shrinks() {
    let g = Grid::unit_interval(101).unwrap();
    let op = EllipticOperator::laplacian(&g);
    let p = vec![1.0; 101];
    let u0 = g.sample(|x| 1.5 + (std::f64::consts::PI * x[0]).cos());
    let ds = 0.8 * max_stable_step(&op, &p);
    let targets = [0.2, 0.1, 0.05, 0.02];
    let b = bridge_transform(&op, &p, &u0, &targets, 1e-8, DEFAULT_CAP, ds).unwrap();
    let errs: Vec<f64> = b
        .heat
        .values
        .iter()
        .map(|v| {
            l2(
                &g,
                &v.iter().zip(&u0).map(|(a, c)| a - c).collect::<Vec<_>>(),
            )
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "errors {errs:?}");
}

#[test]
fn carleman_weight_vanishes_at_time_ends() {
    let g = Grid::unit_square(11).unwrap();
    let gamma0 = SubboundarySpec::new(&g, &[Face::LEFT, Face::BOTTOM, Face::TOP], None).unwrap();
    let horizon = 1.0;
    let w = build_weight(&g, &gamma0, 1.0, horizon).unwrap();
    let dt = horizon / 200.0;
    let alpha_peak = (0..g.len())
        .map(|k| weight_alpha_phi(&w, 0.5 * horizon, k).unwrap().0)
        .fold(f64::NEG_INFINITY, f64::max);
    let density = |t: f64, tau: f64| {
        (0..g.len())
            .map(|k| {
                let (a, f) = weight_alpha_phi(&w, t, k).unwrap();
                (tau * f).powi(3) * (2.0 * tau * (a - alpha_peak)).exp()
            })
            .fold(0.0, f64::max)
    };
    for tau in [1.0, 2.0, 4.0] {
        let peak = density(0.5 * horizon, tau);
        assert!(density(dt, tau) <= 1e-12 * peak);
        assert!(density(horizon - dt, tau) <= 1e-12 * peak);
    }
}

#[test]
fn admissible_data_stay_positive() {
    let g = Grid::unit_interval(41).unwrap();
    let op = EllipticOperator::laplacian(&g);
    for seed in 0..50 {
        let p = sample_potential(seed, 0.5, 2.0, &g).unwrap().field;
        let a = sample_initial(seed + 1000, 0.5, 4.0, 0.5, &op)
            .unwrap()
            .field;
        let u = solve_parabolic(&op, &p, &a, 1.0, 200).unwrap();
        assert!(positivity_floor(&u) > 0.0, "seed {seed}");
    }
}

#[test]
fn sweeps_are_deterministic() {
    let g = Grid::unit_interval(31).unwrap();
    let op = EllipticOperator::laplacian(&g);
    let right = SubboundarySpec::new(&g, &[Face::RIGHT], None).unwrap();
    let exp = StabilityExperiment::new(op.clone(), right, 80).unwrap();
    let cases: Vec<StabilityCase> = (0..6)
        .map(|s| StabilityCase::sample(s, &op, &CaseParams::default()).unwrap())
        .collect();
    let a = exp.sweep(&cases).unwrap();
    let b = exp.sweep(&cases).unwrap();
    assert_eq!(a, b);
}
