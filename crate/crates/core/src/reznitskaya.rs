//! The Gaussian-kernel transform
//! `u(t, x) = int_0^inf (pi t)^{-1/2} e^{-s^2 / 4t} w(s, x) ds`
//! taking wave solutions to heat solutions, with a certified truncation
//! point, and the moment transform used by the uniqueness argument.

use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::hyperbolic::{energy_envelope, solve_wave, WaveTrajectory};
use crate::mesh::{trapezoid_weights, EllipticOperator, Grid};
use crate::parabolic::ScalarTrajectory;

/// Default upper limit for the truncation ladder.
pub const DEFAULT_CAP: f64 = 160.0;

/// `(pi t)^{-1/2} e^{-s^2 / (4t)}`.
pub fn kernel(t: f64, s: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::OutOfRange(format!(
            "kernel time {t} must be positive"
        )));
    }
    Ok((-s * s / (4.0 * t)).exp() / (std::f64::consts::PI * t).sqrt())
}

fn ln_erfc(x: f64) -> f64 {
    if x < 25.0 {
        erfc(x).ln()
    } else {
        let x2 = x * x;
        -x2 - (x * std::f64::consts::PI.sqrt()).ln() + (1.0 - 0.5 / x2).ln()
    }
}

/// `max(c2, 1) e^{t c2^2} erfc((S - 2 t c2) / (2 sqrt t))`: the kernel tail
/// beyond `S` against the envelope `c2 e^{c2 s}`.
pub fn tail_bound(s_max: f64, t: f64, c2: f64) -> f64 {
    let x = (s_max - 2.0 * t * c2) / (2.0 * t.sqrt());
    (c2.max(1.0).ln() + t * c2 * c2 + ln_erfc(x)).exp()
}

/// Truncated quadrature plan for a list of heat times.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformPlan {
    pub t_targets: Vec<f64>,
    pub s_max: f64,
    pub tail_bound: f64,
    pub c2: f64,
    pub tol: f64,
}

impl TransformPlan {
    pub fn t_max(&self) -> f64 {
        self.t_targets.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest admissible heat time for wave step `ds`.
    pub fn t_min(ds: f64) -> f64 {
        4.0 * ds * ds
    }

    /// Quadrature nodes `0, ds, ..., s_max` for wave step `ds`.
    pub fn s_grid(&self, ds: f64) -> Vec<f64> {
        (0..=self.node_count(ds)).map(|n| n as f64 * ds).collect()
    }

    fn node_count(&self, ds: f64) -> usize {
        (self.s_max / ds - 1e-9).ceil() as usize
    }
}

/// Picks the smallest `S` on the ladder `5, 10, 20, ...` whose tail bound at
/// the largest target time is within `tol`.
pub fn plan_transform(t_targets: &[f64], c2: f64, tol: f64, cap: f64) -> Result<TransformPlan> {
    if t_targets.is_empty() || t_targets.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::OutOfRange(
            "transform targets must be nonempty and positive".into(),
        ));
    }
    if !(tol > 0.0) || !(c2 >= 0.0) {
        return Err(Error::OutOfRange(format!(
            "need tol > 0 and c2 >= 0, got {tol} and {c2}"
        )));
    }
    let t_max = t_targets.iter().copied().fold(0.0, f64::max);
    let mut s = 5.0;
    while s <= cap {
        let bound = tail_bound(s, t_max, c2);
        if bound <= tol {
            return Ok(TransformPlan {
                t_targets: t_targets.to_vec(),
                s_max: s,
                tail_bound: bound,
                c2,
                tol,
            });
        }
        s *= 2.0;
    }
    Err(Error::ToleranceUnreachable { tol, cap })
}

/// Heat-side values at the plan's target times.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedField {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl TransformedField {
    /// Reinterprets the samples as a trajectory when the times are uniform.
    pub fn into_trajectory(self) -> Result<ScalarTrajectory> {
        let n = self.times.len();
        if n < 2 {
            return Err(Error::AxisMismatch(
                "need two times for a trajectory".into(),
            ));
        }
        let dt = self.times[1] - self.times[0];
        for (k, t) in self.times.iter().enumerate() {
            if (t - self.times[0] - k as f64 * dt).abs() > 1e-9 * dt {
                return Err(Error::AxisMismatch(
                    "transform times are not uniform".into(),
                ));
            }
        }
        ScalarTrajectory::new(self.grid, self.times[0], dt, self.values)
    }
}

fn quadrature(t: f64, ds: f64, nodes: usize, sample: impl Fn(usize) -> f64) -> f64 {
    let w = trapezoid_weights(nodes, ds);
    let norm = 1.0 / (std::f64::consts::PI * t).sqrt();
    (0..nodes)
        .map(|n| w[n] * norm * (-(n as f64 * ds).powi(2) / (4.0 * t)).exp() * sample(n))
        .sum()
}

/// Kernel mass `sum_n w_n k(t, s_n)` over the plan's quadrature grid.
pub fn kernel_mass(plan: &TransformPlan, t: f64, ds: f64) -> f64 {
    quadrature(t, ds, plan.node_count(ds) + 1, |_| 1.0)
}

/// Trapezoid quadrature of `k(t, s) w(s, x)` over `[0, S_max]`, nodewise.
pub fn transform(traj: &WaveTrajectory, plan: &TransformPlan) -> Result<TransformedField> {
    let ds = traj.ds();
    let last = plan.node_count(ds);
    if last >= traj.len() {
        return Err(Error::AxisMismatch(format!(
            "wave trajectory ends at s = {:.4}, plan needs {}",
            traj.end(),
            plan.s_max
        )));
    }
    let t_min = TransformPlan::t_min(ds);
    if let Some(t) = plan.t_targets.iter().find(|t| **t < t_min) {
        return Err(Error::OutOfRange(format!(
            "target time {t} below the resolvable minimum {t_min:.3e}"
        )));
    }
    let n = traj.grid().len();
    let weights = trapezoid_weights(last + 1, ds);
    let values = plan
        .t_targets
        .par_iter()
        .map(|&t| {
            let norm = 1.0 / (std::f64::consts::PI * t).sqrt();
            let mut acc = vec![0.0; n];
            for m in 0..=last {
                let c = weights[m] * norm * (-(m as f64 * ds).powi(2) / (4.0 * t)).exp();
                if c == 0.0 {
                    continue;
                }
                acc.iter_mut()
                    .zip(traj.snapshot(m))
                    .for_each(|(a, w)| *a += c * w);
            }
            acc
        })
        .collect();
    Ok(TransformedField {
        grid: traj.grid().clone(),
        times: plan.t_targets.clone(),
        values,
    })
}

/// `int_0^S k(t, s) g(s) ds` for each `t`, with `g` sampled at `n ds`.
pub fn moment_transform(g: &[f64], ds: f64, t_list: &[f64]) -> Result<Vec<f64>> {
    if g.len() < 2 || !(ds > 0.0) {
        return Err(Error::OutOfRange(
            "moment transform needs two samples and a positive step".into(),
        ));
    }
    if t_list.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::OutOfRange("moment times must be positive".into()));
    }
    Ok(t_list
        .par_iter()
        .map(|&t| quadrature(t, ds, g.len(), |n| g[n]))
        .collect())
}

/// `count` geometrically spaced times from just above `t_min` up to 1.
pub fn moment_ladder(t_min: f64, count: usize) -> Vec<f64> {
    let lo = (2.0 * t_min).ln();
    let steps = count.max(2) - 1;
    (0..count)
        .map(|k| (lo + (0.0 - lo) * k as f64 / steps as f64).exp())
        .collect()
}

/// Outcome of running wave solve, envelope fit, planning and transform.
#[derive(Debug, Clone)]
pub struct Bridge {
    pub plan: TransformPlan,
    pub wave: WaveTrajectory,
    pub heat: TransformedField,
}

/// Runs the wave problem long enough for the planned truncation and
/// transforms it. The growth constant is refitted whenever the wave run is
/// extended, until the plan fits inside the run.
pub fn bridge_transform(
    op: &EllipticOperator,
    p: &[f64],
    u0: &[f64],
    t_targets: &[f64],
    tol: f64,
    cap: f64,
    ds: f64,
) -> Result<Bridge> {
    let mut horizon: f64 = 5.0;
    loop {
        let steps = (horizon / ds).ceil() as usize;
        let wave = solve_wave(op, p, u0, steps as f64 * ds, steps)?;
        let env = energy_envelope(&wave, op, p)?;
        let plan = plan_transform(t_targets, env.c2, tol, cap)?;
        if plan.s_max <= horizon {
            let heat = transform(&wave, &plan)?;
            return Ok(Bridge { plan, wave, heat });
        }
        horizon = plan.s_max;
    }
}
