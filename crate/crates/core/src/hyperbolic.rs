//! Leapfrog solver for the companion wave problem
//! `w_ss = A w - p w`, `w(0) = u0`, `w_s(0) = 0`, with zero conormal flux,
//! and the energy envelope `C2 e^{C2 s}` that controls truncation of the
//! Gaussian-kernel transform.

use crate::error::{Error, Result};
use crate::mesh::{EllipticOperator, Grid};

/// Largest admissible CFL number.
pub const CFL_LIMIT: f64 = 0.9;

/// Wave solution and velocity sampled on a uniform axis `s_n = n ds`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveTrajectory {
    grid: Grid,
    ds: f64,
    cfl: f64,
    snapshots: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
}

impl WaveTrajectory {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    pub fn cfl(&self) -> f64 {
        self.cfl
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.ds
    }

    pub fn end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    pub fn snapshot(&self, n: usize) -> &[f64] {
        &self.snapshots[n]
    }

    pub fn snapshots(&self) -> &[Vec<f64>] {
        &self.snapshots
    }

    pub fn velocity(&self, n: usize) -> &[f64] {
        &self.velocities[n]
    }

    pub fn velocities(&self) -> &[Vec<f64>] {
        &self.velocities
    }

    /// Time series of one node.
    pub fn series(&self, node: usize) -> Vec<f64> {
        self.snapshots.iter().map(|s| s[node]).collect()
    }
}

/// `(ds / 2) sqrt(rho)` where `rho` is the Gershgorin bound of `-A_h + p+`.
/// For the 1D Laplacian this is `c ds / h`.
pub fn cfl_number(op: &EllipticOperator, p: &[f64], ds: f64) -> f64 {
    let m = op.matrix();
    let rho = (0..m.dim())
        .map(|i| m.row(i).map(|(_, v)| v.abs()).sum::<f64>() + p[i].max(0.0))
        .fold(0.0, f64::max);
    0.5 * ds * rho.sqrt()
}

/// Largest step count-free time step respecting [`CFL_LIMIT`].
pub fn max_stable_step(op: &EllipticOperator, p: &[f64]) -> f64 {
    CFL_LIMIT / cfl_number(op, p, 1.0)
}

fn apply_l(op: &EllipticOperator, p: &[f64], w: &[f64], out: &mut [f64]) {
    op.matrix().matvec_into(w, out);
    out.iter_mut()
        .zip(p.iter().zip(w))
        .for_each(|(o, (q, x))| *o -= q * x);
}

/// Leapfrog with initial velocity `v0`: `w1 = w0 + ds v0 + ds^2/2 L w0`,
/// then `w_{n+1} = 2 w_n - w_{n-1} + ds^2 L w_n`.
pub fn solve_wave_with_velocity(
    op: &EllipticOperator,
    p: &[f64],
    u0: &[f64],
    v0: &[f64],
    s_max: f64,
    steps: usize,
) -> Result<WaveTrajectory> {
    let grid = op.grid();
    grid.check_field(p)?;
    grid.check_field(u0)?;
    grid.check_field(v0)?;
    if op.has_drift() {
        return Err(Error::InvalidOperator(
            "the wave solver does not accept drift terms".into(),
        ));
    }
    if !(s_max > 0.0) || steps < 2 {
        return Err(Error::OutOfRange(format!(
            "need s_max > 0 and steps >= 2, got {s_max} and {steps}"
        )));
    }
    let ds = s_max / steps as f64;
    let cfl = cfl_number(op, p, ds);
    if cfl > CFL_LIMIT {
        return Err(Error::Cfl {
            cfl,
            limit: CFL_LIMIT,
        });
    }
    let n = grid.len();
    let ds2 = ds * ds;
    let mut lw = vec![0.0; n];
    // one extra level so the last velocity is centered too
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(steps + 2);
    levels.push(u0.to_vec());
    apply_l(op, p, u0, &mut lw);
    levels.push(
        (0..n)
            .map(|k| u0[k] + ds * v0[k] + 0.5 * ds2 * lw[k])
            .collect(),
    );
    for m in 1..=steps {
        apply_l(op, p, &levels[m], &mut lw);
        let next = (0..n)
            .map(|k| 2.0 * levels[m][k] - levels[m - 1][k] + ds2 * lw[k])
            .collect();
        levels.push(next);
    }
    let mut velocities = Vec::with_capacity(steps + 1);
    velocities.push(v0.to_vec());
    for m in 1..=steps {
        velocities.push(
            (0..n)
                .map(|k| (levels[m + 1][k] - levels[m - 1][k]) / (2.0 * ds))
                .collect(),
        );
    }
    levels.truncate(steps + 1);
    Ok(WaveTrajectory {
        grid: grid.clone(),
        ds,
        cfl,
        snapshots: levels,
        velocities,
    })
}

/// Solves the wave problem from rest on `[0, s_max]`.
pub fn solve_wave(
    op: &EllipticOperator,
    p: &[f64],
    u0: &[f64],
    s_max: f64,
    steps: usize,
) -> Result<WaveTrajectory> {
    solve_wave_with_velocity(op, p, u0, &vec![0.0; u0.len()], s_max, steps)
}

/// Energy samples and the fitted growth constant.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyEnvelope {
    pub c2: f64,
    /// `E(s_n) = |w_s|^2 + a(grad w, grad w) + int max(p, 0) w^2`.
    pub samples: Vec<f64>,
    /// `|w(s_n)|^2` in `L^2`, the other half of the `H^1` amplitude.
    pub mass: Vec<f64>,
}

impl EnergyEnvelope {
    /// `(max E - min E) / max E`, zero for the zero trajectory.
    pub fn relative_drift(&self) -> f64 {
        let hi = self
            .samples
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let lo = self.samples.iter().copied().fold(f64::INFINITY, f64::min);
        if hi > 0.0 {
            (hi - lo) / hi
        } else {
            0.0
        }
    }

    /// Whether `sqrt(E(s_n)) <= c2 e^{c2 s_n}` holds at every sample.
    pub fn holds(&self, ds: f64) -> bool {
        self.samples
            .iter()
            .enumerate()
            .all(|(n, e)| e.sqrt() <= self.c2 * (self.c2 * n as f64 * ds).exp())
    }
}

fn weighted_square(w: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(v).map(|(a, b)| a * b * b).sum()
}

/// Discrete energy of one level.
pub fn energy(op: &EllipticOperator, p: &[f64], w: &[f64], v: &[f64]) -> f64 {
    let weights = op.weights();
    let pot: f64 = weights
        .iter()
        .zip(p.iter().zip(w))
        .map(|(a, (q, x))| a * q.max(0.0) * x * x)
        .sum();
    weighted_square(weights, v) + op.energy_form(w, w) + pot
}

/// Fits the smallest `c2` with `1.1 sqrt(E + |w|^2) <= c2 e^{c2 s}` at every
/// sample, by bisection. The fitted amplitude includes `|w|^2` so the
/// envelope bounds the full `H^1` norm.
pub fn energy_envelope(
    traj: &WaveTrajectory,
    op: &EllipticOperator,
    p: &[f64],
) -> Result<EnergyEnvelope> {
    op.grid().check_field(p)?;
    if op.grid() != traj.grid() {
        return Err(Error::InvalidGrid(
            "trajectory and operator live on different grids".into(),
        ));
    }
    let samples: Vec<f64> = (0..traj.len())
        .map(|n| energy(op, p, traj.snapshot(n), traj.velocity(n)))
        .collect();
    let mass: Vec<f64> = traj
        .snapshots
        .iter()
        .map(|w| weighted_square(op.weights(), w))
        .collect();
    let target: Vec<f64> = samples
        .iter()
        .zip(&mass)
        .map(|(e, m)| 1.1 * (e + m).sqrt())
        .collect();
    let ok = |c: f64| {
        target
            .iter()
            .enumerate()
            .all(|(n, a)| *a <= c * (c * traj.time(n)).exp())
    };
    let c2 = if target.iter().all(|a| *a == 0.0) {
        0.0
    } else {
        let mut hi = 1.0;
        while !ok(hi) {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        hi
    };
    Ok(EnergyEnvelope { c2, samples, mass })
}
