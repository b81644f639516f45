//! Crank–Nicolson solver for `u_t = A u - p u (+ mu(t) f)` with zero
//! conormal flux, plus trajectories, boundary traces and the positivity check.
//!
//! The implicit matrix is factored once and reused for every step; the
//! operator does not depend on time.

use crate::coefficients::flux_tolerance;
use crate::error::{Error, Result};
use crate::linalg::{BandedLu, CsrMatrix};
use crate::mesh::{conormal_flux, EllipticOperator, Face, Grid, SubboundarySpec};
use crate::spectra::diff_uniform;

/// Uniformly sampled time history of a grid field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTrajectory {
    grid: Grid,
    t0: f64,
    dt: f64,
    snapshots: Vec<Vec<f64>>,
}

impl ScalarTrajectory {
    pub fn new(grid: Grid, t0: f64, dt: f64, snapshots: Vec<Vec<f64>>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::AxisMismatch(
                "trajectory needs at least one snapshot".into(),
            ));
        }
        if !(dt > 0.0) {
            return Err(Error::AxisMismatch(format!(
                "time step {dt} must be positive"
            )));
        }
        for s in &snapshots {
            grid.check_field(s)?;
        }
        Ok(Self {
            grid,
            t0,
            dt,
            snapshots,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.time(n)).collect()
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

    pub fn final_snapshot(&self) -> &[f64] {
        self.snapshots.last().expect("nonempty")
    }

    /// Time series of one node.
    pub fn series(&self, node: usize) -> Vec<f64> {
        self.snapshots.iter().map(|s| s[node]).collect()
    }

    /// The last `count` snapshots as a trajectory of their own.
    pub fn tail(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::AxisMismatch(format!(
                "tail of {count} from {} snapshots",
                self.len()
            )));
        }
        let start = self.len() - count;
        Self::new(
            self.grid.clone(),
            self.time(start),
            self.dt,
            self.snapshots[start..].to_vec(),
        )
    }

    /// Snapshot `n` of `self - other`.
    pub fn difference(&self, other: &Self) -> Result<Self> {
        self.check_same_axis(other)?;
        let snaps = self
            .snapshots
            .iter()
            .zip(&other.snapshots)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        Self::new(self.grid.clone(), self.t0, self.dt, snaps)
    }

    pub fn map(&self, f: impl Fn(f64, &[f64]) -> Vec<f64>) -> Result<Self> {
        let snaps = (0..self.len())
            .map(|n| f(self.time(n), &self.snapshots[n]))
            .collect();
        Self::new(self.grid.clone(), self.t0, self.dt, snaps)
    }

    pub fn check_same_axis(&self, other: &Self) -> Result<()> {
        if self.len() != other.len()
            || (self.dt - other.dt).abs() > 1e-14 * self.dt
            || self.grid != other.grid
        {
            return Err(Error::AxisMismatch(
                "trajectories live on different axes or grids".into(),
            ));
        }
        Ok(())
    }

    /// Largest one-sided conormal flux over all snapshots and faces, and the
    /// largest resolution-aware tolerance it was compared against.
    pub fn neumann_defect(&self, op: &EllipticOperator) -> Result<(f64, f64)> {
        let mut worst = 0.0f64;
        let mut tol = 0.0f64;
        for s in &self.snapshots {
            tol = tol.max(flux_tolerance(&self.grid, s));
            for face in self.grid.faces() {
                let f = conormal_flux(op, s, face)?;
                worst = f.values.iter().fold(worst, |m, x| m.max(x.abs()));
            }
        }
        Ok((worst, tol))
    }

    /// Time derivative of every snapshot by second-order differences.
    pub fn time_derivative(&self) -> Result<Self> {
        if self.len() < 3 {
            return Err(Error::AxisMismatch(
                "need three snapshots to differentiate".into(),
            ));
        }
        let n = self.grid.len();
        let mut out = vec![vec![0.0; n]; self.len()];
        for k in 0..n {
            let d = diff_uniform(&self.series(k), self.dt);
            for (t, v) in d.into_iter().enumerate() {
                out[t][k] = v;
            }
        }
        Self::new(self.grid.clone(), self.t0, self.dt, out)
    }
}

/// Time profile `mu(t)` of a separable source `mu(t) f(x)`, with its derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceProfile {
    dt: f64,
    mu: Vec<f64>,
    dmu: Vec<f64>,
}

impl SourceProfile {
    /// Samples `mu` and its derivative on `steps + 1` nodes of `[0, horizon]`.
    pub fn from_fn(
        horizon: f64,
        steps: usize,
        mu: impl Fn(f64) -> f64,
        dmu: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let dt = step_size(horizon, steps)?;
        let t = |n: usize| n as f64 * dt;
        Ok(Self {
            dt,
            mu: (0..=steps).map(|n| mu(t(n))).collect(),
            dmu: (0..=steps).map(|n| dmu(t(n))).collect(),
        })
    }

    /// Builds a profile from samples, differentiating them numerically.
    pub fn from_samples(dt: f64, mu: Vec<f64>) -> Result<Self> {
        if mu.len() < 3 || !(dt > 0.0) {
            return Err(Error::AxisMismatch(
                "profile needs three samples and a positive step".into(),
            ));
        }
        let dmu = diff_uniform(&mu, dt);
        Ok(Self { dt, mu, dmu })
    }

    pub fn constant(horizon: f64, steps: usize, value: f64) -> Result<Self> {
        Self::from_fn(horizon, steps, |_| value, |_| 0.0)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn dmu(&self) -> &[f64] {
        &self.dmu
    }

    pub fn mu0(&self) -> f64 {
        self.mu[0]
    }

    /// Max gap between `dmu` and the difference quotient of `mu`.
    pub fn consistency_residual(&self) -> f64 {
        diff_uniform(&self.mu, self.dt)
            .iter()
            .zip(&self.dmu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check_axis(&self, dt: f64, len: usize) -> Result<()> {
        if self.len() != len || (self.dt - dt).abs() > 1e-12 * dt {
            return Err(Error::AxisMismatch(format!(
                "profile has {} samples at step {}, trajectory {} at step {}",
                self.len(),
                self.dt,
                len,
                dt
            )));
        }
        Ok(())
    }
}

fn step_size(horizon: f64, steps: usize) -> Result<f64> {
    if !(horizon > 0.0) || steps < 2 {
        return Err(Error::OutOfRange(format!(
            "need horizon > 0 and steps >= 2, got {horizon} and {steps}"
        )));
    }
    Ok(horizon / steps as f64)
}

struct CrankNicolson {
    lhs: BandedLu,
    rhs: CsrMatrix,
}

impl CrankNicolson {
    fn new(op: &EllipticOperator, p: &[f64], dt: f64) -> Result<Self> {
        let lhs_diag: Vec<f64> = p.iter().map(|q| 1.0 + 0.5 * dt * q).collect();
        let rhs_diag: Vec<f64> = p.iter().map(|q| 1.0 - 0.5 * dt * q).collect();
        let lhs = op.matrix().scale_add_diag(-0.5 * dt, &lhs_diag);
        let rhs = op.matrix().scale_add_diag(0.5 * dt, &rhs_diag);
        Ok(Self {
            lhs: BandedLu::factor(&lhs)?,
            rhs,
        })
    }

    fn step(&self, u: &[f64], forcing: Option<&[f64]>) -> Vec<f64> {
        let mut next = self.rhs.matvec(u);
        if let Some(f) = forcing {
            next.iter_mut().zip(f).for_each(|(x, g)| *x += g);
        }
        self.lhs.solve_in_place(&mut next);
        next
    }
}

/// Solves `u_t = A u - p u`, `u(0) = a` on `[0, horizon]` with `steps` steps.
pub fn solve_parabolic(
    op: &EllipticOperator,
    p: &[f64],
    a: &[f64],
    horizon: f64,
    steps: usize,
) -> Result<ScalarTrajectory> {
    let grid = op.grid();
    grid.check_field(p)?;
    grid.check_field(a)?;
    let dt = step_size(horizon, steps)?;
    let cn = CrankNicolson::new(op, p, dt)?;
    let mut snaps = Vec::with_capacity(steps + 1);
    snaps.push(a.to_vec());
    for n in 0..steps {
        let next = cn.step(&snaps[n], None);
        snaps.push(next);
    }
    ScalarTrajectory::new(grid.clone(), 0.0, dt, snaps)
}

/// Solves `y_t = A y - p y + mu(t) f`, `y(0) = 0`, with the trapezoidal
/// (time-centered) source average on each step.
pub fn solve_parabolic_source(
    op: &EllipticOperator,
    p: &[f64],
    f: &[f64],
    mu: &SourceProfile,
    horizon: f64,
    steps: usize,
) -> Result<ScalarTrajectory> {
    let grid = op.grid();
    grid.check_field(p)?;
    grid.check_field(f)?;
    let dt = step_size(horizon, steps)?;
    mu.check_axis(dt, steps + 1)?;
    let cn = CrankNicolson::new(op, p, dt)?;
    let mut snaps = Vec::with_capacity(steps + 1);
    snaps.push(vec![0.0; grid.len()]);
    let mut forcing = vec![0.0; grid.len()];
    for n in 0..steps {
        let m = 0.5 * dt * (mu.mu[n] + mu.mu[n + 1]);
        forcing.iter_mut().zip(f).for_each(|(g, fx)| *g = m * fx);
        let next = cn.step(&snaps[n], Some(&forcing));
        snaps.push(next);
    }
    ScalarTrajectory::new(grid.clone(), 0.0, dt, snaps)
}

/// Restriction of a trajectory to a union of faces over its whole time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub grid: Grid,
    pub faces: Vec<Face>,
    pub times: Vec<f64>,
    /// Union of the face nodes, ascending, without duplicates.
    pub nodes: Vec<usize>,
    /// `values[n][j]` is the value at `times[n]` and `nodes[j]`.
    pub values: Vec<Vec<f64>>,
}

impl BoundaryTrace {
    pub fn position(&self, node: usize) -> Option<usize> {
        self.nodes.binary_search(&node).ok()
    }

    pub fn time_step(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }
}

pub fn extract_trace(traj: &ScalarTrajectory, gamma: &SubboundarySpec) -> Result<BoundaryTrace> {
    let grid = traj.grid();
    let nodes = gamma.nodes(grid)?;
    let values = traj
        .snapshots
        .iter()
        .map(|s| nodes.iter().map(|&k| s[k]).collect())
        .collect();
    Ok(BoundaryTrace {
        grid: grid.clone(),
        faces: gamma.faces().to_vec(),
        times: traj.times(),
        nodes,
        values,
    })
}

/// Minimum of the final snapshot.
pub fn positivity_floor(traj: &ScalarTrajectory) -> f64 {
    traj.final_snapshot()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::integrate;
    use std::f64::consts::PI;

    #[test]
    fn spatially_constant_decay() {
        let g = Grid::unit_interval(21).unwrap();
        let op = EllipticOperator::laplacian(&g);
        let (p0, a0) = (1.3, 0.8);
        let u = solve_parabolic(&op, &[p0; 21], &[a0; 21], 1.0, 1000).unwrap();
        for n in 0..u.len() {
            let exact = a0 * (-p0 * u.time(n)).exp();
            assert!(u.snapshot(n).iter().all(|x| (x - exact).abs() <= 1e-6));
        }
    }

    #[test]
    fn eigenmode_decay() {
        let g = Grid::unit_interval(201).unwrap();
        let op = EllipticOperator::laplacian(&g);
        let a = g.sample(|x| (PI * x[0]).cos() + 2.0);
        let u = solve_parabolic(&op, &vec![0.0; 201], &a, 0.1, 2000).unwrap();
        let t = u.end();
        let exact = g.sample(|x| (-PI * PI * t).exp() * (PI * x[0]).cos() + 2.0);
        let err = u
            .final_snapshot()
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err / 3.0 <= 1e-3, "{err}");
    }

    #[test]
    fn constant_source_ode() {
        let g = Grid::unit_interval(11).unwrap();
        let op = EllipticOperator::laplacian(&g);
        let (p0, f0) = (2.0, 1.5);
        let mu = SourceProfile::constant(1.0, 1000, 1.0).unwrap();
        let y = solve_parabolic_source(&op, &[p0; 11], &[f0; 11], &mu, 1.0, 1000).unwrap();
        for n in 0..y.len() {
            let exact = f0 / p0 * (1.0 - (-p0 * y.time(n)).exp());
            assert!(y.snapshot(n).iter().all(|x| (x - exact).abs() <= 1e-6));
        }
        let zero = solve_parabolic_source(&op, &[p0; 11], &[0.0; 11], &mu, 1.0, 1000).unwrap();
        assert!(zero.snapshots().iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn single_mode_source() {
        let g = Grid::unit_interval(201).unwrap();
        let op = EllipticOperator::laplacian(&g);
        let f = g.sample(|x| (PI * x[0]).cos());
        let mu = SourceProfile::constant(0.2, 2000, 1.0).unwrap();
        let y = solve_parabolic_source(&op, &vec![0.0; 201], &f, &mu, 0.2, 2000).unwrap();
        let t = y.end();
        let exact: Vec<f64> = f
            .iter()
            .map(|c| (1.0 - (-PI * PI * t).exp()) * c / (PI * PI))
            .collect();
        let scale = exact.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let err = y
            .final_snapshot()
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err / scale <= 1e-3, "{}", err / scale);
    }

    #[test]
    fn mass_is_conserved_without_potential() {
        let g = Grid::unit_square(15).unwrap();
        let c = g.sample(|x| 1.0 + 0.5 * x[0] * x[1]);
        let op = EllipticOperator::isotropic(&g, &c).unwrap();
        let a = g.sample(|x| 1.0 + (PI * x[0]).cos() * (PI * x[1]).cos());
        let u = solve_parabolic(&op, &vec![0.0; g.len()], &a, 0.2, 100).unwrap();
        let m0 = integrate(&g, u.snapshot(0));
        for s in u.snapshots() {
            assert!((integrate(&g, s) - m0).abs() <= 1e-8 * m0.abs());
        }
    }

    #[test]
    fn semigroup_restart() {
        let g = Grid::unit_interval(41).unwrap();
        let op = EllipticOperator::laplacian(&g);
        let p = g.sample(|x| 0.5 + x[0]);
        let a = g.sample(|x| 2.0 + (PI * x[0]).cos());
        let full = solve_parabolic(&op, &p, &a, 0.4, 200).unwrap();
        let half = solve_parabolic(&op, &p, &a, 0.2, 100).unwrap();
        let rest = solve_parabolic(&op, &p, half.final_snapshot(), 0.2, 100).unwrap();
        let gap = full
            .final_snapshot()
            .iter()
            .zip(rest.final_snapshot())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-8);
    }

    #[test]
    fn traces_and_floor() {
        let g = Grid::unit_square(5).unwrap();
        let op = EllipticOperator::laplacian(&g);
        let u = solve_parabolic(&op, &[0.0; 25], &[1.0; 25], 1.0, 10).unwrap();
        let gamma = SubboundarySpec::new(&g, &[Face::LEFT, Face::TOP], None).unwrap();
        let tr = extract_trace(&u, &gamma).unwrap();
        assert_eq!(tr.nodes.len(), 9);
        assert!(tr.values.iter().flatten().all(|x| (x - 1.0).abs() < 1e-12));
        assert!((positivity_floor(&u) - 1.0).abs() < 1e-12);

        let g1 = Grid::unit_interval(101).unwrap();
        let op1 = EllipticOperator::laplacian(&g1);
        let a = g1.sample(|x| (PI * x[0]).cos());
        let u = solve_parabolic(&op1, &vec![0.0; 101], &a, 0.05, 500).unwrap();
        let right = SubboundarySpec::new(&g1, &[Face::RIGHT], None).unwrap();
        let tr = extract_trace(&u, &right).unwrap();
        for (n, row) in tr.values.iter().enumerate() {
            assert!((row[0] + (-PI * PI * tr.times[n]).exp()).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_comparison_floor() {
        let g = Grid::unit_interval(31).unwrap();
        let op = EllipticOperator::laplacian(&g);
        let (d0, m, t) = (0.5, 2.0, 1.0);
        let u = solve_parabolic(&op, &vec![m; 31], &vec![d0; 31], t, 1000).unwrap();
        assert!(positivity_floor(&u) >= d0 * (-m * t).exp() - 1e-6);
    }

    #[test]
    fn profile_consistency_and_mismatch() {
        let mu = SourceProfile::from_fn(
            1.0,
            400,
            |t| (2.0 * t).sin() + 1.0,
            |t| 2.0 * (2.0 * t).cos(),
        )
        .unwrap();
        assert!(mu.consistency_residual() < 4.0 * mu.dt() * mu.dt() * 8.0);
        let g = Grid::unit_interval(11).unwrap();
        let op = EllipticOperator::laplacian(&g);
        assert!(matches!(
            solve_parabolic_source(&op, &[0.0; 11], &[1.0; 11], &mu, 1.0, 200),
            Err(Error::AxisMismatch(_))
        ));
    }
}
