//! The Volterra operator `(K v)(t) = mu(0) v(t) + int_0^t mu'(t - s) v(s) ds`,
//! its exact discrete inverse, the convolution `int_0^t mu(s) z(t - s) ds`,
//! and source recovery from an interior trajectory.
//!
//! All convolutions use the trapezoid rule on the trajectory's time axis, so
//! the discrete `K` is lower triangular with diagonal `mu(0) + dt mu'(0) / 2`
//! and forward substitution inverts it exactly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::EllipticOperator;
use crate::parabolic::{ScalarTrajectory, SourceProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct VolterraKernelized {
    profile: SourceProfile,
}

impl VolterraKernelized {
    /// Refuses `mu(0) = 0`, where `K` stops being of the second kind.
    pub fn new(profile: SourceProfile) -> Result<Self> {
        if profile.mu0() == 0.0 || !profile.mu0().is_finite() {
            return Err(Error::VanishingProfile(profile.mu0()));
        }
        Ok(Self { profile })
    }

    pub fn profile(&self) -> &SourceProfile {
        &self.profile
    }

    pub fn dt(&self) -> f64 {
        self.profile.dt()
    }

    pub fn len(&self) -> usize {
        self.profile.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profile.is_empty()
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.len() {
            return Err(Error::AxisMismatch(format!(
                "series has {} samples, kernel axis {}",
                v.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// History part `dt (mu'_n v_0 / 2 + sum_{m=1}^{n-1} mu'_{n-m} v_m)`.
    fn history(&self, v: &[f64], n: usize) -> f64 {
        let d = self.profile.dmu();
        let mut acc = 0.5 * d[n] * v[0];
        for m in 1..n {
            acc += d[n - m] * v[m];
        }
        self.dt() * acc
    }

    fn diagonal(&self) -> f64 {
        self.profile.mu0() + 0.5 * self.dt() * self.profile.dmu()[0]
    }

    pub fn apply_series(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        let mu0 = self.profile.mu0();
        let diag = self.diagonal();
        Ok((0..v.len())
            .map(|n| {
                if n == 0 {
                    mu0 * v[0]
                } else {
                    diag * v[n] + self.history(v, n)
                }
            })
            .collect())
    }

    pub fn invert_series(&self, g: &[f64]) -> Result<Vec<f64>> {
        self.check(g)?;
        let diag = self.diagonal();
        if diag == 0.0 {
            return Err(Error::Singular {
                row: 1,
                pivot: diag,
            });
        }
        let mut v = vec![0.0; g.len()];
        v[0] = g[0] / self.profile.mu0();
        for n in 1..g.len() {
            v[n] = (g[n] - self.history(&v, n)) / diag;
        }
        Ok(v)
    }

    /// `y_n = dt (mu_n z_0 / 2 + sum_{m=1}^{n-1} mu_{n-m} z_m + mu_0 z_n / 2)`.
    pub fn convolve_series(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z)?;
        let mu = self.profile.mu();
        let dt = self.dt();
        Ok((0..z.len())
            .map(|n| {
                if n == 0 {
                    return 0.0;
                }
                let mut acc = 0.5 * (mu[n] * z[0] + mu[0] * z[n]);
                for m in 1..n {
                    acc += mu[n - m] * z[m];
                }
                dt * acc
            })
            .collect())
    }

    fn check_trajectory(&self, v: &ScalarTrajectory) -> Result<()> {
        if v.len() != self.len() || (v.dt() - self.dt()).abs() > 1e-12 * self.dt() {
            return Err(Error::AxisMismatch(format!(
                "trajectory has {} snapshots at step {}, kernel {} at step {}",
                v.len(),
                v.dt(),
                self.len(),
                self.dt()
            )));
        }
        Ok(())
    }

    fn nodewise(
        &self,
        v: &ScalarTrajectory,
        f: impl Fn(&Self, &[f64]) -> Result<Vec<f64>> + Sync,
    ) -> Result<ScalarTrajectory> {
        self.check_trajectory(v)?;
        let nodes = v.grid().len();
        let columns = (0..nodes)
            .into_par_iter()
            .map(|k| f(self, &v.series(k)))
            .collect::<Result<Vec<_>>>()?;
        let snaps = (0..v.len())
            .map(|n| columns.iter().map(|c| c[n]).collect())
            .collect();
        ScalarTrajectory::new(v.grid().clone(), v.start(), v.dt(), snaps)
    }
}

pub fn apply_k(kern: &VolterraKernelized, v: &ScalarTrajectory) -> Result<ScalarTrajectory> {
    kern.nodewise(v, |k, s| k.apply_series(s))
}

pub fn invert_k(kern: &VolterraKernelized, g: &ScalarTrajectory) -> Result<ScalarTrajectory> {
    kern.nodewise(g, |k, s| k.invert_series(s))
}

pub fn convolution_reconstruct(
    kern: &VolterraKernelized,
    z: &ScalarTrajectory,
) -> Result<ScalarTrajectory> {
    kern.nodewise(z, |k, s| k.convolve_series(s))
}

/// Recovered source and the intermediate `z = K^{-1} y_t`.
#[derive(Debug, Clone)]
pub struct SourceRecovery {
    pub f: Vec<f64>,
    pub z: ScalarTrajectory,
}

/// `f = z(0)` with `z = K^{-1} y_t`, `y_t` by second-order differences.
pub fn recover_source(
    op: &EllipticOperator,
    p: &[f64],
    mu: &SourceProfile,
    y: &ScalarTrajectory,
) -> Result<SourceRecovery> {
    op.grid().check_field(p)?;
    if y.grid() != op.grid() {
        return Err(Error::InvalidGrid(
            "trajectory and operator live on different grids".into(),
        ));
    }
    let kern = VolterraKernelized::new(mu.clone())?;
    let scale = y
        .snapshots()
        .iter()
        .flatten()
        .fold(1.0f64, |m, x| m.max(x.abs()));
    let y0 = y.snapshot(0).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if y0 > 1e-12 * scale {
        return Err(Error::OutOfRange(format!(
            "initial snapshot must vanish, max |y(0)| = {y0:.3e}"
        )));
    }
    let yt = y.time_derivative()?;
    let z = invert_k(&kern, &yt)?;
    Ok(SourceRecovery {
        f: z.snapshot(0).to_vec(),
        z,
    })
}

/// Discrete `Z(t_n) = |(z_{n+1} - z_{n-1}) / 2dt - A z_n + p z_n|_{L^2}` on
/// interior time nodes, the largest value, and the longest prefix window
/// on which `Z` stays below a tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max: f64,
}

impl ResidualReport {
    /// Largest `t*` such that `Z <= tol` at every interior node up to `t*`;
    /// zero when the first interior node already fails.
    pub fn prefix_window(&self, tol: f64) -> f64 {
        let mut window = 0.0;
        for (t, r) in self.times.iter().zip(&self.residuals) {
            if *r > tol {
                break;
            }
            window = *t;
        }
        window
    }
}

pub fn residual_profile(
    op: &EllipticOperator,
    p: &[f64],
    z: &ScalarTrajectory,
) -> Result<ResidualReport> {
    op.grid().check_field(p)?;
    if z.len() < 3 {
        return Err(Error::AxisMismatch("residual needs three snapshots".into()));
    }
    let w = op.weights();
    let dt = z.dt();
    let (times, residuals): (Vec<f64>, Vec<f64>) = (1..z.len() - 1)
        .into_par_iter()
        .map(|n| {
            let az = op.matrix().matvec(z.snapshot(n));
            let r: f64 = (0..w.len())
                .map(|k| {
                    let zt = (z.snapshot(n + 1)[k] - z.snapshot(n - 1)[k]) / (2.0 * dt);
                    let e = zt - az[k] + p[k] * z.snapshot(n)[k];
                    w[k] * e * e
                })
                .sum();
            (z.time(n), r.sqrt())
        })
        .unzip();
    let max = residuals.iter().copied().fold(0.0, f64::max);
    Ok(ResidualReport {
        times,
        residuals,
        max,
    })
}

/// Max over interior time nodes of `|z_t - A z + p z|_{L^2}`.
pub fn residual_check(op: &EllipticOperator, p: &[f64], z: &ScalarTrajectory) -> Result<f64> {
    Ok(residual_profile(op, p, z)?.max)
}
