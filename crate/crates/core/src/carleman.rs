//! Explicit Carleman weights for face-complement geometries and the
//! empirical ratio of the two sides of the weighted parabolic inequality.
//!
//! With `Gamma0` all faces but one, `psi` is the distance to the excluded
//! face along its normal axis. It is positive inside, zero on the excluded
//! face and has unit gradient.
//!
//! The weight `e^{2 tau alpha}` underflows quickly, so both integrals are
//! reported multiplied by `e^{-2 tau alpha_peak}`; the ratio is unaffected.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{EllipticOperator, Face, Grid, SubboundarySpec};
use crate::parabolic::{solve_parabolic, ScalarTrajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanWeights {
    pub psi: Vec<f64>,
    pub lambda: f64,
    pub horizon: f64,
    pub psi_max: f64,
    /// The face `psi` vanishes on.
    pub excluded: Face,
    /// Faces of `Gamma0`, also used as the observation boundary.
    pub gamma0: Vec<Face>,
}

/// Builds `psi` for `Gamma0` covering every face of the grid but one.
pub fn build_weight(
    grid: &Grid,
    gamma0: &SubboundarySpec,
    lambda: f64,
    horizon: f64,
) -> Result<CarlemanWeights> {
    if !(lambda > 0.0) || !(horizon > 0.0) {
        return Err(Error::OutOfRange(format!(
            "need lambda > 0 and T > 0, got {lambda} and {horizon}"
        )));
    }
    let missing: Vec<Face> = grid
        .faces()
        .into_iter()
        .filter(|f| !gamma0.faces().contains(f))
        .collect();
    if missing.len() != 1 {
        return Err(Error::OutOfRange(format!(
            "the complement of Gamma0 must be exactly one face, found {}",
            missing.len()
        )));
    }
    let excluded = missing[0];
    let (lo, hi) = grid.extent(excluded.axis);
    let psi: Vec<f64> = (0..grid.len())
        .map(|k| {
            let x = grid.x(k, excluded.axis);
            if excluded.normal_sign() < 0.0 {
                x - lo
            } else {
                hi - x
            }
        })
        .collect();
    let psi_max = psi.iter().copied().fold(0.0, f64::max);
    Ok(CarlemanWeights {
        psi,
        lambda,
        horizon,
        psi_max,
        excluded,
        gamma0: gamma0.faces().to_vec(),
    })
}

impl CarlemanWeights {
    /// Checks the three weight conditions on the grid: `psi > 0` off the
    /// boundary, `psi = 0` on the excluded face, `|grad psi| > 0` everywhere.
    pub fn satisfies_conditions(&self, grid: &Grid) -> bool {
        let on_excluded = grid.face_nodes(self.excluded).unwrap_or_default();
        let interior_ok = (0..grid.len())
            .filter(|&k| grid.owning_face(k).is_none())
            .all(|k| self.psi[k] > 0.0);
        let zero_ok = on_excluded.iter().all(|&k| self.psi[k] == 0.0);
        let grads: Vec<Vec<f64>> = (0..grid.dim()).map(|d| grid.diff(&self.psi, d)).collect();
        let grad_ok = (0..grid.len()).all(|k| grads.iter().map(|g| g[k] * g[k]).sum::<f64>() > 0.0);
        interior_ok && zero_ok && grad_ok
    }

    fn alpha_phi_at(&self, t: f64, psi: f64) -> (f64, f64) {
        let d = t * (self.horizon - t);
        let e = (self.lambda * psi).exp();
        ((e - (2.0 * self.lambda * self.psi_max).exp()) / d, e / d)
    }
}

/// `alpha = (e^{lambda psi} - e^{2 lambda |psi|}) / (t (T - t))` and
/// `phi = e^{lambda psi} / (t (T - t))` at one node.
pub fn weight_alpha_phi(w: &CarlemanWeights, t: f64, node: usize) -> Result<(f64, f64)> {
    if !(t > 0.0 && t < w.horizon) {
        return Err(Error::OutOfRange(format!(
            "time {t} outside (0, {})",
            w.horizon
        )));
    }
    let psi = *w
        .psi
        .get(node)
        .ok_or_else(|| Error::OutOfRange(format!("node {node} not on the grid")))?;
    Ok(w.alpha_phi_at(t, psi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarlemanReport {
    pub tau_grid: Vec<f64>,
    pub lambda: f64,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `2 tau alpha_peak` removed from both sides, per `tau`.
    pub log_scale: Vec<f64>,
}

impl CarlemanReport {
    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().copied().fold(0.0, f64::max)
    }
}

struct Densities {
    // per interior time node, per spatial node
    second_order: Vec<Vec<f64>>,
    grad: Vec<Vec<f64>>,
    value: Vec<Vec<f64>>,
    residual: Vec<Vec<f64>>,
    // per interior time node, per (face, face node)
    boundary_h1: Vec<Vec<f64>>,
    boundary_value: Vec<Vec<f64>>,
}

fn densities(
    op: &EllipticOperator,
    p: &[f64],
    z: &ScalarTrajectory,
    faces: &[(Vec<usize>, Vec<f64>)],
) -> Result<Densities> {
    let grid = op.grid();
    let dim = grid.dim();
    let zt = z.time_derivative()?;
    let interior: Vec<usize> = (1..z.len() - 1).collect();
    let rows: Vec<_> = interior
        .par_iter()
        .map(|&n| {
            let v = z.snapshot(n);
            let vt = zt.snapshot(n);
            let g: Vec<Vec<f64>> = (0..dim).map(|d| grid.diff(v, d)).collect();
            let grad: Vec<f64> = (0..grid.len())
                .map(|k| g.iter().map(|gd| gd[k] * gd[k]).sum())
                .collect();
            let mut hess = vec![0.0; grid.len()];
            for j in 0..dim {
                for k in 0..dim {
                    let hjk = grid.diff(&g[j], k);
                    hess.iter_mut().zip(&hjk).for_each(|(h, x)| *h += x * x);
                }
            }
            let av = op.matrix().matvec(v);
            let residual: Vec<f64> = (0..grid.len())
                .map(|k| (vt[k] - av[k] + p[k] * v[k]).powi(2))
                .collect();
            let q1: Vec<f64> = (0..grid.len()).map(|k| vt[k] * vt[k] + hess[k]).collect();
            let value: Vec<f64> = v.iter().map(|x| x * x).collect();
            let mut bh = Vec::new();
            let mut bv = Vec::new();
            for (nodes, _) in faces {
                for &k in nodes {
                    bh.push(grad[k] + vt[k] * vt[k]);
                    bv.push(value[k]);
                }
            }
            (q1, grad, value, residual, bh, bv)
        })
        .collect();
    let mut d = Densities {
        second_order: Vec::new(),
        grad: Vec::new(),
        value: Vec::new(),
        residual: Vec::new(),
        boundary_h1: Vec::new(),
        boundary_value: Vec::new(),
    };
    for (a, b, c, e, f, g) in rows {
        d.second_order.push(a);
        d.grad.push(b);
        d.value.push(c);
        d.residual.push(e);
        d.boundary_h1.push(f);
        d.boundary_value.push(g);
    }
    Ok(d)
}

/// Evaluates both sides of the weighted inequality for every `tau`.
///
/// Time integrals use the trapezoid rule with the two end nodes dropped,
/// where the weight vanishes; space integrals use the grid quadrature and,
/// on `Gamma = Gamma0`, the face quadrature.
pub fn carleman_ratio(
    w: &CarlemanWeights,
    op: &EllipticOperator,
    p: &[f64],
    z: &ScalarTrajectory,
    tau_grid: &[f64],
) -> Result<CarlemanReport> {
    let grid = op.grid();
    grid.check_field(p)?;
    grid.check_field(&w.psi)?;
    if z.grid() != grid {
        return Err(Error::InvalidGrid(
            "trajectory and operator live on different grids".into(),
        ));
    }
    if (z.end() - w.horizon).abs() > 1e-9 * w.horizon || z.start() != 0.0 {
        return Err(Error::AxisMismatch(format!(
            "trajectory spans [{}, {}], weights need [0, {}]",
            z.start(),
            z.end(),
            w.horizon
        )));
    }
    if tau_grid.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::OutOfRange("tau values must be positive".into()));
    }
    let faces: Vec<(Vec<usize>, Vec<f64>)> = w
        .gamma0
        .iter()
        .map(|&f| Ok((grid.face_nodes(f)?, grid.face_weights(f)?)))
        .collect::<Result<_>>()?;
    let dens = densities(op, p, z, &faces)?;
    let weights = op.weights();
    let dt = z.dt();
    let times: Vec<f64> = (1..z.len() - 1).map(|n| z.time(n)).collect();
    let boundary_psi: Vec<(f64, f64)> = faces
        .iter()
        .flat_map(|(nodes, fw)| nodes.iter().zip(fw).map(|(&k, &c)| (w.psi[k], c)))
        .collect();
    let alpha_peak = {
        let mid = times.iter().copied().min_by(|a, b| {
            (a - 0.5 * w.horizon)
                .abs()
                .total_cmp(&(b - 0.5 * w.horizon).abs())
        });
        mid.map(|t| w.alpha_phi_at(t, w.psi_max).0).unwrap_or(0.0)
    };
    let results: Vec<(f64, f64, f64)> = tau_grid
        .par_iter()
        .map(|&tau| {
            let shift = 2.0 * tau * alpha_peak;
            let (mut lhs, mut rhs) = (0.0, 0.0);
            for (i, &t) in times.iter().enumerate() {
                for k in 0..grid.len() {
                    let (alpha, phi) = w.alpha_phi_at(t, w.psi[k]);
                    let e = (2.0 * tau * alpha - shift).exp();
                    if e == 0.0 {
                        continue;
                    }
                    let tp = tau * phi;
                    lhs += dt
                        * weights[k]
                        * e
                        * (dens.second_order[i][k] / tp
                            + tp * dens.grad[i][k]
                            + tp.powi(3) * dens.value[i][k]);
                    rhs += dt * weights[k] * e * dens.residual[i][k];
                }
                for (j, &(psi, fw)) in boundary_psi.iter().enumerate() {
                    let (alpha, phi) = w.alpha_phi_at(t, psi);
                    let e = (2.0 * tau * alpha - shift).exp();
                    let tp = tau * phi;
                    rhs += dt
                        * fw
                        * e
                        * (tp * dens.boundary_h1[i][j] + tp.powi(3) * dens.boundary_value[i][j]);
                }
            }
            (lhs, rhs, shift)
        })
        .collect();
    let mut report = CarlemanReport {
        tau_grid: tau_grid.to_vec(),
        lambda: w.lambda,
        lhs: Vec::new(),
        rhs: Vec::new(),
        ratios: Vec::new(),
        log_scale: Vec::new(),
    };
    for (lhs, rhs, shift) in results {
        let ratio = if lhs == 0.0 && rhs == 0.0 {
            0.0
        } else {
            lhs / rhs
        };
        report.lhs.push(lhs);
        report.rhs.push(rhs);
        report.ratios.push(ratio);
        report.log_scale.push(shift);
    }
    Ok(report)
}

/// `tau0 * {1, 1.5, 2, 3, 4}`.
pub fn default_tau_grid(tau0: f64) -> Vec<f64> {
    [1.0, 1.5, 2.0, 3.0, 4.0].iter().map(|m| m * tau0).collect()
}

fn smooth_step(x: f64) -> f64 {
    let e = |y: f64| if y > 0.0 { (-1.0 / y).exp() } else { 0.0 };
    let (a, b) = (e(x), e(1.0 - x));
    a / (a + b)
}

/// `chi(t)`: zero on `[0, m T]` and `[(1 - m) T, T]`, one on
/// `[2 m T, (1 - 2m) T]`, smooth in between.
pub fn time_cutoff(t: f64, horizon: f64, margin: f64) -> f64 {
    let s = t / horizon;
    smooth_step((s - margin) / margin) * smooth_step((1.0 - margin - s) / margin)
}

/// `z = chi(t) u` with `u` solving the homogeneous equation from `a`.
/// `z` keeps the zero-flux condition and vanishes near both ends of `[0, T]`.
pub fn sample_cutoff_solution(
    op: &EllipticOperator,
    p: &[f64],
    a: &[f64],
    horizon: f64,
    steps: usize,
    margin: f64,
) -> Result<ScalarTrajectory> {
    if !(margin > 0.0 && margin < 0.25) {
        return Err(Error::OutOfRange(format!(
            "cutoff margin {margin} outside (0, 0.25)"
        )));
    }
    let u = solve_parabolic(op, p, a, horizon, steps)?;
    u.map(|t, s| {
        let c = time_cutoff(t, horizon, margin);
        s.iter().map(|x| c * x).collect()
    })
}
