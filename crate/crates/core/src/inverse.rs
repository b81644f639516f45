//! Stability-ratio experiments for recovering the potential from final-time
//! data plus a boundary trace, and a direct recovery of `q - p` from an
//! interior window of trajectories near the final time.

use rayon::prelude::*;

use crate::coefficients::{
    sample_initial, sample_potential, AdmissibleInitial, AdmissiblePotential,
};
use crate::error::{Error, Result};
use crate::mesh::{EllipticOperator, SubboundarySpec};
use crate::parabolic::{extract_trace, positivity_floor, solve_parabolic, ScalarTrajectory};
use crate::spectra::{sobolev_norm, trace_h1_norm, NeumannSpectrum, SobolevIndex};

/// Two coefficient/initial pairs compared by one stability experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCase {
    pub p: AdmissiblePotential,
    pub q: AdmissiblePotential,
    pub a: AdmissibleInitial,
    pub b: AdmissibleInitial,
    pub gamma: f64,
    pub horizon: f64,
    pub seeds: Vec<u64>,
}

/// Bounds used when drawing random cases.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseParams {
    pub gamma1: f64,
    pub gamma2: f64,
    pub potential_bound: f64,
    pub initial_bound: f64,
    pub floor: f64,
    pub horizon: f64,
    /// Sobolev index; `None` means `0.9 min(gamma1, gamma2)`.
    pub gamma: Option<f64>,
}

impl Default for CaseParams {
    fn default() -> Self {
        Self {
            gamma1: 0.5,
            gamma2: 0.5,
            potential_bound: 2.0,
            initial_bound: 4.0,
            floor: 0.5,
            horizon: 1.0,
            gamma: None,
        }
    }
}

impl CaseParams {
    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(0.9 * self.gamma1.min(self.gamma2))
    }
}

impl StabilityCase {
    pub fn new(
        p: AdmissiblePotential,
        q: AdmissiblePotential,
        a: AdmissibleInitial,
        b: AdmissibleInitial,
        gamma: f64,
        horizon: f64,
    ) -> Result<Self> {
        let limit = p.gamma1.min(q.gamma1).min(a.gamma2).min(b.gamma2);
        if !(gamma > 0.0 && gamma < limit) {
            return Err(Error::OutOfRange(format!(
                "Sobolev index {gamma} must lie in (0, {limit})"
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::OutOfRange(format!(
                "horizon {horizon} must be positive"
            )));
        }
        Ok(Self {
            p,
            q,
            a,
            b,
            gamma,
            horizon,
            seeds: Vec::new(),
        })
    }

    /// Draws `p, q, a, b` from seeds derived from `seed`.
    pub fn sample(seed: u64, op: &EllipticOperator, params: &CaseParams) -> Result<Self> {
        let grid = op.grid();
        let s = |k: u64| seed.wrapping_mul(4).wrapping_add(k);
        let p = sample_potential(s(0), params.gamma1, params.potential_bound, grid)?;
        let q = sample_potential(s(1), params.gamma1, params.potential_bound, grid)?;
        let a = sample_initial(s(2), params.gamma2, params.initial_bound, params.floor, op)?;
        let b = sample_initial(s(3), params.gamma2, params.initial_bound, params.floor, op)?;
        let mut case = Self::new(p, q, a, b, params.gamma(), params.horizon)?;
        case.seeds = (0..4).map(s).collect();
        Ok(case)
    }

    /// The case with `(p, a)` and `(q, b)` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            p: self.q.clone(),
            q: self.p.clone(),
            a: self.b.clone(),
            b: self.a.clone(),
            gamma: self.gamma,
            horizon: self.horizon,
            seeds: self.seeds.clone(),
        }
    }

    /// `q_eps = p + eps (q - p)`, `b_eps = a + eps (b - a)`, revalidated.
    pub fn interpolate(&self, op: &EllipticOperator, eps: f64) -> Result<Self> {
        let lerp = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(u, v)| u + eps * (v - u)).collect()
        };
        let q = AdmissiblePotential::new(
            op.grid(),
            lerp(&self.p.field, &self.q.field),
            self.q.gamma1,
            self.q.bound,
        )?;
        let b = AdmissibleInitial::new(
            op,
            lerp(&self.a.field, &self.b.field),
            self.b.gamma2,
            self.b.bound,
            self.b.floor,
        )?;
        Ok(Self {
            q,
            b,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRecord {
    pub numerator: f64,
    pub final_term: f64,
    pub trace_term: f64,
    pub ratio: f64,
    /// Set when the ratio came from the `0 / 0` convention.
    pub degenerate: bool,
}

impl StabilityRecord {
    fn from_terms(numerator: f64, final_term: f64, trace_term: f64) -> Result<Self> {
        let denominator = final_term + trace_term;
        if numerator == 0.0 && denominator == 0.0 {
            return Ok(Self {
                numerator,
                final_term,
                trace_term,
                ratio: 0.0,
                degenerate: true,
            });
        }
        if !(denominator > 0.0) || !denominator.is_finite() {
            return Err(Error::Degenerate(format!(
                "numerator {numerator:.3e} over vanishing data {denominator:.3e}; refine the resolution"
            )));
        }
        Ok(Self {
            numerator,
            final_term,
            trace_term,
            ratio: numerator / denominator,
            degenerate: false,
        })
    }
}

/// A fixed operator, observation boundary and resolution, with the
/// reference spectrum computed once for all cases.
#[derive(Debug, Clone)]
pub struct StabilityExperiment {
    pub op: EllipticOperator,
    pub gamma_spec: SubboundarySpec,
    pub steps: usize,
    spectrum: NeumannSpectrum,
}

impl StabilityExperiment {
    pub fn new(op: EllipticOperator, gamma_spec: SubboundarySpec, steps: usize) -> Result<Self> {
        let spectrum = NeumannSpectrum::reference(op.grid())?;
        Ok(Self {
            op,
            gamma_spec,
            steps,
            spectrum,
        })
    }

    pub fn spectrum(&self) -> &NeumannSpectrum {
        &self.spectrum
    }

    pub fn ratio(&self, case: &StabilityCase) -> Result<StabilityRecord> {
        let diff: Vec<f64> = case
            .p
            .field
            .iter()
            .zip(&case.q.field)
            .map(|(x, y)| x - y)
            .collect();
        let numerator = sobolev_norm(&self.spectrum, &diff, SobolevIndex::new(case.gamma)?)?;
        let up = solve_parabolic(
            &self.op,
            &case.p.field,
            &case.a.field,
            case.horizon,
            self.steps,
        )?;
        let uq = solve_parabolic(
            &self.op,
            &case.q.field,
            &case.b.field,
            case.horizon,
            self.steps,
        )?;
        let z = up.difference(&uq)?;
        let final_term = sobolev_norm(
            &self.spectrum,
            z.final_snapshot(),
            SobolevIndex::new(2.0 + case.gamma)?,
        )?;
        let trace_term = trace_h1_norm(&extract_trace(&z, &self.gamma_spec)?)?;
        StabilityRecord::from_terms(numerator, final_term, trace_term)
    }

    pub fn sweep(&self, cases: &[StabilityCase]) -> Result<Vec<StabilityRecord>> {
        cases.par_iter().map(|c| self.ratio(c)).collect()
    }

    pub fn lipschitz_sweep(
        &self,
        case: &StabilityCase,
        epsilons: &[f64],
    ) -> Result<Vec<StabilityRecord>> {
        let cases = epsilons
            .iter()
            .map(|&e| case.interpolate(&self.op, e))
            .collect::<Result<Vec<_>>>()?;
        self.sweep(&cases)
    }
}

/// `|p - q|_{H^gamma} / (|z(T)|_{H^{2+gamma}} + |z|_{H^1((0,T) x Gamma)})`
/// with `z = u_{p,a} - u_{q,b}`.
pub fn stability_ratio(
    op: &EllipticOperator,
    case: &StabilityCase,
    gamma_spec: &SubboundarySpec,
    steps: usize,
) -> Result<StabilityRecord> {
    StabilityExperiment::new(op.clone(), gamma_spec.clone(), steps)?.ratio(case)
}

pub fn lipschitz_sweep(
    op: &EllipticOperator,
    case: &StabilityCase,
    gamma_spec: &SubboundarySpec,
    steps: usize,
    epsilons: &[f64],
) -> Result<Vec<StabilityRecord>> {
    StabilityExperiment::new(op.clone(), gamma_spec.clone(), steps)?.lipschitz_sweep(case, epsilons)
}

/// `(3 v_N - 4 v_{N-1} + v_{N-2}) / (2 dt)` at every node.
pub fn final_time_derivative(traj: &ScalarTrajectory) -> Result<Vec<f64>> {
    let n = traj.len();
    if n < 3 {
        return Err(Error::AxisMismatch(
            "need three snapshots for the final-time derivative".into(),
        ));
    }
    let (a, b, c) = (
        traj.snapshot(n - 1),
        traj.snapshot(n - 2),
        traj.snapshot(n - 3),
    );
    Ok((0..a.len())
        .map(|k| (3.0 * a[k] - 4.0 * b[k] + c[k]) / (2.0 * traj.dt()))
        .collect())
}

/// Recovers `q - p` from `z = u_p - u_q` on a window ending at `T`:
/// `(z_t(T) - A z(T) + p z(T)) / u_q(T)`.
///
/// The window is interior data; the final-time derivative is not part of the
/// final-snapshot-plus-trace measurement.
pub fn recover_difference(
    op: &EllipticOperator,
    p: &[f64],
    u_q_window: &ScalarTrajectory,
    u_p: &ScalarTrajectory,
) -> Result<Vec<f64>> {
    let grid = op.grid();
    grid.check_field(p)?;
    if u_q_window.len() < 3 {
        return Err(Error::AxisMismatch(
            "window needs at least three time nodes".into(),
        ));
    }
    let floor = positivity_floor(u_q_window);
    if !(floor > 0.0) {
        return Err(Error::PositivityFloor(floor));
    }
    let up = u_p.tail(u_q_window.len())?;
    if (up.start() - u_q_window.start()).abs() > 1e-9 * u_q_window.dt() {
        return Err(Error::AxisMismatch(
            "windows of u_p and u_q do not end at the same time".into(),
        ));
    }
    let z = up.difference(u_q_window)?;
    let zt = final_time_derivative(&z)?;
    let zf = z.final_snapshot();
    let az = op.apply(zf)?;
    let uq = u_q_window.final_snapshot();
    Ok((0..grid.len())
        .map(|k| (zt[k] - az[k] + p[k] * zf[k]) / uq[k])
        .collect())
}
