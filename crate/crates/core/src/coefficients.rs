//! Admissible potentials and initial data, discrete Hölder norms and seeded
//! samplers.
//!
//! Hölder norms are evaluated on grid nodes only. That underestimates the
//! continuum norm, but it is the same surrogate in every experiment, which is
//! all the empirical stability constants need.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{conormal_flux, EllipticOperator, Grid};

/// `max|v| + max_{x != y} |v(x) - v(y)| / |x - y|^gamma` over all node pairs.
pub fn holder_norm(grid: &Grid, v: &[f64], gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::OutOfRange(format!(
            "Hölder exponent {gamma} outside (0, 1)"
        )));
    }
    grid.check_field(v)?;
    let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let coords: Vec<[f64; 2]> = (0..grid.len()).map(|k| grid.coords(k)).collect();
    let semi = (0..v.len())
        .into_par_iter()
        .map(|i| {
            let mut best = 0.0f64;
            for j in i + 1..v.len() {
                let d = ((coords[i][0] - coords[j][0]).powi(2)
                    + (coords[i][1] - coords[j][1]).powi(2))
                .sqrt();
                best = best.max((v[i] - v[j]).abs() / d.powf(gamma));
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(sup + semi)
}

/// Grid surrogate of the `C^{2+gamma}` norm: the Hölder norm of the field
/// plus that of every first and second difference-quotient field.
pub fn holder2_norm(grid: &Grid, v: &[f64], gamma: f64) -> Result<f64> {
    let mut total = holder_norm(grid, v, gamma)?;
    let first: Vec<Vec<f64>> = (0..grid.dim()).map(|d| grid.diff(v, d)).collect();
    for (j, dj) in first.iter().enumerate() {
        total += holder_norm(grid, dj, gamma)?;
        for k in j..grid.dim() {
            total += holder_norm(grid, &grid.diff(dj, k), gamma)?;
        }
    }
    Ok(total)
}

/// Resolution-aware tolerance for a vanishing one-sided conormal flux.
///
/// The three-point one-sided stencil applied to a field with vanishing odd
/// normal derivatives leaves `h^3 v''''/4`; this returns `1e-8` plus twice
/// that bound, with `v''''` estimated by fourth differences.
pub fn flux_tolerance(grid: &Grid, v: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for d in 0..grid.dim() {
        let h = grid.spacing(d);
        for k in 0..grid.len() {
            let mut idx = [k; 5];
            let mut ok = true;
            for s in 1..5 {
                match grid.step(idx[s - 1], d, true) {
                    Some(n) => idx[s] = n,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let d4 =
                    v[idx[0]] - 4.0 * v[idx[1]] + 6.0 * v[idx[2]] - 4.0 * v[idx[3]] + v[idx[4]];
                worst = worst.max(d4.abs() / (2.0 * h));
            }
        }
    }
    1e-8 + worst
}

/// Member of the admissible potential set: `|p|_{C^gamma1} <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissiblePotential {
    pub field: Vec<f64>,
    pub gamma1: f64,
    pub bound: f64,
}

impl AdmissiblePotential {
    pub fn new(grid: &Grid, field: Vec<f64>, gamma1: f64, bound: f64) -> Result<Self> {
        if !(bound > 0.0) {
            return Err(Error::OutOfRange(format!("bound {bound} must be positive")));
        }
        let norm = holder_norm(grid, &field, gamma1)?;
        if norm > bound * (1.0 + 1e-12) {
            return Err(Error::NotAdmissible(format!(
                "C^{gamma1} norm {norm:.6} exceeds bound {bound}"
            )));
        }
        Ok(Self {
            field,
            gamma1,
            bound,
        })
    }
}

/// Member of the admissible initial-data set: bounded `C^{2+gamma2}` surrogate,
/// floor `a >= floor > 0`, vanishing conormal flux.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleInitial {
    pub field: Vec<f64>,
    pub gamma2: f64,
    pub bound: f64,
    pub floor: f64,
}

impl AdmissibleInitial {
    pub fn new(
        op: &EllipticOperator,
        field: Vec<f64>,
        gamma2: f64,
        bound: f64,
        floor: f64,
    ) -> Result<Self> {
        let grid = op.grid();
        if !(floor > 0.0) {
            return Err(Error::OutOfRange(format!("floor {floor} must be positive")));
        }
        grid.check_field(&field)?;
        let min = field.iter().copied().fold(f64::INFINITY, f64::min);
        if min < floor {
            return Err(Error::NotAdmissible(format!(
                "minimum {min:.6} below floor {floor}"
            )));
        }
        let tol = flux_tolerance(grid, &field);
        for face in grid.faces() {
            let flux = conormal_flux(op, &field, face)?;
            let worst = flux.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if worst > tol {
                return Err(Error::NotAdmissible(format!(
                    "conormal flux {worst:.3e} on face {face} exceeds {tol:.3e}"
                )));
            }
        }
        let norm = holder2_norm(grid, &field, gamma2)?;
        if norm > bound * (1.0 + 1e-12) {
            return Err(Error::NotAdmissible(format!(
                "C^(2+{gamma2}) norm {norm:.6} exceeds bound {bound}"
            )));
        }
        Ok(Self {
            field,
            gamma2,
            bound,
            floor,
        })
    }
}

const MAX_MODE: usize = 4;

fn cosine_series(grid: &Grid, rng: &mut ChaCha8Rng, decay: f64) -> Vec<f64> {
    let mut modes: Vec<([usize; 2], f64)> = Vec::new();
    if grid.dim() == 1 {
        for k in 0..=MAX_MODE {
            let c: f64 = rng.random_range(-1.0..1.0);
            modes.push(([k, 0], c / (1.0 + (k * k) as f64).powf(decay)));
        }
    } else {
        for k in 0..=MAX_MODE {
            for l in 0..=MAX_MODE - k {
                let c: f64 = rng.random_range(-1.0..1.0);
                modes.push(([k, l], c / (1.0 + (k * k + l * l) as f64).powf(decay)));
            }
        }
    }
    let ext: Vec<(f64, f64)> = grid.extents();
    grid.sample(|x| {
        modes
            .iter()
            .map(|(m, c)| {
                let mut v = *c;
                for d in 0..x.len() {
                    let (lo, hi) = ext[d];
                    v *= (m[d] as f64 * std::f64::consts::PI * (x[d] - lo) / (hi - lo)).cos();
                }
                v
            })
            .sum()
    })
}

/// Random low-order cosine series scaled into the admissible potential set.
/// Deterministic in `seed`.
pub fn sample_potential(
    seed: u64,
    gamma1: f64,
    bound: f64,
    grid: &Grid,
) -> Result<AdmissiblePotential> {
    if !(bound > 0.0) {
        return Err(Error::OutOfRange(format!("bound {bound} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = cosine_series(grid, &mut rng, 1.0);
    let norm = holder_norm(grid, &raw, gamma1)?;
    let theta: f64 = rng.random_range(0.5..0.95);
    let scale = if norm > 0.0 {
        theta * bound / norm
    } else {
        0.0
    };
    let field = raw.iter().map(|x| x * scale).collect();
    AdmissiblePotential::new(grid, field, gamma1, bound)
}

/// `floor + s * g` with `g >= 0` a cosine series in the Neumann eigenmodes,
/// `s` chosen so the `C^{2+gamma2}` surrogate stays below `bound`.
/// Samples whose conormal flux under `op` fails the check are redrawn.
pub fn sample_initial(
    seed: u64,
    gamma2: f64,
    bound: f64,
    floor: f64,
    op: &EllipticOperator,
) -> Result<AdmissibleInitial> {
    if !(floor > 0.0) {
        return Err(Error::OutOfRange(format!("floor {floor} must be positive")));
    }
    if bound <= floor {
        return Err(Error::OutOfRange(format!(
            "bound {bound} must exceed floor {floor}"
        )));
    }
    let grid = op.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut last = None;
    for _ in 0..16 {
        let mut g = cosine_series(grid, &mut rng, 1.5);
        let min = g.iter().copied().fold(f64::INFINITY, f64::min);
        g.iter_mut().for_each(|x| *x -= min);
        let norm = holder2_norm(grid, &g, gamma2)?;
        let theta: f64 = rng.random_range(0.5..0.95);
        let s = if norm > 0.0 {
            theta * (bound - floor) / norm
        } else {
            0.0
        };
        let field = g.iter().map(|x| floor + s * x).collect();
        match AdmissibleInitial::new(op, field, gamma2, bound, floor) {
            Ok(a) => return Ok(a),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::NotAdmissible("sampler exhausted".into())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_and_linear_holder_norms() {
        let g = Grid::unit_interval(41).unwrap();
        assert!((holder_norm(&g, &vec![-2.5; 41], 0.3).unwrap() - 2.5).abs() < 1e-14);
        let lin = g.sample(|x| x[0]);
        assert!((holder_norm(&g, &lin, 0.5).unwrap() - 2.0).abs() < 1e-12);
        assert!(holder_norm(&g, &lin, 1.0).is_err());
        assert!(holder_norm(&g, &lin, 0.0).is_err());
    }

    #[test]
    fn potential_sampler_is_admissible_and_deterministic() {
        let g = Grid::unit_interval(51).unwrap();
        for seed in 0..10 {
            let p = sample_potential(seed, 0.6, 1.5, &g).unwrap();
            assert!(holder_norm(&g, &p.field, 0.6).unwrap() <= 1.5);
            let again = sample_potential(seed, 0.6, 1.5, &g).unwrap();
            assert_eq!(p.field, again.field);
        }
        let p = sample_potential(3, 0.5, 0.5, &g).unwrap();
        assert!(p.field.iter().all(|x| x.abs() <= 0.5));
    }

    #[test]
    fn initial_sampler_floor_and_flux() {
        let g = Grid::unit_interval(101).unwrap();
        let op = EllipticOperator::laplacian(&g);
        for seed in 0..10 {
            let a = sample_initial(seed, 0.5, 4.0, 0.5, &op).unwrap();
            assert!(a.field.iter().all(|&x| x >= 0.5));
            for face in g.faces() {
                let f = conormal_flux(&op, &a.field, face).unwrap();
                assert!(f.values[0].abs() <= flux_tolerance(&g, &a.field));
            }
        }
        assert!(sample_initial(0, 0.5, 0.5, 0.5, &op).is_err());
    }

    #[test]
    fn constant_initial_is_admissible() {
        let g = Grid::unit_square(9).unwrap();
        let op = EllipticOperator::laplacian(&g);
        assert!(AdmissibleInitial::new(&op, vec![0.7; g.len()], 0.5, 0.7, 0.7).is_ok());
        // a linear ramp carries flux and is rejected
        let ramp = g.sample(|x| 1.0 + 0.1 * x[0]);
        assert!(AdmissibleInitial::new(&op, ramp, 0.5, 10.0, 0.5).is_err());
    }

    #[test]
    fn square_samplers() {
        let g = Grid::unit_square(15).unwrap();
        let op = EllipticOperator::laplacian(&g);
        let a = sample_initial(7, 0.4, 3.0, 1.0, &op).unwrap();
        assert!(a.field.iter().all(|&x| x >= 1.0));
        let p = sample_potential(7, 0.4, 2.0, &g).unwrap();
        assert!(holder_norm(&g, &p.field, 0.4).unwrap() <= 2.0);
    }
}
