//! Discrete Neumann eigenbasis and the spectral Sobolev scale built on it.
//!
//! The eigenproblem `K e = lambda W e` is symmetrized as
//! `W^{-1/2} K W^{-1/2} u = lambda u`, so the returned eigenvectors are
//! orthonormal in the trapezoid inner product. Sobolev norms are
//! `|v|_s^2 = sum_k (1 + lambda_k)^s <v, e_k>^2`, always taken with respect
//! to the unit-diffusion reference operator (see [`NeumannSpectrum::reference`]),
//! which keeps norm values comparable across coefficient samples.
//!
//! Fractional powers are only meaningful for fields compatible with the
//! Neumann closure; the solvers produce such fields.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::mesh::{EllipticOperator, Grid};
use crate::parabolic::BoundaryTrace;

/// Eigenpairs of `-A_h`, ascending.
#[derive(Debug, Clone)]
pub struct NeumannSpectrum {
    grid: Grid,
    weights: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Column `k` is the `k`-th eigenvector.
    eigenvectors: DMatrix<f64>,
}

/// Exponent of a spectral Sobolev norm, `0 <= s <= 3`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub fn new(s: f64) -> Result<Self> {
        if (0.0..=3.0).contains(&s) {
            Ok(Self(s))
        } else {
            Err(Error::OutOfRange(format!(
                "Sobolev index {s} outside [0, 3]"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Full eigendecomposition of `-A_h` for a drift-free operator.
pub fn neumann_spectrum(op: &EllipticOperator) -> Result<NeumannSpectrum> {
    if op.has_drift() {
        return Err(Error::InvalidOperator("spectrum requires b = 0".into()));
    }
    let k = op.stiffness().to_dense();
    let asym = (&k - k.transpose()).amax();
    if asym > 1e-10 * k.amax().max(1.0) {
        return Err(Error::InvalidOperator(format!(
            "stiffness not symmetric (defect {asym:.3e})"
        )));
    }
    let w = op.weights();
    let n = w.len();
    let inv_sqrt: Vec<f64> = w.iter().map(|x| 1.0 / x.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| k[(i, j)] * inv_sqrt[i] * inv_sqrt[j]);
    let s = 0.5 * (&s + s.transpose());
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then(a.cmp(&b))
    });
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        for r in 0..n {
            vecs[(r, col)] = eig.eigenvectors[(r, i)] * inv_sqrt[r];
        }
    }
    normalize_signs(&mut vecs);
    Ok(NeumannSpectrum {
        grid: op.grid().clone(),
        weights: w.to_vec(),
        eigenvalues,
        eigenvectors: vecs,
    })
}

// Largest-magnitude entry positive; makes the basis reproducible.
fn normalize_signs(vecs: &mut DMatrix<f64>) {
    for mut col in vecs.column_iter_mut() {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() + 1e-12 {
                best = x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

impl NeumannSpectrum {
    /// Spectrum of the unit-diffusion operator on `grid`. In 2D this is
    /// assembled as a tensor product of the two 1D spectra.
    pub fn reference(grid: &Grid) -> Result<Self> {
        if grid.dim() == 1 {
            return neumann_spectrum(&EllipticOperator::laplacian(grid));
        }
        let axis = |d: usize| -> Result<NeumannSpectrum> {
            let (lo, hi) = grid.extent(d);
            let g = Grid::new(1, &[(lo, hi)], &[grid.count(d)])?;
            neumann_spectrum(&EllipticOperator::laplacian(&g))
        };
        let sx = axis(0)?;
        let sy = axis(1)?;
        let (nx, ny) = (grid.count(0), grid.count(1));
        let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(nx * ny);
        for a in 0..nx {
            for b in 0..ny {
                pairs.push((sx.eigenvalues[a] + sy.eigenvalues[b], a, b));
            }
        }
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0).then((p.1, p.2).cmp(&(q.1, q.2))));
        let n = nx * ny;
        let mut vecs = DMatrix::zeros(n, n);
        for (col, &(_, a, b)) in pairs.iter().enumerate() {
            for i in 0..nx {
                let ex = sx.eigenvectors[(i, a)];
                for j in 0..ny {
                    vecs[(i * ny + j, col)] = ex * sy.eigenvectors[(j, b)];
                }
            }
        }
        Ok(Self {
            grid: grid.clone(),
            weights: grid.weights(),
            eigenvalues: pairs.iter().map(|p| p.0).collect(),
            eigenvectors: vecs,
        })
    }

    /// Rebuilds a spectrum from stored parts (used by the cache reader).
    pub fn from_parts(
        grid: Grid,
        eigenvalues: Vec<f64>,
        eigenvectors: DMatrix<f64>,
    ) -> Result<Self> {
        let n = grid.len();
        if eigenvalues.len() != n || eigenvectors.nrows() != n || eigenvectors.ncols() != n {
            return Err(Error::GridMismatch {
                expected: n,
                got: eigenvalues.len(),
            });
        }
        Ok(Self {
            weights: grid.weights(),
            grid,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.column(k).iter().copied().collect()
    }

    /// Coefficients `<v, e_k>_W`.
    pub fn coefficients(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.grid.check_field(v)?;
        let wv = DVector::from_iterator(v.len(), v.iter().zip(&self.weights).map(|(a, b)| a * b));
        Ok(self.eigenvectors.tr_mul(&wv).iter().copied().collect())
    }

    /// Max deviation of the weighted Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let w = DMatrix::from_diagonal(&DVector::from_vec(self.weights.clone()));
        let gram = self.eigenvectors.transpose() * w * &self.eigenvectors;
        (gram - DMatrix::identity(self.weights.len(), self.weights.len())).amax()
    }
}

/// `( sum_k (1 + lambda_k)^s <v, e_k>^2 )^{1/2}`.
pub fn sobolev_norm(spectrum: &NeumannSpectrum, v: &[f64], s: SobolevIndex) -> Result<f64> {
    let c = spectrum.coefficients(v)?;
    let sum: f64 = c
        .iter()
        .zip(&spectrum.eigenvalues)
        .map(|(ck, lk)| (1.0 + lk.max(0.0)).powf(s.0) * ck * ck)
        .sum();
    Ok(sum.sqrt())
}

/// Discrete `H^1((0,T) x Gamma)` norm: value, time derivative and tangential
/// derivative in `L^2`, with second-order difference quotients.
pub fn trace_h1_norm(trace: &BoundaryTrace) -> Result<f64> {
    let nt = trace.times.len();
    if nt < 3 {
        return Err(Error::OutOfRange(format!(
            "trace has {nt} time samples, need at least 3"
        )));
    }
    let dt = trace.time_step();
    let tw = crate::mesh::trapezoid_weights(nt, dt);
    let grid = &trace.grid;
    let mut total = 0.0;
    for &face in &trace.faces {
        let nodes = grid.face_nodes(face)?;
        let fw = grid.face_weights(face)?;
        let pos: Vec<usize> = nodes
            .iter()
            .map(|k| trace.position(*k).expect("face node in trace"))
            .collect();
        for (j, &p) in pos.iter().enumerate() {
            let series: Vec<f64> = trace.values.iter().map(|row| row[p]).collect();
            let dseries = diff_uniform(&series, dt);
            for n in 0..nt {
                total += tw[n] * fw[j] * (series[n].powi(2) + dseries[n].powi(2));
            }
        }
        if grid.dim() == 2 {
            let h = grid.spacing(1 - face.axis);
            for n in 0..nt {
                let along: Vec<f64> = pos.iter().map(|&p| trace.values[n][p]).collect();
                let g = diff_uniform(&along, h);
                for j in 0..pos.len() {
                    total += tw[n] * fw[j] * g[j].powi(2);
                }
            }
        }
    }
    Ok(total.sqrt())
}

/// Second-order difference quotient of a uniformly sampled sequence.
pub fn diff_uniform(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    assert!(n >= 3, "need three samples for a second-order difference");
    (0..n)
        .map(|i| {
            if i == 0 {
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h)
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}
