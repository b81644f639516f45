//! Small sparse kernels: a CSR matrix for stencil operators and a banded LU
//! factorization for the implicit solvers.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix from per-row entry lists. Duplicate columns
    /// within a row are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                debug_assert!(c < n);
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// Returns `alpha * self + diag(d)`.
    pub fn scale_add_diag(&self, alpha: f64, d: &[f64]) -> Self {
        let rows = (0..self.n)
            .map(|i| {
                let mut row: Vec<(usize, f64)> = self.row(i).map(|(c, v)| (c, alpha * v)).collect();
                row.push((i, d[i]));
                row
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..self.n {
            for (c, _) in self.row(i) {
                if c < i {
                    kl = kl.max(i - c);
                } else {
                    ku = ku.max(c - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                m[(i, c)] += v;
            }
        }
        m
    }
}

/// LU factorization of a banded matrix without pivoting.
///
/// The implicit operators are diagonally dominant M-matrix perturbations, so
/// pivoting is not needed; tiny pivots are reported as [`Error::Singular`].
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<f64>,
}

impl BandedLu {
    pub fn factor(m: &CsrMatrix) -> Result<Self> {
        let n = m.dim();
        let (kl, ku) = m.bandwidths();
        let width = kl + ku + 1;
        let mut band = vec![0.0; n * width];
        let mut scale: f64 = 0.0;
        for i in 0..n {
            for (c, v) in m.row(i) {
                band[i * width + c + kl - i] = v;
                scale = scale.max(v.abs());
            }
        }
        let at = |i: usize, j: usize| i * width + j + kl - i;
        for k in 0..n {
            let pivot = band[at(k, k)];
            if !pivot.is_finite() || pivot.abs() <= 1e-14 * scale.max(1.0) {
                return Err(Error::Singular { row: k, pivot });
            }
            let imax = (k + kl).min(n - 1);
            let jmax = (k + ku).min(n - 1);
            for i in k + 1..=imax {
                let l = band[at(i, k)] / pivot;
                band[at(i, k)] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        band[at(i, j)] -= l * band[at(k, j)];
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            width,
            band,
        })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.width);
        let at = |i: usize, j: usize| i * w + j + kl - i;
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let mut s = x[i];
            for j in lo..i {
                s -= self.band[at(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + ku).min(n - 1);
            let mut s = x[i];
            for j in i + 1..=hi {
                s -= self.band[at(i, j)] * x[j];
            }
            x[i] = s / self.band[at(i, i)];
        }
    }
}
