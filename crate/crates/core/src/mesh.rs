//! Tensor-product grids on intervals and rectangles, boundary faces, and the
//! discrete divergence-form operator shared by every solver.
//!
//! Nodes are stored in row-major order over the axes: in 2D the node
//! `(i, j)` (axis-0 index `i`, axis-1 index `j`) lives at `i * ny + j`.
//!
//! The second-order part of the operator is assembled from a symmetric
//! stiffness form `K` (edge differences for the diagonal coefficients, cell
//! gradients for the mixed coefficient) and lumped with the trapezoid
//! weights `W`, so that `A_h = -W^{-1} K - b.grad`. With `b = 0` this is
//! self-adjoint in the trapezoid inner product, and the boundary rows are
//! exactly the mirror-ghost closure of the zero conormal-flux condition.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Which end of an axis a face sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Lo,
    Hi,
}

/// A face of the rectangle: the set of nodes whose `axis` index is extremal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

impl Face {
    pub const LEFT: Face = Face {
        axis: 0,
        side: Side::Lo,
    };
    pub const RIGHT: Face = Face {
        axis: 0,
        side: Side::Hi,
    };
    pub const BOTTOM: Face = Face {
        axis: 1,
        side: Side::Lo,
    };
    pub const TOP: Face = Face {
        axis: 1,
        side: Side::Hi,
    };

    /// Component of the outward unit normal along `self.axis`.
    pub fn normal_sign(self) -> f64 {
        match self.side {
            Side::Lo => -1.0,
            Side::Hi => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match (self.axis, self.side) {
            (0, Side::Lo) => "left",
            (0, Side::Hi) => "right",
            (1, Side::Lo) => "bottom",
            _ => "top",
        }
    }

    pub fn parse(s: &str) -> Result<Face> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "x-" => Ok(Face::LEFT),
            "right" | "x+" => Ok(Face::RIGHT),
            "bottom" | "y-" => Ok(Face::BOTTOM),
            "top" | "y+" => Ok(Face::TOP),
            other => Err(Error::UnknownFace(other.to_string())),
        }
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Uniform tensor grid on `[lo_0, hi_0] (x [lo_1, hi_1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    counts: [usize; 2],
    spacing: [f64; 2],
}

/// Builds a uniform grid. `extents` and `counts` need one entry per axis.
pub fn build_grid(dim: usize, extents: &[(f64, f64)], counts: &[usize]) -> Result<Grid> {
    Grid::new(dim, extents, counts)
}

impl Grid {
    pub fn new(dim: usize, extents: &[(f64, f64)], counts: &[usize]) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} not in {{1, 2}}"
            )));
        }
        if extents.len() != dim || counts.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} extents and counts, got {} and {}",
                extents.len(),
                counts.len()
            )));
        }
        let mut lo = [0.0; 2];
        let mut hi = [0.0; 2];
        let mut n = [1usize; 2];
        let mut h = [0.0; 2];
        for d in 0..dim {
            let (a, b) = extents[d];
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(Error::InvalidGrid(format!(
                    "degenerate extent [{a}, {b}] on axis {d}"
                )));
            }
            if counts[d] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {d} has {} nodes, need at least 3",
                    counts[d]
                )));
            }
            lo[d] = a;
            hi[d] = b;
            n[d] = counts[d];
            h[d] = (b - a) / (counts[d] - 1) as f64;
        }
        Ok(Self {
            dim,
            lo,
            hi,
            counts: n,
            spacing: h,
        })
    }

    /// Unit interval with `count` nodes.
    pub fn unit_interval(count: usize) -> Result<Self> {
        Self::new(1, &[(0.0, 1.0)], &[count])
    }

    /// Unit square with `count x count` nodes.
    pub fn unit_square(count: usize) -> Result<Self> {
        Self::new(2, &[(0.0, 1.0), (0.0, 1.0)], &[count, count])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts[..self.dim]
    }

    pub fn count(&self, axis: usize) -> usize {
        self.counts[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn extent(&self, axis: usize) -> (f64, f64) {
        (self.lo[axis], self.hi[axis])
    }

    pub fn extents(&self) -> Vec<(f64, f64)> {
        (0..self.dim).map(|d| self.extent(d)).collect()
    }

    /// Smallest spacing over all axes.
    pub fn min_spacing(&self) -> f64 {
        self.spacing[..self.dim]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.counts[0] * self.counts[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.counts[1] + j
    }

    pub fn multi_index(&self, node: usize) -> [usize; 2] {
        [node / self.counts[1], node % self.counts[1]]
    }

    /// Coordinate of `node` along `axis`.
    pub fn x(&self, node: usize, axis: usize) -> f64 {
        let m = self.multi_index(node);
        if m[axis] == self.counts[axis] - 1 {
            self.hi[axis]
        } else {
            self.lo[axis] + m[axis] as f64 * self.spacing[axis]
        }
    }

    /// Coordinates of `node`; the second entry is zero in 1D.
    pub fn coords(&self, node: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.x(node, 0), 0.0]
        } else {
            [self.x(node, 0), self.x(node, 1)]
        }
    }

    /// Samples `f` at every node; `f` receives `dim` coordinates.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                let c = self.coords(k);
                f(&c[..self.dim])
            })
            .collect()
    }

    /// Neighbour of `node` shifted by one along `axis`, if it exists.
    pub fn step(&self, node: usize, axis: usize, forward: bool) -> Option<usize> {
        let m = self.multi_index(node);
        let stride = if axis == 0 { self.counts[1] } else { 1 };
        if forward {
            (m[axis] + 1 < self.counts[axis]).then(|| node + stride)
        } else {
            (m[axis] > 0).then(|| node - stride)
        }
    }

    pub fn faces(&self) -> Vec<Face> {
        let mut f = vec![Face::LEFT, Face::RIGHT];
        if self.dim == 2 {
            f.extend([Face::BOTTOM, Face::TOP]);
        }
        f
    }

    pub fn has_face(&self, face: Face) -> bool {
        face.axis < self.dim
    }

    fn check_face(&self, face: Face) -> Result<()> {
        if self.has_face(face) {
            Ok(())
        } else {
            Err(Error::UnknownFace(face.name().to_string()))
        }
    }

    /// All nodes geometrically on `face`, ordered along the tangential axis.
    pub fn face_nodes(&self, face: Face) -> Result<Vec<usize>> {
        self.check_face(face)?;
        let fixed = match face.side {
            Side::Lo => 0,
            Side::Hi => self.counts[face.axis] - 1,
        };
        Ok(if self.dim == 1 {
            vec![fixed]
        } else if face.axis == 0 {
            (0..self.counts[1]).map(|j| self.index(fixed, j)).collect()
        } else {
            (0..self.counts[0]).map(|i| self.index(i, fixed)).collect()
        })
    }

    /// Trapezoid weights along `face` (a single unit weight in 1D).
    pub fn face_weights(&self, face: Face) -> Result<Vec<f64>> {
        self.check_face(face)?;
        if self.dim == 1 {
            return Ok(vec![1.0]);
        }
        let t = 1 - face.axis;
        Ok(trapezoid_weights(self.counts[t], self.spacing[t]))
    }

    /// The face owning a boundary node; corners go to the lowest axis.
    pub fn owning_face(&self, node: usize) -> Option<Face> {
        let m = self.multi_index(node);
        (0..self.dim).find_map(|d| {
            if m[d] == 0 {
                Some(Face {
                    axis: d,
                    side: Side::Lo,
                })
            } else if m[d] == self.counts[d] - 1 {
                Some(Face {
                    axis: d,
                    side: Side::Hi,
                })
            } else {
                None
            }
        })
    }

    pub fn boundary_tags(&self) -> BTreeMap<usize, Face> {
        (0..self.len())
            .filter_map(|k| self.owning_face(k).map(|f| (k, f)))
            .collect()
    }

    /// Product trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let w0 = trapezoid_weights(self.counts[0], self.spacing[0]);
        if self.dim == 1 {
            return w0;
        }
        let w1 = trapezoid_weights(self.counts[1], self.spacing[1]);
        let mut w = Vec::with_capacity(self.len());
        for a in &w0 {
            for b in &w1 {
                w.push(a * b);
            }
        }
        w
    }

    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|d| self.hi[d] - self.lo[d]).product()
    }

    pub fn check_field(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.len() {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                expected: self.len(),
                got: v.len(),
            })
        }
    }

    /// Second-order difference quotient along `axis`: centered inside,
    /// three-point one-sided at the ends.
    pub fn diff(&self, v: &[f64], axis: usize) -> Vec<f64> {
        let h = self.spacing[axis];
        (0..self.len())
            .map(
                |k| match (self.step(k, axis, false), self.step(k, axis, true)) {
                    (Some(m), Some(p)) => (v[p] - v[m]) / (2.0 * h),
                    (None, Some(p)) => {
                        let pp = self.step(p, axis, true).unwrap();
                        (-3.0 * v[k] + 4.0 * v[p] - v[pp]) / (2.0 * h)
                    }
                    (Some(m), None) => {
                        let mm = self.step(m, axis, false).unwrap();
                        (3.0 * v[k] - 4.0 * v[m] + v[mm]) / (2.0 * h)
                    }
                    (None, None) => unreachable!("axes carry at least three nodes"),
                },
            )
            .collect()
    }
}

pub(crate) fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Values on the nodes of one face.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    pub face: Face,
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
}

/// Trapezoid quadrature of a grid field over the domain.
pub fn integrate(grid: &Grid, v: &[f64]) -> f64 {
    grid.weights().iter().zip(v).map(|(w, x)| w * x).sum()
}

/// Trapezoid quadrature over a face (point evaluation in 1D).
pub fn integrate_boundary(grid: &Grid, field: &BoundaryField) -> Result<f64> {
    let w = grid.face_weights(field.face)?;
    Ok(w.iter().zip(&field.values).map(|(w, x)| w * x).sum())
}

/// Discrete `A v = div(a grad v) - b.grad v` with zero conormal-flux closure.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    grid: Grid,
    a: Vec<[[f64; 2]; 2]>,
    b: Vec<[f64; 2]>,
    sigma: f64,
    weights: Vec<f64>,
    stiffness: CsrMatrix,
    matrix: CsrMatrix,
}

impl EllipticOperator {
    /// Validates symmetry and uniform ellipticity (`xi.a.xi >= sigma |xi|^2`
    /// at every node) and assembles the discrete operator.
    pub fn new(grid: Grid, a: Vec<[[f64; 2]; 2]>, b: Vec<[f64; 2]>, sigma: f64) -> Result<Self> {
        grid.check_field(&vec![0.0; a.len()])?;
        grid.check_field(&vec![0.0; b.len()])?;
        if !(sigma > 0.0) {
            return Err(Error::InvalidOperator(format!(
                "ellipticity constant {sigma} must be positive"
            )));
        }
        let dim = grid.dim();
        for (k, m) in a.iter().enumerate() {
            if dim == 2 {
                let scale = m[0][1].abs().max(m[1][0].abs()).max(1.0);
                if (m[0][1] - m[1][0]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidOperator(format!("a_12 != a_21 at node {k}")));
                }
            }
            let lmin = if dim == 1 {
                m[0][0]
            } else {
                let mean = 0.5 * (m[0][0] + m[1][1]);
                let dev = (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1].powi(2)).sqrt();
                mean - dev
            };
            if !(lmin >= sigma * (1.0 - 1e-12)) {
                return Err(Error::InvalidOperator(format!(
                    "ellipticity fails at node {k}: smallest eigenvalue {lmin} < sigma {sigma}"
                )));
            }
        }
        let weights = grid.weights();
        let stiffness = assemble_stiffness(&grid, &a);
        let matrix = assemble_operator(&grid, &weights, &stiffness, &b);
        Ok(Self {
            grid,
            a,
            b,
            sigma,
            weights,
            stiffness,
            matrix,
        })
    }

    /// `A = Laplacian`.
    pub fn laplacian(grid: &Grid) -> Self {
        let n = grid.len();
        Self::new(
            grid.clone(),
            vec![[[1.0, 0.0], [0.0, 1.0]]; n],
            vec![[0.0; 2]; n],
            1.0,
        )
        .expect("identity diffusion is elliptic")
    }

    /// `A = div(c grad .)` with a scalar coefficient field.
    pub fn isotropic(grid: &Grid, c: &[f64]) -> Result<Self> {
        grid.check_field(c)?;
        let sigma = c.iter().copied().fold(f64::INFINITY, f64::min);
        let a = c.iter().map(|&s| [[s, 0.0], [0.0, s]]).collect();
        Self::new(grid.clone(), a, vec![[0.0; 2]; grid.len()], sigma)
    }

    /// Same diffusion with drift field `b`.
    pub fn with_drift(&self, b: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(self.grid.clone(), self.a.clone(), b, self.sigma)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn diffusion(&self) -> &[[[f64; 2]; 2]] {
        &self.a
    }

    pub fn drift(&self) -> &[[f64; 2]] {
        &self.b
    }

    pub fn has_drift(&self) -> bool {
        self.b.iter().any(|v| v[0] != 0.0 || v[1] != 0.0)
    }

    /// Quadrature weights of the grid.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The assembled `A_h`.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// The symmetric stiffness matrix `K` with `(A_h v, w)_W = -v.K.w` when `b = 0`.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// `a(grad v, grad w)` in its discrete form `v.K.w`.
    pub fn energy_form(&self, v: &[f64], w: &[f64]) -> f64 {
        let kw = self.stiffness.matvec(w);
        v.iter().zip(&kw).map(|(x, y)| x * y).sum()
    }

    /// Largest principal diffusion value over the grid.
    pub fn max_diffusion(&self) -> f64 {
        self.a
            .iter()
            .map(|m| {
                if self.grid.dim() == 1 {
                    m[0][0]
                } else {
                    let mean = 0.5 * (m[0][0] + m[1][1]);
                    mean + (0.25 * (m[0][0] - m[1][1]).powi(2) + m[0][1].powi(2)).sqrt()
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.grid.check_field(v)?;
        Ok(self.matrix.matvec(v))
    }
}

/// Applies the discrete elliptic operator.
pub fn apply_elliptic(op: &EllipticOperator, v: &[f64]) -> Result<Vec<f64>> {
    op.apply(v)
}

fn assemble_stiffness(grid: &Grid, a: &[[[f64; 2]; 2]]) -> CsrMatrix {
    let n = grid.len();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut edge = |i: usize, j: usize, c: f64| {
        rows[i].push((i, c));
        rows[j].push((j, c));
        rows[i].push((j, -c));
        rows[j].push((i, -c));
    };
    if grid.dim() == 1 {
        let h = grid.spacing(0);
        for i in 0..n - 1 {
            let c = 0.5 * (a[i][0][0] + a[i + 1][0][0]) / h;
            edge(i, i + 1, c);
        }
        return CsrMatrix::from_rows(rows);
    }
    let (hx, hy) = (grid.spacing(0), grid.spacing(1));
    let (nx, ny) = (grid.count(0), grid.count(1));
    let mut cross: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let n00 = grid.index(i, j);
            let n10 = grid.index(i + 1, j);
            let n01 = grid.index(i, j + 1);
            let n11 = grid.index(i + 1, j + 1);
            // axis-0 edges, half a cell each
            for (p, q) in [(n00, n10), (n01, n11)] {
                let c = 0.5 * (a[p][0][0] + a[q][0][0]) * 0.5 * hy / hx;
                edge(p, q, c);
            }
            for (p, q) in [(n00, n01), (n10, n11)] {
                let c = 0.5 * (a[p][1][1] + a[q][1][1]) * 0.5 * hx / hy;
                edge(p, q, c);
            }
            let a12 = 0.25 * (a[n00][0][1] + a[n10][0][1] + a[n01][0][1] + a[n11][0][1]);
            if a12 != 0.0 {
                let nodes = [n00, n10, n01, n11];
                let gx = [-1.0, 1.0, -1.0, 1.0].map(|s: f64| s / (2.0 * hx));
                let gy = [-1.0, -1.0, 1.0, 1.0].map(|s: f64| s / (2.0 * hy));
                let area = hx * hy;
                for r in 0..4 {
                    for c in 0..4 {
                        cross.push((
                            nodes[r],
                            nodes[c],
                            a12 * area * (gx[r] * gy[c] + gy[r] * gx[c]),
                        ));
                    }
                }
            }
        }
    }
    for (r, c, v) in cross {
        rows[r].push((c, v));
    }
    CsrMatrix::from_rows(rows)
}

fn assemble_operator(grid: &Grid, w: &[f64], k: &CsrMatrix, b: &[[f64; 2]]) -> CsrMatrix {
    let rows = (0..grid.len())
        .map(|i| {
            let mut row: Vec<(usize, f64)> = k.row(i).map(|(c, v)| (c, -v / w[i])).collect();
            for d in 0..grid.dim() {
                let bd = b[i][d];
                if bd == 0.0 {
                    continue;
                }
                // mirror ghost: the normal difference vanishes on the boundary
                if let (Some(m), Some(p)) = (grid.step(i, d, false), grid.step(i, d, true)) {
                    let h = grid.spacing(d);
                    row.push((p, -bd / (2.0 * h)));
                    row.push((m, bd / (2.0 * h)));
                }
            }
            row
        })
        .collect();
    CsrMatrix::from_rows(rows)
}

/// One-sided second-order evaluation of `sum_kj a_kj nu_j d_k v` on a face.
pub fn conormal_flux(op: &EllipticOperator, v: &[f64], face: Face) -> Result<BoundaryField> {
    let grid = op.grid();
    grid.check_field(v)?;
    let nodes = grid.face_nodes(face)?;
    let d = face.axis;
    let normal = grid.diff(v, d);
    let tangential = (grid.dim() == 2).then(|| grid.diff(v, 1 - d));
    let nu = face.normal_sign();
    let values = nodes
        .iter()
        .map(|&k| {
            let m = op.a[k];
            let mut flux = m[d][d] * normal[k];
            if let Some(t) = &tangential {
                flux += m[d][1 - d] * t[k];
            }
            nu * flux
        })
        .collect();
    Ok(BoundaryField {
        face,
        nodes,
        values,
    })
}

/// Faces of the grid selected as an observation subboundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubboundarySpec {
    faces: Vec<Face>,
    anchor: Option<Vec<f64>>,
}

impl SubboundarySpec {
    /// Validates that `faces` is a nonempty set of faces of `grid` and, when
    /// an exterior `anchor` is given, that every boundary node with
    /// `(x - anchor).nu >= 0` lies on a selected face.
    pub fn new(grid: &Grid, faces: &[Face], anchor: Option<Vec<f64>>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::OutOfRange(
                "subboundary must contain at least one face".into(),
            ));
        }
        let mut sel: Vec<Face> = Vec::new();
        for &f in faces {
            grid.check_face(f)?;
            if !sel.contains(&f) {
                sel.push(f);
            }
        }
        sel.sort();
        if let Some(x0) = &anchor {
            if x0.len() != grid.dim() {
                return Err(Error::OutOfRange(format!(
                    "anchor needs {} coordinates",
                    grid.dim()
                )));
            }
            let inside = (0..grid.dim()).all(|d| {
                let (lo, hi) = grid.extent(d);
                x0[d] >= lo && x0[d] <= hi
            });
            if inside {
                return Err(Error::OutOfRange(
                    "anchor must lie outside the closed domain".into(),
                ));
            }
            for face in grid.faces() {
                if sel.contains(&face) {
                    continue;
                }
                for k in grid.face_nodes(face)? {
                    let c = grid.coords(k);
                    let dot = (c[face.axis] - x0[face.axis]) * face.normal_sign();
                    // nodes shared with a selected face are covered by it
                    let covered = sel
                        .iter()
                        .any(|&s| grid.face_nodes(s).map(|n| n.contains(&k)).unwrap_or(false));
                    if dot >= 0.0 && !covered {
                        return Err(Error::OutOfRange(format!(
                            "boundary node {k} on face {face} faces the anchor but is not selected"
                        )));
                    }
                }
            }
        }
        Ok(Self { faces: sel, anchor })
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn anchor(&self) -> Option<&[f64]> {
        self.anchor.as_deref()
    }

    /// Union of the selected faces' nodes without duplicates, in ascending order.
    pub fn nodes(&self, grid: &Grid) -> Result<Vec<usize>> {
        let mut all = Vec::new();
        for &f in &self.faces {
            all.extend(grid.face_nodes(f)?);
        }
        all.sort_unstable();
        all.dedup();
        Ok(all)
    }
}
