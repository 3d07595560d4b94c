//! Value/gradient/Hessian containers shared by every potential.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Matrix, Vector};

/// Unordered list of `D x D` Hessian blocks keyed by node pair. Duplicate keys
/// are summed on assembly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BlockTriplets<const D: usize> {
    pub entries: Vec<(usize, usize, Matrix<D>)>,
}

impl<const D: usize> BlockTriplets<D> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, block: Matrix<D>) {
        self.entries.push((i, j, block));
    }

    /// Scatter a dense stencil Hessian whose rows are ordered node-major.
    pub fn add_dense(&mut self, nodes: &[usize], hess: &DMatrix<f64>, scale: f64) {
        debug_assert_eq!(hess.nrows(), nodes.len() * D);
        for (a, &na) in nodes.iter().enumerate() {
            for (b, &nb) in nodes.iter().enumerate() {
                let block = Matrix::<D>::from_fn(|r, c| scale * hess[(a * D + r, b * D + c)]);
                self.entries.push((na, nb, block));
            }
        }
    }

    pub fn extend(&mut self, other: &BlockTriplets<D>, scale: f64) {
        self.entries.extend(other.entries.iter().map(|&(i, j, b)| (i, j, b * scale)));
    }

    /// Renumber nodes by adding `offset` to every index.
    pub fn shifted(mut self, offset: usize) -> Self {
        for e in &mut self.entries {
            e.0 += offset;
            e.1 += offset;
        }
        self
    }

    /// Dense `(D n) x (D n)` matrix, mainly for tests and small oracles.
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(D * n, D * n);
        for &(i, j, b) in &self.entries {
            let mut view = m.view_mut((D * i, D * j), (D, D));
            view += b;
        }
        m
    }
}

/// One potential evaluated at a state.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport<const D: usize> {
    pub value: f64,
    pub gradient: Vec<Vector<D>>,
    /// Assembled blocks; empty when only the value and gradient were requested
    /// or when the Hessian is applied matrix-free.
    pub hessian: BlockTriplets<D>,
}

impl<const D: usize> EnergyReport<D> {
    pub fn zeros(n: usize) -> Self {
        Self {
            value: 0.0,
            gradient: vec![Vector::<D>::zeros(); n],
            hessian: BlockTriplets::new(),
        }
    }

    /// Add a stencil gradient ordered node-major.
    pub fn add_gradient(&mut self, nodes: &[usize], grad: &DVector<f64>, scale: f64) {
        for (a, &n) in nodes.iter().enumerate() {
            for c in 0..D {
                self.gradient[n][c] += scale * grad[a * D + c];
            }
        }
    }

    pub fn flat_gradient(&self) -> DVector<f64> {
        flatten(&self.gradient)
    }
}

pub fn flatten<const D: usize>(v: &[Vector<D>]) -> DVector<f64> {
    DVector::from_iterator(D * v.len(), v.iter().flat_map(|x| x.iter().copied()))
}

pub fn unflatten<const D: usize>(v: &DVector<f64>) -> Vec<Vector<D>> {
    v.as_slice().chunks_exact(D).map(Vector::<D>::from_column_slice).collect()
}

/// Closest positive semi-definite matrix in the Frobenius norm: negative
/// eigenvalues are clamped to zero.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

/// Smallest and largest eigenvalue of a symmetric matrix.
///
/// All-zero rows are dropped before the decomposition and contribute an exact
/// zero eigenvalue; nalgebra's QR iteration can break down on large
/// zero-padded matrices with a small scattered nonzero block.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let keep: Vec<usize> = (0..sym.nrows()).filter(|&i| sym.row(i).iter().any(|&v| v != 0.0)).collect();
    let dropped = keep.len() < sym.nrows();
    if keep.is_empty() {
        return (0.0, 0.0);
    }
    let packed = DMatrix::from_fn(keep.len(), keep.len(), |a, b| sym[(keep[a], keep[b])]);
    let ev = SymmetricEigen::new(packed).eigenvalues;
    let (lo, hi) = (ev.min(), ev.max());
    if dropped {
        (lo.min(0.0), hi.max(0.0))
    } else {
        (lo, hi)
    }
}
