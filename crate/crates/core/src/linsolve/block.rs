//! Block-sparse matrices with `D x D` blocks.

use nalgebra::DMatrix;

use crate::energy::BlockTriplets;
use crate::{Matrix, Vector};

/// Row-compressed square matrix of `D x D` blocks; columns sorted per row.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCsr<const D: usize> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    blocks: Vec<Matrix<D>>,
}

impl<const D: usize> BlockCsr<D> {
    /// Assemble an `n x n` block matrix, summing duplicate entries. Entries are
    /// accumulated in triplet order within each `(i, j)`, so assembly is
    /// deterministic for a fixed triplet sequence.
    pub fn from_triplets(n: usize, triplets: &BlockTriplets<D>) -> Self {
        let mut order: Vec<usize> = (0..triplets.entries.len()).collect();
        order.sort_by_key(|&k| (triplets.entries[k].0, triplets.entries[k].1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::new();
        let mut blocks: Vec<Matrix<D>> = Vec::new();
        let mut last = None;
        for k in order {
            let (i, j, b) = triplets.entries[k];
            assert!(i < n && j < n, "block ({i}, {j}) outside {n} x {n}");
            if last == Some((i, j)) {
                *blocks.last_mut().expect("nonempty") += b;
            } else {
                cols.push(j);
                blocks.push(b);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, blocks }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, row_ptr: vec![0; n + 1], cols: Vec::new(), blocks: Vec::new() }
    }

    pub fn block_rows(&self) -> usize {
        self.n
    }

    pub fn nnz_blocks(&self) -> usize {
        self.cols.len()
    }

    /// `(column, block)` entries of block row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, &Matrix<D>)> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(&self.blocks[r])
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Matrix<D>> {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].binary_search(&j).ok().map(|k| &self.blocks[r.start + k])
    }

    /// `out += A x`.
    pub fn mul_add(&self, x: &[Vector<D>], out: &mut [Vector<D>]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            for (j, b) in self.row(i) {
                *o += b * x[j];
            }
        }
    }

    pub fn mul(&self, x: &[Vector<D>]) -> Vec<Vector<D>> {
        let mut out = vec![Vector::<D>::zeros(); self.n];
        self.mul_add(x, &mut out);
        out
    }

    pub fn diagonal_blocks(&self) -> Vec<Matrix<D>> {
        (0..self.n).map(|i| self.get(i, i).copied().unwrap_or_else(Matrix::<D>::zeros)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(D * self.n, D * self.n);
        for i in 0..self.n {
            for (j, b) in self.row(i) {
                m.view_mut((D * i, D * j), (D, D)).copy_from(b);
            }
        }
        m
    }
}
