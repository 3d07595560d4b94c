//! Block-Jacobi preconditioned conjugate gradient.

use super::block::BlockCsr;
use crate::small::inverse;
use crate::{Error, Matrix, Result, Vector};

/// Symmetric linear operator on `n` block vectors.
pub trait LinearOperator<const D: usize> {
    fn block_len(&self) -> usize;
    /// `out = A x` (overwrites `out`).
    fn apply(&self, x: &[Vector<D>], out: &mut [Vector<D>]);
    fn diagonal_blocks(&self) -> Vec<Matrix<D>>;
}

impl<const D: usize> LinearOperator<D> for BlockCsr<D> {
    fn block_len(&self) -> usize {
        self.block_rows()
    }

    fn apply(&self, x: &[Vector<D>], out: &mut [Vector<D>]) {
        out.iter_mut().for_each(|o| *o = Vector::<D>::zeros());
        self.mul_add(x, out);
    }

    fn diagonal_blocks(&self) -> Vec<Matrix<D>> {
        BlockCsr::diagonal_blocks(self)
    }
}

/// Hessian action of an exactly quadratic energy from its gradient:
/// `H p = g(p) - g(0)`, with `g(0)` evaluated once at construction. The
/// direction is normalized before evaluation and the result rescaled, which
/// keeps the difference well conditioned for tiny or huge `p`.
pub struct MatrixFree<const D: usize, G> {
    grad: G,
    g0: Vec<Vector<D>>,
    diag: Vec<Matrix<D>>,
}

impl<const D: usize, G: Fn(&[Vector<D>], &mut [Vector<D>])> MatrixFree<D, G> {
    /// `grad(p, out)` writes the gradient at displacement `p` into `out`.
    pub fn new(n: usize, grad: G, diag: Vec<Matrix<D>>) -> Self {
        let zero = vec![Vector::<D>::zeros(); n];
        let mut g0 = vec![Vector::<D>::zeros(); n];
        grad(&zero, &mut g0);
        Self { grad, g0, diag }
    }

    /// Cached `g(0)`.
    pub fn gradient_at_zero(&self) -> &[Vector<D>] {
        &self.g0
    }
}

impl<const D: usize, G: Fn(&[Vector<D>], &mut [Vector<D>])> LinearOperator<D> for MatrixFree<D, G> {
    fn block_len(&self) -> usize {
        self.g0.len()
    }

    fn apply(&self, p: &[Vector<D>], out: &mut [Vector<D>]) {
        let s = p.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        if s == 0.0 {
            out.iter_mut().for_each(|o| *o = Vector::<D>::zeros());
            return;
        }
        let unit: Vec<Vector<D>> = p.iter().map(|v| v / s).collect();
        (self.grad)(&unit, out);
        for (o, g0) in out.iter_mut().zip(&self.g0) {
            *o = (*o - g0) * s;
        }
    }

    fn diagonal_blocks(&self) -> Vec<Matrix<D>> {
        self.diag.clone()
    }
}

/// `x ↦ g(x) - g(0)` for an exactly quadratic energy.
pub fn matrix_free_apply<const D: usize, G: Fn(&[Vector<D>], &mut [Vector<D>])>(grad: G, p: &[Vector<D>]) -> Vec<Vector<D>> {
    let op = MatrixFree::new(p.len(), grad, Vec::new());
    let mut out = vec![Vector::<D>::zeros(); p.len()];
    op.apply(p, &mut out);
    out
}

/// Restricts an operator to the unmasked blocks: masked rows and columns
/// become identity, so masked entries of the solution equal the right-hand side.
pub struct Constrained<'a, const D: usize, A: ?Sized> {
    pub inner: &'a A,
    pub fixed: &'a [bool],
}

impl<const D: usize, A: LinearOperator<D> + ?Sized> LinearOperator<D> for Constrained<'_, D, A> {
    fn block_len(&self) -> usize {
        self.inner.block_len()
    }

    fn apply(&self, x: &[Vector<D>], out: &mut [Vector<D>]) {
        let masked: Vec<Vector<D>> =
            x.iter().zip(self.fixed).map(|(v, &f)| if f { Vector::<D>::zeros() } else { *v }).collect();
        self.inner.apply(&masked, out);
        for ((o, v), &f) in out.iter_mut().zip(x).zip(self.fixed) {
            if f {
                *o = *v;
            }
        }
    }

    fn diagonal_blocks(&self) -> Vec<Matrix<D>> {
        let mut d = self.inner.diagonal_blocks();
        for (b, &f) in d.iter_mut().zip(self.fixed) {
            if f {
                *b = Matrix::<D>::identity();
            }
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgOutcome<const D: usize> {
    pub solution: Vec<Vector<D>>,
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖` from the recurrence.
    pub relative_residual: f64,
}

fn dot<const D: usize>(a: &[Vector<D>], b: &[Vector<D>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn block_jacobi<const D: usize>(diag: &[Matrix<D>]) -> Vec<Matrix<D>> {
    diag.iter()
        .map(|b| {
            let sym = (b + b.transpose()) * 0.5;
            match inverse(&sym) {
                Some(inv) if inv.iter().all(|v| v.is_finite()) => inv,
                _ => {
                    let t = sym.trace() / D as f64;
                    Matrix::<D>::identity() * if t > 0.0 { 1.0 / t } else { 1.0 }
                }
            }
        })
        .collect()
}

/// Solve `A x = b` from `x = 0` until `‖b - A x‖ ≤ tol ‖b‖`.
pub fn pcg_solve<const D: usize, A: LinearOperator<D> + ?Sized>(
    op: &A,
    rhs: &[Vector<D>],
    tol: f64,
    max_iter: usize,
) -> Result<PcgOutcome<D>> {
    let n = rhs.len();
    let bnorm = dot(rhs, rhs).sqrt();
    let mut x = vec![Vector::<D>::zeros(); n];
    if bnorm == 0.0 {
        return Ok(PcgOutcome { solution: x, iterations: 0, relative_residual: 0.0 });
    }
    let pre = block_jacobi(&op.diagonal_blocks());
    let precondition = |r: &[Vector<D>]| -> Vec<Vector<D>> { r.iter().zip(&pre).map(|(v, m)| m * v).collect() };
    let mut r = rhs.to_vec();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![Vector::<D>::zeros(); n];
    let mut rel = 1.0;
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::PcgNotConverged { iterations: it, residual: rel });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += p[k] * alpha;
            r[k] -= ap[k] * alpha;
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return Ok(PcgOutcome { solution: x, iterations: it, relative_residual: rel });
        }
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + p[k] * beta;
        }
    }
    Err(Error::PcgNotConverged { iterations: max_iter, residual: rel })
}
