//! Fixed-size helpers for `D x D` matrices with generic `D ∈ {2, 3}`.

use nalgebra::DMatrix;

use crate::{Matrix, Vector};

pub fn det<const D: usize>(m: &Matrix<D>) -> f64 {
    if D == 2 {
        m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
    } else {
        m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
            - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
            + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
    }
}

/// `cof(M) = det(M) M⁻ᵀ`, defined for singular `M` too.
pub fn cofactor<const D: usize>(f: &Matrix<D>) -> Matrix<D> {
    if D == 2 {
        Matrix::<D>::from_fn(|r, c| match (r, c) {
            (0, 0) => f[(1, 1)],
            (0, 1) => -f[(1, 0)],
            (1, 0) => -f[(0, 1)],
            _ => f[(0, 0)],
        })
    } else {
        let cols = [cross(&f.column(1).into(), &f.column(2).into()), cross(&f.column(2).into(), &f.column(0).into()), cross(&f.column(0).into(), &f.column(1).into())];
        Matrix::<D>::from_fn(|r, c| cols[c][r])
    }
}

pub fn inverse<const D: usize>(m: &Matrix<D>) -> Option<Matrix<D>> {
    let d = det(m);
    if d == 0.0 || !d.is_finite() {
        return None;
    }
    Some(cofactor(m).transpose() / d)
}

/// 3D cross product on generic vectors (`D` must be 3).
pub fn cross<const D: usize>(a: &Vector<D>, b: &Vector<D>) -> Vector<D> {
    Vector::<D>::from_fn(|k, _| {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        a[i] * b[j] - a[j] * b[i]
    })
}

/// `(U, σ, Vᵀ)` with `σ` sorted in decreasing order.
pub fn svd<const D: usize>(m: &Matrix<D>) -> (Matrix<D>, Vector<D>, Matrix<D>) {
    let dm = DMatrix::from_column_slice(D, D, m.as_slice());
    let s = dm.svd(true, true);
    let mut idx: Vec<usize> = (0..D).collect();
    idx.sort_by(|&a, &b| s.singular_values[b].total_cmp(&s.singular_values[a]));
    let u = s.u.expect("requested U");
    let vt = s.v_t.expect("requested Vᵀ");
    (
        Matrix::<D>::from_fn(|r, c| u[(r, idx[c])]),
        Vector::<D>::from_fn(|k, _| s.singular_values[idx[k]]),
        Matrix::<D>::from_fn(|r, c| vt[(idx[r], c)]),
    )
}
