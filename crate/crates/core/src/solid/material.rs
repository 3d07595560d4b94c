//! Hyperelastic energy densities and their first and second derivatives.

use nalgebra::DMatrix;

use crate::small::{cofactor, det, inverse, svd};
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialKind {
    NeoHookean,
    FixedCorotated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialModel {
    pub kind: MaterialKind,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub mu: f64,
    pub lambda: f64,
}

impl MaterialModel {
    pub fn new(kind: MaterialKind, youngs_modulus: f64, poisson_ratio: f64) -> Result<Self> {
        if !(youngs_modulus > 0.0 && youngs_modulus.is_finite()) {
            return Err(Error::validation("E", "Young's modulus must be positive"));
        }
        if !(poisson_ratio > -1.0 && poisson_ratio < 0.5) {
            return Err(Error::validation("nu_s", "Poisson ratio must lie in (-1, 0.5)"));
        }
        let mu = youngs_modulus / (2.0 * (1.0 + poisson_ratio));
        let lambda = youngs_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
        Ok(Self { kind, youngs_modulus, poisson_ratio, mu, lambda })
    }

    /// Energy density `ψ(F)`.
    pub fn psi<const D: usize>(&self, f: &Matrix<D>) -> Result<f64> {
        match self.kind {
            MaterialKind::NeoHookean => {
                let j = det(f);
                if j <= 0.0 {
                    return Err(Error::ElementInversion { element: usize::MAX, det: j });
                }
                let lj = j.ln();
                Ok(0.5 * self.mu * (f.norm_squared() - D as f64) - self.mu * lj + 0.5 * self.lambda * lj * lj)
            }
            MaterialKind::FixedCorotated => {
                let (r, _) = polar(f);
                let j = det(f);
                Ok(self.mu * (f - r).norm_squared() + 0.5 * self.lambda * (j - 1.0) * (j - 1.0))
            }
        }
    }

    /// First Piola–Kirchhoff stress `∂ψ/∂F`.
    pub fn first_piola<const D: usize>(&self, f: &Matrix<D>) -> Result<Matrix<D>> {
        match self.kind {
            MaterialKind::NeoHookean => {
                let j = det(f);
                if j <= 0.0 {
                    return Err(Error::ElementInversion { element: usize::MAX, det: j });
                }
                let fit = inverse(f).expect("det > 0").transpose();
                Ok((f - fit) * self.mu + fit * (self.lambda * j.ln()))
            }
            MaterialKind::FixedCorotated => {
                let (r, _) = polar(f);
                let j = det(f);
                Ok((f - r) * (2.0 * self.mu) + cofactor(f) * (self.lambda * (j - 1.0)))
            }
        }
    }

    /// Directional derivative `dP = (∂P/∂F) : dF`.
    pub fn piola_differential<const D: usize>(&self, f: &Matrix<D>, df: &Matrix<D>) -> Result<Matrix<D>> {
        match self.kind {
            MaterialKind::NeoHookean => {
                let j = det(f);
                if j <= 0.0 {
                    return Err(Error::ElementInversion { element: usize::MAX, det: j });
                }
                let finv = inverse(f).expect("det > 0");
                let fit = finv.transpose();
                let lj = j.ln();
                let twist = fit * df.transpose() * fit;
                Ok(df * self.mu + twist * (self.mu - self.lambda * lj) + fit * (self.lambda * (finv * df).trace()))
            }
            MaterialKind::FixedCorotated => {
                let (r, s) = polar(f);
                let dr = rotation_differential(&r, &s, df);
                let j = det(f);
                let cof = cofactor(f);
                let dj = cof.component_mul(df).sum();
                Ok((df - dr) * (2.0 * self.mu) + cof * (self.lambda * dj) + cofactor_differential(f, df) * (self.lambda * (j - 1.0)))
            }
        }
    }

    /// `∂P/∂F` as a `D² x D²` matrix acting on column-major `vec(dF)`.
    pub fn stress_derivative<const D: usize>(&self, f: &Matrix<D>) -> Result<DMatrix<f64>> {
        let n = D * D;
        let mut out = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut df = Matrix::<D>::zeros();
            df[k] = 1.0;
            let dp = self.piola_differential(f, &df)?;
            for (r, v) in dp.iter().enumerate() {
                out[(r, k)] = *v;
            }
        }
        Ok(out)
    }
}

/// Rotation-variant polar decomposition `F = R S` with `det R = +1`. For
/// inverted `F` the sign is moved onto the smallest singular value.
pub fn polar<const D: usize>(f: &Matrix<D>) -> (Matrix<D>, Matrix<D>) {
    let (mut u, mut sigma, mut vt) = svd(f);
    // Singular values are sorted in decreasing order; flip the last one.
    if det(&u) < 0.0 {
        u.column_mut(D - 1).neg_mut();
        sigma[D - 1] = -sigma[D - 1];
    }
    if det(&vt) < 0.0 {
        vt.row_mut(D - 1).neg_mut();
        sigma[D - 1] = -sigma[D - 1];
    }
    let r = u * vt;
    let s = vt.transpose() * Matrix::<D>::from_diagonal(&sigma) * vt;
    (r, s)
}

fn cofactor_differential<const D: usize>(f: &Matrix<D>, df: &Matrix<D>) -> Matrix<D> {
    if D == 2 {
        cofactor(df)
    } else {
        let col = |m: &Matrix<D>, k: usize| Vector::<3>::new(m[(0, k)], m[(1, k)], m[(2, k)]);
        let cols: Vec<Vector<3>> = (0..3)
            .map(|c| {
                let (a, b) = ((c + 1) % 3, (c + 2) % 3);
                col(df, a).cross(&col(f, b)) + col(f, a).cross(&col(df, b))
            })
            .collect();
        Matrix::<D>::from_fn(|r, c| cols[c][r])
    }
}

/// `dR` for `F = R S` perturbed by `dF`: `dR = R W` with `W S + S W = Rᵀ dF - dFᵀ R`.
fn rotation_differential<const D: usize>(r: &Matrix<D>, s: &Matrix<D>, df: &Matrix<D>) -> Matrix<D> {
    let a = r.transpose() * df - df.transpose() * r;
    let floor = 1e-12 * s.norm().max(1e-300);
    let mut w = Matrix::<D>::zeros();
    if D == 2 {
        let tr = s.trace();
        let tr = if tr.abs() < floor { floor.copysign(tr) } else { tr };
        let omega = a[(1, 0)] / tr;
        w[(0, 1)] = -omega;
        w[(1, 0)] = omega;
    } else {
        let axial = Vector::<3>::new(a[(2, 1)], a[(0, 2)], a[(1, 0)]);
        let s3 = Matrix::<3>::from_fn(|i, j| s[(i, j)]);
        let eig = s3.symmetric_eigen();
        let lam = eig.eigenvalues;
        let tr = lam.sum();
        let q = eig.eigenvectors;
        let mut rhs = q.transpose() * axial;
        for k in 0..3 {
            let den = tr - lam[k];
            let den = if den.abs() < floor { floor.copysign(den) } else { den };
            rhs[k] /= den;
        }
        let omega = q * rhs;
        w[(0, 1)] = -omega[2];
        w[(0, 2)] = omega[1];
        w[(1, 0)] = omega[2];
        w[(1, 2)] = -omega[0];
        w[(2, 0)] = -omega[1];
        w[(2, 1)] = omega[0];
    }
    r * w
}
