//! Compact-support SPH smoothing kernels.
//!
//! Both kernels are radial, non-negative, non-increasing in `|r|` and vanish for
//! `|r| >= support_radius`. Normalization constants make `∫ W dV = 1` in the
//! requested dimension.

use std::f64::consts::PI;

use crate::{Error, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Piecewise cubic spline; used for density summation.
    CubicSpline,
    /// `(1 - r/h)^3`; used for gradients.
    Spiky,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    support_radius: f64,
    dim: usize,
    sigma: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, support_radius: f64, dim: usize) -> Result<Self> {
        if !(support_radius > 0.0 && support_radius.is_finite()) {
            return Err(Error::validation("support_radius", "must be positive and finite"));
        }
        let h = support_radius;
        let sigma = match (kind, dim) {
            (KernelKind::CubicSpline, 2) => 40.0 / (7.0 * PI * h * h),
            (KernelKind::CubicSpline, 3) => 8.0 / (PI * h * h * h),
            (KernelKind::Spiky, 2) => 10.0 / (PI * h * h),
            (KernelKind::Spiky, 3) => 15.0 / (PI * h * h * h),
            _ => return Err(Error::validation("dim", format!("{dim} is not 2 or 3"))),
        };
        Ok(Self {
            kind,
            support_radius,
            dim,
            sigma,
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalization(&self) -> f64 {
        self.sigma
    }

    /// `W` as a function of the distance `r >= 0`.
    pub fn value_at(&self, r: f64) -> f64 {
        let q = r / self.support_radius;
        if q >= 1.0 {
            return 0.0;
        }
        match self.kind {
            KernelKind::CubicSpline => {
                if q <= 0.5 {
                    self.sigma * (6.0 * (q * q * q - q * q) + 1.0)
                } else {
                    let t = 1.0 - q;
                    self.sigma * 2.0 * t * t * t
                }
            }
            KernelKind::Spiky => {
                let t = 1.0 - q;
                self.sigma * t * t * t
            }
        }
    }

    /// `dW/dr` for `r >= 0`.
    pub fn derivative_at(&self, r: f64) -> f64 {
        let q = r / self.support_radius;
        if q >= 1.0 {
            return 0.0;
        }
        let dq = match self.kind {
            KernelKind::CubicSpline => {
                if q <= 0.5 {
                    self.sigma * (18.0 * q * q - 12.0 * q)
                } else {
                    let t = 1.0 - q;
                    -6.0 * self.sigma * t * t
                }
            }
            KernelKind::Spiky => {
                let t = 1.0 - q;
                -3.0 * self.sigma * t * t
            }
        };
        dq / self.support_radius
    }

    pub fn eval<const D: usize>(&self, r: &Vector<D>) -> f64 {
        debug_assert_eq!(D, self.dim);
        self.value_at(r.norm())
    }

    /// Gradient with respect to the first particle, i.e. `∇_i W(x_i - x_j)` for `r = x_i - x_j`.
    /// Zero at `r = 0`.
    pub fn grad<const D: usize>(&self, r: &Vector<D>) -> Vector<D> {
        debug_assert_eq!(D, self.dim);
        let len = r.norm();
        if len == 0.0 || len >= self.support_radius {
            return Vector::<D>::zeros();
        }
        r * (self.derivative_at(len) / len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Vector2, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn specs() -> Vec<KernelSpec> {
        let mut out = Vec::new();
        for kind in [KernelKind::CubicSpline, KernelKind::Spiky] {
            for dim in [2, 3] {
                out.push(KernelSpec::new(kind, 0.7, dim).unwrap());
            }
        }
        out
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(KernelSpec::new(KernelKind::Spiky, 0.0, 2).is_err());
        assert!(KernelSpec::new(KernelKind::Spiky, -1.0, 3).is_err());
        assert!(KernelSpec::new(KernelKind::CubicSpline, 1.0, 4).is_err());
    }

    #[test]
    fn vanishes_at_support_boundary() {
        for k in specs() {
            assert_eq!(k.value_at(k.support_radius()), 0.0);
            assert_eq!(k.value_at(2.0 * k.support_radius()), 0.0);
            assert_eq!(k.derivative_at(k.support_radius()), 0.0);
        }
    }

    #[test]
    fn grad_at_origin_is_zero() {
        for k in specs() {
            if k.dim() == 2 {
                assert_eq!(k.grad(&Vector2::zeros()), Vector2::zeros());
            } else {
                assert_eq!(k.grad(&Vector3::zeros()), Vector3::zeros());
            }
        }
    }

    // Midpoint-rule quadrature of ∫ W dV over the support using the radial
    // profile: ∫ W 2πr dr in 2D and ∫ W 4πr² dr in 3D.
    fn radial_integral(k: &KernelSpec, n: usize) -> f64 {
        let dr = k.support_radius() / n as f64;
        (0..n)
            .map(|i| {
                let r = (i as f64 + 0.5) * dr;
                let shell = if k.dim() == 2 { 2.0 * PI * r } else { 4.0 * PI * r * r };
                k.value_at(r) * shell * dr
            })
            .sum()
    }

    // Cartesian grid quadrature, independent of the radial reduction above.
    fn grid_integral_2d(k: &KernelSpec, n: usize) -> f64 {
        let hbar = k.support_radius();
        let dx = 2.0 * hbar / n as f64;
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = -hbar + (i as f64 + 0.5) * dx;
                let y = -hbar + (j as f64 + 0.5) * dx;
                sum += k.eval(&Vector2::new(x, y)) * dx * dx;
            }
        }
        sum
    }

    fn grid_integral_3d(k: &KernelSpec, n: usize) -> f64 {
        let hbar = k.support_radius();
        let dx = 2.0 * hbar / n as f64;
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let p = Vector3::new(
                        -hbar + (i as f64 + 0.5) * dx,
                        -hbar + (j as f64 + 0.5) * dx,
                        -hbar + (l as f64 + 0.5) * dx,
                    );
                    sum += k.eval(&p) * dx * dx * dx;
                }
            }
        }
        sum
    }

    #[test]
    fn normalized_by_quadrature() {
        for k in specs() {
            let radial = radial_integral(&k, 200_000);
            assert!((radial - 1.0).abs() < 1e-3, "{:?} radial {radial}", k);
            let grid = if k.dim() == 2 {
                grid_integral_2d(&k, 1200)
            } else {
                grid_integral_3d(&k, 160)
            };
            assert!((grid - 1.0).abs() < 1e-3, "{:?} grid {grid}", k);
        }
    }

    #[test]
    fn radial_symmetry_and_antisymmetric_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in specs() {
            for _ in 0..200 {
                let h = k.support_radius();
                let r3 = Vector3::new(
                    rng.random_range(-h..h),
                    rng.random_range(-h..h),
                    rng.random_range(-h..h),
                );
                if k.dim() == 3 {
                    assert_eq!(k.eval(&r3), k.eval(&(-r3)));
                    assert_eq!(k.grad(&r3), -k.grad(&(-r3)));
                    assert!(k.grad(&r3).dot(&r3) <= 0.0);
                } else {
                    let r2 = r3.xy();
                    assert_eq!(k.eval(&r2), k.eval(&(-r2)));
                    assert_eq!(k.grad(&r2), -k.grad(&(-r2)));
                    assert!(k.grad(&r2).dot(&r2) <= 0.0);
                }
            }
        }
    }

    fn fd_check<const D: usize>(k: &KernelSpec, r: Vector<D>) {
        let eps = 1e-6 * k.support_radius();
        let an = k.grad(&r);
        for c in 0..D {
            let mut e = Vector::<D>::zeros();
            e[c] = eps;
            let fd = (k.eval(&(r + e)) - k.eval(&(r - e))) / (2.0 * eps);
            assert!(
                (fd - an[c]).abs() <= 1e-5 * an.norm(),
                "{:?} c={c} fd={fd} an={}",
                k.kind(),
                an[c]
            );
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in specs() {
            let h = k.support_radius();
            let mut checked = 0;
            while checked < 100 {
                let r = Vector3::new(
                    rng.random_range(-h..h),
                    rng.random_range(-h..h),
                    rng.random_range(-h..h),
                );
                if k.dim() == 2 {
                    let r = r.xy();
                    if 0.1 * h < r.norm() && r.norm() < 0.9 * h {
                        fd_check(&k, r);
                        checked += 1;
                    }
                } else if 0.1 * h < r.norm() && r.norm() < 0.9 * h {
                    fd_check(&k, r);
                    checked += 1;
                }
            }
        }
    }

    #[test]
    fn grid_partition_of_unity() {
        // Interior particle on a regular lattice with spacing d and ħ = 2d.
        let d = 0.01;
        for dim in [2usize, 3] {
            let k = KernelSpec::new(KernelKind::CubicSpline, 2.0 * d, dim).unwrap();
            let v0 = d.powi(dim as i32);
            let mut sum = 0.0;
            let range = -3i32..=3;
            if dim == 2 {
                for i in range.clone() {
                    for j in range.clone() {
                        sum += v0 * k.eval(&Vector2::new(i as f64 * d, j as f64 * d));
                    }
                }
            } else {
                for i in range.clone() {
                    for j in range.clone() {
                        for l in range.clone() {
                            sum += v0
                                * k.eval(&Vector3::new(i as f64 * d, j as f64 * d, l as f64 * d));
                        }
                    }
                }
            }
            assert!((0.97..=1.03).contains(&sum), "dim {dim}: {sum}");
        }
    }
}
