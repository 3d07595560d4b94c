//! Second-order forward-mode differentiation for small closed-form expressions.
//!
//! Squared primitive distances are rational functions of at most twelve
//! coordinates, so carrying a dense gradient and Hessian through each arithmetic
//! operation is cheap and gives exact derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{SMatrix, SVector};

/// Arithmetic needed by the distance formulas.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(&self) -> f64;
}

impl Real for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
}

/// Value, gradient and Hessian with respect to `N` independent variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper<const N: usize> {
    pub v: f64,
    pub g: SVector<f64, N>,
    pub h: SMatrix<f64, N, N>,
}

impl<const N: usize> Hyper<N> {
    /// The `i`-th independent variable with value `v`.
    pub fn variable(v: f64, i: usize) -> Self {
        let mut g = SVector::<f64, N>::zeros();
        g[i] = 1.0;
        Self {
            v,
            g,
            h: SMatrix::zeros(),
        }
    }

    fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        let inv2 = inv * inv;
        Self {
            v: inv,
            g: self.g * (-inv2),
            h: self.h * (-inv2) + self.g * self.g.transpose() * (2.0 * inv2 * inv),
        }
    }
}

impl<const N: usize> Real for Hyper<N> {
    fn constant(v: f64) -> Self {
        Self {
            v,
            g: SVector::zeros(),
            h: SMatrix::zeros(),
        }
    }
    fn value(&self) -> f64 {
        self.v
    }
}

impl<const N: usize> Add for Hyper<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            v: self.v + o.v,
            g: self.g + o.g,
            h: self.h + o.h,
        }
    }
}

impl<const N: usize> Sub for Hyper<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            v: self.v - o.v,
            g: self.g - o.g,
            h: self.h - o.h,
        }
    }
}

impl<const N: usize> Neg for Hyper<N> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            v: -self.v,
            g: -self.g,
            h: -self.h,
        }
    }
}

impl<const N: usize> Mul for Hyper<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let cross = self.g * o.g.transpose();
        Self {
            v: self.v * o.v,
            g: self.g * o.v + o.g * self.v,
            h: self.h * o.v + o.h * self.v + cross + cross.transpose(),
        }
    }
}

impl<const N: usize> Div for Hyper<N> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}
