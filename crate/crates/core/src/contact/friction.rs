//! Lagged friction: normal force magnitudes and sliding bases are frozen at the
//! start of a step, leaving a smooth potential in the positions.

use nalgebra::{DMatrix, DVector};

use super::distance::closest_facet_weights;
use super::potential::pair_barrier;
use super::{BarrierParams, ContactPair, PairKind};
use crate::energy::EnergyReport;
use crate::{Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionParams {
    /// Friction coefficient `μ_t`.
    pub mu: f64,
    /// Sliding velocity below which friction is smoothly reduced.
    pub eps_v: f64,
}

/// Friction data for one point–facet pair active at the start of the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionRecord<const D: usize> {
    /// `[point, facet nodes..]`; the first `D + 1` entries are used.
    pub nodes: [usize; 4],
    /// Relative displacement is `Σ_a coef[a] (x_a - x_a^n)`.
    pub coef: [f64; 4],
    /// Orthonormal tangent directions at `x^n`; the first `D - 1` are used.
    pub tangents: [Vector<D>; 2],
    /// Normal force magnitude `λ^n`.
    pub lambda: f64,
}

/// Smoothed friction magnitude scaling; `eh = ε_v h`.
pub fn f1(y: f64, eh: f64) -> f64 {
    if y < eh {
        -y * y / (eh * eh) + 2.0 * y / eh
    } else {
        1.0
    }
}

/// Antiderivative of [`f1`], continuous at `eh`.
pub fn f0(y: f64, eh: f64) -> f64 {
    if y < eh {
        -y * y * y / (3.0 * eh * eh) + y * y / eh + eh / 3.0
    } else {
        y
    }
}

fn tangent_basis<const D: usize>(n: &Vector<D>) -> [Vector<D>; 2] {
    let mut t = [Vector::<D>::zeros(); 2];
    if D == 2 {
        t[0][0] = -n[1];
        t[0][1] = n[0];
    } else {
        let axis = (0..D).min_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs())).unwrap();
        let mut e = Vector::<D>::zeros();
        e[axis] = 1.0;
        let t0 = (e - n * n.dot(&e)).normalize();
        let t1 = Vector::<D>::from_fn(|k, _| {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            n[i] * t0[j] - n[j] * t0[i]
        });
        t[0] = t0;
        t[1] = t1;
    }
    t
}

/// Build friction records for the point–facet pairs active at `x_n`.
/// `λ^n` is the component of the pair's barrier force on the point along the
/// contact normal.
pub fn friction_precompute<const D: usize>(
    x_n: &[Vector<D>],
    pairs: &[ContactPair],
    params: &BarrierParams,
) -> Result<Vec<FrictionRecord<D>>> {
    let mut out = Vec::new();
    for pair in pairs.iter().filter(|p| p.kind == PairKind::PointFacet) {
        let Some((_, grad, _)) = pair_barrier(x_n, pair, params, false)? else {
            continue;
        };
        let stencil = pair.stencil(D);
        let xs: Vec<Vector<D>> = stencil.iter().map(|&i| x_n[i]).collect();
        let w = closest_facet_weights(&xs);
        let closest: Vector<D> = (0..D).map(|k| xs[k + 1] * w[k]).sum();
        let normal = (xs[0] - closest).normalize();
        let force_on_point = Vector::<D>::from_fn(|c, _| -grad[c]);
        let lambda = force_on_point.dot(&normal).abs();
        let mut coef = [0.0; 4];
        coef[0] = 1.0;
        for k in 0..D {
            coef[k + 1] = -w[k];
        }
        out.push(FrictionRecord { nodes: pair.nodes, coef, tangents: tangent_basis(&normal), lambda });
    }
    Ok(out)
}

/// `Σ_k μ λ_k f0(‖u_k‖)` with `u_k` the tangential relative displacement since
/// `x_n`. `h` sets the smoothing length `ε_v h`.
pub fn friction_potential<const D: usize>(
    x: &[Vector<D>],
    x_n: &[Vector<D>],
    records: &[FrictionRecord<D>],
    params: &FrictionParams,
    h: f64,
    with_hessian: bool,
) -> EnergyReport<D> {
    let mut out = EnergyReport::zeros(x.len());
    if params.mu == 0.0 {
        return out;
    }
    let eh = params.eps_v * h;
    let m = D - 1;
    for r in records {
        let nodes = &r.nodes[..D + 1];
        let rel: Vector<D> = nodes.iter().zip(&r.coef).map(|(&n, &c)| (x[n] - x_n[n]) * c).sum();
        let u = DVector::from_fn(m, |j, _| r.tangents[j].dot(&rel));
        let y = u.norm();
        let scale = params.mu * r.lambda;
        out.value += scale * f0(y, eh);
        // Force in the tangent plane, then spread over the stencil.
        let tu: Vector<D> = if y > 0.0 {
            (0..m).map(|j| r.tangents[j] * u[j]).sum::<Vector<D>>() * (f1(y, eh) / y)
        } else {
            Vector::<D>::zeros()
        };
        let mut g = DVector::zeros(D * (D + 1));
        for a in 0..=D {
            for c in 0..D {
                g[a * D + c] = r.coef[a] * tu[c];
            }
        }
        out.add_gradient(nodes, &g, scale);
        if with_hessian {
            let hu = if y < eh {
                let mut hu = DMatrix::identity(m, m) * (2.0 / eh - y / (eh * eh));
                if y > 0.0 {
                    hu -= &u * u.transpose() / (eh * eh * y);
                }
                hu
            } else {
                (DMatrix::identity(m, m) - &u * u.transpose() / (y * y)) / y
            };
            let t = DMatrix::from_fn(D, m, |c, j| r.tangents[j][c]);
            let local = &t * hu * t.transpose();
            let mut h = DMatrix::zeros(D * (D + 1), D * (D + 1));
            for a in 0..=D {
                for b in 0..=D {
                    let cab = r.coef[a] * r.coef[b];
                    h.view_mut((a * D, b * D), (D, D)).copy_from(&(&local * cab));
                }
            }
            out.hessian.add_dense(nodes, &h, scale);
        }
    }
    out
}
