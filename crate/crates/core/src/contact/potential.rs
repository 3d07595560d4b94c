use nalgebra::{DMatrix, DVector};

use super::autodiff::Hyper;
use super::barrier::{barrier, barrier_derivative, barrier_second_derivative};
use super::distance::{classify_edge_edge, classify_point_facet, distance_sq, stencil_distance_sq, DistanceType};
use super::{BarrierParams, ContactPair, ContactSet, PairKind};
use crate::energy::{project_psd, BlockTriplets, EnergyReport};
use crate::{Result, Vector};

fn classify<const D: usize>(xs: &[Vector<D>], kind: PairKind) -> DistanceType {
    match kind {
        PairKind::PointFacet => classify_point_facet(xs),
        PairKind::EdgeEdge => classify_edge_edge(xs),
    }
}

fn sq_derivatives_n<const D: usize, const N: usize>(
    xs: &[Vector<D>],
    ty: DistanceType,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let vars: Vec<[Hyper<N>; D]> = xs
        .iter()
        .enumerate()
        .map(|(n, x)| std::array::from_fn(|k| Hyper::variable(x[k], D * n + k)))
        .collect();
    let s = distance_sq(ty, &vars);
    (
        s.v,
        DVector::from_column_slice(s.g.as_slice()),
        DMatrix::from_column_slice(N, N, s.h.as_slice()),
    )
}

/// Squared distance of a `D + 1` node stencil with its exact gradient and
/// Hessian (node-major ordering).
pub fn stencil_sq_derivatives<const D: usize>(
    xs: &[Vector<D>],
    kind: PairKind,
) -> (f64, DVector<f64>, DMatrix<f64>) {
    let ty = classify(xs, kind);
    match D {
        2 => sq_derivatives_n::<D, 6>(xs, ty),
        3 => sq_derivatives_n::<D, 12>(xs, ty),
        _ => unreachable!("dimension is 2 or 3"),
    }
}

fn gather<const D: usize>(x: &[Vector<D>], pair: &ContactPair) -> Vec<Vector<D>> {
    pair.stencil(D).iter().map(|&n| x[n]).collect()
}

/// Unsigned distance of a pair at positions `x`.
pub fn pair_distance<const D: usize>(x: &[Vector<D>], pair: &ContactPair) -> f64 {
    stencil_distance_sq(&gather(x, pair), pair.kind == PairKind::EdgeEdge).sqrt()
}

/// Barrier value, gradient and (PSD-projected) Hessian of one pair, or `None`
/// when the pair is inactive.
pub(crate) fn pair_barrier<const D: usize>(
    x: &[Vector<D>],
    pair: &ContactPair,
    params: &BarrierParams,
    with_hessian: bool,
) -> Result<Option<(f64, DVector<f64>, Option<DMatrix<f64>>)>> {
    pair_barrier_with(x, pair, params, with_hessian, true)
}

fn pair_barrier_with<const D: usize>(
    x: &[Vector<D>],
    pair: &ContactPair,
    params: &BarrierParams,
    with_hessian: bool,
    project: bool,
) -> Result<Option<(f64, DVector<f64>, Option<DMatrix<f64>>)>> {
    let xs = gather(x, pair);
    let d = stencil_distance_sq(&xs, pair.kind == PairKind::EdgeEdge).sqrt();
    let b = barrier(d, params)?;
    if d >= params.dhat {
        return Ok(None);
    }
    let (_, gs, hs) = stencil_sq_derivatives(&xs, pair.kind);
    let w = pair.weight;
    let b1 = barrier_derivative(d, params)?;
    let grad = &gs * (w * b1 / (2.0 * d));
    let hess = if with_hessian {
        let b2 = barrier_second_derivative(d, params)?;
        let ggt = &gs * gs.transpose();
        let h = &ggt * (w * (b2 / (4.0 * d * d) - b1 / (4.0 * d * d * d))) + &hs * (w * b1 / (2.0 * d));
        Some(if project { project_psd(&h) } else { h })
    } else {
        None
    };
    Ok(Some((w * b, grad, hess)))
}

fn barrier_sum<const D: usize>(
    x: &[Vector<D>],
    pairs: &[ContactPair],
    params: &BarrierParams,
    with_hessian: bool,
) -> Result<EnergyReport<D>> {
    let mut out = EnergyReport::zeros(x.len());
    for pair in pairs {
        if let Some((v, g, h)) = pair_barrier(x, pair, params, with_hessian)? {
            let nodes = pair.stencil(D);
            out.value += v;
            out.add_gradient(nodes, &g, 1.0);
            if let Some(h) = h {
                out.hessian.add_dense(nodes, &h, 1.0);
            }
        }
    }
    Ok(out)
}

/// `Σ s_q b(d(x_q, e))` over the solid–fluid pairs of `set`; gradient indexed
/// by global node over all of `x`.
pub fn solid_fluid_barrier<const D: usize>(
    x: &[Vector<D>],
    set: &ContactSet<D>,
    params: &BarrierParams,
    with_hessian: bool,
) -> Result<EnergyReport<D>> {
    barrier_sum(x, &set.solid_fluid, params, with_hessian)
}

/// Area-weighted barrier over the solid–solid primitive pairs of `set`.
pub fn solid_solid_contact<const D: usize>(
    x: &[Vector<D>],
    set: &ContactSet<D>,
    params: &BarrierParams,
    with_hessian: bool,
) -> Result<EnergyReport<D>> {
    barrier_sum(x, &set.solid_solid, params, with_hessian)
}

/// Exact (unprojected) Hessian of the weighted barrier sum over `pairs`.
pub fn barrier_hessian_exact<const D: usize>(
    x: &[Vector<D>],
    pairs: &[ContactPair],
    params: &BarrierParams,
) -> Result<BlockTriplets<D>> {
    let mut out = BlockTriplets::new();
    for pair in pairs {
        if let Some((_, _, Some(h))) = pair_barrier_with(x, pair, params, true, false)? {
            out.add_dense(pair.stencil(D), &h, 1.0);
        }
    }
    Ok(out)
}
