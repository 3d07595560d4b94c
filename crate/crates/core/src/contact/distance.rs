//! Unsigned distances between contact primitives.
//!
//! A primitive pair is described by a stencil of `D + 1` nodes:
//! point–facet pairs are `[p, f_0, .., f_{D-1}]` (point–segment in 2D,
//! point–triangle in 3D) and edge–edge pairs (3D only) are `[a0, a1, b0, b1]`.
//! The closest-feature classification selects a smooth squared-distance formula
//! that is then differentiated exactly.

use crate::contact::autodiff::Real;
use crate::{Error, Result, Vector};

/// Closest-feature type with stencil-local node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceType {
    /// Point to point.
    PointPoint(usize, usize),
    /// Point to the infinite line through two nodes.
    PointLine(usize, usize, usize),
    /// Point to the plane through three nodes (3D).
    PointPlane(usize, usize, usize, usize),
    /// Line to line (3D).
    LineLine(usize, usize, usize, usize),
}

/// Squared distance and clamped parameter of the closest point on segment `ab`.
pub fn point_segment_sq<const D: usize>(p: &Vector<D>, a: &Vector<D>, b: &Vector<D>) -> (f64, f64) {
    let u = b - a;
    let uu = u.norm_squared();
    let t = if uu > 0.0 { ((p - a).dot(&u) / uu).clamp(0.0, 1.0) } else { 0.0 };
    ((p - (a + u * t)).norm_squared(), t)
}

fn segment_type<const D: usize>(xs: &[Vector<D>], p: usize, a: usize, b: usize) -> (f64, DistanceType) {
    let (d2, t) = point_segment_sq(&xs[p], &xs[a], &xs[b]);
    let ty = if t <= 0.0 {
        DistanceType::PointPoint(p, a)
    } else if t >= 1.0 {
        DistanceType::PointPoint(p, b)
    } else {
        DistanceType::PointLine(p, a, b)
    };
    (d2, ty)
}

/// Barycentric coordinates `(s, t)` of the projection of `p` onto the plane of
/// `(a, b, c)`, i.e. `proj = a + s (b - a) + t (c - a)`.
fn plane_coords<const D: usize>(p: &Vector<D>, a: &Vector<D>, b: &Vector<D>, c: &Vector<D>) -> (f64, f64) {
    let u = b - a;
    let v = c - a;
    let w = p - a;
    let (uu, uv, vv) = (u.dot(&u), u.dot(&v), v.dot(&v));
    let (wu, wv) = (w.dot(&u), w.dot(&v));
    let det = uu * vv - uv * uv;
    ((vv * wu - uv * wv) / det, (uu * wv - uv * wu) / det)
}

/// Closest-feature type for a point–facet stencil `[p, f_0, .., f_{D-1}]`.
pub fn classify_point_facet<const D: usize>(xs: &[Vector<D>]) -> DistanceType {
    if D == 2 {
        return segment_type(xs, 0, 1, 2).1;
    }
    let (s, t) = plane_coords(&xs[0], &xs[1], &xs[2], &xs[3]);
    if s >= 0.0 && t >= 0.0 && s + t <= 1.0 {
        return DistanceType::PointPlane(0, 1, 2, 3);
    }
    [(1, 2), (2, 3), (3, 1)]
        .iter()
        .map(|&(a, b)| segment_type(xs, 0, a, b))
        .min_by(|l, r| l.0.total_cmp(&r.0))
        .map(|(_, ty)| ty)
        .unwrap()
}

/// Closest-feature type for an edge–edge stencil `[a0, a1, b0, b1]`.
pub fn classify_edge_edge<const D: usize>(xs: &[Vector<D>]) -> DistanceType {
    let ua = xs[1] - xs[0];
    let ub = xs[3] - xs[2];
    let w0 = xs[0] - xs[2];
    let (a, b, c) = (ua.dot(&ua), ua.dot(&ub), ub.dot(&ub));
    let (d, e) = (ua.dot(&w0), ub.dot(&w0));
    let denom = a * c - b * b;
    if denom > 1e-10 * a * c {
        let s = (b * e - c * d) / denom;
        let t = (a * e - b * d) / denom;
        if s > 0.0 && s < 1.0 && t > 0.0 && t < 1.0 {
            return DistanceType::LineLine(0, 1, 2, 3);
        }
    }
    [(0, 2, 3), (1, 2, 3), (2, 0, 1), (3, 0, 1)]
        .iter()
        .map(|&(p, a, b)| segment_type(xs, p, a, b))
        .min_by(|l, r| l.0.total_cmp(&r.0))
        .map(|(_, ty)| ty)
        .unwrap()
}

fn dot<T: Real, const D: usize>(a: &[T; D], b: &[T; D]) -> T {
    let mut s = a[0] * b[0];
    for k in 1..D {
        s = s + a[k] * b[k];
    }
    s
}

fn sub<T: Real, const D: usize>(a: &[T; D], b: &[T; D]) -> [T; D] {
    std::array::from_fn(|k| a[k] - b[k])
}

fn cross<T: Real, const D: usize>(a: &[T; D], b: &[T; D]) -> [T; D] {
    assert_eq!(D, 3, "cross product is only defined in 3D");
    std::array::from_fn(|k| {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        a[i] * b[j] - a[j] * b[i]
    })
}

/// Squared distance of the given type, generic over the scalar so the same
/// expression yields values and exact derivatives.
pub fn distance_sq<T: Real, const D: usize>(ty: DistanceType, xs: &[[T; D]]) -> T {
    match ty {
        DistanceType::PointPoint(p, q) => {
            let w = sub(&xs[p], &xs[q]);
            dot(&w, &w)
        }
        DistanceType::PointLine(p, a, b) => {
            let w = sub(&xs[p], &xs[a]);
            let u = sub(&xs[b], &xs[a]);
            let wu = dot(&w, &u);
            dot(&w, &w) - wu * wu / dot(&u, &u)
        }
        DistanceType::PointPlane(p, a, b, c) => {
            let n = cross(&sub(&xs[b], &xs[a]), &sub(&xs[c], &xs[a]));
            let q = dot(&sub(&xs[p], &xs[a]), &n);
            q * q / dot(&n, &n)
        }
        DistanceType::LineLine(a0, a1, b0, b1) => {
            let n = cross(&sub(&xs[a1], &xs[a0]), &sub(&xs[b1], &xs[b0]));
            let q = dot(&sub(&xs[b0], &xs[a0]), &n);
            q * q / dot(&n, &n)
        }
    }
}

pub(crate) fn to_arrays<const D: usize>(xs: &[Vector<D>]) -> Vec<[f64; D]> {
    xs.iter().map(|x| std::array::from_fn(|k| x[k])).collect()
}

/// Measure of a facet (segment length in 2D, triangle area in 3D).
pub fn facet_measure<const D: usize>(facet: &[Vector<D>]) -> f64 {
    if D == 2 {
        (facet[1] - facet[0]).norm()
    } else {
        let u = facet[1] - facet[0];
        let v = facet[2] - facet[0];
        0.5 * (u.norm_squared() * v.norm_squared() - u.dot(&v).powi(2)).max(0.0).sqrt()
    }
}

/// Exact unsigned distance from a point to a closed facet (segment in 2D,
/// triangle in 3D), considering interior, edges and vertices.
pub fn point_facet_distance<const D: usize>(p: &Vector<D>, facet: &[Vector<D>]) -> Result<f64> {
    assert_eq!(facet.len(), D);
    let scale = facet.iter().map(|f| (f - facet[0]).norm()).fold(0.0, f64::max);
    let measure = facet_measure(facet);
    if !(measure > 1e-14 * scale.powi(D as i32 - 1)) || measure == 0.0 {
        return Err(Error::DegenerateElement { measure });
    }
    let mut xs = Vec::with_capacity(D + 1);
    xs.push(*p);
    xs.extend_from_slice(facet);
    Ok(stencil_distance_sq(&xs, false).sqrt())
}

/// Squared distance of a `D + 1` node stencil, evaluated in `f64`.
pub fn stencil_distance_sq<const D: usize>(xs: &[Vector<D>], edge_edge: bool) -> f64 {
    let ty = if edge_edge { classify_edge_edge(xs) } else { classify_point_facet(xs) };
    distance_sq(ty, &to_arrays(xs)).max(0.0)
}

/// Weights `w_k` such that the closest point on the facet equals `Σ_k w_k f_k`
/// for a point–facet stencil.
pub fn closest_facet_weights<const D: usize>(xs: &[Vector<D>]) -> Vec<f64> {
    let mut w = vec![0.0; D];
    match classify_point_facet(xs) {
        DistanceType::PointPoint(_, q) => w[q - 1] = 1.0,
        DistanceType::PointLine(p, a, b) => {
            let (_, t) = point_segment_sq(&xs[p], &xs[a], &xs[b]);
            w[a - 1] = 1.0 - t;
            w[b - 1] = t;
        }
        DistanceType::PointPlane(..) => {
            let (s, t) = plane_coords(&xs[0], &xs[1], &xs[2], &xs[3]);
            w[0] = 1.0 - s - t;
            w[1] = s;
            w[2] = t;
        }
        DistanceType::LineLine(..) => unreachable!("point-facet stencils never classify as line-line"),
    }
    w
}
