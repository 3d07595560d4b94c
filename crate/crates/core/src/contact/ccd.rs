//! Conservative-advancement step bound.

use super::potential::pair_distance;
use super::{ContactPair, PairKind};
use crate::Vector;

const MAX_ROUNDS: usize = 64;

/// Upper bound on how fast the pair distance can change per unit step.
fn lipschitz<const D: usize>(p: &[Vector<D>], pair: &ContactPair) -> f64 {
    let n = pair.stencil(D);
    let speed = |i: usize| p[n[i]].norm();
    match pair.kind {
        PairKind::PointFacet => speed(0) + (1..=D).map(speed).fold(0.0, f64::max),
        PairKind::EdgeEdge => speed(0).max(speed(1)) + speed(2).max(speed(3)),
    }
}

fn pair_bound<const D: usize>(x: &[Vector<D>], p: &[Vector<D>], pair: &ContactPair, keep: f64, xt: &mut [Vector<D>]) -> f64 {
    let lip = lipschitz(p, pair);
    if lip == 0.0 {
        return 1.0;
    }
    let d0 = pair_distance(x, pair);
    let target = keep * d0;
    if d0 - lip >= target {
        return 1.0;
    }
    let stencil = pair.stencil(D);
    let mut t = 0.0;
    let mut d = d0;
    for _ in 0..MAX_ROUNDS {
        let dt = (d - target) / lip;
        if dt <= 0.0 {
            break;
        }
        if t + dt >= 1.0 {
            return 1.0;
        }
        t += dt;
        for &n in stencil {
            xt[n] = x[n] + p[n] * t;
        }
        d = pair_distance(xt, pair);
        if dt < 1e-6 * t {
            break;
        }
    }
    t
}

/// Largest `α ∈ (0, 1]` found such that every pair keeps at least `keep`
/// times its current distance along `x + α' p` for all `α' ≤ α`.
///
/// Each pair is advanced by `(d - keep d_0) / L`, where `L` bounds the rate of
/// change of its distance along `p`; the returned step is the minimum over
/// pairs and therefore conservative.
pub fn ccd_step_bound<const D: usize>(x: &[Vector<D>], p: &[Vector<D>], pairs: &[ContactPair], keep: f64) -> f64 {
    let mut xt = x.to_vec();
    let mut alpha: f64 = 1.0;
    for pair in pairs {
        alpha = alpha.min(pair_bound(x, p, pair, keep, &mut xt));
    }
    alpha
}
