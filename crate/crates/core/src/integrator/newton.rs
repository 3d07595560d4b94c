//! Projected Newton with CCD-filtered backtracking, the linear fluid phase, and
//! the warm start that moves a phase's initial guess without crossing contacts.

use super::context::{Proxy, StepCtx};
use super::objective::{Eval, Objective};
use super::StepStats;
use crate::contact::{ccd_step_bound, ContactPair, ContactSet};
use crate::energy::BlockTriplets;
use crate::linsolve::{pcg_solve, schur_solve, BlockCsr, BlockSystem, Constrained, LinearOperator, MatrixFree};
use crate::{Error, Matrix, Result, Vector};

/// Fraction of its current distance each pair keeps along a CCD-bounded step.
const CCD_KEEP: f64 = 0.1;
const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Solver {
    Pcg,
    Schur,
}

fn all_pairs<const D: usize>(set: &ContactSet<D>) -> Vec<ContactPair> {
    set.solid_fluid.iter().chain(&set.solid_solid).copied().collect()
}

fn max_norm<const D: usize>(p: &[Vector<D>], fixed: &[bool]) -> f64 {
    p.iter().zip(fixed).filter(|(_, &f)| !f).map(|(v, _)| v.norm()).fold(0.0, f64::max)
}

fn axpy<const D: usize>(x: &[Vector<D>], p: &[Vector<D>], alpha: f64) -> Vec<Vector<D>> {
    x.iter().zip(p).map(|(a, b)| a + b * alpha).collect()
}

/// `M p + H_rest p + h² ∇²P p_f`, the last term matrix-free.
struct PhaseOperator<'a, const D: usize, G> {
    mass: &'a [f64],
    rest: BlockCsr<D>,
    fluid: Option<MatrixFree<D, G>>,
    h2: f64,
}

impl<const D: usize, G: Fn(&[Vector<D>], &mut [Vector<D>])> LinearOperator<D> for PhaseOperator<'_, D, G> {
    fn block_len(&self) -> usize {
        self.mass.len()
    }

    fn apply(&self, x: &[Vector<D>], out: &mut [Vector<D>]) {
        for ((o, v), m) in out.iter_mut().zip(x).zip(self.mass) {
            *o = v * *m;
        }
        self.rest.mul_add(x, out);
        if let Some(mf) = &self.fluid {
            let nf = mf.block_len();
            let mut hp = vec![Vector::<D>::zeros(); nf];
            mf.apply(&x[..nf], &mut hp);
            for (o, v) in out.iter_mut().zip(&hp) {
                *o += v * self.h2;
            }
        }
    }

    fn diagonal_blocks(&self) -> Vec<Matrix<D>> {
        let mut d = self.rest.diagonal_blocks();
        for (b, m) in d.iter_mut().zip(self.mass) {
            *b += Matrix::<D>::identity() * *m;
        }
        if let Some(mf) = &self.fluid {
            for (b, f) in d.iter_mut().zip(mf.diagonal_blocks()) {
                *b += f * self.h2;
            }
        }
        d
    }
}

/// Solve `H p = -g` with the block-Jacobi PCG, fixed nodes held at `p = 0`.
fn solve_pcg<const D: usize>(
    ctx: &StepCtx<'_, D>,
    with_fluid: bool,
    hess: &BlockTriplets<D>,
    grad: &[Vector<D>],
    fixed: &[bool],
    tol: f64,
    stats: &mut StepStats,
) -> Result<Vec<Vector<D>>> {
    let n = grad.len();
    let fluid = match (&ctx.fluid, with_fluid) {
        (Some(fs), true) => {
            let grad = move |u: &[Vector<D>], g: &mut [Vector<D>]| {
                g.iter_mut().for_each(|v| *v = Vector::<D>::zeros());
                fs.potential_disp(u, g);
            };
            Some(MatrixFree::new(fs.len(), grad, fs.diagonal_blocks()))
        }
        _ => None,
    };
    let op = PhaseOperator { mass: &ctx.mass[..n], rest: BlockCsr::from_triplets(n, hess), fluid, h2: ctx.h * ctx.h };
    let rhs: Vec<Vector<D>> = grad.iter().zip(fixed).map(|(g, &f)| if f { Vector::<D>::zeros() } else { -g }).collect();
    let out = pcg_solve(&Constrained { inner: &op, fixed }, &rhs, tol, ctx.cfg.pcg_max_iter)?;
    stats.cg_iterations += out.iterations;
    Ok(out.solution)
}

fn solve_schur<const D: usize>(
    ctx: &StepCtx<'_, D>,
    hess: &BlockTriplets<D>,
    grad: &[Vector<D>],
    phase: &'static str,
) -> Result<Vec<Vector<D>>> {
    let nf = ctx.nf;
    let n = grad.len();
    let mut t = BlockTriplets::new();
    t.entries.reserve(hess.entries.len() + n);
    for (i, m) in ctx.mass.iter().enumerate() {
        t.push(i, i, Matrix::<D>::identity() * *m);
    }
    t.extend(hess, 1.0);
    let sys = BlockSystem::from_global(nf, n - nf, &t, ctx.fixed[nf..].to_vec());
    let rf: Vec<Vector<D>> = grad[..nf].iter().map(|g| -g).collect();
    let rs: Vec<Vector<D>> = grad[nf..].iter().map(|g| -g).collect();
    let out = schur_solve(&sys, &rf, &rs, phase)?;
    let mut p = out.fluid;
    p.extend(out.solid);
    Ok(p)
}

fn energy<const D: usize>(obj: &Objective<'_, D>, x: &[Vector<D>], pairs: &ContactSet<D>) -> f64 {
    match obj.eval(x, pairs, false) {
        Ok(Eval { value, .. }) if value.is_finite() => value,
        _ => f64::INFINITY,
    }
}

/// Initial iterate of a phase: start from the penetration-free `safe` state,
/// move Dirichlet nodes to their scripted positions, then move free nodes as
/// far toward `desired` as contacts and finite energy allow.
pub(crate) fn warm_start<const D: usize>(
    obj: &Objective<'_, D>,
    safe: &[Vector<D>],
    desired: &[Vector<D>],
) -> Result<Vec<Vector<D>>> {
    let ctx = obj.ctx;
    let dhat = ctx.barrier.dhat;
    let mut x = safe.to_vec();
    if !obj.has_barrier() {
        return Ok(desired.to_vec());
    }
    for pass in 0..2 {
        let moving = |i: usize| if pass == 0 { ctx.fixed[i] } else { !ctx.fixed[i] };
        let p: Vec<Vector<D>> =
            (0..x.len()).map(|i| if moving(i) { desired[i] - x[i] } else { Vector::<D>::zeros() }).collect();
        let pmax = p.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if pmax == 0.0 {
            continue;
        }
        let pairs = ctx.pairs(&x, dhat + 2.0 * pmax);
        let mut alpha = ccd_step_bound(&x, &p, &all_pairs(&pairs), CCD_KEEP);
        if pass == 0 {
            if alpha < 1.0 {
                let d = ctx.min_distance(&axpy(&x, &p, 1.0), &pairs).unwrap_or(0.0);
                return Err(Error::NonPositiveDistance { distance: d });
            }
            x = axpy(&x, &p, 1.0);
            continue;
        }
        let mut halvings = 0;
        while energy(obj, &axpy(&x, &p, alpha), &pairs) == f64::INFINITY {
            alpha *= 0.5;
            halvings += 1;
            if halvings > MAX_HALVINGS {
                alpha = 0.0;
                break;
            }
        }
        x = axpy(&x, &p, alpha);
    }
    Ok(x)
}

/// Projected Newton on `obj` from `x0`, which must be penetration-free.
pub(crate) fn newton<const D: usize>(
    obj: &Objective<'_, D>,
    x0: Vec<Vector<D>>,
    solver: Solver,
    phase: &'static str,
    stats: &mut StepStats,
) -> Result<Vec<Vector<D>>> {
    let ctx = obj.ctx;
    let h = ctx.h;
    let tol = ctx.cfg.newton_tol;
    let dhat = ctx.barrier.dhat;
    let barrier = obj.has_barrier();
    let mut x = x0;
    let mut residual = f64::INFINITY;
    for _ in 0..ctx.cfg.max_newton {
        let pairs = if barrier { ctx.pairs(&x, dhat) } else { ContactSet::default() };
        let ev = obj.eval(&x, &pairs, true)?;
        let p = match solver {
            Solver::Pcg => solve_pcg(ctx, obj.terms.fluid, &ev.hess, &ev.grad, &ctx.fixed, ctx.cfg.linear_tol, stats)?,
            Solver::Schur => solve_schur(ctx, &ev.hess, &ev.grad, phase)?,
        };
        stats.newton_iterations += 1;
        let pmax = max_norm(&p, &ctx.fixed);
        residual = pmax / h;
        let converged = residual <= tol;
        if pmax == 0.0 {
            return Ok(x);
        }
        let alpha_max = (ctx.motion_cap / pmax).min(1.0);
        let wide = if barrier { ctx.pairs(&x, dhat + 2.0 * alpha_max * pmax) } else { ContactSet::default() };
        let mut alpha = if barrier { alpha_max.min(ccd_step_bound(&x, &p, &all_pairs(&wide), CCD_KEEP)) } else { alpha_max };
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let xt = axpy(&x, &p, alpha);
            if energy(obj, &xt, &wide) < ev.value {
                accepted = Some(xt);
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some(xt) => {
                if barrier {
                    stats.observe_distance(ctx.min_distance(&xt, &wide));
                }
                x = xt;
            }
            None => {
                if !converged {
                    stats.line_search_failures += 1;
                }
                return Ok(x);
            }
        }
        if converged {
            return Ok(x);
        }
    }
    Err(Error::NewtonNotConverged { phase, iterations: ctx.cfg.max_newton, residual })
}

/// Minimizes the quadratic `½‖x - target‖²_M + h² (P + proxy)` with one linear
/// solve. With `fluid_only`, solid nodes stay at `x^n`.
pub(crate) fn fluid_phase<const D: usize>(
    ctx: &StepCtx<'_, D>,
    target: &[Vector<D>],
    proxy: Option<&Proxy<D>>,
    fluid_only: bool,
    stats: &mut StepStats,
) -> Result<Vec<Vector<D>>> {
    let nf = ctx.nf;
    let mut x0: Vec<Vector<D>> = (0..ctx.len()).map(|i| if ctx.fixed[i] { ctx.dirichlet[i] } else { ctx.x_n[i] }).collect();
    if fluid_only {
        x0[nf..].copy_from_slice(&ctx.x_n[nf..]);
    }
    let terms = super::objective::Terms { fluid: true, ..Default::default() };
    let obj = Objective { ctx, target: target.to_vec(), terms, proxy };
    let ev = obj.eval(&x0, &ContactSet::default(), true)?;
    let mut fixed = ctx.fixed.clone();
    if fluid_only {
        fixed[nf..].iter_mut().for_each(|f| *f = true);
    }
    let p = solve_pcg(ctx, true, &ev.hess, &ev.grad, &fixed, ctx.cfg.fluid_linear_tol, stats)?;
    stats.newton_iterations += 1;
    Ok(axpy(&x0, &p, 1.0))
}
