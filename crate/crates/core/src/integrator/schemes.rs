use super::context::StepCtx;
use super::newton::{fluid_phase, newton, warm_start, Solver};
use super::objective::{Objective, Terms};
use super::{SchemeKind, StepStats};
use crate::{Result, Vector};

/// Positions at the end of the step.
pub(super) fn run<const D: usize>(ctx: &StepCtx<'_, D>, kind: SchemeKind, stats: &mut StepStats) -> Result<Vec<Vector<D>>> {
    match kind {
        SchemeKind::Joint => joint(ctx, stats),
        SchemeKind::BaselineTs => baseline_ts(ctx, stats),
        SchemeKind::Tscp2 => tscp2(ctx, stats),
        SchemeKind::Tscp3 => tscp3(ctx, stats),
    }
}

/// Newton on `obj` from a warm start toward its own target.
fn solve_phase<const D: usize>(
    obj: &Objective<'_, D>,
    solver: Solver,
    phase: &'static str,
    stats: &mut StepStats,
) -> Result<Vec<Vector<D>>> {
    let x0 = warm_start(obj, &obj.ctx.x_n, &obj.target)?;
    newton(obj, x0, solver, phase, stats)
}

fn joint<const D: usize>(ctx: &StepCtx<'_, D>, stats: &mut StepStats) -> Result<Vec<Vector<D>>> {
    let terms = Terms { fluid: true, elastic: true, sf: 1.0, ss: 1.0 };
    let obj = Objective { ctx, target: ctx.predictor(), terms, proxy: None };
    solve_phase(&obj, Solver::Pcg, "joint", stats)
}

fn baseline_ts<const D: usize>(ctx: &StepCtx<'_, D>, stats: &mut StepStats) -> Result<Vec<Vector<D>>> {
    let predictor = ctx.predictor();
    let half = fluid_phase(ctx, &predictor, None, true, stats)?;
    // Fluid nodes continue with their phase velocity, solids with the explicit predictor.
    let mut target = predictor;
    target[..ctx.nf].copy_from_slice(&half[..ctx.nf]);
    let terms = Terms { fluid: false, elastic: true, sf: 1.0, ss: 1.0 };
    let obj = Objective { ctx, target, terms, proxy: None };
    solve_phase(&obj, Solver::Schur, "solid-coupling", stats)
}

fn tscp2<const D: usize>(ctx: &StepCtx<'_, D>, stats: &mut StepStats) -> Result<Vec<Vector<D>>> {
    let proxy = ctx.proxy(0.5, 0.0)?;
    let half = fluid_phase(ctx, &ctx.predictor(), Some(&proxy), false, stats)?;
    let terms = Terms { fluid: false, elastic: true, sf: 0.5, ss: 1.0 };
    let obj = Objective { ctx, target: half, terms, proxy: None };
    solve_phase(&obj, Solver::Schur, "solid-coupling", stats)
}

fn tscp3<const D: usize>(ctx: &StepCtx<'_, D>, stats: &mut StepStats) -> Result<Vec<Vector<D>>> {
    let fluid_proxy = ctx.proxy(1.0 / 3.0, 0.0)?;
    let x1 = fluid_phase(ctx, &ctx.predictor(), Some(&fluid_proxy), false, stats)?;
    let solid_proxy = ctx.proxy(1.0 / 3.0, 0.5)?;
    let terms = Terms { fluid: false, elastic: true, sf: 0.0, ss: 0.0 };
    let obj = Objective { ctx, target: x1, terms, proxy: Some(&solid_proxy) };
    let x2 = solve_phase(&obj, Solver::Schur, "solid", stats)?;
    let terms = Terms { fluid: false, elastic: false, sf: 1.0 / 3.0, ss: 0.5 };
    let obj = Objective { ctx, target: x2, terms, proxy: None };
    solve_phase(&obj, Solver::Schur, "contact", stats)
}
