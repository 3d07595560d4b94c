//! Self-checks run on a loaded scene: derivative checks, PSD checks, momentum,
//! matrix-free products and the splitting-order experiment.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SceneConfig;
use crate::contact::solid_fluid_barrier;
use crate::energy::{eigen_range, BlockTriplets};
use crate::fluid::FluidStep;
use crate::integrator::{SchemeConfig, SchemeKind, System};
use crate::linsolve::{BlockCsr, LinearOperator, MatrixFree};
use crate::solid::elastic_potential;
use crate::{Result, Vector};

/// Dense eigen-decompositions are skipped above this many degrees of freedom.
const DENSE_LIMIT: usize = 1500;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured quantity (relative error, ratio, ...); NaN when not applicable.
    pub measured: f64,
    pub limit: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiagnosticReport {
    pub checks: Vec<CheckResult>,
}

impl DiagnosticReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, measured: f64, limit: impl Into<String>, note: impl Into<String>) {
        self.checks.push(CheckResult { name: name.into(), passed, measured, limit: limit.into(), note: note.into() });
    }

    fn skip(&mut self, name: &str, note: &str) {
        self.push(name, true, f64::NAN, "-", note);
    }

    fn bound(&mut self, name: &str, measured: f64, limit: f64) {
        self.push(name, measured <= limit, measured, format!("<= {limit:e}"), "");
    }
}

impl fmt::Display for DiagnosticReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<34} {:<6} {:>12} {:>12}  note", "check", "result", "measured", "limit")?;
        for c in &self.checks {
            let status = if c.passed { "pass" } else { "FAIL" };
            let measured = if c.measured.is_nan() { "-".to_string() } else { format!("{:.3e}", c.measured) };
            writeln!(f, "{:<34} {:<6} {:>12} {:>12}  {}", c.name, status, measured, c.limit, c.note)?;
        }
        Ok(())
    }
}

/// Runs every check; failures, including configuration errors, become entries.
pub fn diagnose(cfg: &SceneConfig) -> DiagnosticReport {
    let mut report = DiagnosticReport::default();
    match cfg.dimension {
        2 => checks::<2>(cfg, &mut report),
        _ => checks::<3>(cfg, &mut report),
    }
    report
}

fn fail(report: &mut DiagnosticReport, name: &str, e: crate::Error) {
    report.push(name, false, f64::NAN, "-", e.to_string());
}

fn random_field<const D: usize>(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<Vector<D>> {
    (0..n).map(|_| Vector::<D>::from_fn(|_, _| rng.random_range(-amp..amp))).collect()
}

fn dot<const D: usize>(a: &[Vector<D>], b: &[Vector<D>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn norm<const D: usize>(a: &[Vector<D>]) -> f64 {
    dot(a, a).sqrt()
}

fn rel_diff<const D: usize>(a: &[Vector<D>], b: &[Vector<D>]) -> f64 {
    let diff: Vec<Vector<D>> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(b).max(f64::MIN_POSITIVE)
}

/// Worst relative error of directional central differences of `f` against
/// `∇f·w`, and of `∇f` against `H w`.
fn fd_errors<const D: usize>(
    x: &[Vector<D>],
    dirs: &[Vec<Vector<D>>],
    eps: f64,
    eval: &dyn Fn(&[Vector<D>]) -> Result<(f64, Vec<Vector<D>>, BlockTriplets<D>)>,
) -> Result<(f64, f64)> {
    let (_, g, hess) = eval(x)?;
    let h = BlockCsr::from_triplets(x.len(), &hess);
    let (mut eg, mut eh) = (0.0f64, 0.0f64);
    for w in dirs {
        let plus: Vec<Vector<D>> = x.iter().zip(w).map(|(a, b)| a + b * eps).collect();
        let minus: Vec<Vector<D>> = x.iter().zip(w).map(|(a, b)| a - b * eps).collect();
        let (fp, gp, _) = eval(&plus)?;
        let (fm, gm, _) = eval(&minus)?;
        let fd = (fp - fm) / (2.0 * eps);
        let an = dot(&g, w);
        eg = eg.max((fd - an).abs() / an.abs().max(1e-12 * norm(&g) * norm(w)).max(f64::MIN_POSITIVE));
        let fdg: Vec<Vector<D>> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect();
        eh = eh.max(rel_diff(&h.mul(w), &fdg));
    }
    Ok((eg, eh))
}

/// `λ_min / λ_max` of the assembled matrix, `None` if it is too large.
fn psd_ratio<const D: usize>(t: &BlockTriplets<D>, n: usize) -> Option<f64> {
    if n * D > DENSE_LIMIT || t.entries.is_empty() {
        return None;
    }
    let m = t.to_dense(n);
    let m = (&m + m.transpose()) * 0.5;
    let (lo, hi) = eigen_range(&m);
    Some(if hi > 0.0 { lo / hi } else { lo })
}

fn fluid_step<const D: usize>(sys: &System<D>, h: f64) -> FluidStep<D> {
    let mut state = sys.fluid.clone();
    let table = state.neighbor_table();
    state.reinit_density(&table);
    FluidStep::new(&state, table, &sys.fluid_params, h)
}

fn checks<const D: usize>(cfg: &SceneConfig, report: &mut DiagnosticReport) {
    let sys = match cfg.build::<D>() {
        Ok(s) => s,
        Err(e) => return fail(report, "configuration", e),
    };
    report.push("configuration", true, f64::NAN, "-", format!("{} particles, {} nodes", sys.n_fluid(), sys.n_solid()));
    match sys.check_initial_separation() {
        Ok(()) => report.push("initial separation", true, f64::NAN, ">= 0.1 dhat", ""),
        Err(e) => return fail(report, "initial separation", e),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let h = sys.adaptive_dt();
    let ndir = 4;

    if sys.n_fluid() > 0 {
        let fs = fluid_step(&sys, h);
        let nf = fs.len();
        let d = sys.fluid.spacing;
        let u0 = random_field::<D>(&mut rng, nf, 0.01 * d);
        let dirs: Vec<_> = (0..ndir).map(|_| random_field::<D>(&mut rng, nf, 1.0)).collect();
        let eval = |u: &[Vector<D>]| -> Result<(f64, Vec<Vector<D>>, BlockTriplets<D>)> {
            let mut g = vec![Vector::<D>::zeros(); nf];
            let v = fs.potential_disp(u, &mut g);
            let (pi, pv) = fs.assembled_hessians();
            let mut t = pi;
            t.extend(&pv, 1.0);
            Ok((v, g, t))
        };
        if nf * D <= 4 * DENSE_LIMIT {
            match fd_errors(&u0, &dirs, 1e-4 * d, &eval) {
                Ok((eg, eh)) => {
                    report.bound("fluid gradient (FD)", eg, 1e-4);
                    report.bound("fluid Hessian action (FD)", eh, 1e-3);
                }
                Err(e) => fail(report, "fluid gradient (FD)", e),
            }
            let (pi, pv) = fs.assembled_hessians();
            let assembled = BlockCsr::from_triplets(nf, &{
                let mut t = pi.clone();
                t.extend(&pv, 1.0);
                t
            });
            let grad = |u: &[Vector<D>], g: &mut [Vector<D>]| {
                g.iter_mut().for_each(|v| *v = Vector::<D>::zeros());
                fs.potential_disp(u, g);
            };
            let mf = MatrixFree::new(nf, grad, fs.diagonal_blocks());
            let mut worst = 0.0f64;
            for w in &dirs {
                let mut out = vec![Vector::<D>::zeros(); nf];
                mf.apply(w, &mut out);
                worst = worst.max(rel_diff(&out, &assembled.mul(w)));
            }
            report.bound("matrix-free vs assembled", worst, 1e-10);
            for (name, t) in [("PSD fluid incompressibility", &pi), ("PSD fluid viscosity", &pv)] {
                match psd_ratio(t, nf) {
                    Some(r) => report.push(name, r >= -1e-8, r, ">= -1e-8", "lambda_min / lambda_max"),
                    None => report.skip(name, "system too large for a dense check"),
                }
            }
        } else {
            report.skip("fluid gradient (FD)", "system too large");
        }
    }

    if sys.n_solid() > 0 {
        let mesh = &sys.solid;
        let scale = mesh.rest_volume.iter().cloned().fold(f64::INFINITY, f64::min).powf(1.0 / D as f64);
        let x0: Vec<Vector<D>> =
            mesh.positions.iter().zip(random_field::<D>(&mut rng, mesh.len(), 0.01 * scale)).map(|(a, b)| a + b).collect();
        let mut free = mesh.clone();
        free.fixed.iter_mut().for_each(|f| *f = false);
        let dirs: Vec<_> = (0..ndir).map(|_| random_field::<D>(&mut rng, mesh.len(), 1.0)).collect();
        let eval = |x: &[Vector<D>]| -> Result<(f64, Vec<Vector<D>>, BlockTriplets<D>)> {
            let r = elastic_potential(&free, x, true, false)?;
            Ok((r.value, r.gradient, r.hessian))
        };
        match fd_errors(&x0, &dirs, 1e-6 * scale, &eval) {
            Ok((eg, eh)) => {
                report.bound("elastic gradient (FD)", eg, 1e-4);
                report.bound("elastic Hessian action (FD)", eh, 1e-3);
            }
            Err(e) => fail(report, "elastic gradient (FD)", e),
        }
        match elastic_potential(&free, &x0, true, true) {
            Ok(r) => match psd_ratio(&r.hessian, mesh.len()) {
                Some(v) => report.push("PSD elastic (projected)", v >= -1e-8, v, ">= -1e-8", "lambda_min / lambda_max"),
                None => report.skip("PSD elastic (projected)", "system too large for a dense check"),
            },
            Err(e) => fail(report, "PSD elastic (projected)", e),
        }
    }

    match sys.contact_pairs(sys.barrier.dhat) {
        Ok(pairs) if !pairs.solid_fluid.is_empty() => {
            let x = sys.positions();
            let dirs: Vec<_> = (0..ndir).map(|_| random_field::<D>(&mut rng, x.len(), 1.0)).collect();
            let barrier = sys.barrier;
            let eval = |y: &[Vector<D>]| -> Result<(f64, Vec<Vector<D>>, BlockTriplets<D>)> {
                // Pair Hessians are PSD-projected, so only the gradient is compared.
                let r = solid_fluid_barrier(y, &pairs, &barrier, false)?;
                Ok((r.value, r.gradient, BlockTriplets::new()))
            };
            match fd_errors(&x, &dirs, 1e-6 * barrier.dhat, &eval) {
                Ok((eg, _)) => report.bound("barrier gradient (FD)", eg, 1e-4),
                Err(e) => fail(report, "barrier gradient (FD)", e),
            }
            match solid_fluid_barrier(&x, &pairs, &barrier, true) {
                Ok(r) => match psd_ratio(&r.hessian, x.len()) {
                    Some(v) => report.push("PSD barrier (projected)", v >= -1e-8, v, ">= -1e-8", "lambda_min / lambda_max"),
                    None => report.skip("PSD barrier (projected)", "system too large for a dense check"),
                },
                Err(e) => fail(report, "PSD barrier (projected)", e),
            }
        }
        Ok(_) => report.skip("barrier gradient (FD)", "no solid-fluid pair within dhat"),
        Err(e) => fail(report, "barrier gradient (FD)", e),
    }

    momentum_check(&sys, report);
    order_check(&sys, report);
}

fn tight(cfg: &SchemeConfig) -> SchemeConfig {
    SchemeConfig { newton_tol: 1e-9, fluid_linear_tol: 1e-12, linear_tol: 1e-12, pcg_max_iter: 100_000, ..*cfg }
}

/// Fluid alone, without gravity: linear momentum must be conserved.
fn momentum_check<const D: usize>(sys: &System<D>, report: &mut DiagnosticReport) {
    if sys.n_fluid() == 0 {
        return report.skip("momentum (isolated fluid)", "no fluid");
    }
    let mut iso = sys.clone();
    iso.solid = Default::default();
    iso.gravity = Vector::<D>::zeros();
    iso.scheme = tight(&iso.scheme);
    let p0 = iso.total_momentum();
    let mut scale = 0.0f64;
    for _ in 0..5 {
        let h = iso.adaptive_dt();
        if let Err(e) = iso.step_with(SchemeKind::Joint, h) {
            return fail(report, "momentum (isolated fluid)", e);
        }
        scale = scale.max(iso.fluid.velocities.iter().map(|v| v.norm() * iso.fluid.mass).sum());
    }
    let drift = (iso.total_momentum() - p0).norm();
    let rel = if scale > 0.0 { drift / scale } else { drift };
    report.bound("momentum (isolated fluid)", rel, 1e-6);
}

/// Step sizes below the CFL step by this factor put the stiff pressure and
/// barrier modes in the asymptotic regime of the split-vs-joint comparison.
pub const ORDER_STEP_DIVISOR: f64 = 512.0;

/// One step of the two-phase split against the monolithic step at `h` and `h/2`.
fn order_check<const D: usize>(sys: &System<D>, report: &mut DiagnosticReport) {
    let name = "splitting order e(h)/e(h/2)";
    let mut base = sys.clone();
    base.scheme = tight(&base.scheme);
    let h = base.adaptive_dt() / ORDER_STEP_DIVISOR;
    let mismatch = |h: f64| -> Result<(f64, f64)> {
        let mut a = base.clone();
        let mut b = base.clone();
        a.step_with(SchemeKind::Tscp2, h)?;
        b.step_with(SchemeKind::Joint, h)?;
        let (xa, xb) = (a.positions(), b.positions());
        let diff: f64 = xa.iter().zip(&xb).map(|(p, q)| (p - q).norm_squared()).sum::<f64>().sqrt();
        let moved: f64 = xb.iter().zip(base.positions()).map(|(p, q)| (p - q).norm_squared()).sum::<f64>().sqrt();
        Ok((diff, moved))
    };
    match (mismatch(h), mismatch(0.5 * h)) {
        (Ok((e1, m1)), Ok((e2, _))) => {
            if e1 <= 1e-9 * m1.max(f64::MIN_POSITIVE) {
                report.skip(name, "split is exact for this scene (no coupling)");
            } else {
                let r = e1 / e2;
                report.push(name, (10.0..=24.0).contains(&r), r, "in [10, 24]", format!("e(h) = {e1:.3e}, h = {h:.3e}"));
            }
        }
        (Err(e), _) | (_, Err(e)) => fail(report, name, e),
    }
}
