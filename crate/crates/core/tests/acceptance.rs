//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lagcoupling::contact::{
    barrier_hessian_exact, friction_potential, friction_precompute, solid_fluid_barrier, solid_solid_contact,
    BarrierParams, ContactPair, ContactSet, FrictionParams,
};
use lagcoupling::energy::{flatten, unflatten, BlockTriplets};
use lagcoupling::fluid::{FluidParams, FluidState, FluidStep};
use lagcoupling::integrator::{SchemeKind, System};
use lagcoupling::linsolve::{matrix_free_apply, schur_solve, BlockSystem};
use lagcoupling::scene::{run, RunOptions, RunSummary, SceneConfig, ORDER_STEP_DIVISOR};
use lagcoupling::solid::{elastic_potential, MaterialKind, MaterialModel, SolidMesh};
use lagcoupling::{Matrix, Vector};

type Check = Result<(bool, String), String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion { name: "derivatives match finite differences", budget: secs(30), run: derivatives },
        Criterion { name: "projected and fluid Hessians are PSD", budget: secs(30), run: psd_suite },
        Criterion { name: "isolated fluid conserves momentum", budget: secs(120), run: momentum },
        Criterion { name: "split-vs-joint mismatch is fourth order", budget: secs(300), run: splitting_order },
        Criterion { name: "dam break stays penetration free", budget: secs(1800), run: non_penetration },
        Criterion { name: "stiffer fluid keeps volume, costs more CG", budget: secs(900), run: incompressibility_sweep },
        Criterion { name: "Schur and matrix-free match dense", budget: secs(60), run: solver_equivalence },
        Criterion { name: "proxy split needs fewer Newton iterations", budget: secs(1200), run: iteration_trend },
        Criterion { name: "runs are byte-identical", budget: secs(600), run: determinism },
    ];
    let mut failed = 0;
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.iter().any(|f| c.name.contains(f.as_str()))) {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok((ok, detail)) => (ok, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = took <= c.budget;
        let pass = ok && in_time;
        if !pass {
            failed += 1;
        }
        let budget_note = if in_time { String::new() } else { format!(" (over budget {:?})", c.budget) };
        println!(
            "{} {:<44} {detail} [{:.1} s{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            took.as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn scene(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes").join(name)
}

fn load(name: &str) -> Result<SceneConfig, String> {
    SceneConfig::load(&scene(name)).map_err(|e| e.to_string())
}

fn err(e: lagcoupling::Error) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

type Eval<'a> = dyn Fn(&DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>), String> + 'a;

/// Central differences of the value against the gradient (every coordinate)
/// and of the gradient against Hessian actions on random directions.
fn fd_errors(x: &DVector<f64>, eps: f64, eval: &Eval, rng: &mut ChaCha8Rng) -> Result<(f64, f64), String> {
    let (_, g, h) = eval(x)?;
    let n = x.len();
    let mut g_fd = DVector::zeros(n);
    for k in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += eps;
        xm[k] -= eps;
        g_fd[k] = (eval(&xp)?.0 - eval(&xm)?.0) / (2.0 * eps);
    }
    let eg = (&g_fd - &g).norm() / g.norm().max(f64::MIN_POSITIVE);
    let mut eh = 0.0f64;
    for _ in 0..4 {
        let w = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)).normalize();
        let gp = eval(&(x + &w * eps))?.1;
        let gm = eval(&(x - &w * eps))?.1;
        let fd = (gp - gm) / (2.0 * eps);
        let an = &h * &w;
        eh = eh.max((&an - &fd).norm() / fd.norm().max(an.norm()).max(f64::MIN_POSITIVE));
    }
    Ok((eg, eh))
}

fn jitter<const D: usize>(rng: &mut ChaCha8Rng, amp: f64) -> Vector<D> {
    Vector::<D>::from_fn(|_, _| rng.random_range(-amp..amp))
}

fn particle_block<const D: usize>(rng: &mut ChaCha8Rng, n_side: usize, d: f64, amp: f64) -> Vec<Vector<D>> {
    let count = n_side.pow(D as u32);
    (0..count)
        .map(|id| {
            let mut p = Vector::<D>::zeros();
            let mut rem = id;
            for k in 0..D {
                p[k] = (rem % n_side) as f64 * d;
                rem /= n_side;
            }
            p + jitter::<D>(rng, amp * d)
        })
        .collect()
}

fn fluid_step<const D: usize>(pos: Vec<Vector<D>>, d: f64, params: FluidParams, h: f64) -> Result<FluidStep<D>, String> {
    let n = pos.len();
    let mut state = FluidState::new(pos, vec![Vector::<D>::zeros(); n], d, 1000.0).map_err(err)?;
    let table = state.neighbor_table();
    state.reinit_density(&table);
    Ok(FluidStep::new(&state, table, &params, h))
}

fn fluid_fd<const D: usize>(rng: &mut ChaCha8Rng, n_side: usize) -> Result<Vec<(String, f64, f64)>, String> {
    let d = 0.01;
    let pos = particle_block::<D>(rng, n_side, d, 0.2);
    let fs = fluid_step(pos.clone(), d, FluidParams { k_incompressibility: 1e5, viscosity: 1.0 }, 1e-3)?;
    let (hi, hv) = fs.assembled_hessians();
    let n = pos.len();
    let x0 = flatten(&pos) + DVector::from_fn(n * D, |_, _| rng.random_range(-0.02 * d..0.02 * d));
    let mut out = Vec::new();
    for (name, hess) in [("P_I", &hi), ("P_V", &hv)] {
        let dense = hess.to_dense(n);
        let eval = |x: &DVector<f64>| {
            let xs = unflatten::<D>(x);
            let r = if name == "P_I" { fs.incompressibility(&xs) } else { fs.viscosity(&xs) };
            Ok((r.value, flatten(&r.gradient), dense.clone()))
        };
        let (eg, eh) = fd_errors(&x0, 1e-4 * d, &eval, rng)?;
        out.push((format!("{name} {D}D"), eg, eh));
    }
    Ok(out)
}

fn elastic_fd<const D: usize>(rng: &mut ChaCha8Rng, kind: MaterialKind) -> Result<(String, f64, f64), String> {
    let material = MaterialModel::new(kind, 1e5, 0.3).map_err(err)?;
    let cells: [usize; D] = std::array::from_fn(|_| if D == 2 { 2 } else { 1 });
    let mesh = SolidMesh::<D>::grid_box(Vector::<D>::zeros(), Vector::<D>::repeat(0.1), cells, material, 1000.0).map_err(err)?;
    assert!(mesh.elements.len() <= 8);
    let x0 = flatten(&mesh.rest.iter().map(|p| p * 1.1 + jitter::<D>(rng, 0.01)).collect::<Vec<_>>());
    let eval = |x: &DVector<f64>| {
        let r = elastic_potential(&mesh, &unflatten::<D>(x), true, false).map_err(err)?;
        Ok((r.value, flatten(&r.gradient), r.hessian.to_dense(mesh.len())))
    };
    let (eg, eh) = fd_errors(&x0, 1e-7, &eval, rng)?;
    Ok((format!("Psi {kind:?} {D}D"), eg, eh))
}

fn barrier_params() -> BarrierParams {
    BarrierParams::new(0.01, 1e3, 1e-4).expect("valid barrier parameters")
}

/// Point above a facet interior at a distance in `(0.2, 0.9) d̂`; returns
/// `[point, facet..]` positions.
fn point_facet_config<const D: usize>(rng: &mut ChaCha8Rng, dhat: f64) -> Vec<Vector<D>> {
    let mut facet: Vec<Vector<D>> = Vec::new();
    let s = 0.03;
    if D == 2 {
        facet.push(Vector::<D>::from_fn(|k, _| if k == 0 { -s } else { 0.0 }) + jitter::<D>(rng, 0.1 * s));
        facet.push(Vector::<D>::from_fn(|k, _| if k == 0 { s } else { 0.0 }) + jitter::<D>(rng, 0.1 * s));
    } else {
        facet.push(Vector::<D>::from_fn(|k, _| [-s, -s, 0.0][k]) + jitter::<D>(rng, 0.1 * s));
        facet.push(Vector::<D>::from_fn(|k, _| [s, -s, 0.0][k]) + jitter::<D>(rng, 0.1 * s));
        facet.push(Vector::<D>::from_fn(|k, _| [0.0, s, 0.0][k]) + jitter::<D>(rng, 0.1 * s));
    }
    let centre: Vector<D> = facet.iter().sum::<Vector<D>>() / D as f64;
    let mut p = centre + jitter::<D>(rng, 0.2 * s);
    p[D - 1] = rng.random_range(0.2..0.9) * dhat;
    // Orient the facet so the point sits on its outer side.
    if D == 2 {
        facet.swap(0, 1);
    } else {
        facet.swap(1, 2);
    }
    let mut out = vec![p];
    out.extend(facet);
    out
}

/// Two crossing, non-parallel edges separated by `(0.2, 0.9) d̂`.
fn edge_edge_config(rng: &mut ChaCha8Rng, dhat: f64) -> Vec<Vector<3>> {
    let s = 0.03;
    let gap = rng.random_range(0.2..0.9) * dhat;
    let mut j = || jitter::<3>(rng, 0.1 * s).component_mul(&Vector::<3>::new(1.0, 1.0, 0.0));
    let a0 = Vector::<3>::new(-s, 0.0, 0.0) + j();
    let a1 = Vector::<3>::new(s, 0.0, 0.0) + j();
    let b0 = Vector::<3>::new(0.0, -s, gap) + j();
    let b1 = Vector::<3>::new(0.0, s, gap) + j();
    vec![a0, a1, b0, b1]
}

/// Several disjoint pairs packed into one position vector.
fn pair_scene<const D: usize>(rng: &mut ChaCha8Rng, count: usize, edges: bool) -> (Vec<Vector<D>>, Vec<ContactPair>) {
    let dhat = barrier_params().dhat;
    let mut x: Vec<Vector<D>> = Vec::new();
    let mut pairs = Vec::new();
    for k in 0..count {
        let shift = Vector::<D>::from_fn(|c, _| if c == 0 { 0.2 * k as f64 } else { 0.0 });
        let base = x.len();
        if edges && D == 3 && k % 2 == 1 {
            x.extend(edge_edge_config(rng, dhat).into_iter().map(|p| Vector::<D>::from_column_slice(p.as_slice()) + shift));
            pairs.push(ContactPair::edge_edge([base, base + 1], [base + 2, base + 3], 2e-4));
        } else {
            x.extend(point_facet_config::<D>(rng, dhat).into_iter().map(|p| p + shift));
            let facet: Vec<usize> = (1..=D).map(|i| base + i).collect();
            pairs.push(ContactPair::point_facet(base, &facet, 2e-4));
        }
    }
    (x, pairs)
}

fn barrier_fd<const D: usize>(rng: &mut ChaCha8Rng, solid_solid: bool) -> Result<(String, f64, f64), String> {
    let params = barrier_params();
    let (x, pairs) = pair_scene::<D>(rng, 4, solid_solid);
    let mut set = ContactSet::<D>::default();
    if solid_solid {
        set.solid_solid = pairs.clone();
    } else {
        set.solid_fluid = pairs.clone();
    }
    let n = x.len();
    let eval = |y: &DVector<f64>| {
        let ys = unflatten::<D>(y);
        let r = if solid_solid {
            solid_solid_contact(&ys, &set, &params, false)
        } else {
            solid_fluid_barrier(&ys, &set, &params, false)
        }
        .map_err(err)?;
        let h = barrier_hessian_exact(&ys, &pairs, &params).map_err(err)?;
        Ok((r.value, flatten(&r.gradient), h.to_dense(n)))
    };
    let (eg, eh) = fd_errors(&flatten(&x), 1e-6 * params.dhat, &eval, rng)?;
    let name = if solid_solid { "C_ss" } else { "B_sf" };
    Ok((format!("{name} {D}D"), eg, eh))
}

fn friction_fd<const D: usize>(rng: &mut ChaCha8Rng) -> Result<(String, f64, f64), String> {
    let params = barrier_params();
    let fp = FrictionParams { mu: 0.4, eps_v: 1e-3 };
    let h = 1e-2;
    let (x_n, pairs) = pair_scene::<D>(rng, 4, false);
    let records = friction_precompute(&x_n, &pairs, &params).map_err(err)?;
    let n = x_n.len();
    // Alternate pairs sit below and above the smoothing length ε_v h.
    let x0: Vec<Vector<D>> = x_n
        .iter()
        .enumerate()
        .map(|(i, p)| p + jitter::<D>(rng, if (i / (D + 1)).is_multiple_of(2) { 0.2 } else { 3.0 } * fp.eps_v * h))
        .collect();
    let eval = |y: &DVector<f64>| {
        let r = friction_potential(&unflatten::<D>(y), &x_n, &records, &fp, h, true);
        Ok((r.value, flatten(&r.gradient), r.hessian.to_dense(n)))
    };
    let (eg, eh) = fd_errors(&flatten(&x0), 1e-3 * fp.eps_v * h, &eval, rng)?;
    Ok((format!("D_sf {D}D"), eg, eh))
}

fn derivatives() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rows = Vec::new();
    rows.extend(fluid_fd::<2>(&mut rng, 5)?);
    rows.extend(fluid_fd::<3>(&mut rng, 3)?);
    for kind in [MaterialKind::NeoHookean, MaterialKind::FixedCorotated] {
        rows.push(elastic_fd::<2>(&mut rng, kind)?);
        rows.push(elastic_fd::<3>(&mut rng, kind)?);
    }
    rows.push(barrier_fd::<2>(&mut rng, false)?);
    rows.push(barrier_fd::<3>(&mut rng, false)?);
    rows.push(barrier_fd::<2>(&mut rng, true)?);
    rows.push(barrier_fd::<3>(&mut rng, true)?);
    rows.push(friction_fd::<2>(&mut rng)?);
    rows.push(friction_fd::<3>(&mut rng)?);
    let worst_g = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let worst_h = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    let bad: Vec<&str> = rows.iter().filter(|r| !(r.1 <= 1e-4 && r.2 <= 1e-3)).map(|r| r.0.as_str()).collect();
    let detail = format!("{} energies, worst grad rel {worst_g:.1e} (<= 1e-4), Hessian action {worst_h:.1e} (<= 1e-3)", rows.len());
    Ok((bad.is_empty(), if bad.is_empty() { detail } else { format!("{detail}; failing: {}", bad.join(", ")) }))
}

// ---------------------------------------------------------------------------
// PSD

/// `λ_min / λ_max` from a direct symmetric eigen-decomposition.
fn min_ratio(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let ev = SymmetricEigen::new(sym).eigenvalues;
    let (lo, hi) = (ev.min(), ev.max());
    if hi > 0.0 {
        lo / hi
    } else if lo < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

fn single_element<const D: usize>(rng: &mut ChaCha8Rng, kind: MaterialKind) -> Result<(SolidMesh<D>, Vec<Vector<D>>), String> {
    let material = MaterialModel::new(kind, rng.random_range(1e4..1e7), rng.random_range(0.0..0.45)).map_err(err)?;
    let rest: Vec<Vector<D>> = (0..=D).map(|i| Vector::<D>::from_fn(|k, _| if i == k + 1 { 0.1 } else { 0.0 })).collect();
    let mut element = [0usize; 4];
    for (i, e) in element.iter_mut().enumerate().take(D + 1) {
        *e = i;
    }
    let mesh = SolidMesh::new(rest.clone(), vec![element], material, 1000.0).map_err(err)?;
    // Random deformation; inverted states only for the inversion-robust model.
    loop {
        let f = Matrix::<D>::identity() + Matrix::<D>::from_fn(|_, _| rng.random_range(-0.8..0.8));
        if kind == MaterialKind::NeoHookean && DMatrix::from_column_slice(D, D, f.as_slice()).determinant() < 0.05 {
            continue;
        }
        let x = rest.iter().map(|p| f * p + jitter::<D>(rng, 0.001)).collect();
        return Ok((mesh, x));
    }
}

fn psd_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let params = barrier_params();
    let mut worst = f64::INFINITY;
    let mut count = 0usize;
    let mut note = |r: f64| {
        worst = worst.min(r);
        count += 1;
    };
    for trial in 0..50 {
        let nu = if trial % 2 == 0 { 1.0 } else { 0.05 };
        let pos = particle_block::<2>(&mut rng, 5, 0.01, 0.3);
        let fs = fluid_step(pos, 0.01, FluidParams { k_incompressibility: 1e5, viscosity: nu }, 2e-3)?;
        let (hi, hv) = fs.assembled_hessians();
        note(min_ratio(&hi.to_dense(fs.len())));
        note(min_ratio(&hv.to_dense(fs.len())));
        for kind in [MaterialKind::NeoHookean, MaterialKind::FixedCorotated] {
            let (mesh, x) = single_element::<2>(&mut rng, kind)?;
            note(min_ratio(&elastic_potential(&mesh, &x, true, true).map_err(err)?.hessian.to_dense(mesh.len())));
            let (mesh, x) = single_element::<3>(&mut rng, kind)?;
            note(min_ratio(&elastic_potential(&mesh, &x, true, true).map_err(err)?.hessian.to_dense(mesh.len())));
        }
        for (x, pairs) in [pair_scene::<3>(&mut rng, 2, true)] {
            for pair in pairs {
                let set = ContactSet::<3> { solid_fluid: vec![pair], ..Default::default() };
                note(min_ratio(&solid_fluid_barrier(&x, &set, &params, true).map_err(err)?.hessian.to_dense(x.len())));
            }
        }
        let (x, pairs) = pair_scene::<2>(&mut rng, 1, false);
        let set = ContactSet::<2> { solid_solid: pairs, ..Default::default() };
        note(min_ratio(&solid_solid_contact(&x, &set, &params, true).map_err(err)?.hessian.to_dense(x.len())));
    }
    Ok((worst >= -1e-8, format!("{count} Hessians over 50 configurations, worst lambda_min/lambda_max {worst:.2e} (>= -1e-8)")))
}

// ---------------------------------------------------------------------------
// Dynamics

fn tighten<const D: usize>(sys: &mut System<D>) {
    sys.scheme.newton_tol = 1e-10;
    sys.scheme.fluid_linear_tol = 1e-13;
    sys.scheme.linear_tol = 1e-13;
    sys.scheme.pcg_max_iter = 200_000;
}

fn momentum() -> Check {
    let mut details = Vec::new();
    let mut ok = true;
    for nu in [0.0, 1.0] {
        let text = format!(
            "dimension = 2\nframe_dt = 0.01\nframes = 1\ngravity = [0.0, 0.0]\n\
             [fluid]\nspacing = 0.01\nk_I = 1e5\nviscosity = {nu:?}\n\
             [[fluid.box]]\nmin = [0.0, 0.0]\nmax = [0.2, 0.2]\nvelocity = [0.4, -0.3]\n"
        );
        let cfg = SceneConfig::parse(&text, PathBuf::from(".")).map_err(err)?;
        let mut sys: System<2> = cfg.build().map_err(err)?;
        if sys.n_fluid() != 400 {
            return Err(format!("blob has {} particles", sys.n_fluid()));
        }
        // Add a swirl so pressure and viscosity are both active.
        let centre = Vector::<2>::new(0.1, 0.1);
        for (v, p) in sys.fluid.velocities.iter_mut().zip(&sys.fluid.positions) {
            let r = p - centre;
            *v += Vector::<2>::new(-r.y, r.x) * 5.0;
        }
        tighten(&mut sys);
        let p0 = sys.total_momentum();
        for _ in 0..200 {
            let h = sys.adaptive_dt();
            sys.step(h).map_err(err)?;
        }
        let drift = (sys.total_momentum() - p0).norm() / p0.norm();
        ok &= drift <= 1e-6;
        details.push(format!("nu={nu}: {drift:.1e}"));
    }
    Ok((ok, format!("relative drift after 200 steps {} (<= 1e-6)", details.join(", "))))
}

fn splitting_order() -> Check {
    let cfg = load("drop_2d.toml")?;
    let mut sys: System<2> = cfg.build().map_err(err)?;
    // Advance until the fluid rests on the block so both couplings are active.
    while sys.time < 0.1 {
        let h = sys.adaptive_dt();
        sys.step(h).map_err(err)?;
    }
    let pairs = sys.contact_pairs(sys.barrier.dhat).map_err(err)?;
    if pairs.solid_fluid.is_empty() {
        return Ok((false, "no solid-fluid contact at the test state".into()));
    }
    tighten(&mut sys);
    let h = sys.adaptive_dt() / ORDER_STEP_DIVISOR;
    let mismatch = |h: f64| -> Result<f64, String> {
        let mut a = sys.clone();
        let mut b = sys.clone();
        a.step_with(SchemeKind::Tscp2, h).map_err(err)?;
        b.step_with(SchemeKind::Joint, h).map_err(err)?;
        Ok(a.positions().iter().zip(b.positions()).map(|(p, q)| (p - q).norm_squared()).sum::<f64>().sqrt())
    };
    let (e1, e2) = (mismatch(h)?, mismatch(0.5 * h)?);
    let ratio = e1 / e2;
    Ok((
        (10.0..=24.0).contains(&ratio),
        format!(
            "{} contact pairs, h = {h:.2e}: e(h) = {e1:.2e}, e(h/2) = {e2:.2e}, ratio {ratio:.2} (in [10, 24])",
            pairs.solid_fluid.len()
        ),
    ))
}

fn run_scene(cfg: &SceneConfig, dir: &Path, scheme: Option<SchemeKind>, frames: Option<usize>) -> Result<RunSummary, String> {
    run(cfg, &RunOptions { out_dir: dir.to_path_buf(), frames, scheme }).map_err(err)
}

fn non_penetration() -> Check {
    let cfg = load("dam_break_2d.toml")?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let summary = run_scene(&cfg, dir.path(), Some(SchemeKind::Tscp2), None)?;
    let last = summary.rows.last().expect("frame 0");
    let complete = summary.rows.len() == cfg.frames + 1 && (last.time - cfg.frame_dt * cfg.frames as f64).abs() < 1e-9;
    let min = summary.rows.iter().filter_map(|r| r.min_pair_distance).fold(f64::INFINITY, f64::min);
    let failures: usize = summary.rows.iter().map(|r| r.line_search_failures).sum();
    let positive = summary.rows.iter().all(|r| r.min_pair_distance.is_none_or(|d| d > 0.0));
    let cfg_sys: System<2> = cfg.build().map_err(err)?;
    Ok((
        complete && positive && min > 0.0,
        format!(
            "{} particles, {} nodes, t = {:.2} s in {} steps, min distance {min:.3e} (> 0), {failures} non-fatal line-search failures",
            cfg_sys.n_fluid(),
            cfg_sys.n_solid(),
            last.time,
            summary.steps
        ),
    ))
}

fn tank(k: f64) -> String {
    let wall = |lo: [f64; 2], hi: [f64; 2], cells: [usize; 2]| {
        format!(
            "[[solid]]\nbox = {{ min = {lo:?}, max = {hi:?}, cells = {cells:?} }}\nyoungs_modulus = 1e6\npoisson_ratio = 0.3\n\
             density = 1000.0\ndirichlet = [{{ min = [-1.0, -1.0], max = [2.0, 2.0] }}]\n"
        )
    };
    format!(
        "dimension = 2\nframe_dt = 0.05\nframes = 40\n[fluid]\nspacing = 0.01\nk_I = {k:e}\n\
         [[fluid.box]]\nmin = [0.0, 0.0]\nmax = [0.3, 0.2]\n{}{}{}",
        wall([-0.04, -0.04], [0.34, 0.0], [19, 2]),
        wall([-0.04, 0.0], [0.0, 0.3], [2, 15]),
        wall([0.3, 0.0], [0.34, 0.3], [2, 15]),
    )
}

fn incompressibility_sweep() -> Check {
    let mut errors = Vec::new();
    let mut cg = Vec::new();
    for k in [1e4, 1e5, 1e6] {
        let cfg = SceneConfig::parse(&tank(k), PathBuf::from(".")).map_err(err)?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let summary = run_scene(&cfg, dir.path(), None, None)?;
        // The second half of the run counts as settled.
        let settled = &summary.rows[summary.rows.len() / 2 + 1..];
        errors.push(settled.iter().map(|r| r.mean_abs_j_minus_1).sum::<f64>() / settled.len() as f64);
        let steps: usize = summary.rows.iter().map(|r| r.steps).sum();
        cg.push(summary.rows.iter().map(|r| r.cg_iterations).sum::<usize>() as f64 / steps as f64);
    }
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let more_cg = cg.windows(2).all(|w| w[1] >= w[0]);
    let ok = decreasing && more_cg && errors[2] <= 0.02;
    Ok((
        ok,
        format!(
            "k_I = 1e4/1e5/1e6: mean |J-1| {:.4}/{:.4}/{:.4} (decreasing, last <= 0.02), CG per step {:.1}/{:.1}/{:.1} (non-decreasing)",
            errors[0], errors[1], errors[2], cg[0], cg[1], cg[2]
        ),
    ))
}

// ---------------------------------------------------------------------------
// Linear solvers

fn random_block_system<const D: usize>(rng: &mut ChaCha8Rng) -> (BlockTriplets<D>, usize, usize, Vec<bool>) {
    let nf = rng.random_range(3..30);
    let ns = rng.random_range(2..12);
    let mut t = BlockTriplets::<D>::new();
    for i in 0..nf {
        let a = Matrix::<D>::from_fn(|_, _| rng.random_range(-1.0..1.0));
        t.push(i, i, a * a.transpose() + Matrix::<D>::identity() * rng.random_range(0.5..3.0));
        for _ in 0..rng.random_range(0..4) {
            let s = nf + rng.random_range(0..ns);
            let g = Matrix::<D>::from_fn(|_, _| rng.random_range(-0.3..0.3));
            t.push(i, s, g);
            t.push(s, i, g.transpose());
        }
    }
    for a in 0..ns {
        t.push(nf + a, nf + a, Matrix::<D>::identity() * rng.random_range(20.0..40.0));
        let b = rng.random_range(0..ns);
        if b != a {
            let c = Matrix::<D>::from_fn(|_, _| rng.random_range(-1.0..1.0));
            t.push(nf + a, nf + b, c);
            t.push(nf + b, nf + a, c.transpose());
        }
    }
    let fixed = (0..ns).map(|_| rng.random_bool(0.2)).collect();
    (t, nf, ns, fixed)
}

/// Returns the worst solve error, and whether the Schur correction matches
/// the dense `Gᵀ H_f⁻¹ G` and touches only solid pairs sharing a particle.
fn schur_case<const D: usize>(rng: &mut ChaCha8Rng) -> Result<(f64, f64, bool), String> {
    let (t, nf, ns, fixed) = random_block_system::<D>(rng);
    let n = nf + ns;
    let sys = BlockSystem::from_global(nf, ns, &t, fixed.clone());
    // Dense oracle built straight from the triplets.
    let mut dense = t.to_dense(n);
    for (a, &f) in fixed.iter().enumerate() {
        if f {
            let r = D * (nf + a);
            dense.rows_mut(r, D).fill(0.0);
            dense.columns_mut(r, D).fill(0.0);
            dense.view_mut((r, r), (D, D)).fill_with_identity();
        }
    }
    let mut rhs = DVector::from_fn(D * n, |_, _| rng.random_range(-1.0..1.0));
    for (a, &f) in fixed.iter().enumerate() {
        if f {
            rhs.rows_mut(D * (nf + a), D).fill(0.0);
        }
    }
    let all = unflatten::<D>(&rhs);
    let out = schur_solve(&sys, &all[..nf], &all[nf..], "acceptance").map_err(err)?;
    let mut got = out.fluid.clone();
    got.extend(out.solid);
    let exact = dense.clone().lu().solve(&rhs).ok_or("dense oracle is singular")?;
    let solve_err = (flatten(&got) - &exact).norm() / exact.norm();

    let correction = sys.schur_correction().map_err(err)?;
    let mut coupled: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nf];
    for &(i, j, _) in &t.entries {
        if i < nf && j >= nf {
            coupled[i].insert(j - nf);
        }
    }
    let allowed: BTreeSet<(usize, usize)> =
        coupled.iter().flat_map(|s| s.iter().flat_map(move |&a| s.iter().map(move |&b| (a, b)))).collect();
    let sparse_ok = correction.keys().all(|k| allowed.contains(k));
    let full = t.to_dense(n);
    let hf = full.view((0, 0), (D * nf, D * nf)).into_owned();
    let g = full.view((0, D * nf), (D * nf, D * ns)).into_owned();
    let dense_corr = g.transpose() * hf.try_inverse().ok_or("H_f is singular")? * &g;
    let mut keyed = DMatrix::zeros(D * ns, D * ns);
    for (&(a, b), m) in &correction {
        keyed.view_mut((D * a, D * b), (D, D)).copy_from(m);
    }
    let corr_err = (&keyed - &dense_corr).norm() / dense_corr.norm().max(f64::MIN_POSITIVE);
    Ok((solve_err, corr_err, sparse_ok))
}

fn matrix_free_case<const D: usize>(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let d = 0.01;
    let side = if D == 2 { rng.random_range(3..7) } else { rng.random_range(2..4) };
    let pos = particle_block::<D>(rng, side, d, 0.3);
    let params = FluidParams { k_incompressibility: 10f64.powf(rng.random_range(3.0..6.0)), viscosity: rng.random_range(0.0..2.0) };
    let fs = fluid_step(pos, d, params, rng.random_range(1e-4..1e-2))?;
    let n = fs.len();
    let (hi, hv) = fs.assembled_hessians();
    let dense = hi.to_dense(n) + hv.to_dense(n);
    let p = DVector::from_fn(D * n, |_, _| rng.random_range(-1.0..1.0));
    let grad = |u: &[Vector<D>], g: &mut [Vector<D>]| {
        g.iter_mut().for_each(|v| *v = Vector::<D>::zeros());
        fs.potential_disp(u, g);
    };
    let got = flatten(&matrix_free_apply(grad, &unflatten::<D>(&p)));
    let exact = &dense * &p;
    Ok((got - &exact).norm() / exact.norm())
}

fn solver_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut solve, mut corr, mut mf) = (0.0f64, 0.0f64, 0.0f64);
    let mut sparse = true;
    for k in 0..100 {
        let (s, c, ok) = if k % 2 == 0 { schur_case::<2>(&mut rng)? } else { schur_case::<3>(&mut rng)? };
        solve = solve.max(s);
        corr = corr.max(c);
        sparse &= ok;
        mf = mf.max(if k % 2 == 0 { matrix_free_case::<2>(&mut rng)? } else { matrix_free_case::<3>(&mut rng)? });
    }
    let ok = solve <= 1e-8 && corr <= 1e-8 && mf <= 1e-8 && sparse;
    Ok((
        ok,
        format!(
            "100 systems: schur_solve {solve:.1e}, S - H_s {corr:.1e}, matrix_free_apply {mf:.1e} (each <= 1e-8), sparsity {}",
            if sparse { "ok" } else { "VIOLATED" }
        ),
    ))
}

// ---------------------------------------------------------------------------
// Scheme comparison and reproducibility

fn iteration_trend() -> Check {
    let cfg = load("drop_2d.toml")?;
    let mut means = Vec::new();
    for kind in [SchemeKind::BaselineTs, SchemeKind::Tscp2] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let s = run_scene(&cfg, dir.path(), Some(kind), None)?;
        let frames = s.rows.len() - 1;
        means.push(s.rows.iter().map(|r| r.newton_iterations).sum::<usize>() as f64 / frames as f64);
    }
    Ok((means[1] < means[0], format!("mean Newton iterations per frame: TS {:.1}, TSCP2 {:.1} (TSCP2 < TS)", means[0], means[1])))
}

fn directory_bytes(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        out.push((entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path()).map_err(|e| e.to_string())?));
    }
    out.sort();
    Ok(out)
}

fn determinism() -> Check {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, frames) in [("drop_2d.toml", None), ("dam_break_2d.toml", Some(3))] {
        let cfg = load(name)?;
        let a = tempfile::tempdir().map_err(|e| e.to_string())?;
        let b = tempfile::tempdir().map_err(|e| e.to_string())?;
        run_scene(&cfg, a.path(), None, frames)?;
        run_scene(&cfg, b.path(), None, frames)?;
        let (fa, fb) = (directory_bytes(a.path())?, directory_bytes(b.path())?);
        let same = fa == fb;
        ok &= same;
        notes.push(format!("{name}: {} files {}", fa.len(), if same { "identical" } else { "DIFFER" }));
    }
    Ok((ok, notes.join(", ")))
}
