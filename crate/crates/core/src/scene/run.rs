//! Simulation driver: steps a scene and exports frames plus the manifest.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::SceneConfig;
use super::frame::{frame_file_name, FrameRecord, ManifestRow, ManifestWriter};
use crate::integrator::{SchemeKind, StepStats, System};
use crate::Result;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Overrides the scene's frame count.
    pub frames: Option<usize>,
    /// Overrides the scene's scheme.
    pub scheme: Option<SchemeKind>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config_hash: String,
    pub rows: Vec<ManifestRow>,
    pub steps: usize,
}

/// SHA-256 of the canonical TOML form of the scene.
pub fn config_hash(cfg: &SceneConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

/// Runs the scene, writing `frame_NNNNN.bin` files and `manifest.csv` into
/// `opts.out_dir`. A failing step aborts the run after the frames completed so far.
pub fn run(cfg: &SceneConfig, opts: &RunOptions) -> Result<RunSummary> {
    let mut cfg = cfg.clone().with_scheme(opts.scheme);
    if let Some(n) = opts.frames {
        cfg.frames = n;
    }
    match cfg.dimension {
        2 => run_dim::<2>(&cfg, &opts.out_dir),
        _ => run_dim::<3>(&cfg, &opts.out_dir),
    }
}

fn row<const D: usize>(sys: &System<D>, frame: usize, steps: usize, stats: &StepStats) -> Result<ManifestRow> {
    let current = sys.min_pair_distance()?;
    let min_pair_distance = match (stats.min_distance, current) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    Ok(ManifestRow {
        frame,
        time: sys.time,
        steps,
        min_pair_distance,
        mean_abs_j_minus_1: sys.mean_volume_error(),
        momentum: sys.total_momentum().iter().copied().collect(),
        newton_iterations: stats.newton_iterations,
        cg_iterations: stats.cg_iterations,
        line_search_failures: stats.line_search_failures,
    })
}

fn run_dim<const D: usize>(cfg: &SceneConfig, out: &Path) -> Result<RunSummary> {
    let mut sys = cfg.build::<D>()?;
    sys.check_initial_separation()?;
    std::fs::create_dir_all(out)?;
    let hash = config_hash(cfg);
    let mut manifest = ManifestWriter::create(&out.join("manifest.csv"), &hash, D)?;
    let mut rows = Vec::with_capacity(cfg.frames + 1);
    let mut total_steps = 0;
    let mut emit = |sys: &System<D>, frame: usize, steps: usize, stats: &StepStats| -> Result<()> {
        FrameRecord::from_system(sys).write(&out.join(frame_file_name(frame)))?;
        let r = row(sys, frame, steps, stats)?;
        manifest.push(&r)?;
        rows.push(r);
        Ok(())
    };
    emit(&sys, 0, 0, &StepStats::default())?;
    for frame in 1..=cfg.frames {
        let t_end = frame as f64 * cfg.frame_dt;
        let mut stats = StepStats::default();
        let mut steps = 0;
        loop {
            let remaining = t_end - sys.time;
            if remaining <= 1e-9 * cfg.frame_dt {
                break;
            }
            // Equal steps up to the frame boundary, none above the CFL step.
            let n = (remaining / sys.adaptive_dt() - 1e-9).ceil().max(1.0);
            let s = sys.step(remaining / n)?;
            stats.accumulate(&s);
            steps += 1;
        }
        sys.time = t_end;
        total_steps += steps;
        emit(&sys, frame, steps, &stats)?;
    }
    Ok(RunSummary { config_hash: hash, rows, steps: total_steps })
}
