//! Scene files, the simulation driver, frame export and scene diagnostics.

mod config;
mod diagnose;
mod frame;
mod run;

pub use config::{seed_box, ContactConfig, DirichletRegion, FluidBox, FluidConfig, SceneConfig, SolidBox, SolidConfig};
pub use diagnose::{diagnose, CheckResult, DiagnosticReport, ORDER_STEP_DIVISOR};
pub use frame::{
    frame_file_name, manifest_columns, read_manifest, FrameRecord, ManifestRow, ManifestWriter, FRAME_MAGIC, FRAME_VERSION,
};
pub use run::{config_hash, run, RunOptions, RunSummary};
