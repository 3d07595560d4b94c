use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lagcoupling::integrator::SchemeKind;
use lagcoupling::scene::{diagnose, run, FrameRecord, RunOptions, SceneConfig};

#[derive(Parser)]
#[command(name = "lagcoupling", version, about = "Coupled SPH fluid / FEM solid simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scene and write frame files plus manifest.csv.
    Simulate {
        scene: PathBuf,
        /// Output directory; defaults to the scene's `output`, relative to the scene file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the scene's frame count.
        #[arg(long)]
        frames: Option<usize>,
        /// joint, ts, tscp2 or tscp3.
        #[arg(long)]
        scheme: Option<SchemeKind>,
    },
    /// Run the self-check suite on a scene.
    Diagnose { scene: PathBuf },
    /// Print the header and extents of a frame file.
    Info { frame: PathBuf },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(command: Command) -> lagcoupling::Result<ExitCode> {
    match command {
        Command::Simulate { scene, out, frames, scheme } => {
            let cfg = SceneConfig::load(&scene)?;
            let out = match (out, &cfg.output) {
                (Some(o), _) => o,
                (None, Some(o)) => cfg.base_dir.join(o),
                (None, None) => {
                    return Err(lagcoupling::Error::Config("no --out given and the scene sets no `output`".into()))
                }
            };
            let summary = run(&cfg, &RunOptions { out_dir: out.clone(), frames, scheme })?;
            let last = summary.rows.last().expect("frame 0 is always written");
            println!(
                "wrote {} frames ({} steps, t = {:.4} s) to {}",
                summary.rows.len(),
                summary.steps,
                last.time,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Diagnose { scene } => {
            let report = diagnose(&SceneConfig::load(&scene)?);
            print!("{report}");
            Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Info { frame } => {
            let f = FrameRecord::read(&frame)?;
            println!("dim       {}", f.dim);
            println!("time      {}", f.time);
            println!("n_fluid   {}", f.n_fluid());
            println!("n_solid   {}", f.n_solid());
            let d = f.dim as usize;
            for (name, data) in [("fluid", &f.fluid_positions), ("solid", &f.solid_positions)] {
                if data.is_empty() {
                    continue;
                }
                let lo: Vec<f64> = (0..d).map(|k| data.iter().skip(k).step_by(d).cloned().fold(f64::INFINITY, f64::min)).collect();
                let hi: Vec<f64> =
                    (0..d).map(|k| data.iter().skip(k).step_by(d).cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
                println!("{name:<9} {lo:?} .. {hi:?}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
