//! Argument parsing and the one-shot command.

use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use retarget_core::pipeline::{FailureKind, Mode, RetargetError, RetargetSpec, Tolerances};
use retarget_core::Raster;

use crate::inputs::{load_mask, load_params, load_polylines};
use crate::{execute, JobInput};

#[derive(Debug, Parser)]
#[command(name = "retarget", version, about = "Resize an image width while keeping marked regions undistorted")]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the HTTP API and the editor page.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Number of jobs that may run at once.
    #[arg(long, default_value_t = 2)]
    pub workers: usize,
    /// Also write finished artifacts under this directory.
    #[arg(long)]
    pub spill_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Source image (PNG or PPM).
    #[arg(required = true)]
    pub input: Option<PathBuf>,
    /// Output image; format follows the extension.
    #[arg(short = 'o', long = "output", required = true)]
    pub output: Option<PathBuf>,
    /// Target width as a fraction of the source width.
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    /// Propose ROIs from the saliency map.
    #[arg(long)]
    pub auto: bool,
    /// Saliency fraction used with --auto.
    #[arg(long, default_value_t = 0.25)]
    pub fraction: f64,
    /// ROI mask images; each connected component is one region.
    #[arg(long = "roi-mask", num_args = 1..)]
    pub roi_masks: Vec<PathBuf>,
    /// JSON polyline file.
    #[arg(long)]
    pub lines: Option<PathBuf>,
    /// Constraint parameters (JSON or TOML); skips least-squares initialization.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 16.0)]
    pub edge_length: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1e-8)]
    pub solver_residual: f64,
    #[arg(long)]
    pub max_correction_iterations: Option<usize>,
    #[arg(long)]
    pub dump_mesh: Option<PathBuf>,
    #[arg(long)]
    pub dump_density: Option<PathBuf>,
    #[arg(long)]
    pub dump_saliency: Option<PathBuf>,
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

impl RunArgs {
    pub fn spec(&self) -> RetargetSpec {
        let defaults = RetargetSpec::default();
        RetargetSpec {
            ratio: self.ratio,
            edge_length: self.edge_length,
            fraction: self.fraction,
            mode: if self.auto { Mode::Auto } else { Mode::Manual },
            tolerances: Tolerances { solver_residual: self.solver_residual, max_correction_iterations: self.max_correction_iterations },
            seed: self.seed.unwrap_or(defaults.seed),
        }
    }
}

/// Runs the one-shot command.
pub fn run(args: &RunArgs) -> Result<()> {
    let input = args.input.as_ref().context("missing input image")?;
    let output = args.output.as_ref().context("missing output path")?;
    let image = Raster::load(input).with_context(|| format!("reading {}", input.display()))?;
    let masks = args.roi_masks.iter().map(|p| load_mask(p)).collect::<Result<Vec<_>>>()?;
    let polylines = match &args.lines {
        Some(p) => load_polylines(p)?,
        None => Vec::new(),
    };
    let params = args.params.as_deref().map(load_params).transpose()?;
    let job = JobInput { image, spec: args.spec(), masks, polylines, params };
    let artifacts = execute(&job, args.dump_saliency.is_some())?;

    artifacts.output.save(output).with_context(|| format!("writing {}", output.display()))?;
    let write = |path: &Option<PathBuf>, bytes: &[u8]| -> Result<()> {
        if let Some(p) = path {
            std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(())
    };
    write(&args.dump_mesh, artifacts.mesh_text.as_bytes())?;
    write(&args.dump_density, &artifacts.density_png)?;
    write(&args.dump_saliency, artifacts.saliency_png.as_deref().unwrap_or_default())?;
    write(&args.diagnostics, artifacts.diagnostics_json.as_bytes())?;
    let d = &artifacts.diagnostics;
    eprintln!(
        "retargeted to {}x{}: E^C = {:.6}, {} flipped before correction, {} correction solves",
        artifacts.output.width(),
        artifacts.output.height(),
        d.conformal_energy,
        d.flipped_initial,
        d.correction_iterations
    );
    Ok(())
}

/// Process exit code for a failed run: 2 for constraint violations, 3 for solver
/// failures, 1 for anything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<RetargetError>().map(RetargetError::kind) {
        Some(FailureKind::Constraint) => 2,
        Some(FailureKind::Solver) => 3,
        _ => 1,
    }
}
