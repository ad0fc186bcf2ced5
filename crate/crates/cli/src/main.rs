//! `roadkit`: label generation, vectorization, evaluation, tiling plans and
//! kernel self-checks for road-network topology work.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O failure.

mod commands;
mod config;
mod error;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roadkit::labelgen::LabelParams;
use roadkit::metrics::AplsParams;
use roadkit::tiling::{DEFAULT_MARGIN, DEFAULT_PATCH, DEFAULT_STRIDE};
use roadkit::vectorize::{DEFAULT_MIN_SPUR, DEFAULT_RDP_TOLERANCE};

use crate::config::{pick, RunConfig};
use crate::error::CliError;

/// Relaxed-IoU tolerance in pixels when none is configured.
const DEFAULT_RHO: f64 = 3.0;
const DEFAULT_LABEL_SIZE: usize = 512;

#[derive(Debug, Parser)]
#[command(name = "roadkit", version, about = "Road-network topology toolkit")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: ROADKIT_THREADS, then all cores).
    #[arg(long, global = true, env = "ROADKIT_THREADS")]
    threads: Option<usize>,

    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct LabelFlags {
    /// Gaussian width in pixels [default: 2].
    #[arg(long)]
    theta: Option<f64>,
    /// Heatmap threshold for road pixels [default: exp(-1/2)].
    #[arg(long)]
    lambda: Option<f64>,
    /// Radius of node class regions [default: 2 * theta].
    #[arg(long)]
    node_radius: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rasterize graph-JSON files into road masks and connectivity maps.
    Labelgen {
        /// Graph files or directories of `.json` files.
        inputs: Vec<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Label width in pixels [default: 512].
        #[arg(long)]
        width: Option<usize>,
        /// Label height in pixels [default: 512].
        #[arg(long)]
        height: Option<usize>,
        #[command(flatten)]
        label: LabelFlags,
    },
    /// Turn PGM road masks into graph-JSON files.
    Vectorize {
        /// Mask files or directories of `.pgm` files.
        inputs: Vec<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Polyline simplification tolerance in pixels [default: 2].
        #[arg(long)]
        rdp_tolerance: Option<f64>,
        /// Dangling edges shorter than this are pruned [default: 30].
        #[arg(long)]
        min_spur: Option<f64>,
    },
    /// Score predictions against ground truth, pairing files by stem.
    Eval {
        /// Directory of predicted masks (.pgm) and/or graphs (.json).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Directory of ground-truth masks (.pgm) and/or graphs (.json).
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Relaxed-IoU tolerance in pixels [default: 3].
        #[arg(long)]
        rho: Option<f64>,
        /// APLS snap radius in pixels [default: 4].
        #[arg(long)]
        snap_radius: Option<f64>,
        /// APLS control point spacing in pixels [default: 50].
        #[arg(long)]
        sample_spacing: Option<f64>,
        /// Polyline simplification tolerance in pixels [default: 2].
        #[arg(long)]
        rdp_tolerance: Option<f64>,
        /// Dangling edges shorter than this are pruned [default: 30].
        #[arg(long)]
        min_spur: Option<f64>,
        #[command(flatten)]
        label: LabelFlags,
    },
    /// Print the overlapping tile plan for an image.
    TilePlan {
        /// Image width in pixels.
        #[arg(long)]
        width: Option<usize>,
        /// Image height in pixels.
        #[arg(long)]
        height: Option<usize>,
        /// Patch size [default: 512].
        #[arg(long)]
        patch: Option<usize>,
        /// Stride between patches [default: 368].
        #[arg(long)]
        stride: Option<usize>,
        /// Border discarded from interior patch sides [default: 72].
        #[arg(long)]
        margin: Option<usize>,
    },
    /// Run the global-aware attention module on an RGKT feature map.
    GaForward {
        input: PathBuf,
        /// GA weights as JSON; seeded random weights otherwise.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Channel bottleneck ratio [default: largest of 16, 8, 4, 2 below C].
        #[arg(long)]
        reduction: Option<usize>,
        /// Random seed [default: 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the output feature map as RGKT.
        #[arg(long)]
        output_tensor: Option<PathBuf>,
    },
    /// Gradient checks of the segmentation and connectivity losses.
    Losscheck {
        /// Random seed [default: 0].
        #[arg(long)]
        seed: Option<u64>,
    },
    /// All gradient checks and oracle suites.
    Check {
        /// Random seed [default: 0].
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn label_params(flags: LabelFlags, cfg: &RunConfig) -> LabelParams {
    let d = LabelParams::default();
    let theta = pick(flags.theta, cfg.theta, d.theta);
    LabelParams {
        theta,
        lambda: pick(flags.lambda, cfg.lambda, d.lambda),
        // the node radius follows theta unless set explicitly
        node_radius: pick(flags.node_radius, cfg.node_radius, 2.0 * theta),
    }
}

fn required(flag: Option<PathBuf>, cfg: Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or(cfg).ok_or_else(|| CliError::Validation(format!("missing --{name}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let threads = cli.threads.or(cfg.threads).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    let out = cli.out.as_deref();
    let seed = |flag: Option<u64>| pick(flag, cfg.seed, 0);

    pool.install(|| match cli.command {
        Command::Labelgen {
            inputs,
            out_dir,
            width,
            height,
            label,
        } => {
            let inputs = if inputs.is_empty() { cfg.inputs.clone().unwrap_or_default() } else { inputs };
            if inputs.is_empty() {
                return Err(CliError::Validation("no input graphs given".into()));
            }
            let job = commands::LabelJob {
                inputs,
                out_dir: required(out_dir, cfg.out_dir.clone(), "out-dir")?,
                width: pick(width, cfg.width, DEFAULT_LABEL_SIZE),
                height: pick(height, cfg.height, DEFAULT_LABEL_SIZE),
                params: label_params(label, &cfg),
            };
            commands::labelgen(&job, out)
        }
        Command::Vectorize {
            inputs,
            out_dir,
            rdp_tolerance,
            min_spur,
        } => {
            let inputs = if inputs.is_empty() { cfg.inputs.clone().unwrap_or_default() } else { inputs };
            if inputs.is_empty() {
                return Err(CliError::Validation("no input masks given".into()));
            }
            let job = commands::VectorizeJob {
                inputs,
                out_dir: required(out_dir, cfg.out_dir.clone(), "out-dir")?,
                rdp_tolerance: pick(rdp_tolerance, cfg.rdp_tolerance, DEFAULT_RDP_TOLERANCE),
                min_spur: pick(min_spur, cfg.min_spur, DEFAULT_MIN_SPUR),
            };
            commands::vectorize(&job, out)
        }
        Command::Eval {
            pred,
            gt,
            rho,
            snap_radius,
            sample_spacing,
            rdp_tolerance,
            min_spur,
            label,
        } => {
            let d = AplsParams::default();
            let job = commands::EvalJob {
                pred_dir: required(pred, cfg.pred_dir.clone(), "pred")?,
                gt_dir: required(gt, cfg.gt_dir.clone(), "gt")?,
                rho: pick(rho, cfg.rho, DEFAULT_RHO),
                apls: AplsParams {
                    snap_radius: pick(snap_radius, cfg.snap_radius, d.snap_radius),
                    sample_spacing: pick(sample_spacing, cfg.sample_spacing, d.sample_spacing),
                },
                labels: label_params(label, &cfg),
                rdp_tolerance: pick(rdp_tolerance, cfg.rdp_tolerance, DEFAULT_RDP_TOLERANCE),
                min_spur: pick(min_spur, cfg.min_spur, DEFAULT_MIN_SPUR),
            };
            commands::eval(&job, out)
        }
        Command::TilePlan {
            width,
            height,
            patch,
            stride,
            margin,
        } => {
            let width = width.or(cfg.width).ok_or_else(|| CliError::Validation("missing --width".into()))?;
            let height = height.or(cfg.height).ok_or_else(|| CliError::Validation("missing --height".into()))?;
            commands::tile_plan(
                width,
                height,
                pick(patch, cfg.patch, DEFAULT_PATCH),
                pick(stride, cfg.stride, DEFAULT_STRIDE),
                pick(margin, cfg.margin, DEFAULT_MARGIN),
                out,
            )
        }
        Command::GaForward {
            input,
            weights,
            reduction,
            seed: s,
            output_tensor,
        } => {
            let job = commands::GaJob {
                input,
                weights,
                reduction: reduction.or(cfg.reduction),
                seed: seed(s),
                output_tensor,
            };
            commands::ga_forward(&job, out)
        }
        Command::Losscheck { seed: s } => commands::losscheck(seed(s), out),
        Command::Check { seed: s } => commands::check(seed(s), out),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("roadkit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
