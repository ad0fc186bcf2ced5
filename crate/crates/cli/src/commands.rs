use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use roadkit::check::{run_all, run_loss_checks, CheckConfig, CheckReport};
use roadkit::ga::{channel_weights, ga_module, FeatureMap, GaParams};
use roadkit::labelgen::{generate_labels, LabelParams};
use roadkit::metrics::{apls, iou, relaxed_iou, AplsParams};
use roadkit::tiling::{plan_tiles, TilePlan};
use roadkit::vectorize::mask_to_graph;
use serde::Serialize;

use crate::error::CliError;
use crate::files::{create, emit, ensure_dir, expand_inputs, index_dir, read_graph, read_mask, stem};

#[derive(Debug, Serialize)]
pub struct FileError {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Serialize)]
pub struct LabelOutput {
    pub id: String,
    pub mask: PathBuf,
    pub connectivity: PathBuf,
    pub class_histogram: [usize; 6],
}

#[derive(Debug, Serialize)]
pub struct LabelReport {
    pub outputs: Vec<LabelOutput>,
    pub errors: Vec<FileError>,
}

pub struct LabelJob {
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub width: usize,
    pub height: usize,
    pub params: LabelParams,
}

/// Splits per-file results into successes and errors; I/O errors abort.
fn partition<T>(results: Vec<(String, Result<T, CliError>)>) -> Result<(Vec<T>, Vec<FileError>), CliError> {
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push(v),
            Err(CliError::Validation(error)) => errors.push(FileError { id, error }),
            Err(e) => return Err(e),
        }
    }
    Ok((ok, errors))
}

fn finish<T: Serialize>(report: &T, errors: usize, out: Option<&Path>) -> Result<(), CliError> {
    emit(report, out)?;
    if errors > 0 {
        return Err(CliError::Validation(format!("{errors} input(s) failed")));
    }
    Ok(())
}

pub fn labelgen(job: &LabelJob, out: Option<&Path>) -> Result<(), CliError> {
    job.params.validate()?;
    if job.width == 0 || job.height == 0 {
        return Err(CliError::Validation("width and height must be positive".into()));
    }
    let files = expand_inputs(&job.inputs, "json")?;
    ensure_dir(&job.out_dir)?;
    let results: Vec<_> = files
        .par_iter()
        .map(|path| {
            let id = stem(path);
            let r = (|| {
                let g = read_graph(path)?;
                let labels = generate_labels(&g, job.width, job.height, &job.params)?;
                let mask = job.out_dir.join(format!("{id}_mask.pgm"));
                let connectivity = job.out_dir.join(format!("{id}_conn.pgm"));
                labels.mask.write_pgm(create(&mask)?)?;
                labels.connectivity.write_pgm(create(&connectivity)?)?;
                Ok(LabelOutput {
                    id: id.clone(),
                    mask,
                    connectivity,
                    class_histogram: labels.connectivity.histogram(),
                })
            })();
            (id, r)
        })
        .collect();
    let (outputs, errors) = partition(results)?;
    let n = errors.len();
    finish(&LabelReport { outputs, errors }, n, out)
}

#[derive(Debug, Serialize)]
pub struct GraphOutput {
    pub id: String,
    pub graph: PathBuf,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Serialize)]
pub struct VectorizeReport {
    pub outputs: Vec<GraphOutput>,
    pub errors: Vec<FileError>,
}

pub struct VectorizeJob {
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub rdp_tolerance: f64,
    pub min_spur: f64,
}

pub fn vectorize(job: &VectorizeJob, out: Option<&Path>) -> Result<(), CliError> {
    if !(job.rdp_tolerance >= 0.0) || !(job.min_spur >= 0.0) {
        return Err(CliError::Validation("rdp tolerance and min spur must be non-negative".into()));
    }
    let files = expand_inputs(&job.inputs, "pgm")?;
    ensure_dir(&job.out_dir)?;
    let results: Vec<_> = files
        .par_iter()
        .map(|path| {
            let id = stem(path);
            let r = (|| {
                let mask = read_mask(path)?;
                let g = mask_to_graph(&mask, job.rdp_tolerance, job.min_spur)?;
                let graph = job.out_dir.join(format!("{id}.json"));
                std::fs::write(&graph, g.to_json()).map_err(|e| CliError::io(&graph, e))?;
                Ok(GraphOutput {
                    id: id.clone(),
                    graph,
                    nodes: g.node_count(),
                    edges: g.edge_count(),
                })
            })();
            (id, r)
        })
        .collect();
    let (outputs, errors) = partition(results)?;
    let n = errors.len();
    finish(&VectorizeReport { outputs, errors }, n, out)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvalRecord {
    pub id: String,
    pub iou: Option<f64>,
    pub relaxed_iou: Option<f64>,
    pub rho: f64,
    pub apls: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct EvalMeans {
    pub iou: Option<f64>,
    pub relaxed_iou: Option<f64>,
    pub apls: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub rho: f64,
    pub snap_radius: f64,
    pub sample_spacing: f64,
    pub records: Vec<EvalRecord>,
    pub mean: EvalMeans,
}

pub struct EvalJob {
    pub pred_dir: PathBuf,
    pub gt_dir: PathBuf,
    pub rho: f64,
    pub apls: AplsParams,
    pub labels: LabelParams,
    pub rdp_tolerance: f64,
    pub min_spur: f64,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Scores one prediction against its ground truth. Pixel metrics need a
/// predicted mask and either a ground-truth mask or graph (rasterized to
/// the prediction's size); APLS needs a ground-truth graph and either a
/// predicted graph or mask (vectorized).
fn eval_one(job: &EvalJob, id: &str, pred: &crate::files::Entry, gt: &crate::files::Entry) -> Result<EvalRecord, CliError> {
    let pred_mask = pred.mask.as_deref().map(read_mask).transpose()?;
    let pred_graph = pred.graph.as_deref().map(read_graph).transpose()?;
    let gt_graph = gt.graph.as_deref().map(read_graph).transpose()?;
    let gt_mask = match (&gt.mask, &gt_graph, &pred_mask) {
        (Some(path), _, _) => Some(read_mask(path)?),
        (None, Some(g), Some(pm)) => Some(generate_labels(g, pm.width(), pm.height(), &job.labels)?.mask),
        _ => None,
    };
    let (mut iou_v, mut riou_v) = (None, None);
    if let (Some(p), Some(g)) = (&pred_mask, &gt_mask) {
        iou_v = Some(iou(p, g)?);
        riou_v = Some(relaxed_iou(p, g, job.rho)?);
    }
    let proposal = match (pred_graph, &pred_mask) {
        (Some(g), _) => Some(g),
        (None, Some(m)) => Some(mask_to_graph(m, job.rdp_tolerance, job.min_spur)?),
        _ => None,
    };
    let apls_v = match (&gt_graph, &proposal) {
        (Some(g), Some(p)) => Some(apls(g, p, &job.apls)),
        _ => None,
    };
    Ok(EvalRecord {
        id: id.to_owned(),
        iou: iou_v,
        relaxed_iou: riou_v,
        rho: job.rho,
        apls: apls_v,
    })
}

pub fn eval(job: &EvalJob, out: Option<&Path>) -> Result<(), CliError> {
    job.apls.validate()?;
    job.labels.validate()?;
    if !(job.rho >= 0.0) {
        return Err(CliError::Validation(format!("rho must be non-negative, got {}", job.rho)));
    }
    for dir in [&job.pred_dir, &job.gt_dir] {
        if !dir.is_dir() {
            return Err(CliError::io(dir, "not a directory"));
        }
    }
    let preds = index_dir(&job.pred_dir)?;
    let gts = index_dir(&job.gt_dir)?;
    let orphans: Vec<String> = preds
        .keys()
        .filter(|k| !gts.contains_key(*k))
        .map(|k| format!("{k} (prediction only)"))
        .chain(gts.keys().filter(|k| !preds.contains_key(*k)).map(|k| format!("{k} (ground truth only)")))
        .collect();
    if !orphans.is_empty() {
        return Err(CliError::Validation(format!("unpaired inputs: {}", orphans.join(", "))));
    }
    let pairs: Vec<_> = preds.iter().map(|(id, p)| (id, p, &gts[id])).collect();
    let records = pairs
        .par_iter()
        .map(|(id, p, g)| eval_one(job, id, p, g))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = EvalMeans {
        iou: mean(records.iter().map(|r| r.iou)),
        relaxed_iou: mean(records.iter().map(|r| r.relaxed_iou)),
        apls: mean(records.iter().map(|r| r.apls)),
    };
    emit(
        &EvalReport {
            rho: job.rho,
            snap_radius: job.apls.snap_radius,
            sample_spacing: job.apls.sample_spacing,
            records,
            mean,
        },
        out,
    )
}

pub fn tile_plan(w: usize, h: usize, patch: usize, stride: usize, margin: usize, out: Option<&Path>) -> Result<(), CliError> {
    let plan: TilePlan = plan_tiles(w, h, patch, stride, margin)?;
    emit(&plan, out)
}

#[derive(Debug, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub l2: f64,
}

impl Stats {
    fn of(data: &[f64]) -> Self {
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: data.iter().copied().fold(f64::INFINITY, f64::min),
            max: data.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            l2: data.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct GaReport {
    pub shape: [usize; 3],
    pub reduction: usize,
    pub channel_weights: Vec<f64>,
    pub input: Stats,
    pub output: Stats,
}

/// Largest common reduction ratio that divides `channels` and leaves at
/// least one hidden unit.
pub fn default_reduction(channels: usize) -> usize {
    [16, 8, 4, 2].into_iter().find(|r| channels % r == 0 && channels > *r).unwrap_or(1)
}

pub struct GaJob {
    pub input: PathBuf,
    pub weights: Option<PathBuf>,
    pub reduction: Option<usize>,
    pub seed: u64,
    pub output_tensor: Option<PathBuf>,
}

pub fn ga_forward(job: &GaJob, out: Option<&Path>) -> Result<(), CliError> {
    let f = std::fs::File::open(&job.input).map_err(|e| CliError::io(&job.input, e))?;
    let v = FeatureMap::read_raw(std::io::BufReader::new(f))?;
    let params = match &job.weights {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            GaParams::from_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => {
            let r = job.reduction.unwrap_or_else(|| default_reduction(v.channels()));
            GaParams::random(v.channels(), r, &mut ChaCha8Rng::seed_from_u64(job.seed), 0.1)?
        }
    };
    let weights = channel_weights(&v, &params)?;
    let y = ga_module(&v, &params)?;
    if let Some(path) = &job.output_tensor {
        y.write_raw(create(path)?)?;
    }
    let (c, h, w) = v.shape();
    emit(
        &GaReport {
            shape: [c, h, w],
            reduction: params.reduction,
            channel_weights: weights,
            input: Stats::of(v.data()),
            output: Stats::of(y.data()),
        },
        out,
    )
}

fn check_result(report: &CheckReport, out: Option<&Path>) -> Result<(), CliError> {
    emit(report, out)?;
    if !report.passed {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(CliError::Validation(format!("checks failed: {}", failed.join(", "))));
    }
    Ok(())
}

pub fn losscheck(seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    check_result(&run_loss_checks(&CheckConfig { seed, ..CheckConfig::default() }), out)
}

pub fn check(seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    check_result(&run_all(&CheckConfig { seed, ..CheckConfig::default() }), out)
}
