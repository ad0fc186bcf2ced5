//! Self-check suites: analytic gradients against central differences, the
//! distance transform against brute force, and APLS on identical graphs.
//!
//! Every instance draws from its own ChaCha stream derived from the seed,
//! so reports do not depend on scheduling or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ga::{
    ga_backward, ga_module, ga_resblock, ga_resblock_backward, module_kink_margin, resblock_kink_margin,
    FeatureMap, GaParams, ResidualBranchParams,
};
use crate::labelgen::squared_distance_map;
use crate::losses::{
    balanced_ce_loss, class_frequencies, finite_diff_gradient, inverse_boundary_weights, max_relative_error,
    soft_iou_loss, ProbMap,
};
use crate::metrics::{apls, AplsParams};
use crate::raster::RasterMask;
use crate::synth::{grid_graph, noise_mask, GridSpec};

/// Finite-difference step.
pub const FD_EPS: f64 = 1e-4;
/// Largest accepted relative gradient error.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Largest accepted distance-transform error in pixels.
pub const DISTANCE_TOLERANCE: f64 = 1e-6;
/// Rectifier inputs closer than this to zero are resampled so the probes
/// never straddle a kink.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub seed: u64,
    pub loss_instances: usize,
    pub ga_instances: usize,
    pub distance_masks: usize,
    pub distance_size: usize,
    pub apls_graphs: usize,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            loss_instances: 100,
            ga_instances: 20,
            distance_masks: 50,
            distance_size: 32,
            apls_graphs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: &str, errors: Vec<f64>, tolerance: f64) -> Self {
        let max_error = errors.iter().copied().fold(0.0, f64::max);
        let passed = errors.iter().all(|e| *e < tolerance || (*e == 0.0 && tolerance == 0.0));
        Self {
            name: name.to_owned(),
            instances: errors.len(),
            max_error,
            tolerance,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl CheckReport {
    fn from_checks(seed: u64, checks: Vec<CheckResult>) -> Self {
        Self {
            seed,
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }
}

fn instance_rng(seed: u64, suite: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((suite << 32) | index as u64);
    rng
}

fn random_prob_pair(rng: &mut impl Rng) -> (ProbMap, ProbMap) {
    let classes = rng.gen_range(2..=6);
    let (w, h) = (rng.gen_range(3..=8), rng.gen_range(3..=8));
    let n = w * h;
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let gt = ProbMap::one_hot(classes, w, h, &labels).expect("valid labels");
    // softmax mixed with 10% uniform mass keeps p >= 0.1/K, where the
    // central-difference truncation error of -ln p stays far below tolerance
    let logits: Vec<f64> = (0..classes * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut data = vec![0.0; classes * n];
    for i in 0..n {
        let z: f64 = (0..classes).map(|k| logits[k * n + i].exp()).sum();
        for k in 0..classes {
            data[k * n + i] = 0.9 * logits[k * n + i].exp() / z + 0.1 / classes as f64;
        }
    }
    (ProbMap::new(classes, w, h, data).expect("softmax output"), gt)
}

pub fn soft_iou_gradient_check(cfg: &CheckConfig) -> CheckResult {
    let errors = (0..cfg.loss_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(cfg.seed, 1, i);
            let (pred, gt) = random_prob_pair(&mut rng);
            let analytic = soft_iou_loss(&pred, &gt).expect("same shape").grad;
            let numeric = finite_diff_gradient(
                |d| soft_iou_loss(&pred.with_data(d.to_vec()), &gt).expect("same shape").loss,
                pred.data(),
                FD_EPS,
            );
            max_relative_error(&analytic, &numeric)
        })
        .collect();
    CheckResult::new("soft_iou_gradient", errors, GRAD_TOLERANCE)
}

pub fn balanced_ce_gradient_check(cfg: &CheckConfig) -> CheckResult {
    let errors = (0..cfg.loss_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(cfg.seed, 2, i);
            let (pred, gt) = random_prob_pair(&mut rng);
            let weights = inverse_boundary_weights(&class_frequencies(&gt)).expect("frequencies in [0, 1]");
            let analytic = balanced_ce_loss(&pred, &gt, &weights).expect("same shape").grad;
            let numeric = finite_diff_gradient(
                |d| balanced_ce_loss(&pred.with_data(d.to_vec()), &gt, &weights).expect("same shape").loss,
                pred.data(),
                FD_EPS,
            );
            max_relative_error(&analytic, &numeric)
        })
        .collect();
    CheckResult::new("balanced_ce_gradient", errors, GRAD_TOLERANCE)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Random GA instance whose bottleneck rectifiers stay clear of the kink.
pub fn ga_instance(rng: &mut impl Rng, channels: usize, reduction: usize, height: usize, width: usize) -> (FeatureMap, GaParams, FeatureMap) {
    loop {
        let v = FeatureMap::random(channels, height, width, rng, 1.0);
        let p = GaParams::random(channels, reduction, rng, 0.1).expect("reduction divides channels");
        let upstream = FeatureMap::random(channels, height, width, rng, 1.0);
        if module_kink_margin(&v, &p).expect("consistent shapes") > KINK_MARGIN {
            return (v, p, upstream);
        }
    }
}

/// Max relative error of [`ga_backward`] for one instance, over the input
/// and all parameters, with the probe `f = <upstream, ga_module(v)>`.
pub fn ga_module_instance_error(v: &FeatureMap, p: &GaParams, upstream: &FeatureMap) -> f64 {
    let (dv, dp) = ga_backward(v, p, upstream).expect("consistent shapes");
    let num_v = finite_diff_gradient(
        |x| dot(upstream.data(), ga_module(&v.replace_data(x.to_vec()).unwrap(), p).unwrap().data()),
        v.data(),
        FD_EPS,
    );
    let num_p = finite_diff_gradient(
        |x| dot(upstream.data(), ga_module(v, &p.unflatten(x)).unwrap().data()),
        &p.flatten(),
        FD_EPS,
    );
    let analytic = [dv.data(), &dp.flatten()[..]].concat();
    let numeric = [num_v, num_p].concat();
    max_relative_error(&analytic, &numeric)
}

pub fn ga_module_gradient_check(cfg: &CheckConfig) -> CheckResult {
    let errors = (0..cfg.ga_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(cfg.seed, 3, i);
            let channels = [4, 8][rng.gen_range(0..2)];
            let reduction = [2, 4][rng.gen_range(0..2)];
            let (h, w) = (rng.gen_range(5..=7), rng.gen_range(5..=7));
            let (v, p, g) = ga_instance(&mut rng, channels, reduction, h, w);
            ga_module_instance_error(&v, &p, &g)
        })
        .collect();
    CheckResult::new("ga_module_gradient", errors, GRAD_TOLERANCE)
}

/// Random residual-block instance with every rectifier input clear of
/// its kink.
pub fn resblock_instance(
    rng: &mut impl Rng,
    channels: usize,
    reduction: usize,
    size: usize,
) -> (FeatureMap, GaParams, ResidualBranchParams, FeatureMap) {
    loop {
        let v = FeatureMap::random(channels, size, size, rng, 1.0);
        let p = GaParams::random(channels, reduction, rng, 0.1).expect("reduction divides channels");
        let b = ResidualBranchParams::random(channels, rng, 0.1);
        let upstream = FeatureMap::random(channels, size, size, rng, 1.0);
        if resblock_kink_margin(&v, &p, &b).expect("consistent shapes") > KINK_MARGIN {
            return (v, p, b, upstream);
        }
    }
}

pub fn resblock_instance_error(v: &FeatureMap, p: &GaParams, b: &ResidualBranchParams, upstream: &FeatureMap) -> f64 {
    let grads = ga_resblock_backward(v, p, b, upstream).expect("consistent shapes");
    let f = |v: &FeatureMap, p: &GaParams, b: &ResidualBranchParams| dot(upstream.data(), ga_resblock(v, p, b).unwrap().data());
    let num_v = finite_diff_gradient(|x| f(&v.replace_data(x.to_vec()).unwrap(), p, b), v.data(), FD_EPS);
    let num_p = finite_diff_gradient(|x| f(v, &p.unflatten(x), b), &p.flatten(), FD_EPS);
    let num_b = finite_diff_gradient(|x| f(v, p, &b.unflatten(x)), &b.flatten(), FD_EPS);
    let analytic = [grads.input.data(), &grads.ga.flatten()[..], &grads.branch.flatten()[..]].concat();
    let numeric = [num_v, num_p, num_b].concat();
    max_relative_error(&analytic, &numeric)
}

pub fn ga_resblock_gradient_check(cfg: &CheckConfig) -> CheckResult {
    let errors = (0..cfg.ga_instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(cfg.seed, 4, i);
            let (v, p, b, g) = resblock_instance(&mut rng, 4, 2, 6);
            resblock_instance_error(&v, &p, &b, &g)
        })
        .collect();
    CheckResult::new("ga_resblock_gradient", errors, GRAD_TOLERANCE)
}

/// Reference implementations used as independent oracles.
pub mod oracle {
    use crate::raster::RasterMask;

    /// Squared distance to the nearest road pixel by exhaustive search.
    pub fn brute_force_squared_distance(mask: &RasterMask) -> Vec<f64> {
        let sites: Vec<(i64, i64)> = mask.road_pixels().map(|(x, y)| (x as i64, y as i64)).collect();
        let mut out = Vec::with_capacity(mask.width() * mask.height());
        for y in 0..mask.height() as i64 {
            for x in 0..mask.width() as i64 {
                let best = sites
                    .iter()
                    .map(|&(sx, sy)| ((sx - x) * (sx - x) + (sy - y) * (sy - y)) as f64)
                    .fold(f64::INFINITY, f64::min);
                out.push(best);
            }
        }
        out
    }
}

fn distance_error(mask: &RasterMask) -> f64 {
    let fast = squared_distance_map(mask);
    let slow = oracle::brute_force_squared_distance(mask);
    fast.iter()
        .zip(&slow)
        .map(|(a, b)| {
            if a.is_infinite() && b.is_infinite() {
                0.0
            } else {
                (a.sqrt() - b.sqrt()).abs()
            }
        })
        .fold(0.0, f64::max)
}

pub fn distance_map_check(cfg: &CheckConfig) -> CheckResult {
    let errors = (0..cfg.distance_masks)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(cfg.seed, 5, i);
            let density = rng.gen_range(0.0..0.2);
            let mask = noise_mask(&mut rng, cfg.distance_size, cfg.distance_size, density);
            distance_error(&mask)
        })
        .collect();
    CheckResult::new("distance_map_oracle", errors, DISTANCE_TOLERANCE)
}

pub fn apls_identity_check(cfg: &CheckConfig) -> CheckResult {
    let params = AplsParams::default();
    let errors = (0..cfg.apls_graphs)
        .into_par_iter()
        .map(|i| {
            let mut rng = instance_rng(cfg.seed, 6, i);
            let spec = GridSpec {
                diagonal_prob: 0.3,
                ..GridSpec::default()
            };
            let g = grid_graph(&mut rng, &spec);
            (1.0 - apls(&g, &g, &params)).abs()
        })
        .collect();
    let mut result = CheckResult::new("apls_identity", errors, f64::EPSILON);
    result.passed = result.max_error == 0.0;
    result.tolerance = 0.0;
    result
}

/// Gradient checks of the two losses.
pub fn run_loss_checks(cfg: &CheckConfig) -> CheckReport {
    CheckReport::from_checks(cfg.seed, vec![soft_iou_gradient_check(cfg), balanced_ce_gradient_check(cfg)])
}

/// Every suite.
pub fn run_all(cfg: &CheckConfig) -> CheckReport {
    CheckReport::from_checks(
        cfg.seed,
        vec![
            soft_iou_gradient_check(cfg),
            balanced_ce_gradient_check(cfg),
            ga_module_gradient_check(cfg),
            ga_resblock_gradient_check(cfg),
            distance_map_check(cfg),
            apls_identity_check(cfg),
        ],
    )
}
