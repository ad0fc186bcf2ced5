#![allow(dead_code)]

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roadkit::geom::Point;
use roadkit::synth::{grid_graph, GridSpec};
use roadkit::{RasterMask, RoadGraph};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Squared distance from every pixel to its nearest road pixel.
pub fn brute_sq_distance(mask: &RasterMask) -> Vec<f64> {
    let road: Vec<(i64, i64)> = mask.road_pixels().map(|(x, y)| (x as i64, y as i64)).collect();
    let mut out = Vec::new();
    for y in 0..mask.height() as i64 {
        for x in 0..mask.width() as i64 {
            let mut best = i64::MAX;
            for &(rx, ry) in &road {
                best = best.min((rx - x).pow(2) + (ry - y).pow(2));
            }
            out.push(if best == i64::MAX { f64::INFINITY } else { best as f64 });
        }
    }
    out
}

/// 8-connected component count by flood fill.
pub fn components(mask: &RasterMask) -> usize {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut count = 0;
    for (x, y) in mask.road_pixels() {
        if seen[y * w + x] {
            continue;
        }
        count += 1;
        seen[y * w + x] = true;
        let mut stack = vec![(x as i64, y as i64)];
        while let Some((cx, cy)) = stack.pop() {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if mask.road_at(nx, ny) && !seen[ny as usize * w + nx as usize] {
                        seen[ny as usize * w + nx as usize] = true;
                        stack.push((nx, ny));
                    }
                }
            }
        }
    }
    count
}

/// Relaxed IoU by explicit pairwise search.
pub fn brute_relaxed_iou(pred: &RasterMask, gt: &RasterMask, rho: f64) -> f64 {
    let near = |x: usize, y: usize, other: &RasterMask| {
        other.road_pixels().any(|(ox, oy)| {
            let (dx, dy) = (ox as f64 - x as f64, oy as f64 - y as f64);
            (dx * dx + dy * dy).sqrt() <= rho
        })
    };
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (x, y) in pred.road_pixels() {
        if near(x, y, gt) {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    for (x, y) in gt.road_pixels() {
        if !near(x, y, pred) {
            fn_ += 1;
        }
    }
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp + fn_) as f64
    }
}

pub fn point_segment(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
    ((p.x - a.x - t * dx).powi(2) + (p.y - a.y - t * dy).powi(2)).sqrt()
}

pub fn mask_strategy(max: usize) -> impl Strategy<Value = RasterMask> {
    (1..=max, 1..=max, 0.0..0.6f64).prop_flat_map(|(w, h, density)| {
        proptest::collection::vec(proptest::bool::weighted(density.max(0.01)), w * h)
            .prop_map(move |bits| RasterMask::from_bools(w, h, bits).unwrap())
    })
}

pub fn grid_strategy() -> impl Strategy<Value = RoadGraph> {
    (any::<u64>(), 2..=5usize, 2..=5usize, 0.0..0.5f64).prop_map(|(seed, cols, rows, diag)| {
        let spec = GridSpec {
            cols,
            rows,
            diagonal_prob: diag,
            ..GridSpec::default()
        };
        grid_graph(&mut rng(seed), &spec)
    })
}

/// Graphs from random integer-coordinate linestrings, so endpoints often
/// coincide and merge.
pub fn linestring_strategy() -> impl Strategy<Value = RoadGraph> {
    let pt = (0..12i32, 0..12i32).prop_map(|(x, y)| Point::new(x as f64 * 5.0, y as f64 * 5.0));
    let line = proptest::collection::vec(pt, 2..5);
    proptest::collection::vec(line, 0..8).prop_filter_map("degenerate line", |lines| {
        let lines: Vec<Vec<Point>> = lines
            .into_iter()
            .map(|mut l| {
                l.dedup();
                l
            })
            .filter(|l| l.len() >= 2 && l.first() != l.last())
            .collect();
        RoadGraph::from_linestrings(lines).ok()
    })
}
