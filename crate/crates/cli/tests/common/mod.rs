//! Independent reference implementations for the acceptance suite.
#![allow(dead_code)]

use roadkit::{Point, RasterMask, RoadGraph};

/// Distance from each pixel to the nearest road pixel by exhaustive search.
pub fn brute_distance(mask: &RasterMask) -> Vec<f64> {
    let road: Vec<(f64, f64)> = mask.road_pixels().map(|(x, y)| (x as f64, y as f64)).collect();
    let mut out = Vec::with_capacity(mask.width() * mask.height());
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let d = road
                .iter()
                .map(|&(rx, ry)| ((rx - x as f64).powi(2) + (ry - y as f64).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            out.push(d);
        }
    }
    out
}

/// Relaxed IoU by buffering each mask pixel-by-pixel.
pub fn brute_relaxed_iou(pred: &RasterMask, gt: &RasterMask, rho: f64) -> f64 {
    let within = |x: usize, y: usize, other: &RasterMask| {
        other
            .road_pixels()
            .any(|(ox, oy)| ((ox as f64 - x as f64).powi(2) + (oy as f64 - y as f64).powi(2)).sqrt() <= rho)
    };
    let tp = pred.road_pixels().filter(|&(x, y)| within(x, y, gt)).count();
    let fp = pred.count() - tp;
    let fn_ = gt.road_pixels().filter(|&(x, y)| !within(x, y, pred)).count();
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp + fn_) as f64
    }
}

pub fn plain_iou(a: &RasterMask, b: &RasterMask) -> f64 {
    let inter = a.data().iter().zip(b.data()).filter(|(x, y)| **x != 0 && **y != 0).count();
    let union = a.data().iter().zip(b.data()).filter(|(x, y)| **x != 0 || **y != 0).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Whether deleting edge `k` separates its two endpoints.
pub fn is_bridge(g: &RoadGraph, k: usize) -> bool {
    let e = &g.edges()[k];
    if e.a == e.b {
        return false;
    }
    let mut seen = vec![false; g.node_count()];
    let mut stack = vec![e.a];
    seen[e.a] = true;
    while let Some(v) = stack.pop() {
        for (j, f) in g.edges().iter().enumerate() {
            if j == k {
                continue;
            }
            let u = if f.a == v {
                f.b
            } else if f.b == v {
                f.a
            } else {
                continue;
            };
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    !seen[e.b]
}

pub fn point_segment(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) };
    ((p.x - a.x - t * dx).powi(2) + (p.y - a.y - t * dy).powi(2)).sqrt()
}

/// Central differences with step `eps`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + eps;
            let up = f(&x);
            x[i] = orig - eps;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
