//! Pixel metrics (IoU, relaxed IoU) and the APLS graph metric.
//!
//! APLS compares shortest-path lengths between pairs of control points.
//! Control points are the graph's nodes plus extra points injected along
//! long edges. Each control point of the reference graph is snapped to the
//! nearest point on the proposal's polylines; a pair whose path is missing
//! on either side scores the maximum penalty of 1.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{cumulative_lengths, point_at_length, project_on_segment, Point};
use crate::graph::RoadGraph;
use crate::labelgen::squared_distance_map;
use crate::raster::RasterMask;

/// Term assigned to a pair with no matching path.
pub const MISSING_PATH_PENALTY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelScore {
    pub iou: f64,
    pub relaxed_iou: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AplsParams {
    pub snap_radius: f64,
    pub sample_spacing: f64,
}

impl Default for AplsParams {
    fn default() -> Self {
        Self {
            snap_radius: 4.0,
            sample_spacing: 50.0,
        }
    }
}

impl AplsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.snap_radius > 0.0) || !(self.sample_spacing > 0.0) {
            return Err(Error::argument(format!(
                "snap_radius and sample_spacing must be positive, got {} and {}",
                self.snap_radius, self.sample_spacing
            )));
        }
        Ok(())
    }
}

fn same_shape(pred: &RasterMask, gt: &RasterMask) -> Result<()> {
    if pred.same_shape(gt) {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )))
    }
}

fn ratio(tp: usize, fp: usize, fn_: usize) -> f64 {
    let den = tp + fp + fn_;
    if den == 0 {
        1.0
    } else {
        tp as f64 / den as f64
    }
}

/// `|pred ∧ gt| / |pred ∨ gt|`, 1 when both masks are empty.
pub fn iou(pred: &RasterMask, gt: &RasterMask) -> Result<f64> {
    same_shape(pred, gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        let (a, b) = (a != 0, b != 0);
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(ratio(inter, 0, union - inter))
}

/// IoU where a predicted pixel within Euclidean distance `rho` of the
/// ground truth counts as a hit, and a ground-truth pixel is only missed
/// when no prediction lies within `rho` of it.
pub fn relaxed_iou(pred: &RasterMask, gt: &RasterMask, rho: f64) -> Result<f64> {
    same_shape(pred, gt)?;
    if !(rho >= 0.0) {
        return Err(Error::argument(format!("rho must be non-negative, got {rho}")));
    }
    let r2 = rho * rho;
    let to_gt = squared_distance_map(gt);
    let to_pred = squared_distance_map(pred);
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for i in 0..pred.data().len() {
        if pred.data()[i] != 0 {
            if to_gt[i] <= r2 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        if gt.data()[i] != 0 && to_pred[i] > r2 {
            fn_ += 1;
        }
    }
    Ok(ratio(tp, fp, fn_))
}

pub fn pixel_scores(pred: &RasterMask, gt: &RasterMask, rho: f64) -> Result<PixelScore> {
    Ok(PixelScore {
        iou: iou(pred, gt)?,
        relaxed_iou: relaxed_iou(pred, gt, rho)?,
        rho,
    })
}

/// Splits every edge so consecutive control nodes are at most `spacing`
/// apart along the polyline. Injected nodes have degree two.
pub fn build_control_points(g: &RoadGraph, spacing: f64) -> RoadGraph {
    assert!(spacing > 0.0, "spacing must be positive");
    let mut nodes = g.nodes().to_vec();
    let mut edges = Vec::with_capacity(g.edge_count());
    for e in g.edges() {
        let cum = cumulative_lengths(&e.polyline);
        let total = *cum.last().unwrap();
        let pieces = if total > spacing { (total / spacing).ceil() as usize } else { 1 };
        let mut prev_node = e.a;
        let mut current = vec![e.polyline[0]];
        let mut next_vertex = 1;
        for j in 1..pieces {
            let s = total * j as f64 / pieces as f64;
            let (cut, seg) = point_at_length(&e.polyline, &cum, s);
            while next_vertex <= seg {
                current.push(e.polyline[next_vertex]);
                next_vertex += 1;
            }
            if current.last() != Some(&cut) {
                current.push(cut);
            }
            let id = nodes.len();
            nodes.push(cut);
            edges.push((prev_node, id, std::mem::replace(&mut current, vec![cut])));
            prev_node = id;
        }
        current.extend_from_slice(&e.polyline[next_vertex..]);
        edges.push((prev_node, e.b, current));
    }
    RoadGraph::new(nodes, edges, g.boundary_nodes().iter().copied().collect::<Vec<_>>())
        .expect("subdividing a valid graph keeps it valid")
}

/// Where a query point lands on a graph: edge index and arc position.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Location {
    edge: usize,
    s: f64,
}

/// Nearest point on any polyline of `g`, if within `radius`.
fn locate(g: &RoadGraph, cums: &[Vec<f64>], p: Point, radius: f64) -> Option<Location> {
    let mut best: Option<(f64, Location)> = None;
    for (ei, e) in g.edges().iter().enumerate() {
        for (k, w) in e.polyline.windows(2).enumerate() {
            let (t, d) = project_on_segment(p, w[0], w[1]);
            if best.map_or(true, |(bd, _)| d < bd) {
                let s = if t == 1.0 { cums[ei][k + 1] } else { cums[ei][k] + t * (cums[ei][k + 1] - cums[ei][k]) };
                best = Some((d, Location { edge: ei, s }));
            }
        }
    }
    best.filter(|(d, _)| *d <= radius).map(|(_, l)| l)
}

/// Weighted graph over the original nodes plus one vertex per distinct
/// query location, so shortest paths between arbitrary on-edge points can
/// be taken with Dijkstra.
struct Router {
    adj: Vec<Vec<(usize, f64)>>,
    targets: Vec<Option<usize>>,
}

impl Router {
    fn new(g: &RoadGraph, cums: &[Vec<f64>], locations: &[Option<Location>]) -> Self {
        let n = g.node_count();
        let mut vertex_count = n;
        let mut per_edge: Vec<Vec<(f64, usize)>> = vec![Vec::new(); g.edge_count()];
        let mut targets = vec![None; locations.len()];
        for (qi, loc) in locations.iter().enumerate() {
            let Some(loc) = loc else { continue };
            let e = &g.edges()[loc.edge];
            let total = *cums[loc.edge].last().unwrap();
            let v = if loc.s <= 0.0 {
                e.a
            } else if loc.s >= total {
                e.b
            } else if let Some(&(_, v)) = per_edge[loc.edge].iter().find(|(s, _)| *s == loc.s) {
                v
            } else {
                per_edge[loc.edge].push((loc.s, vertex_count));
                vertex_count += 1;
                vertex_count - 1
            };
            targets[qi] = Some(v);
        }

        let mut adj = vec![Vec::new(); vertex_count];
        for (ei, e) in g.edges().iter().enumerate() {
            let total = *cums[ei].last().unwrap();
            let stops = &mut per_edge[ei];
            stops.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut prev = (0.0, e.a);
            for &(s, v) in stops.iter().chain(std::iter::once(&(total, e.b))) {
                let w = s - prev.0;
                adj[prev.1].push((v, w));
                adj[v].push((prev.1, w));
                prev = (s, v);
            }
        }
        Self { adj, targets }
    }

    fn shortest_from(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.adj.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Visit { cost: 0.0, vertex: source });
        while let Some(Visit { cost, vertex }) = heap.pop() {
            if cost > dist[vertex] {
                continue;
            }
            for &(next, w) in &self.adj[vertex] {
                let c = cost + w;
                if c < dist[next] {
                    dist[next] = c;
                    heap.push(Visit { cost: c, vertex: next });
                }
            }
        }
        dist
    }

    /// Pairwise path lengths between all query points; `inf` where a point
    /// is unlocated or unreachable.
    fn pairwise(&self) -> Vec<Vec<f64>> {
        let k = self.targets.len();
        let mut out = vec![vec![f64::INFINITY; k]; k];
        for i in 0..k {
            let Some(src) = self.targets[i] else { continue };
            let dist = self.shortest_from(src);
            for j in 0..k {
                if let Some(t) = self.targets[j] {
                    out[i][j] = dist[t];
                }
            }
        }
        out
    }
}

#[derive(Debug, PartialEq)]
struct Visit {
    cost: f64,
    vertex: usize,
}

impl Eq for Visit {}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn path_lengths(g: &RoadGraph, points: &[Point], radius: f64) -> Vec<Vec<f64>> {
    let cums: Vec<Vec<f64>> = g.edges().iter().map(|e| cumulative_lengths(&e.polyline)).collect();
    let locations: Vec<Option<Location>> = points.iter().map(|&p| locate(g, &cums, p, radius)).collect();
    Router::new(g, &cums, &locations).pairwise()
}

/// Per-pair penalty terms of the one-directional similarity, in pair order
/// `(0,1), (0,2), ..., (1,2), ...` over reference control points with a
/// finite reference path.
pub fn path_terms(reference: &RoadGraph, proposal: &RoadGraph, p: &AplsParams) -> Vec<f64> {
    let control = build_control_points(reference, p.sample_spacing);
    let points = control.nodes();
    let ref_len = path_lengths(reference, points, p.snap_radius);
    let prop_len = path_lengths(proposal, points, p.snap_radius);
    let mut terms = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let l = ref_len[i][j];
            if !l.is_finite() || l <= 0.0 {
                continue;
            }
            let lp = prop_len[i][j];
            terms.push(if lp.is_finite() {
                ((l - lp).abs() / l).min(MISSING_PATH_PENALTY)
            } else {
                MISSING_PATH_PENALTY
            });
        }
    }
    terms
}

/// One-directional path similarity: one minus the mean pair penalty.
pub fn snap_similarity(reference: &RoadGraph, proposal: &RoadGraph, p: &AplsParams) -> f64 {
    if reference.edge_count() > 0 && proposal.edge_count() == 0 {
        return 0.0;
    }
    let terms = path_terms(reference, proposal, p);
    if terms.is_empty() {
        return 1.0;
    }
    1.0 - terms.iter().sum::<f64>() / terms.len() as f64
}

/// Harmonic mean of both snapping directions; 0 if either is 0.
pub fn apls(gt: &RoadGraph, proposal: &RoadGraph, p: &AplsParams) -> f64 {
    let forward = snap_similarity(gt, proposal, p);
    let backward = snap_similarity(proposal, gt, p);
    combine(forward, backward)
}

pub(crate) fn combine(forward: f64, backward: f64) -> f64 {
    if forward <= 0.0 || backward <= 0.0 {
        0.0
    } else {
        2.0 / (1.0 / forward + 1.0 / backward)
    }
}

/// Mean per-image APLS.
pub fn apls_batch(pairs: &[(RoadGraph, RoadGraph)], p: &AplsParams) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::argument("apls_batch needs at least one pair"));
    }
    Ok(pairs.iter().map(|(g, q)| apls(g, q, p)).sum::<f64>() / pairs.len() as f64)
}
