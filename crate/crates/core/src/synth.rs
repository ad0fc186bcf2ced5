//! Seeded synthetic fixtures: jittered grid road graphs, random masks and
//! polylines.

use rand::Rng;

use crate::geom::Point;
use crate::graph::RoadGraph;
use crate::raster::RasterMask;

/// Layout of a jittered grid road network.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub cols: usize,
    pub rows: usize,
    pub spacing: f64,
    /// Maximum per-axis displacement of each grid vertex.
    pub jitter: f64,
    /// Offset of the first grid line from the image origin.
    pub margin: f64,
    /// Probability that a horizontal or vertical grid edge exists.
    pub edge_prob: f64,
    /// Probability that a cell gets one of its two diagonals.
    pub diagonal_prob: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            cols: 4,
            rows: 4,
            spacing: 60.0,
            jitter: 8.0,
            margin: 24.0,
            edge_prob: 0.75,
            diagonal_prob: 0.0,
        }
    }
}

impl GridSpec {
    /// Smallest image that holds every vertex with `margin` to spare.
    pub fn image_size(&self) -> (usize, usize) {
        let w = 2.0 * self.margin + self.spacing * (self.cols - 1) as f64;
        let h = 2.0 * self.margin + self.spacing * (self.rows - 1) as f64;
        (w.ceil() as usize, h.ceil() as usize)
    }

    /// Lower bound on the distance between any two vertices.
    pub fn min_separation(&self) -> f64 {
        self.spacing - 2.0 * self.jitter
    }
}

/// Random planar road graph on a jittered grid. Vertices without edges
/// are dropped; at least one edge is always present.
pub fn grid_graph(rng: &mut impl Rng, spec: &GridSpec) -> RoadGraph {
    let (cols, rows) = (spec.cols, spec.rows);
    let nodes: Vec<Point> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (c, r)))
        .map(|(c, r)| {
            let jx = if spec.jitter > 0.0 { rng.gen_range(-spec.jitter..=spec.jitter) } else { 0.0 };
            let jy = if spec.jitter > 0.0 { rng.gen_range(-spec.jitter..=spec.jitter) } else { 0.0 };
            Point::new(
                spec.margin + spec.spacing * c as f64 + jx,
                spec.margin + spec.spacing * r as f64 + jy,
            )
        })
        .collect();
    let id = |c: usize, r: usize| r * cols + c;

    let mut pairs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols && rng.gen_bool(spec.edge_prob) {
                pairs.push((id(c, r), id(c + 1, r)));
            }
            if r + 1 < rows && rng.gen_bool(spec.edge_prob) {
                pairs.push((id(c, r), id(c, r + 1)));
            }
            if c + 1 < cols && r + 1 < rows && spec.diagonal_prob > 0.0 && rng.gen_bool(spec.diagonal_prob) {
                if rng.gen_bool(0.5) {
                    pairs.push((id(c, r), id(c + 1, r + 1)));
                } else {
                    pairs.push((id(c + 1, r), id(c, r + 1)));
                }
            }
        }
    }
    if pairs.is_empty() && cols > 1 {
        pairs.push((0, 1));
    }

    let mut used = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::new();
    for &(a, b) in &pairs {
        for v in [a, b] {
            if used[v] == usize::MAX {
                used[v] = kept.len();
                kept.push(nodes[v]);
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| (used[a], used[b], Vec::new()))
        .collect();
    RoadGraph::new(kept, edges, []).expect("grid graphs are valid")
}

/// Independent per-pixel noise.
pub fn noise_mask(rng: &mut impl Rng, width: usize, height: usize, density: f64) -> RasterMask {
    RasterMask::from_bools(width, height, (0..width * height).map(|_| rng.gen_bool(density)))
        .expect("positive dimensions")
}

/// Union of random thick strokes and discs, resembling road predictions.
pub fn blob_mask(rng: &mut impl Rng, width: usize, height: usize, shapes: usize) -> RasterMask {
    let mut m = RasterMask::new(width, height).expect("positive dimensions");
    for _ in 0..shapes {
        let a = Point::new(rng.gen_range(0.0..width as f64), rng.gen_range(0.0..height as f64));
        let b = Point::new(rng.gen_range(0.0..width as f64), rng.gen_range(0.0..height as f64));
        let radius: f64 = rng.gen_range(0.5..4.0);
        let disc = rng.gen_bool(0.2);
        for y in 0..height {
            for x in 0..width {
                let p = Point::new(x as f64, y as f64);
                let d = if disc {
                    p.dist(a)
                } else {
                    crate::geom::point_segment_distance(p, a, b)
                };
                if d <= radius {
                    m.set(x, y, true);
                }
            }
        }
    }
    m
}

/// Random walk polyline with distinct consecutive points.
pub fn random_polyline(rng: &mut impl Rng, points: usize, step: f64) -> Vec<Point> {
    let mut out = vec![Point::new(0.0, 0.0)];
    let mut heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    while out.len() < points {
        heading += rng.gen_range(-1.0..1.0);
        let len = rng.gen_range(0.2..1.0) * step;
        let last = *out.last().unwrap();
        out.push(Point::new(last.x + len * heading.cos(), last.y + len * heading.sin()));
    }
    out
}
