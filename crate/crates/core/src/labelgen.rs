//! Segmentation and connectivity labels from road centerline graphs.
//!
//! Pipeline: rasterize centerlines, take the Euclidean distance to the
//! nearest centerline pixel, turn that into a Gaussian heatmap, threshold it
//! into a road band of class 2, then overwrite the neighbourhood of every
//! non-boundary node with its clamped degree.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RoadGraph;
use crate::raster::{ConnectivityMap, RasterMask, ScalarField, MAX_CONNECTIVITY};

/// Class given to ordinary on-road pixels.
pub const ROAD_CLASS: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelParams {
    /// Gaussian width in pixels.
    pub theta: f64,
    /// Heatmap level at or above which a pixel is road.
    pub lambda: f64,
    /// Radius around a node whose road pixels take the node's class.
    pub node_radius: f64,
}

impl Default for LabelParams {
    fn default() -> Self {
        let theta = 2.0;
        Self {
            theta,
            lambda: (-0.5f64).exp(),
            node_radius: 2.0 * theta,
        }
    }
}

impl LabelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::argument(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::argument(format!("lambda must lie in (0, 1), got {}", self.lambda)));
        }
        if !(self.node_radius >= 1.0 && self.node_radius.is_finite()) {
            return Err(Error::argument(format!("node_radius must be >= 1, got {}", self.node_radius)));
        }
        Ok(())
    }
}

/// Neighbourhood used by [`pixel_connectivity_label`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjacency {
    Four,
    Eight,
}

/// Draws every polyline segment with Bresenham's algorithm after rounding
/// vertices to the nearest pixel. Pixels outside the grid are dropped.
pub fn rasterize_centerline(g: &RoadGraph, width: usize, height: usize) -> Result<RasterMask> {
    let mut mask = RasterMask::new(width, height)?;
    for e in g.edges() {
        for seg in e.polyline.windows(2) {
            let (x0, y0) = (seg[0].x.round() as i64, seg[0].y.round() as i64);
            let (x1, y1) = (seg[1].x.round() as i64, seg[1].y.round() as i64);
            bresenham(x0, y0, x1, y1, |x, y| {
                if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                    mask.set(x as usize, y as usize, true);
                }
            });
        }
    }
    Ok(mask)
}

fn bresenham(mut x0: i64, mut y0: i64, x1: i64, y1: i64, mut plot: impl FnMut(i64, i64)) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        plot(x0, y0);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Squared Euclidean distance from every cell to the nearest road cell,
/// `+inf` when the mask has no road. Exact: separable lower-envelope
/// transform over columns, then rows.
pub fn squared_distance_map(mask: &RasterMask) -> Vec<f64> {
    let (w, h) = (mask.width(), mask.height());
    let mut grid: Vec<f64> = mask
        .data()
        .iter()
        .map(|&v| if v != 0 { 0.0 } else { f64::INFINITY })
        .collect();

    let mut line = vec![0.0; w.max(h)];
    let mut out = vec![0.0; w.max(h)];
    let mut env = Envelope::with_capacity(w.max(h));
    for x in 0..w {
        for y in 0..h {
            line[y] = grid[y * w + x];
        }
        env.transform(&line[..h], &mut out[..h]);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        line[..w].copy_from_slice(row);
        env.transform(&line[..w], &mut out[..w]);
        row.copy_from_slice(&out[..w]);
    }
    grid
}

/// Lower envelope of parabolas `(q - site)^2 + f(site)` over the finite
/// sites of a 1-D sampled function.
struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        self.sites.clear();
        self.bounds.clear();
        self.bounds.push(f64::NEG_INFINITY);
        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            if self.sites.is_empty() {
                self.sites.push(q);
                self.bounds.push(f64::INFINITY);
                continue;
            }
            let mut s;
            loop {
                let k = self.sites.len() - 1;
                let p = self.sites[k];
                let (qf, pf) = (q as f64, p as f64);
                s = ((fq + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
                // bounds[0] is -inf, so at least one site always survives
                if s <= self.bounds[k] {
                    self.sites.pop();
                    self.bounds.pop();
                } else {
                    break;
                }
            }
            *self.bounds.last_mut().unwrap() = s;
            self.bounds.push(f64::INFINITY);
            self.sites.push(q);
        }
        if self.sites.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (q, o) in out.iter_mut().enumerate() {
            let qf = q as f64;
            while self.bounds[k + 1] < qf {
                k += 1;
            }
            let p = self.sites[k];
            let d = qf - p as f64;
            *o = d * d + f[p];
        }
    }
}

/// Euclidean distance in pixels to the nearest road pixel; `+inf` everywhere
/// for a mask without road.
pub fn distance_map(mask: &RasterMask) -> ScalarField {
    let data = squared_distance_map(mask).into_iter().map(f64::sqrt).collect();
    ScalarField::from_vec(mask.width(), mask.height(), data).expect("mask dimensions are valid")
}

/// `exp(-d^2 / (2 theta^2))`, so 1 on the centerline and 0 at infinity.
pub fn gaussian_heatmap(d: &ScalarField, theta: f64) -> Result<ScalarField> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::argument(format!("theta must be positive, got {theta}")));
    }
    let denom = 2.0 * theta * theta;
    Ok(d.map(|v| if v.is_finite() { (-(v * v) / denom).exp() } else { 0.0 }))
}

/// Every intermediate product of the label pipeline.
#[derive(Debug, Clone)]
pub struct LabelSet {
    pub centerline: RasterMask,
    pub distance: ScalarField,
    pub heatmap: ScalarField,
    pub mask: RasterMask,
    pub connectivity: ConnectivityMap,
}

pub fn generate_labels(g: &RoadGraph, width: usize, height: usize, p: &LabelParams) -> Result<LabelSet> {
    p.validate()?;
    let centerline = rasterize_centerline(g, width, height)?;
    let distance = distance_map(&centerline);
    let heatmap = gaussian_heatmap(&distance, p.theta)?;

    let road: Vec<bool> = heatmap.data().iter().map(|&v| v >= p.lambda).collect();
    let mask = RasterMask::from_bools(width, height, road.iter().copied())?;
    let mut connectivity = ConnectivityMap::new(width, height)?;
    for (i, &r) in road.iter().enumerate() {
        if r {
            connectivity.set(i % width, i / width, ROAD_CLASS);
        }
    }

    // Lower classes first so overlapping node regions keep the larger class.
    let degrees = g.degrees();
    let mut order: Vec<usize> = (0..g.node_count())
        .filter(|&i| degrees[i] > 0 && !g.is_boundary(i))
        .collect();
    order.sort_by_key(|&i| (degrees[i].min(MAX_CONNECTIVITY as usize), i));
    let r = p.node_radius;
    for i in order {
        let class = degrees[i].min(MAX_CONNECTIVITY as usize) as u8;
        let c = g.nodes()[i];
        let x_lo = (c.x - r).floor().max(0.0) as usize;
        let y_lo = (c.y - r).floor().max(0.0) as usize;
        let x_hi = ((c.x + r).ceil().max(-1.0) as i64).min(width as i64 - 1);
        let y_hi = ((c.y + r).ceil().max(-1.0) as i64).min(height as i64 - 1);
        if x_hi < 0 || y_hi < 0 {
            continue;
        }
        for y in y_lo..=y_hi as usize {
            for x in x_lo..=x_hi as usize {
                let (dx, dy) = (x as f64 - c.x, y as f64 - c.y);
                if dx * dx + dy * dy <= r * r && mask.is_road(x, y) {
                    connectivity.set(x, y, class);
                }
            }
        }
    }

    Ok(LabelSet {
        centerline,
        distance,
        heatmap,
        mask,
        connectivity,
    })
}

/// Road mask and connectivity classes for a (cropped) graph.
pub fn connectivity_label(
    g: &RoadGraph,
    width: usize,
    height: usize,
    p: &LabelParams,
) -> Result<(RasterMask, ConnectivityMap)> {
    let labels = generate_labels(g, width, height, p)?;
    Ok((labels.mask, labels.connectivity))
}

/// Raw neighbour counts per road pixel, before clamping.
pub fn neighbor_counts(mask: &RasterMask, adjacency: Adjacency) -> Vec<u8> {
    const FOUR: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    const EIGHT: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    let offsets: &[(i64, i64)] = match adjacency {
        Adjacency::Four => &FOUR,
        Adjacency::Eight => &EIGHT,
    };
    let (w, h) = (mask.width(), mask.height());
    let mut out = vec![0u8; w * h];
    for (x, y) in mask.road_pixels() {
        out[y * w + x] = offsets
            .iter()
            .filter(|(dx, dy)| mask.road_at(x as i64 + dx, y as i64 + dy))
            .count() as u8;
    }
    out
}

/// Per road pixel, how many of its 4- or 8-neighbours are road, clamped
/// to the largest connectivity class.
pub fn pixel_connectivity_label(mask: &RasterMask, adjacency: Adjacency) -> ConnectivityMap {
    let data = neighbor_counts(mask, adjacency)
        .into_iter()
        .map(|c| c.min(MAX_CONNECTIVITY))
        .collect();
    ConnectivityMap::from_vec(mask.width(), mask.height(), data).expect("mask dimensions are valid")
}
