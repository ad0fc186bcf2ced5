//! Road graph data model: nodes with pixel coordinates, polyline edges and
//! the set of nodes created by clipping at a window edge.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{arc_length, Point};

/// Coordinates closer than this are the same node.
pub const MERGE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    /// Full geometry, first point at node `a`, last point at node `b`.
    pub polyline: Vec<Point>,
}

impl Edge {
    pub fn length(&self) -> f64 {
        arc_length(&self.polyline)
    }

    pub fn is_self_loop(&self) -> bool {
        self.a == self.b
    }

    /// Endpoint opposite to `node`.
    pub fn other(&self, node: usize) -> usize {
        if self.a == node {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadGraph {
    nodes: Vec<Point>,
    edges: Vec<Edge>,
    boundary: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

impl Window {
    pub fn new(x0: f64, y0: f64, width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::argument(format!(
                "window must have positive size, got {width}x{height}"
            )));
        }
        Ok(Self { x0, y0, width, height })
    }

    pub fn x1(&self) -> f64 {
        self.x0 + self.width
    }

    pub fn y1(&self) -> f64 {
        self.y0 + self.height
    }

    /// Closed-rectangle containment.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1() && p.y >= self.y0 && p.y <= self.y1()
    }

    /// Pulls a point that rounding left just outside back onto the border.
    fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(self.x0, self.x1()), p.y.clamp(self.y0, self.y1()))
    }

    /// Liang-Barsky clip of segment `p`-`q`; returns the parameter interval
    /// inside the window, if it has positive length.
    fn clip_segment(&self, p: Point, q: Point) -> Option<(f64, f64)> {
        let dx = q.x - p.x;
        let dy = q.y - p.y;
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        let checks = [
            (-dx, p.x - self.x0),
            (dx, self.x1() - p.x),
            (-dy, p.y - self.y0),
            (dy, self.y1() - p.y),
        ];
        for (pk, qk) in checks {
            if pk == 0.0 {
                if qk < 0.0 {
                    return None;
                }
            } else {
                let r = qk / pk;
                if pk < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
            }
        }
        (t1 > t0).then_some((t0, t1))
    }
}

/// On-disk layout of a graph document.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    nodes: Vec<Point>,
    edges: Vec<EdgeDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    boundary: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    a: usize,
    b: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    polyline: Option<Vec<Point>>,
}

impl RoadGraph {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a validated graph. Nodes closer than [`MERGE_TOLERANCE`] are
    /// merged; an edge given with an empty polyline becomes a straight
    /// segment.
    pub fn new(
        nodes: Vec<Point>,
        edges: Vec<(usize, usize, Vec<Point>)>,
        boundary: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        for (i, p) in nodes.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::schema(format!("nodes[{i}]"), "non-finite coordinate"));
            }
        }
        let boundary: Vec<usize> = boundary.into_iter().collect();
        for &i in &boundary {
            if i >= nodes.len() {
                return Err(Error::schema("boundary", format!("node index {i} out of range")));
            }
        }

        let (remap, merged) = merge_coincident(&nodes);
        let mut out_edges = Vec::with_capacity(edges.len());
        for (k, (a, b, polyline)) in edges.into_iter().enumerate() {
            let field = || format!("edges[{k}]");
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::schema(
                    field(),
                    format!("dangling node reference ({a}, {b}) with {} nodes", nodes.len()),
                ));
            }
            let mut polyline = if polyline.is_empty() {
                vec![nodes[a], nodes[b]]
            } else {
                polyline
            };
            if polyline.len() < 2 {
                return Err(Error::schema(field(), "polyline needs at least two points"));
            }
            if polyline.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
                return Err(Error::schema(field(), "non-finite polyline coordinate"));
            }
            let (first, last) = (polyline[0], polyline[polyline.len() - 1]);
            if first.dist(nodes[a]) > MERGE_TOLERANCE || last.dist(nodes[b]) > MERGE_TOLERANCE {
                return Err(Error::schema(field(), "polyline endpoints do not match edge nodes"));
            }
            let (a, b) = (remap[a], remap[b]);
            let n = polyline.len();
            polyline[0] = merged[a];
            polyline[n - 1] = merged[b];
            if arc_length(&polyline) <= 0.0 {
                return Err(Error::schema(field(), "zero-length edge"));
            }
            out_edges.push(Edge { a, b, polyline });
        }
        Ok(Self {
            boundary: boundary.into_iter().map(|i| remap[i]).collect(),
            nodes: merged,
            edges: out_edges,
        })
    }

    /// Graph from raw linestrings; shared endpoints become shared nodes.
    pub fn from_linestrings<I, L>(lines: I) -> Result<Self>
    where
        I: IntoIterator<Item = L>,
        L: Into<Vec<Point>>,
    {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for line in lines {
            let line: Vec<Point> = line.into();
            if line.len() < 2 {
                return Err(Error::schema("linestring", "needs at least two points"));
            }
            let a = nodes.len();
            nodes.push(line[0]);
            nodes.push(line[line.len() - 1]);
            edges.push((a, a + 1, line));
        }
        Self::new(nodes, edges, [])
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn boundary_nodes(&self) -> &BTreeSet<usize> {
        &self.boundary
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary.contains(&node)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Incident edge count per node; a self-loop counts twice.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for e in &self.edges {
            deg[e.a] += 1;
            deg[e.b] += 1;
        }
        deg
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(Edge::length).sum()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let shift = |p: &Point| Point::new(p.x + dx, p.y + dy);
        Self {
            nodes: self.nodes.iter().map(shift).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| Edge {
                    a: e.a,
                    b: e.b,
                    polyline: e.polyline.iter().map(shift).collect(),
                })
                .collect(),
            boundary: self.boundary.clone(),
        }
    }

    /// Copy of the graph without edge `index`; nodes are kept.
    pub fn without_edge(&self, index: usize) -> Self {
        let mut g = self.clone();
        g.edges.remove(index);
        g
    }

    /// Axis-aligned bounds over every node and polyline point.
    pub fn bounding_box(&self) -> Option<(Point, Point)> {
        let pts = self
            .nodes
            .iter()
            .chain(self.edges.iter().flat_map(|e| e.polyline.iter()));
        pts.fold(None, |acc, p| match acc {
            None => Some((*p, *p)),
            Some((lo, hi)) => Some((
                Point::new(lo.x.min(p.x), lo.y.min(p.y)),
                Point::new(hi.x.max(p.x), hi.y.max(p.y)),
            )),
        })
    }

    /// Clips the graph to `window`. Coordinates stay in the source frame.
    /// Points where an edge leaves the window become new nodes flagged in
    /// [`RoadGraph::boundary_nodes`].
    pub fn crop(&self, window: &Window) -> Self {
        let mut nodes = Vec::new();
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut boundary = BTreeSet::new();
        for (i, p) in self.nodes.iter().enumerate() {
            if window.contains(*p) {
                remap[i] = nodes.len();
                if self.boundary.contains(&i) {
                    boundary.insert(nodes.len());
                }
                nodes.push(*p);
            }
        }

        enum End {
            Node(usize),
            Cut(Point),
        }
        struct Piece {
            start: End,
            points: Vec<Point>,
        }

        let mut pieces: Vec<(End, Vec<Point>, End)> = Vec::new();
        for e in &self.edges {
            let pl = &e.polyline;
            let nseg = pl.len() - 1;
            let mut open: Option<Piece> = None;
            for i in 0..nseg {
                let (p, q) = (pl[i], pl[i + 1]);
                match window.clip_segment(p, q) {
                    None => {
                        if let Some(piece) = open.take() {
                            let end = *piece.points.last().unwrap();
                            pieces.push((piece.start, piece.points, End::Cut(end)));
                        }
                    }
                    Some((t0, t1)) => {
                        let entry = if t0 == 0.0 { p } else { window.clamp(p.lerp(q, t0)) };
                        let exit = if t1 == 1.0 { q } else { window.clamp(p.lerp(q, t1)) };
                        match open.as_mut() {
                            Some(piece) if t0 == 0.0 => piece.points.push(exit),
                            _ => {
                                if let Some(piece) = open.take() {
                                    let end = *piece.points.last().unwrap();
                                    pieces.push((piece.start, piece.points, End::Cut(end)));
                                }
                                let start = if i == 0 && t0 == 0.0 {
                                    End::Node(e.a)
                                } else {
                                    End::Cut(entry)
                                };
                                open = Some(Piece {
                                    start,
                                    points: vec![entry, exit],
                                });
                            }
                        }
                        if t1 < 1.0 {
                            let piece = open.take().unwrap();
                            pieces.push((piece.start, piece.points, End::Cut(exit)));
                        }
                    }
                }
            }
            if let Some(piece) = open.take() {
                pieces.push((piece.start, piece.points, End::Node(e.b)));
            }
        }

        let mut resolve = |end: &End, nodes: &mut Vec<Point>| -> usize {
            match *end {
                End::Node(i) => remap[i],
                End::Cut(p) => {
                    if let Some(k) = nodes.iter().position(|n| n.dist(p) <= MERGE_TOLERANCE) {
                        k
                    } else {
                        nodes.push(p);
                        boundary.insert(nodes.len() - 1);
                        nodes.len() - 1
                    }
                }
            }
        };

        let mut edges = Vec::new();
        for (start, mut points, end) in pieces {
            if arc_length(&points) <= MERGE_TOLERANCE {
                continue;
            }
            let a = resolve(&start, &mut nodes);
            let b = resolve(&end, &mut nodes);
            let n = points.len();
            points[0] = nodes[a];
            points[n - 1] = nodes[b];
            edges.push(Edge { a, b, polyline: points });
        }
        Self { nodes, edges, boundary }
    }

    pub fn to_json(&self) -> String {
        let doc = GraphDoc {
            nodes: self.nodes.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc {
                    a: e.a,
                    b: e.b,
                    polyline: (e.polyline.len() > 2).then(|| e.polyline.clone()),
                })
                .collect(),
            boundary: self.boundary.iter().copied().collect(),
        };
        serde_json::to_string(&doc).expect("graph documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: GraphDoc = serde_json::from_str(text)?;
        let edges = doc
            .edges
            .into_iter()
            .map(|e| (e.a, e.b, e.polyline.unwrap_or_default()))
            .collect();
        Self::new(doc.nodes, edges, doc.boundary)
    }
}

/// Parses a graph-JSON document.
pub fn parse_graph(document: &str) -> Result<RoadGraph> {
    RoadGraph::from_json(document)
}

pub fn serialize_graph(g: &RoadGraph) -> String {
    g.to_json()
}

pub fn node_degrees(g: &RoadGraph) -> Vec<usize> {
    g.degrees()
}

pub fn crop_graph(g: &RoadGraph, window: &Window) -> RoadGraph {
    g.crop(window)
}

/// Union of nodes within [`MERGE_TOLERANCE`]; returns the index remap and the
/// surviving coordinates in first-appearance order.
fn merge_coincident(nodes: &[Point]) -> (Vec<usize>, Vec<Point>) {
    let n = nodes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| nodes[i].x.total_cmp(&nodes[j].x));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if nodes[j].x - nodes[i].x > MERGE_TOLERANCE {
                break;
            }
            if nodes[i].dist(nodes[j]) <= MERGE_TOLERANCE {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut remap = vec![usize::MAX; n];
    let mut merged = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        if remap[root] == usize::MAX {
            remap[root] = merged.len();
            merged.push(nodes[root]);
        }
        remap[i] = remap[root];
    }
    (remap, merged)
}
