//! Predicted road mask to road graph: thin the mask to a one-pixel
//! skeleton, trace it into nodes and pixel-chain edges, prune short hanging
//! curves and simplify every edge.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geom::{arc_length, point_segment_distance, Point};
use crate::graph::{Edge, RoadGraph};
use crate::raster::RasterMask;

pub const DEFAULT_RDP_TOLERANCE: f64 = 2.0;
pub const DEFAULT_MIN_SPUR: f64 = 30.0;
/// Enclosed background regions up to this many pixels are filled before
/// thinning; such pinholes appear where bands meet at acute angles and
/// would otherwise become tiny loops.
pub const MAX_HOLE_AREA: usize = 8;
/// Junctions joined by an edge at most this long are one junction.
pub const JUNCTION_MERGE_DISTANCE: f64 = 6.0;

/// 8-neighbourhood, counter-clockwise from east.
const RING: [(i64, i64); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];

/// Neighbour occupancy in [`RING`] order.
fn ring(mask: &RasterMask, x: usize, y: usize) -> [bool; 8] {
    let mut out = [false; 8];
    for (k, (dx, dy)) in RING.iter().enumerate() {
        out[k] = mask.road_at(x as i64 + dx, y as i64 + dy);
    }
    out
}

/// Yokoi 8-connectivity number; a pixel whose removal leaves topology
/// unchanged has value 1.
fn connectivity_number(n: &[bool; 8]) -> u32 {
    let c = |k: usize| u32::from(!n[k % 8]);
    [0, 2, 4, 6]
        .iter()
        .map(|&k| c(k) - c(k) * c(k + 1) * c(k + 2))
        .sum()
}

fn is_simple(n: &[bool; 8]) -> bool {
    connectivity_number(n) == 1
}

/// Zhang-Suen thinning. Each parallel sub-iteration only deletes a marked
/// pixel if it is still a simple, non-end pixel at the moment of deletion,
/// so components and holes are never destroyed. A final pass removes
/// remaining redundant (simple) pixels such as staircase corners.
pub fn skeletonize(mask: &RasterMask) -> RasterMask {
    let mut skel = mask.clone();
    let (w, h) = (mask.width(), mask.height());
    let mut marked = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            marked.clear();
            for y in 0..h {
                for x in 0..w {
                    if !skel.is_road(x, y) {
                        continue;
                    }
                    let r = ring(&skel, x, y);
                    // classic labels: p2=N p3=NE p4=E p5=SE p6=S p7=SW p8=W p9=NW
                    let (p2, p3, p4, p5, p6, p7, p8, p9) = (r[2], r[1], r[0], r[7], r[6], r[5], r[4], r[3]);
                    let b = r.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let seq = [p2, p3, p4, p5, p6, p7, p8, p9, p2];
                    let a = seq.windows(2).filter(|s| !s[0] && s[1]).count();
                    if a != 1 {
                        continue;
                    }
                    let ok = if step == 0 {
                        !(p2 && p4 && p6) && !(p4 && p6 && p8)
                    } else {
                        !(p2 && p4 && p8) && !(p2 && p6 && p8)
                    };
                    if ok {
                        marked.push((x, y));
                    }
                }
            }
            for &(x, y) in &marked {
                let r = ring(&skel, x, y);
                if r.iter().filter(|&&v| v).count() >= 2 && is_simple(&r) {
                    skel.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if !skel.is_road(x, y) {
                    continue;
                }
                let r = ring(&skel, x, y);
                if r.iter().filter(|&&v| v).count() >= 2 && is_simple(&r) {
                    skel.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    skel
}

/// True when some 2x2 window is entirely road.
pub fn has_solid_block(mask: &RasterMask) -> bool {
    let (w, h) = (mask.width(), mask.height());
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            if mask.is_road(x, y) && mask.is_road(x + 1, y) && mask.is_road(x, y + 1) && mask.is_road(x + 1, y + 1) {
                return true;
            }
        }
    }
    false
}

/// Fills 4-connected background regions that do not touch the image border
/// and have at most `max_area` pixels.
pub fn fill_small_holes(mask: &RasterMask, max_area: usize) -> RasterMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = mask.clone();
    let mut seen = vec![false; w * h];
    for start in 0..w * h {
        if seen[start] || mask.data()[start] != 0 {
            continue;
        }
        seen[start] = true;
        let mut region = vec![start];
        let mut open = false;
        let mut i = 0;
        while i < region.len() {
            let (x, y) = (region[i] % w, region[i] / w);
            open |= x == 0 || y == 0 || x + 1 == w || y + 1 == h;
            let mut visit = |nx: usize, ny: usize| {
                let k = ny * w + nx;
                if !seen[k] && mask.data()[k] == 0 {
                    seen[k] = true;
                    region.push(k);
                }
            };
            if x > 0 {
                visit(x - 1, y);
            }
            if x + 1 < w {
                visit(x + 1, y);
            }
            if y > 0 {
                visit(x, y - 1);
            }
            if y + 1 < h {
                visit(x, y + 1);
            }
            i += 1;
        }
        if !open && region.len() <= max_area {
            for k in region {
                out.set(k % w, k / w, true);
            }
        }
    }
    out
}

/// Traces a one-pixel-wide skeleton into a graph.
///
/// Pixels are linked orthogonally, or diagonally when no shared orthogonal
/// pixel is set. Pixels with one or zero links are end nodes; connected
/// clusters of pixels with three or more links collapse to a single
/// junction node at their centroid. Chains of two-link pixels become
/// edges. A closed loop without any node is anchored at its first pixel in
/// row-major order and becomes a self-loop.
pub fn skeleton_to_graph(skel: &RasterMask) -> Result<RoadGraph> {
    if has_solid_block(skel) {
        return Err(Error::Precondition("skeleton contains a solid 2x2 block".into()));
    }
    trace(skel)
}

/// Tracing without the thinness check. Every pixel of a 2x2 block that
/// thinning could not remove has three or more links, so such blocks
/// collapse into a single junction node.
fn trace(skel: &RasterMask) -> Result<RoadGraph> {
    let (w, h) = (skel.width(), skel.height());
    let idx = |x: usize, y: usize| y * w + x;
    // mixed adjacency: a diagonal step counts only when no orthogonal
    // pixel already links the two
    let neighbours = |x: usize, y: usize| {
        RING.iter().filter_map(move |&(dx, dy)| {
            let (x, y) = (x as i64, y as i64);
            let (nx, ny) = (x + dx, y + dy);
            let linked = dx != 0 && dy != 0 && (skel.road_at(x + dx, y) || skel.road_at(x, y + dy));
            (skel.road_at(nx, ny) && !linked).then_some((nx as usize, ny as usize))
        })
    };

    let mut count = vec![0u8; w * h];
    for (x, y) in skel.road_pixels() {
        count[idx(x, y)] = neighbours(x, y).count() as u8;
    }

    // node assignment
    let mut node_of = vec![usize::MAX; w * h];
    let mut members: Vec<Vec<(usize, usize)>> = Vec::new();
    for (x, y) in skel.road_pixels() {
        let c = count[idx(x, y)];
        if c == 2 || node_of[idx(x, y)] != usize::MAX {
            continue;
        }
        let id = members.len();
        if c < 2 {
            node_of[idx(x, y)] = id;
            members.push(vec![(x, y)]);
            continue;
        }
        let mut cluster = vec![(x, y)];
        node_of[idx(x, y)] = id;
        let mut i = 0;
        while i < cluster.len() {
            let (cx, cy) = cluster[i];
            for (nx, ny) in neighbours(cx, cy) {
                let k = idx(nx, ny);
                if count[k] > 2 && node_of[k] == usize::MAX {
                    node_of[k] = id;
                    cluster.push((nx, ny));
                }
            }
            i += 1;
        }
        members.push(cluster);
    }
    let mut nodes: Vec<Point> = members
        .iter()
        .map(|m| {
            let n = m.len() as f64;
            let sx: f64 = m.iter().map(|p| p.0 as f64).sum();
            let sy: f64 = m.iter().map(|p| p.1 as f64).sum();
            Point::new(sx / n, sy / n)
        })
        .collect();

    let px = |(x, y): (usize, usize)| Point::new(x as f64, y as f64);
    let mut visited = vec![false; w * h];
    let mut direct = BTreeSet::new();
    let mut edges: Vec<(usize, usize, Vec<Point>)> = Vec::new();

    for (x, y) in skel.road_pixels() {
        let u = node_of[idx(x, y)];
        if u == usize::MAX {
            continue;
        }
        for start in neighbours(x, y) {
            let k = idx(start.0, start.1);
            if node_of[k] != usize::MAX {
                let v = node_of[k];
                if v != u && direct.insert((u.min(v), u.max(v))) {
                    edges.push((u, v, vec![nodes[u], nodes[v]]));
                }
                continue;
            }
            if visited[k] {
                continue;
            }
            let mut polyline = vec![nodes[u]];
            let (mut prev, mut cur) = ((x, y), start);
            let end = loop {
                let kc = idx(cur.0, cur.1);
                if node_of[kc] != usize::MAX {
                    break node_of[kc];
                }
                visited[kc] = true;
                polyline.push(px(cur));
                let next = neighbours(cur.0, cur.1)
                    .find(|&n| n != prev && !(node_of[idx(n.0, n.1)] == usize::MAX && visited[idx(n.0, n.1)]))
                    .or_else(|| neighbours(cur.0, cur.1).find(|&n| n != prev));
                match next {
                    Some(n) => {
                        prev = cur;
                        cur = n;
                    }
                    None => break u,
                }
            };
            polyline.push(nodes[end]);
            edges.push((u, end, polyline));
        }
    }

    // closed loops with no node on them
    for (x, y) in skel.road_pixels() {
        let k = idx(x, y);
        if visited[k] || node_of[k] != usize::MAX {
            continue;
        }
        let anchor = nodes.len();
        nodes.push(px((x, y)));
        node_of[k] = anchor;
        let mut polyline = vec![px((x, y))];
        let (mut prev, mut cur) = ((x, y), neighbours(x, y).next().expect("loop pixel has neighbours"));
        while cur != (x, y) {
            visited[idx(cur.0, cur.1)] = true;
            polyline.push(px(cur));
            let Some(next) = neighbours(cur.0, cur.1).find(|&n| n != prev) else {
                break;
            };
            prev = cur;
            cur = next;
        }
        polyline.push(px((x, y)));
        edges.push((anchor, anchor, polyline));
    }

    RoadGraph::new(nodes, edges, [])
}

/// A polyline of at least two points with distinct consecutive points.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline(Vec<Point>);

impl Polyline {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::argument("polyline needs at least two points"));
        }
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::argument("polyline has repeated consecutive points"));
        }
        Ok(Self(points))
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    pub fn into_points(self) -> Vec<Point> {
        self.0
    }

    pub fn length(&self) -> f64 {
        arc_length(&self.0)
    }
}

/// Indices kept by Ramer-Douglas-Peucker at `tolerance`. A point is kept
/// when its distance to the current chord exceeds the tolerance.
pub fn rdp_keep(points: &[Point], tolerance: f64) -> Vec<usize> {
    let n = points.len();
    if n <= 2 {
        return (0..n).collect();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (a, b) = (points[lo], points[hi]);
        let (best, dist) = (lo + 1..hi)
            .map(|i| (i, point_segment_distance(points[i], a, b)))
            .fold((lo, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if dist > tolerance {
            keep[best] = true;
            stack.push((lo, best));
            stack.push((best, hi));
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}

pub fn simplify_rdp(line: &Polyline, tolerance: f64) -> Result<Polyline> {
    if !(tolerance >= 0.0) {
        return Err(Error::argument(format!("tolerance must be non-negative, got {tolerance}")));
    }
    let pts = line.points();
    Ok(Polyline(rdp_keep(pts, tolerance).into_iter().map(|i| pts[i]).collect()))
}

/// Repeatedly removes the shortest edge that has a degree-1 end and is
/// shorter than `min_length`, until none is left. Non-boundary nodes of
/// degree two are merged through so edges are maximal chains, and nodes
/// left without edges are dropped.
pub fn prune_hanging(g: &RoadGraph, min_length: f64) -> Result<RoadGraph> {
    if !(min_length >= 0.0) {
        return Err(Error::argument(format!("min_length must be non-negative, got {min_length}")));
    }
    let mut edges: Vec<Option<Edge>> = g.edges().iter().cloned().map(Some).collect();
    let n = g.node_count();

    let degrees = |edges: &[Option<Edge>]| {
        let mut deg = vec![0usize; n];
        for e in edges.iter().flatten() {
            deg[e.a] += 1;
            deg[e.b] += 1;
        }
        deg
    };

    merge_pass_through(g, &mut edges);
    loop {
        let deg = degrees(&edges);
        let victim = edges
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.as_ref().map(|e| (i, e)))
            .filter(|(_, e)| (deg[e.a] == 1 || deg[e.b] == 1) && e.length() < min_length)
            .map(|(i, e)| (e.length(), i))
            .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let Some((_, i)) = victim else { break };
        edges[i] = None;
        merge_pass_through(g, &mut edges);
    }

    let deg = degrees(&edges);
    let mut remap = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    for i in 0..n {
        if deg[i] > 0 {
            remap[i] = nodes.len();
            nodes.push(g.nodes()[i]);
        }
    }
    let edges = edges
        .into_iter()
        .flatten()
        .map(|e| (remap[e.a], remap[e.b], e.polyline))
        .collect();
    let boundary = g
        .boundary_nodes()
        .iter()
        .filter(|&&i| remap[i] != usize::MAX)
        .map(|&i| remap[i]);
    RoadGraph::new(nodes, edges, boundary.collect::<Vec<_>>())
}

fn merge_pass_through(g: &RoadGraph, edges: &mut Vec<Option<Edge>>) {
    loop {
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); g.node_count()];
        for (i, e) in edges.iter().enumerate() {
            if let Some(e) = e {
                incident[e.a].push(i);
                incident[e.b].push(i);
            }
        }
        let Some(v) = (0..g.node_count()).find(|&v| {
            incident[v].len() == 2 && incident[v][0] != incident[v][1] && !g.is_boundary(v)
        }) else {
            return;
        };
        let (i, j) = (incident[v][0], incident[v][1]);
        let mut first = edges[i].take().unwrap();
        let mut second = edges[j].take().unwrap();
        if first.b != v {
            first.polyline.reverse();
            std::mem::swap(&mut first.a, &mut first.b);
        }
        if second.a != v {
            second.polyline.reverse();
            std::mem::swap(&mut second.a, &mut second.b);
        }
        let mut polyline = first.polyline;
        polyline.extend_from_slice(&second.polyline[1..]);
        edges[i] = Some(Edge { a: first.a, b: second.b, polyline });
    }
}

/// Contracts edges of at most `max_gap` between two nodes of degree three
/// or more, so a crossing thinned into two nearby forks becomes one node
/// at the centroid of the merged junctions.
pub fn merge_close_junctions(g: &RoadGraph, max_gap: f64) -> Result<RoadGraph> {
    let n = g.node_count();
    let deg = g.degrees();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let short = |e: &Edge| !e.is_self_loop() && deg[e.a] >= 3 && deg[e.b] >= 3 && e.length() <= max_gap;
    for e in g.edges().iter().filter(|e| short(e)) {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        parent[ra.max(rb)] = ra.min(rb);
    }

    let mut group = vec![usize::MAX; n];
    let mut sums: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        if group[r] == usize::MAX {
            group[r] = sums.len();
            sums.push((0.0, 0.0, 0.0));
        }
        group[i] = group[r];
        let p = g.nodes()[i];
        let s = &mut sums[group[i]];
        *s = (s.0 + p.x, s.1 + p.y, s.2 + 1.0);
    }
    let nodes: Vec<Point> = sums.iter().map(|&(x, y, c)| Point::new(x / c, y / c)).collect();
    let edges = g
        .edges()
        .iter()
        .filter(|e| !(short(e) && group[e.a] == group[e.b]))
        .map(|e| {
            let (a, b) = (group[e.a], group[e.b]);
            let mut pts = e.polyline.clone();
            let last = pts.len() - 1;
            pts[0] = nodes[a];
            pts[last] = nodes[b];
            pts.dedup();
            if pts.len() == 1 {
                pts.push(pts[0]);
            }
            (a, b, pts)
        })
        .filter(|(_, _, pts)| arc_length(pts) > 0.0)
        .collect();
    let boundary: Vec<usize> = g.boundary_nodes().iter().map(|&i| group[i]).collect();
    RoadGraph::new(nodes, edges, boundary)
}

/// Simplifies every edge polyline in place, dropping edges that collapse.
pub fn simplify_graph(g: &RoadGraph, tolerance: f64) -> Result<RoadGraph> {
    if !(tolerance >= 0.0) {
        return Err(Error::argument(format!("tolerance must be non-negative, got {tolerance}")));
    }
    let edges = g
        .edges()
        .iter()
        .filter_map(|e| {
            let pts: Vec<Point> = rdp_keep(&e.polyline, tolerance).into_iter().map(|i| e.polyline[i]).collect();
            (arc_length(&pts) > 0.0).then_some((e.a, e.b, pts))
        })
        .collect();
    RoadGraph::new(g.nodes().to_vec(), edges, g.boundary_nodes().iter().copied().collect::<Vec<_>>())
}

/// Full mask-to-graph pipeline: hole filling, thinning, tracing, spur
/// pruning, junction merging and simplification.
pub fn mask_to_graph(mask: &RasterMask, tolerance: f64, min_length: f64) -> Result<RoadGraph> {
    if !(tolerance >= 0.0) {
        return Err(Error::argument(format!("tolerance must be non-negative, got {tolerance}")));
    }
    let skel = skeletonize(&fill_small_holes(mask, MAX_HOLE_AREA));
    let traced = trace(&skel)?;
    let pruned = prune_hanging(&traced, min_length)?;
    let merged = merge_close_junctions(&pruned, JUNCTION_MERGE_DISTANCE)?;
    simplify_graph(&merged, tolerance)
}
