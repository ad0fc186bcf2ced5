mod common;

use common::{components, mask_strategy, point_segment, rng};
use proptest::prelude::*;
use roadkit::labelgen::{generate_labels, LabelParams};
use roadkit::synth::{blob_mask, grid_graph, random_polyline, GridSpec};
use roadkit::vectorize::{
    mask_to_graph, prune_hanging, rdp_keep, simplify_rdp, skeletonize, Polyline,
    DEFAULT_MIN_SPUR, DEFAULT_RDP_TOLERANCE,
};
use roadkit::{Point, RasterMask, RoadGraph};

fn blob_strategy() -> impl Strategy<Value = RasterMask> {
    (any::<u64>(), 8..=64usize, 8..=64usize, 1..6usize).prop_map(|(seed, w, h, n)| blob_mask(&mut rng(seed), w, h, n))
}

/// Local simple-point test: the 3x3 ring holds exactly one 8-connected
/// road component and exactly one 4-connected background component that
/// touches a 4-neighbour of the centre.
fn is_simple(mask: &RasterMask, x: usize, y: usize) -> bool {
    let ring = [(-1i64, -1i64), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)];
    let on: Vec<bool> = ring.iter().map(|(dx, dy)| mask.road_at(x as i64 + dx, y as i64 + dy)).collect();
    let count = |want: bool, eight: bool, seeds: &dyn Fn(usize) -> bool| {
        let mut seen = [false; 8];
        let mut n = 0;
        for s in 0..8 {
            if on[s] != want || seen[s] || !seeds(s) {
                continue;
            }
            n += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(i) = stack.pop() {
                for j in 0..8 {
                    let (a, b) = (ring[i], ring[j]);
                    let (dx, dy) = ((a.0 - b.0).abs(), (a.1 - b.1).abs());
                    let adjacent = if eight { dx <= 1 && dy <= 1 } else { dx + dy == 1 };
                    if i != j && adjacent && on[j] == want && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        n
    };
    count(true, true, &|_| true) == 1 && count(false, false, &|s| s % 2 == 1) == 1
}

/// Pixels of any remaining 2x2 block that thinning could still delete.
fn deletable_block_pixels(skel: &RasterMask) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..skel.height().saturating_sub(1) {
        for x in 0..skel.width().saturating_sub(1) {
            let block = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
            if block.iter().all(|&(bx, by)| skel.is_road(bx, by)) {
                out.extend(block.into_iter().filter(|&(bx, by)| is_simple(skel, bx, by)));
            }
        }
    }
    out
}

proptest! {
    #[test]
    fn skeleton_of_blobs_is_thin_and_keeps_components(mask in blob_strategy()) {
        let skel = skeletonize(&mask);
        prop_assert_eq!(deletable_block_pixels(&skel), vec![]);
        prop_assert_eq!(components(&skel), components(&mask));
        prop_assert!(skel.road_pixels().all(|(x, y)| mask.is_road(x, y)));
    }

    #[test]
    fn skeleton_of_noise_keeps_components(mask in mask_strategy(64)) {
        let skel = skeletonize(&mask);
        prop_assert_eq!(components(&skel), components(&mask));
        prop_assert_eq!(deletable_block_pixels(&skel), vec![]);
        prop_assert!(skel.road_pixels().all(|(x, y)| mask.is_road(x, y)));
    }

    #[test]
    fn pipeline_accepts_any_mask(mask in mask_strategy(64)) {
        let g = mask_to_graph(&mask, DEFAULT_RDP_TOLERANCE, 0.0).unwrap();
        for p in g.nodes() {
            prop_assert!(p.x >= 0.0 && p.y >= 0.0 && p.x < mask.width() as f64 && p.y < mask.height() as f64);
        }
    }

    #[test]
    fn rdp_dropped_points_stay_within_tolerance(seed in any::<u64>(), n in 2..60usize, tol in 0.0..6.0f64) {
        let pts = random_polyline(&mut rng(seed), n, 8.0);
        let line = Polyline::new(pts.clone()).unwrap();
        let simple = simplify_rdp(&line, tol).unwrap();
        let kept = simple.points();
        prop_assert_eq!(kept.first(), pts.first());
        prop_assert_eq!(kept.last(), pts.last());
        let idx = rdp_keep(&pts, tol);
        for (i, p) in pts.iter().enumerate() {
            if idx.contains(&i) {
                continue;
            }
            let d = kept.windows(2).map(|s| point_segment(*p, s[0], s[1])).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= tol + 1e-12, "dropped point {} at {}", i, d);
        }
    }

    #[test]
    fn pruning_reaches_a_fixpoint(seed in any::<u64>(), spurs in 0..8usize, min in 5.0..40.0f64) {
        let g = graph_with_spurs(seed, spurs);
        let pruned = prune_hanging(&g, min).unwrap();
        let deg = pruned.degrees();
        for e in pruned.edges() {
            prop_assert!(!(deg[e.a] == 1 || deg[e.b] == 1) || e.length() >= min, "spur of {} survives", e.length());
        }
        prop_assert_eq!(prune_hanging(&pruned, min).unwrap(), pruned);
    }
}

/// Grid graph with short random spurs hung off random nodes.
pub fn graph_with_spurs(seed: u64, spurs: usize) -> RoadGraph {
    use rand::Rng;
    let mut r = rng(seed);
    let g = grid_graph(&mut r, &GridSpec::default());
    let mut nodes = g.nodes().to_vec();
    let mut edges: Vec<(usize, usize, Vec<Point>)> = g.edges().iter().map(|e| (e.a, e.b, e.polyline.clone())).collect();
    for _ in 0..spurs {
        let at = r.gen_range(0..g.node_count());
        let len: f64 = r.gen_range(3.0..45.0);
        let ang: f64 = r.gen_range(0.0..std::f64::consts::TAU);
        let base = nodes[at];
        nodes.push(Point::new(base.x + len * ang.cos(), base.y + len * ang.sin()));
        edges.push((at, nodes.len() - 1, Vec::new()));
    }
    RoadGraph::new(nodes, edges, []).unwrap()
}

fn junctions(g: &RoadGraph) -> Vec<Point> {
    let deg = g.degrees();
    (0..g.node_count()).filter(|&i| deg[i] >= 3).map(|i| g.nodes()[i]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn labelgen_round_trip_recovers_junctions(seed in any::<u64>()) {
        let spec = GridSpec::default();
        prop_assume!(spec.min_separation() >= 40.0);
        let g = grid_graph(&mut rng(seed), &spec);
        let (w, h) = spec.image_size();
        let labels = generate_labels(&g, w, h, &LabelParams::default()).unwrap();
        let back = mask_to_graph(&labels.mask, DEFAULT_RDP_TOLERANCE, DEFAULT_MIN_SPUR).unwrap();
        let (want, got) = (junctions(&g), junctions(&back));
        prop_assert_eq!(want.len(), got.len());
        for p in &want {
            let d = got.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= 3.0, "junction {:?} recovered {} px away", p, d);
        }
    }
}

fn band_labels(lines: Vec<Vec<Point>>, w: usize, h: usize) -> RasterMask {
    let g = RoadGraph::from_linestrings(lines).unwrap();
    generate_labels(&g, w, h, &LabelParams::default()).unwrap().mask
}

#[test]
fn straight_band_becomes_two_node_graph() {
    let p = Point::new;
    let mask = band_labels(vec![vec![p(10.0, 30.0), p(90.0, 30.0)]], 100, 60);
    let g = mask_to_graph(&mask, DEFAULT_RDP_TOLERANCE, DEFAULT_MIN_SPUR).unwrap();
    assert_eq!((g.node_count(), g.edge_count()), (2, 1));
    let mut xs: Vec<Point> = g.nodes().to_vec();
    xs.sort_by(|a, b| a.x.total_cmp(&b.x));
    assert!(xs[0].dist(p(10.0, 30.0)) <= 2.0, "{:?}", xs[0]);
    assert!(xs[1].dist(p(90.0, 30.0)) <= 2.0, "{:?}", xs[1]);
}

#[test]
fn crossroad_becomes_one_degree_four_node() {
    let p = Point::new;
    let c = p(50.0, 50.0);
    let mask = band_labels(
        vec![vec![p(5.0, 50.0), c], vec![c, p(95.0, 50.0)], vec![p(50.0, 5.0), c], vec![c, p(50.0, 95.0)]],
        100,
        100,
    );
    let g = mask_to_graph(&mask, DEFAULT_RDP_TOLERANCE, DEFAULT_MIN_SPUR).unwrap();
    let deg = g.degrees();
    let hubs: Vec<usize> = (0..g.node_count()).filter(|&i| deg[i] >= 3).collect();
    assert_eq!(hubs.len(), 1);
    assert_eq!(deg[hubs[0]], 4);
    assert!(g.nodes()[hubs[0]].dist(c) <= 3.0);
}
