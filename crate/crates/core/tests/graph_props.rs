mod common;

use common::{grid_strategy, linestring_strategy};
use proptest::prelude::*;
use roadkit::graph::{crop_graph, node_degrees, parse_graph, serialize_graph};
use roadkit::{Point, RoadGraph, Window};

fn assert_same_up_to_order(a: &RoadGraph, b: &RoadGraph) {
    let key = |g: &RoadGraph| {
        let mut edges: Vec<String> = g
            .edges()
            .iter()
            .map(|e| {
                let (p, q) = (g.nodes()[e.a], g.nodes()[e.b]);
                let mut pts: Vec<(u64, u64)> = e.polyline.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
                if (q.x, q.y) < (p.x, p.y) {
                    pts.reverse();
                }
                format!("{pts:?}")
            })
            .collect();
        edges.sort();
        let mut nodes: Vec<(u64, u64)> = g.nodes().iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
        nodes.sort();
        (nodes, edges)
    };
    assert_eq!(key(a), key(b));
}

proptest! {
    #[test]
    fn json_round_trip(g in prop_oneof![grid_strategy(), linestring_strategy()]) {
        let back = parse_graph(&serialize_graph(&g)).unwrap();
        assert_same_up_to_order(&g, &back);
        prop_assert_eq!(node_degrees(&g), node_degrees(&back));
    }

    #[test]
    fn handshake_lemma(g in prop_oneof![grid_strategy(), linestring_strategy()]) {
        let total: usize = node_degrees(&g).iter().sum();
        prop_assert_eq!(total, 2 * g.edge_count());
    }

    #[test]
    fn crop_with_covering_window_is_identity(g in prop_oneof![grid_strategy(), linestring_strategy()], pad in 0.0..20.0f64) {
        let Some((lo, hi)) = g.bounding_box() else { return Ok(()); };
        let w = Window::new(lo.x - pad, lo.y - pad, hi.x - lo.x + 2.0 * pad + 1.0, hi.y - lo.y + 2.0 * pad + 1.0).unwrap();
        let c = crop_graph(&g, &w);
        prop_assert_eq!(&c, &g);
        prop_assert!(c.boundary_nodes().is_empty());
    }

    #[test]
    fn crop_stays_inside_window(g in grid_strategy(), x0 in 0.0..120.0f64, y0 in 0.0..120.0f64, size in 10.0..150.0f64) {
        let w = Window::new(x0, y0, size, size).unwrap();
        let c = g.crop(&w);
        for e in c.edges() {
            for p in &e.polyline {
                prop_assert!(w.contains(*p), "{p:?} outside {w:?}");
            }
        }
        for &b in c.boundary_nodes() {
            let p = c.nodes()[b];
            let on_edge = [p.x - w.x0, w.x1() - p.x, p.y - w.y0, w.y1() - p.y].iter().any(|d| d.abs() < 1e-9);
            prop_assert!(on_edge, "boundary node {p:?} not on window edge");
        }
        prop_assert!(c.total_length() <= g.total_length() + 1e-9);
    }
}

#[test]
fn clipping_oracle_example() {
    let g = RoadGraph::from_linestrings([vec![Point::new(-5.0, 5.0), Point::new(15.0, 5.0)]]).unwrap();
    let c = g.crop(&Window::new(0.0, 0.0, 10.0, 10.0).unwrap());
    let mut nodes = c.nodes().to_vec();
    nodes.sort_by(|a, b| a.x.total_cmp(&b.x));
    assert_eq!(nodes, vec![Point::new(0.0, 5.0), Point::new(10.0, 5.0)]);
    assert_eq!(c.boundary_nodes().len(), 2);
}

#[test]
fn split_cross_has_degree_four_centre() {
    let p = Point::new;
    let g = RoadGraph::from_linestrings([
        vec![p(0.0, 5.0), p(5.0, 5.0)],
        vec![p(5.0, 5.0), p(10.0, 5.0)],
        vec![p(5.0, 0.0), p(5.0, 5.0)],
        vec![p(5.0, 5.0), p(5.0, 10.0)],
    ])
    .unwrap();
    let deg = node_degrees(&g);
    let centre = g.nodes().iter().position(|&q| q == p(5.0, 5.0)).unwrap();
    assert_eq!(deg[centre], 4);
    assert_eq!(g.node_count(), 5);
}

#[test]
fn malformed_documents_are_rejected() {
    for doc in [
        "",
        "{\"nodes\": [[0, 0]]",
        "{\"nodes\": [[0, 0]], \"edges\": [{\"a\": 0, \"b\": 3}]}",
        "{\"nodes\": [[0, \"x\"]], \"edges\": []}",
    ] {
        assert!(parse_graph(doc).is_err(), "{doc:?}");
    }
}
