mod common;

use common::{brute_sq_distance, grid_strategy, mask_strategy};
use proptest::prelude::*;
use roadkit::labelgen::{
    distance_map, gaussian_heatmap, generate_labels, neighbor_counts, Adjacency, LabelParams, ROAD_CLASS,
};
use roadkit::raster::MAX_CONNECTIVITY;

proptest! {
    #[test]
    fn distance_map_matches_brute_force(mask in mask_strategy(64)) {
        let fast = distance_map(&mask);
        let slow = brute_sq_distance(&mask);
        for (a, b) in fast.data().iter().zip(&slow) {
            if b.is_infinite() {
                prop_assert!(a.is_infinite());
            } else {
                prop_assert!((a - b.sqrt()).abs() <= 1e-6, "{a} vs {}", b.sqrt());
            }
        }
    }

    #[test]
    fn heatmap_is_one_exactly_on_road(mask in mask_strategy(24), theta in 0.5..5.0f64) {
        let g = gaussian_heatmap(&distance_map(&mask), theta).unwrap();
        for (x, y, v) in (0..mask.height()).flat_map(|y| (0..mask.width()).map(move |x| (x, y))).map(|(x, y)| (x, y, g.at(x, y))) {
            if mask.is_road(x, y) {
                prop_assert_eq!(v, 1.0);
            } else {
                prop_assert!((0.0..1.0).contains(&v));
            }
        }
    }

    #[test]
    fn eight_neighbourhood_dominates_four(mask in mask_strategy(24)) {
        let four = neighbor_counts(&mask, Adjacency::Four);
        let eight = neighbor_counts(&mask, Adjacency::Eight);
        prop_assert!(four.iter().zip(&eight).all(|(a, b)| a <= b));
    }

    #[test]
    fn connectivity_classes_follow_mask_and_degrees(g in grid_strategy()) {
        let (w, h) = (260, 260);
        let params = LabelParams::default();
        let labels = generate_labels(&g, w, h, &params).unwrap();
        let deg = g.degrees();
        for y in 0..h {
            for x in 0..w {
                let class = labels.connectivity.class_at(x, y);
                let road = labels.heatmap.at(x, y) >= params.lambda;
                prop_assert_eq!(class >= 1, road);
                prop_assert_eq!(labels.mask.is_road(x, y), road);
                prop_assert!(class <= MAX_CONNECTIVITY);
                if !road {
                    continue;
                }
                let expected = g
                    .nodes()
                    .iter()
                    .enumerate()
                    .filter(|&(i, p)| deg[i] > 0 && (p.x - x as f64).hypot(p.y - y as f64) <= params.node_radius)
                    .map(|(i, _)| deg[i].min(5) as u8)
                    .max()
                    .unwrap_or(ROAD_CLASS);
                prop_assert_eq!(class, expected, "pixel ({}, {})", x, y);
            }
        }
    }
}
