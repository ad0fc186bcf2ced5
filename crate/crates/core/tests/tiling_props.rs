mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use roadkit::tiling::{plan_tiles, stitch};
use roadkit::ScalarField;

fn params() -> impl Strategy<Value = (usize, usize, usize, usize, usize)> {
    (1..=900usize, 1..=900usize, 0..=40usize, 0..=100usize).prop_flat_map(|(w, h, margin, extra)| {
        let patch = 2 * margin + 8 + extra;
        let span = patch - 2 * margin;
        (Just(w), Just(h), Just(patch), (span / 4).max(1)..=span, Just(margin))
    })
}

proptest! {
    #[test]
    fn write_windows_partition_the_image((w, h, patch, stride, margin) in params()) {
        let plan = plan_tiles(w, h, patch, stride, margin).unwrap();
        prop_assert_eq!(plan.tiles.len(), plan.columns * plan.rows);
        let mut owner = vec![u32::MAX; w * h];
        let mut area = 0;
        for (k, t) in plan.tiles.iter().enumerate() {
            let (r, wr) = (t.read, t.write);
            area += wr.area();
            prop_assert!(r.x0 + r.width <= w && r.y0 + r.height <= h);
            prop_assert!(wr.x0 >= r.x0 && wr.x0 + wr.width <= r.x0 + r.width);
            prop_assert!(wr.y0 >= r.y0 && wr.y0 + wr.height <= r.y0 + r.height);
            // interior sides trim at least the margin
            if wr.x0 > 0 { prop_assert!(wr.x0 >= r.x0 + margin); }
            if wr.y0 > 0 { prop_assert!(wr.y0 >= r.y0 + margin); }
            if wr.x0 + wr.width < w { prop_assert!(wr.x0 + wr.width + margin <= r.x0 + r.width); }
            if wr.y0 + wr.height < h { prop_assert!(wr.y0 + wr.height + margin <= r.y0 + r.height); }
            for y in wr.y0..wr.y0 + wr.height {
                for x in wr.x0..wr.x0 + wr.width {
                    prop_assert_eq!(owner[y * w + x], u32::MAX, "pixel ({}, {}) written twice", x, y);
                    owner[y * w + x] = k as u32;
                }
            }
        }
        prop_assert_eq!(area, w * h);
        prop_assert!(owner.iter().all(|&o| o != u32::MAX));
        prop_assert_eq!(plan_tiles(w, h, patch, stride, margin).unwrap(), plan);
    }

    #[test]
    fn identity_stitch_is_exact((w, h, patch, stride, margin) in params(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let image = ScalarField::from_vec(w, h, (0..w * h).map(|_| r.gen::<f64>()).collect()).unwrap();
        let plan = plan_tiles(w, h, patch, stride, margin).unwrap();
        let tiles = plan.crop_tiles(&image).unwrap();
        prop_assert_eq!(stitch(&plan, &tiles).unwrap(), image);
    }
}

#[test]
fn tiny_patches_still_partition() {
    let plan = plan_tiles(7, 5, 1, 1, 0).unwrap();
    assert_eq!((plan.columns, plan.rows), (7, 5));
    assert!(plan.tiles.iter().all(|t| t.write.area() == 1));
}
