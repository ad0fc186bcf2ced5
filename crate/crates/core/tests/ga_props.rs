mod common;

use common::rng;
use proptest::prelude::*;
use roadkit::check::{ga_module_instance_error, GRAD_TOLERANCE};
use roadkit::ga::{
    channel_attention, channel_weights, ga_backward, ga_module, ga_resblock, spatial_attention, spatial_weights,
    FeatureMap, GaParams, ResidualBranchParams,
};
use roadkit::losses::finite_diff_gradient;

fn instance() -> impl Strategy<Value = (FeatureMap, GaParams)> {
    (any::<u64>(), prop_oneof![Just(4usize), Just(8)], 5..=7usize, 5..=7usize, prop_oneof![Just(1usize), Just(2), Just(4)])
        .prop_map(|(seed, c, h, w, r)| {
            let mut g = rng(seed);
            (FeatureMap::random(c, h, w, &mut g, 2.0), GaParams::random(c, r, &mut g, 0.5).unwrap())
        })
}

proptest! {
    #[test]
    fn shapes_are_preserved((v, p) in instance(), seed in any::<u64>()) {
        let b = ResidualBranchParams::random(v.channels(), &mut rng(seed), 0.2);
        prop_assert_eq!(channel_attention(&v, &p).unwrap().shape(), v.shape());
        prop_assert_eq!(spatial_attention(&v).shape(), v.shape());
        prop_assert_eq!(ga_module(&v, &p).unwrap().shape(), v.shape());
        prop_assert_eq!(ga_resblock(&v, &p, &b).unwrap().shape(), v.shape());
    }

    #[test]
    fn channel_attention_scales_whole_channels((v, p) in instance()) {
        let out = channel_attention(&v, &p).unwrap();
        let (c, h, w) = v.shape();
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let (a, b) = (v.at(ch, 0, 0), v.at(ch, y, x));
                    let (oa, ob) = (out.at(ch, 0, 0), out.at(ch, y, x));
                    // cross-multiplied ratio test avoids dividing by tiny values
                    prop_assert!((ob * a - oa * b).abs() <= 1e-12 * (1.0 + (ob * a).abs()));
                }
            }
        }
    }

    #[test]
    fn spatial_attention_commutes_with_channel_permutation((v, _p) in instance(), shift in 1..8usize) {
        let (c, h, w) = v.shape();
        let plane = h * w;
        let perm: Vec<usize> = (0..c).map(|k| (k + shift) % c).collect();
        let permute = |m: &FeatureMap| {
            let mut d = Vec::with_capacity(c * plane);
            for &k in &perm {
                d.extend_from_slice(&m.data()[k * plane..(k + 1) * plane]);
            }
            m.replace_data(d).unwrap()
        };
        let lhs = spatial_attention(&permute(&v));
        let rhs = permute(&spatial_attention(&v));
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn attention_coefficients_are_open_unit((v, p) in instance()) {
        for u in channel_weights(&v, &p).unwrap().into_iter().chain(spatial_weights(&v)) {
            prop_assert!(u > 0.0 && u < 1.0);
        }
    }
}

#[test]
fn sum_probe_gradient_matches_finite_differences() {
    let mut g = rng(11);
    let v = FeatureMap::random(4, 6, 6, &mut g, 1.0);
    let p = GaParams::random(4, 2, &mut g, 0.1).unwrap();
    let ones = FeatureMap::new(4, 6, 6, vec![1.0; 144]).unwrap();
    let (dv, _) = ga_backward(&v, &p, &ones).unwrap();
    let num = finite_diff_gradient(|x| ga_module(&v.replace_data(x.to_vec()).unwrap(), &p).unwrap().data().iter().sum(), v.data(), 1e-4);
    let err = roadkit::losses::max_relative_error(dv.data(), &num);
    assert!(err < GRAD_TOLERANCE, "{err}");
    assert!(ga_module_instance_error(&v, &p, &ones) < GRAD_TOLERANCE);
}

#[test]
fn saturated_bottleneck_keeps_finite_gradients() {
    let mut g = rng(5);
    let v = FeatureMap::random(4, 5, 5, &mut g, 1.0);
    let mut p = GaParams::random(4, 2, &mut g, 0.1).unwrap();
    for b in &mut p.b1 {
        *b = -50.0;
    }
    let up = FeatureMap::random(4, 5, 5, &mut g, 1.0);
    let (dv, dp) = ga_backward(&v, &p, &up).unwrap();
    assert!(dv.data().iter().chain(&dp.flatten()).all(|x| x.is_finite()));
    assert!(dp.b1.iter().all(|&x| x == 0.0));
    assert!(dp.w1.iter().all(|&x| x == 0.0));
}
