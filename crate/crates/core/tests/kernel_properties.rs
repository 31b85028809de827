use proptest::prelude::*;
use semsplat_core::fusion::fuse_gaussian;
use semsplat_core::ingest::{fill_depth, pose_distance};
use semsplat_core::math::{axis_angle, normalize};
use semsplat_core::sparse::{fuse_caches, renormalize};
use semsplat_core::Pose;

fn pose_strategy() -> impl Strategy<Value = Pose> {
    (prop::array::uniform3(-1.0f64..1.0), -3.1f64..3.1, prop::array::uniform3(-5.0f64..5.0)).prop_filter_map(
        "degenerate axis",
        |(axis, angle, t)| {
            let n = axis.iter().map(|a| a * a).sum::<f64>();
            (n > 1e-6).then(|| Pose { rotation: axis_angle(normalize(axis), angle), translation: t })
        },
    )
}

/// A sorted global row with `live` positive entries and distinct indices
/// drawn below 40, followed by zeros.
fn global_row(len: usize) -> impl Strategy<Value = (Vec<u32>, Vec<f64>)> {
    (1..len, prop::collection::btree_set(1u32..40, len), prop::collection::vec(0.01f64..1.0, len)).prop_map(
        move |(live, idx, mut w)| {
            w.truncate(live);
            w.sort_by(|a, b| b.total_cmp(a));
            let mut indices: Vec<u32> = idx.into_iter().take(live).collect();
            indices.resize(len, 0);
            w.resize(len, 0.0);
            (indices, w)
        },
    )
}

proptest! {
    #[test]
    fn pose_distance_is_symmetric(p in pose_strategy()) {
        let d = pose_distance(&p).unwrap();
        let back = pose_distance(&p.inverse()).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!((d - back).abs() < 1e-9);
    }

    #[test]
    fn fill_depth_keeps_valid_sensor_values(
        pairs in prop::collection::vec((prop_oneof![Just(0.0f32), 0.0f32..20.0], 0.0f32..20.0), 1..200),
    ) {
        let (sensor, predicted): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
        let out = fill_depth(&sensor, &predicted, 1e-3, 10.0).unwrap();
        for i in 0..out.len() {
            let valid = sensor[i] as f64 > 1e-3 && (sensor[i] as f64) < 10.0;
            prop_assert_eq!(out[i], if valid { sensor[i] } else { predicted[i] });
        }
    }

    #[test]
    fn fused_center_is_convex_and_confidence_adds(
        a in prop::array::uniform3(-10.0f64..10.0), b in prop::array::uniform3(-10.0f64..10.0),
        wa in 1e-3f64..5.0, wb in 1e-3f64..5.0,
    ) {
        let (c, w) = fuse_gaussian(a, wa, b, wb);
        for k in 0..3 {
            prop_assert!(c[k] >= a[k].min(b[k]) - 1e-12 && c[k] <= a[k].max(b[k]) + 1e-12);
        }
        prop_assert_eq!(w, wa + wb);
        prop_assert!(w > wa && w > wb);
    }

    #[test]
    fn fusion_chain_matches_the_unrolled_average(
        steps in prop::collection::vec((prop::array::uniform3(-10.0f64..10.0), 1e-3f64..5.0), 2..12),
    ) {
        let (mut c, mut w) = steps[0];
        for &(p, pw) in &steps[1..] {
            (c, w) = fuse_gaussian(p, pw, c, w);
        }
        let total: f64 = steps.iter().map(|s| s.1).sum();
        for (k, got) in c.iter().enumerate() {
            let expected = steps.iter().map(|s| s.1 * s.0[k]).sum::<f64>() / total;
            prop_assert!((got - expected).abs() < 1e-9);
        }
        prop_assert!((w - total).abs() <= 1e-12 * total);
    }

    #[test]
    fn cache_fusion_conserves_mass_and_stays_sorted(
        (gi, gw) in global_row(5), local_index in 1u32..45, local_weight in 0.01f64..1.0,
        wl in 0.01f64..3.0, wg in 0.01f64..3.0,
    ) {
        let len = gi.len();
        let mut gi = gi;
        let mut gw = gw;
        gi[len - 1] = 0;
        gw[len - 1] = 0.0;
        let mut li = vec![0u32; len];
        let mut lw = vec![0.0; len];
        li[0] = local_index;
        lw[0] = local_weight;
        let (oi, ow) = fuse_caches(&li, &lw, wl, &gi, &gw, wg).unwrap();
        let before = gw.iter().sum::<f64>() * wg / (wl + wg) + local_weight * wl / (wl + wg);
        let kept: f64 = ow.iter().sum();
        // Whatever is not kept went to the single pruned tail entry.
        let mut all: Vec<(u32, f64)> = gi.iter().zip(&gw).filter(|p| *p.0 != 0).map(|(&i, &w)| (i, w * wg / (wl + wg))).collect();
        match all.iter_mut().find(|p| p.0 == local_index) {
            Some(p) => p.1 += local_weight * wl / (wl + wg),
            None => all.push((local_index, local_weight * wl / (wl + wg))),
        }
        prop_assert!((before - all.iter().map(|p| p.1).sum::<f64>()).abs() < 1e-12);
        prop_assert!(kept <= before + 1e-12);
        let live = oi.iter().filter(|&&i| i != 0).count();
        prop_assert_eq!(live, all.len().min(len - 1));
        if all.len() < len {
            prop_assert!((kept - before).abs() < 1e-9);
        }
        prop_assert_eq!(oi[len - 1], 0);
        for s in 1..live {
            prop_assert!(ow[s - 1] > ow[s] || (ow[s - 1] == ow[s] && oi[s - 1] < oi[s]));
        }
        let renorm = renormalize(&ow).unwrap();
        prop_assert!((renorm.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
