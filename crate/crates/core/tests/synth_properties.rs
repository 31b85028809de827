use semsplat_core::ingest::{is_keyframe, unproject};
use semsplat_core::math;
use semsplat_core::pairing::project_point;
use semsplat_core::synth::{
    default_intrinsics, generate_scene, generate_stream, generate_trajectory, NoiseConfig, Primitive, SceneParams,
};

/// Distance from `p` to the surface of a primitive.
fn surface_distance(prim: &Primitive, p: [f64; 3]) -> f64 {
    match *prim {
        Primitive::Sphere { center, radius } => (math::norm(math::sub(p, center)) - radius).abs(),
        Primitive::Cuboid { min, max } => {
            let inside = (0..3).all(|a| p[a] >= min[a] - 1e-9 && p[a] <= max[a] + 1e-9);
            if inside {
                (0..3).map(|a| (p[a] - min[a]).abs().min((p[a] - max[a]).abs())).fold(f64::INFINITY, f64::min)
            } else {
                let d: Vec<f64> = (0..3).map(|a| (min[a] - p[a]).max(0.0).max(p[a] - max[a])).collect();
                d.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
        }
    }
}

#[test]
fn rendered_geometry_is_exact_and_round_trips() {
    let scene = generate_scene(&SceneParams { seed: 11, ..Default::default() }).unwrap();
    let k = default_intrinsics(64, 48).unwrap();
    let frames = generate_stream(&scene, &k, 12, 11, &NoiseConfig::default()).unwrap();
    let mut hits = 0;
    for frame in &frames {
        let local = unproject(frame).unwrap();
        let visible: Vec<usize> = {
            // Rebuild the frame's id table: row k − 1 is the k-th visible primitive.
            let mut v: Vec<usize> = Vec::new();
            for (i, &id) in local.instance_ids.iter().enumerate() {
                let p = local.centers[i];
                let (prim, _) = scene
                    .primitives
                    .iter()
                    .enumerate()
                    .map(|(j, q)| (j, surface_distance(q, p)))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                assert!(surface_distance(&scene.primitives[prim], p) < 1e-5, "pixel off every surface");
                v.push(prim);
                assert!(id >= 1);
            }
            v
        };
        for (i, &px) in local.pixels.iter().enumerate() {
            let proj = project_point(local.centers[i], &k, &frame.pose);
            assert_eq!(proj.pixel(k.width), Some(px as usize));
            assert!((proj.depth - local.depths[i]).abs() < 1e-5);
            let id = local.instance_ids[i];
            assert_eq!(frame.instance_feature(id).unwrap(), scene.prototype(scene.classes[visible[i]]));
            hits += 1;
        }
    }
    assert!(hits > 1000);
}

#[test]
fn default_trajectory_gates_between_bounds() {
    for seed in 0..5 {
        let scene = generate_scene(&SceneParams { seed, ..Default::default() }).unwrap();
        let poses = generate_trajectory(&scene, 400, seed).unwrap();
        let mut last = poses[0];
        let mut accepted = 1;
        let mut rejected = 0;
        for p in &poses[1..] {
            if is_keyframe(p, &last, 0.1).unwrap() {
                accepted += 1;
                last = *p;
            } else {
                rejected += 1;
            }
        }
        assert!((100..=400).contains(&accepted), "seed {seed}: {accepted} keyframes");
        assert!(rejected > 0);
    }
}

#[test]
fn wide_separation_with_many_classes_is_feasible() {
    let p = SceneParams { n_classes: 16, n_instances: 16, feature_dim: 64, separation: 0.3, ..Default::default() };
    assert!(generate_scene(&p).is_ok());
}
