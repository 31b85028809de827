use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semsplat::format::{
    decode_classes, decode_field, decode_frame, decode_points, encode_classes, encode_field, encode_frame,
    encode_points, ClassVectors, PointCloud,
};
use semsplat::Error;
use semsplat_core::synth::{default_intrinsics, generate_scene, generate_trajectory, random_field, render_frame, NoiseConfig, SceneParams};
use semsplat_core::{GaussianField, ShapeBlock};

fn with_shape(field: GaussianField, tag: u8, seed: u64) -> GaussianField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = field.len();
    let shape = match tag {
        0 => ShapeBlock::None,
        1 => ShapeBlock::Isotropic((0..m).map(|_| rng.random_range(0.01f32..0.2)).collect()),
        _ => ShapeBlock::Anisotropic {
            scales: (0..3 * m).map(|_| rng.random_range(0.01f32..0.2)).collect(),
            rotations: (0..4 * m).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
        },
    };
    let mut field = field;
    field.set_shape(shape).unwrap();
    field
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn field_round_trip_is_byte_identical(seed in any::<u64>(), m in 0usize..300, k in 1usize..40, dim in 1usize..24,
                                          cache_len in 2usize..8, tag in 0u8..3) {
        let (field, codebook) = random_field(m, k, dim, cache_len, seed).unwrap();
        let field = with_shape(field, tag, seed);
        let bytes = encode_field(&field, &codebook).unwrap();
        let (f2, c2) = decode_field(&bytes).unwrap();
        prop_assert_eq!(&f2, &field);
        prop_assert_eq!(&c2, &codebook);
        prop_assert_eq!(encode_field(&f2, &c2).unwrap(), bytes);
    }

    #[test]
    fn truncated_fields_fail_closed(seed in any::<u64>(), cut in 0.0f64..1.0) {
        let (field, codebook) = random_field(50, 8, 8, 6, seed).unwrap();
        let bytes = encode_field(&field, &codebook).unwrap();
        let n = ((bytes.len() - 1) as f64 * cut) as usize;
        let is_format_error = matches!(decode_field(&bytes[..n]), Err(Error::Format { .. }));
        prop_assert!(is_format_error);
    }

    #[test]
    fn points_round_trip(points in prop::collection::vec(prop::array::uniform3(-10.0f32..10.0), 0..200), labeled in any::<bool>()) {
        let labels = labeled.then(|| (0..points.len() as u32).map(|i| i % 7).collect());
        let cloud = PointCloud { points, labels };
        let bytes = encode_points(&cloud).unwrap();
        prop_assert_eq!(decode_points(&bytes).unwrap(), cloud);
    }

    #[test]
    fn class_vectors_round_trip(c in 1usize..20, d in 1usize..32, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let classes = ClassVectors { dim: d, vectors: (0..c * d).map(|_| rng.random_range(-1.0f32..1.0)).collect() };
        let bytes = encode_classes(&classes).unwrap();
        prop_assert_eq!(decode_classes(&bytes).unwrap(), classes);
    }
}

#[test]
fn rendered_frames_round_trip_and_fail_closed() {
    let scene = generate_scene(&SceneParams::default()).unwrap();
    let k = default_intrinsics(20, 15).unwrap();
    let pose = generate_trajectory(&scene, 1, 0).unwrap()[0];
    let mut frame = render_frame(&scene, &pose, &k, &NoiseConfig { feature_sigma: 0.1, ..Default::default() }, 3).unwrap();
    frame.sensor_depth = Some(frame.depth.iter().map(|d| d * 1.01).collect());
    frame.latent_dim = 2;
    frame.latents = Some(vec![0.25; 2 * 20 * 15]);
    let bytes = encode_frame(&frame).unwrap();
    let back = decode_frame(&bytes).unwrap();
    // Intrinsics and pose are stored as f32.
    assert_eq!(encode_frame(&back).unwrap(), bytes);
    assert_eq!(back.depth, frame.depth);
    assert_eq!(back.instance_ids, frame.instance_ids);
    assert_eq!(back.latents, frame.latents);
    for cut in [0, 7, 60, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(decode_frame(&bytes[..cut]), Err(Error::Format { .. })), "cut {cut}");
    }
    let mut bad_flag = bytes.clone();
    let flag_at = 8 + 8 + 24 + 8 + 48 + 20 + 4 * 300;
    assert_eq!(bad_flag[flag_at], 1);
    bad_flag[flag_at] = 7;
    assert!(matches!(decode_frame(&bad_flag), Err(Error::Format { offset, .. }) if offset == flag_at as u64));
}

#[test]
fn wrong_magic_on_every_format() {
    let mut points = encode_points(&PointCloud::default()).unwrap();
    points[1] = b'X';
    assert!(matches!(decode_points(&points), Err(Error::Format { offset: 0, .. })));
    let mut classes = encode_classes(&ClassVectors { dim: 1, vectors: vec![1.0] }).unwrap();
    classes[0] = 0;
    assert!(matches!(decode_classes(&classes), Err(Error::Format { offset: 0, .. })));
    assert!(matches!(decode_frame(b"ESPL\x01\x00\x00\x00"), Err(Error::Format { offset: 0, .. })));
}
