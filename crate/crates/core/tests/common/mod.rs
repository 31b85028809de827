//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code, clippy::too_many_arguments, clippy::neg_cmp_op_on_partial_ord)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semsplat_core::fusion::step;
use semsplat_core::ingest::{is_keyframe, unproject};
use semsplat_core::synth::{self, look_at, NoiseConfig, SceneParams};
use semsplat_core::types::PairSet;
use semsplat_core::{CameraIntrinsics, Codebook, EngineConfig, Frame, GaussianField, Pose};

/// Pinhole projection written out directly: `K · Rᵀ(p − t)` with floor
/// binning, returning `(pixel, depth)` when inside the image.
pub fn project_reference(p: [f64; 3], frame: &Frame) -> Option<(usize, f64)> {
    let r = &frame.pose.rotation;
    let d = [p[0] - frame.pose.translation[0], p[1] - frame.pose.translation[1], p[2] - frame.pose.translation[2]];
    let cam: Vec<f64> = (0..3).map(|j| r[0][j] * d[0] + r[1][j] * d[1] + r[2][j] * d[2]).collect();
    if !(cam[2] > 0.0) {
        return None;
    }
    let k = &frame.intrinsics;
    let x = (k.fx * cam[0] / cam[2] + k.cx).floor();
    let y = (k.fy * cam[1] / cam[2] + k.cy).floor();
    if !(x >= 0.0 && y >= 0.0 && x < k.width as f64 && y < k.height as f64) {
        return None;
    }
    Some((y as usize * k.width as usize + x as usize, cam[2]))
}

/// `O(M·H·W)` pairing: for every valid pixel scan all Gaussians for the
/// nearest one projecting onto it (lowest index on ties), then apply the
/// depth rule with each Gaussian claimable once, in pixel order.
pub fn pairs_reference(frame: &Frame, field: &GaussianField, delta: f64) -> PairSet {
    let projections: Vec<Option<(usize, f64)>> = (0..field.len()).map(|g| project_reference(field.center_f64(g), frame)).collect();
    let mut claimed = vec![false; field.len()];
    let mut out = PairSet::default();
    for px in 0..frame.depth.len() {
        let d = frame.depth[px];
        if d == 0.0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (g, p) in projections.iter().enumerate() {
            if let Some((gp, gd)) = *p {
                if gp == px && best.is_none_or(|(_, bd)| gd < bd) {
                    best = Some((g, gd));
                }
            }
        }
        match best {
            Some((g, gd)) if d as f64 - gd > -delta && !claimed[g] => {
                claimed[g] = true;
                out.pairs.push((px as u32, g));
            }
            _ => out.unmatched.push(px as u32),
        }
    }
    out
}

/// Per-Gaussian confidence-weighted running average of unit instance
/// features, kept in full dimension.
#[derive(Debug, Clone, Default)]
pub struct DenseOracle {
    pub dim: usize,
    /// `Σ w·s` per Gaussian.
    pub sums: Vec<Vec<f64>>,
    /// `Σ w` per Gaussian.
    pub mass: Vec<f64>,
}

impl DenseOracle {
    pub fn new(dim: usize) -> Self {
        Self { dim, ..Default::default() }
    }

    fn unit_feature(frame: &Frame, id: u32) -> Vec<f64> {
        if id == 0 {
            return vec![0.0; frame.feature_dim];
        }
        let v: Vec<f64> = frame.instance_feature(id).unwrap().iter().map(|&x| x as f64).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    /// Applies one step given the pairs it produced. `weight` maps a pixel
    /// confidence to its contribution weight.
    pub fn apply(&mut self, frame: &Frame, pairs: &PairSet, weight: impl Fn(f64) -> f64) {
        for &(px, g) in &pairs.pairs {
            let w = weight(frame.confidence[px as usize] as f64);
            let s = Self::unit_feature(frame, frame.instance_ids[px as usize]);
            for (a, b) in self.sums[g].iter_mut().zip(&s) {
                *a += w * b;
            }
            self.mass[g] += w;
        }
        for &px in &pairs.unmatched {
            let w = weight(frame.confidence[px as usize] as f64);
            let s = Self::unit_feature(frame, frame.instance_ids[px as usize]);
            self.sums.push(s.iter().map(|x| w * x).collect());
            self.mass.push(w);
        }
    }

    /// Renormalized average direction; `None` when nothing nonzero was seen.
    pub fn feature(&self, g: usize) -> Option<Vec<f64>> {
        let n: f64 = self.sums[g].iter().map(|x| x * x).sum();
        (n > 0.0).then(|| self.sums[g].iter().map(|x| x / self.mass[g]).collect())
    }
}

/// Keyframe-gated run that drives [`step`] directly so every step's pairs
/// can be fed to a [`DenseOracle`].
pub fn run_with_oracle(
    frames: &[Frame],
    config: &EngineConfig,
    weight: impl Fn(f64) -> f64 + Copy,
) -> (GaussianField, Codebook, DenseOracle) {
    let mut field = GaussianField::new(config.cache_len, 0).unwrap();
    let mut codebook = Codebook::new(0);
    let mut oracle = DenseOracle::new(frames[0].feature_dim);
    let mut last: Option<Pose> = None;
    for frame in frames {
        if let Some(prev) = last {
            if !is_keyframe(&frame.pose, &prev, config.keyframe_threshold).unwrap() {
                continue;
            }
        }
        if unproject(frame).is_err() {
            continue;
        }
        let report = step(&mut field, &mut codebook, frame, config).unwrap();
        oracle.apply(frame, &report.pairs, weight);
        last = Some(frame.pose);
    }
    (field, codebook, oracle)
}

/// Small rendered stream of a seeded scene.
pub fn synthetic_stream(seed: u64, instances: usize, classes: usize, dim: usize, frames: usize, w: u32, h: u32, sigma: f64) -> (synth::Scene, Vec<Frame>) {
    let scene = synth::generate_scene(&SceneParams { seed, n_instances: instances, n_classes: classes, feature_dim: dim, ..Default::default() }).unwrap();
    let k = synth::default_intrinsics(w, h).unwrap();
    let noise = NoiseConfig { seed, feature_sigma: sigma, ..Default::default() };
    let frames = synth::generate_stream(&scene, &k, frames, seed, &noise).unwrap();
    (scene, frames)
}

/// All-pairs annotation: every Gaussian within `radius` contributes its
/// probability row scaled by `exp(−½ d²/σ²)`, summed in index order.
pub fn annotate_reference(points: &[[f32; 3]], field: &GaussianField, probs: &[f32], classes: usize, radius: f64, sigma: f64) -> Vec<u32> {
    points
        .iter()
        .map(|p| {
            let p = [p[0] as f64, p[1] as f64, p[2] as f64];
            let mut logits = vec![0.0f64; classes];
            for g in 0..field.len() {
                let c = field.center_f64(g);
                let d2: f64 = (0..3).map(|a| (p[a] - c[a]) * (p[a] - c[a])).sum();
                if d2 <= radius * radius {
                    let w = (-0.5 * (d2 / (sigma * sigma))).exp();
                    for (l, &pr) in logits.iter_mut().zip(&probs[g * classes..(g + 1) * classes]) {
                        *l += w * pr as f64;
                    }
                }
            }
            let logits: Vec<f32> = logits.into_iter().map(|x| x as f32).collect();
            if logits.iter().all(|&l| l == 0.0) {
                return classes as u32;
            }
            let mut best = 0;
            for c in 1..classes {
                if logits[c] > logits[best] {
                    best = c;
                }
            }
            best as u32
        })
        .collect()
}

fn random_cube(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<[f64; 3]> {
    (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-extent..extent))).collect()
}

/// Random camera looking at the origin, a field of Gaussians scattered in
/// front of it and a depth map with holes. A share of the Gaussians are
/// copies of unprojected pixels so that pairs actually form.
pub fn random_pairing_case(seed: u64, w: u32, h: u32, max_gaussians: usize) -> (Frame, GaussianField) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eye = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(1.0..3.0)];
    let pose = look_at(eye, [0.0, 0.0, 0.0]).unwrap();
    let f = rng.random_range(0.6..1.4) * w as f64;
    let k = CameraIntrinsics::new(f, f, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap();
    let n = (w * h) as usize;
    let hole_rate = rng.random_range(0.0..0.5);
    let depth: Vec<f32> =
        (0..n).map(|_| if rng.random_bool(hole_rate) { 0.0 } else { rng.random_range(0.5f32..6.0) }).collect();
    let frame = Frame {
        step: 0,
        intrinsics: k,
        pose,
        depth,
        sensor_depth: None,
        confidence: vec![1.0; n],
        instance_ids: vec![0; n],
        feature_dim: 0,
        instance_features: vec![],
        latent_dim: 0,
        latents: None,
    };
    let local = unproject(&frame).ok();
    let mut field = GaussianField::new(4, 0).unwrap();
    let count = rng.random_range(0..=max_gaussians);
    for _ in 0..count {
        let c = match &local {
            Some(l) if rng.random_bool(0.5) => {
                let i = rng.random_range(0..l.len());
                let jitter = rng.random_range(-0.3..0.3);
                let p = l.centers[i];
                let dir = semsplat_core::math::normalize(semsplat_core::math::sub(p, eye));
                semsplat_core::math::add(p, semsplat_core::math::scale(dir, jitter))
            }
            _ => [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-2.0..2.0)],
        };
        field.push([c[0] as f32, c[1] as f32, c[2] as f32], 1.0, &[], &[0; 3], &[0.0; 3]).unwrap();
    }
    (frame, field)
}

/// Small field with centers in a cube and random probability rows.
pub fn annotation_case(seed: u64, m: usize, n: usize, classes: usize) -> (GaussianField, Vec<f32>, Vec<[f32; 3]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = GaussianField::new(2, 0).unwrap();
    for c in random_cube(&mut rng, m, 0.5) {
        field.push([c[0] as f32, c[1] as f32, c[2] as f32], 1.0, &[], &[0], &[0.0]).unwrap();
    }
    let probs: Vec<f32> = (0..m * classes).map(|_| rng.random_range(0.0f32..1.0)).collect();
    let points = random_cube(&mut rng, n, 0.7).into_iter().map(|p| [p[0] as f32, p[1] as f32, p[2] as f32]).collect();
    (field, probs, points)
}
