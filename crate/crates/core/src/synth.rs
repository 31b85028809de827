//! Procedural scenes of boxes and spheres, a camera trajectory around them
//! and a ray-cast renderer producing frames with known ground truth.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::types::{CameraIntrinsics, Codebook, Frame, GaussianField, Pose};

const HIT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Primitive {
    /// Axis-aligned box.
    Cuboid { min: Vec3, max: Vec3 },
    Sphere { center: Vec3, radius: f64 },
}

impl Primitive {
    /// Smallest ray parameter `t > 0` where `origin + t·dir` lies on the
    /// surface. A ray starting inside reports its exit point.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        match *self {
            Primitive::Cuboid { min, max } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for a in 0..3 {
                    if dir[a] == 0.0 {
                        if origin[a] < min[a] || origin[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / dir[a];
                    let (mut n, mut f) = ((min[a] - origin[a]) * inv, (max[a] - origin[a]) * inv);
                    if n > f {
                        core::mem::swap(&mut n, &mut f);
                    }
                    t0 = t0.max(n);
                    t1 = t1.min(f);
                }
                if t0 > t1 {
                    None
                } else if t0 > HIT_EPS {
                    Some(t0)
                } else if t1 > HIT_EPS {
                    Some(t1)
                } else {
                    None
                }
            }
            Primitive::Sphere { center, radius } => {
                let oc = math::sub(origin, center);
                let a = math::dot(dir, dir);
                let half_b = math::dot(oc, dir);
                let c = math::dot(oc, oc) - radius * radius;
                let disc = half_b * half_b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let root = libm::sqrt(disc);
                let near = (-half_b - root) / a;
                let far = (-half_b + root) / a;
                if near > HIT_EPS {
                    Some(near)
                } else if far > HIT_EPS {
                    Some(far)
                } else {
                    None
                }
            }
        }
    }

    /// Strictly interior points.
    pub fn contains(&self, p: Vec3) -> bool {
        match *self {
            Primitive::Cuboid { min, max } => (0..3).all(|a| p[a] > min[a] && p[a] < max[a]),
            Primitive::Sphere { center, radius } => {
                let d = math::sub(p, center);
                math::dot(d, d) < radius * radius
            }
        }
    }

    pub fn surface_area(&self) -> f64 {
        match *self {
            Primitive::Cuboid { min, max } => {
                let e = math::sub(max, min);
                2.0 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2])
            }
            Primitive::Sphere { radius, .. } => 4.0 * core::f64::consts::PI * radius * radius,
        }
    }

    /// Uniform point on the surface.
    pub fn sample_surface<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec3 {
        match *self {
            Primitive::Cuboid { min, max } => {
                let e = math::sub(max, min);
                let faces = [e[1] * e[2], e[0] * e[2], e[0] * e[1]];
                let total = 2.0 * (faces[0] + faces[1] + faces[2]);
                let mut pick = rng.random::<f64>() * total;
                let mut p = [0.0; 3];
                for axis in 0..3 {
                    for side in 0..2 {
                        if pick < faces[axis] || (axis == 2 && side == 1) {
                            for a in 0..3 {
                                p[a] = min[a] + rng.random::<f64>() * e[a];
                            }
                            p[axis] = if side == 0 { min[axis] } else { max[axis] };
                            return p;
                        }
                        pick -= faces[axis];
                    }
                }
                p
            }
            Primitive::Sphere { center, radius } => {
                let n = loop {
                    let v: Vec3 = [
                        StandardNormal.sample(rng),
                        StandardNormal.sample(rng),
                        StandardNormal.sample(rng),
                    ];
                    let len = math::norm(v);
                    if len > 1e-12 {
                        break math::scale(v, 1.0 / len);
                    }
                };
                math::add(center, math::scale(n, radius))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SceneParams {
    pub seed: u64,
    pub n_instances: usize,
    pub n_classes: usize,
    /// Room extent; the room spans `[0, room]` on each axis.
    pub room: Vec3,
    pub feature_dim: usize,
    /// Upper bound on `|cos|` between any two class prototypes.
    pub separation: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self { seed: 0, n_instances: 16, n_classes: 8, room: [8.0, 8.0, 3.0], feature_dim: 64, separation: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scene {
    pub room: Vec3,
    pub primitives: Vec<Primitive>,
    /// Class of each primitive.
    pub classes: Vec<u32>,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// `num_classes × feature_dim` unit rows.
    pub prototypes: Vec<f32>,
}

impl Scene {
    pub fn prototype(&self, class: u32) -> &[f32] {
        let c = class as usize;
        &self.prototypes[c * self.feature_dim..(c + 1) * self.feature_dim]
    }

    pub fn center(&self) -> Vec3 {
        math::scale(self.room, 0.5)
    }

    /// Nearest primitive hit along a ray: `(t, primitive index)`. Ties keep
    /// the lower index.
    pub fn cast(&self, origin: Vec3, dir: Vec3) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some(t) = p.intersect(origin, dir) {
                if best.is_none_or(|(bt, _)| t < bt) {
                    best = Some((t, i));
                }
            }
        }
        best
    }
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = libm::sqrt(v.iter().map(|x| x * x).sum());
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

const PROTOTYPE_ATTEMPTS: usize = 10_000;

/// `count` random unit vectors with pairwise `|cos| ≤ bound`, by rejection.
pub fn separated_prototypes<R: Rng + ?Sized>(rng: &mut R, count: usize, dim: usize, bound: f64) -> Result<Vec<f32>> {
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(count);
    for c in 0..count {
        let mut attempts = 0;
        let v = loop {
            if attempts == PROTOTYPE_ATTEMPTS {
                return Err(Error::Generation(format!(
                    "no prototype for class {c} with |cos| <= {bound} in dimension {dim} after {PROTOTYPE_ATTEMPTS} draws"
                )));
            }
            attempts += 1;
            let v = random_unit(rng, dim);
            let ok = accepted.iter().all(|u| u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().abs() <= bound);
            if ok {
                break v;
            }
        };
        accepted.push(v);
    }
    // Rounded rows are renormalized in f32 so they are unit at storage precision.
    Ok(accepted
        .iter()
        .flat_map(|v| crate::types::normalized(&v.iter().map(|&x| x as f32).collect::<Vec<_>>()).unwrap_or_default())
        .collect())
}

/// Region of the room the objects occupy; the trajectory orbits outside it.
fn object_region(room: Vec3) -> (Vec3, Vec3) {
    let c = math::scale(room, 0.5);
    let half = [room[0] * 0.25, room[1] * 0.25, room[2] * 0.2];
    (math::sub(c, half), math::add(c, half))
}

/// Boxes and spheres on a jittered grid inside the central region. A single
/// instance becomes a box filling the room minus a 5 cm margin.
pub fn generate_scene(params: &SceneParams) -> Result<Scene> {
    let SceneParams { seed, n_instances, n_classes, room, feature_dim, separation } = *params;
    if n_instances == 0 {
        return Err(Error::Config("scene needs at least one instance".into()));
    }
    if feature_dim < 8 {
        return Err(Error::Config(format!("feature dimension {feature_dim} is below 8")));
    }
    if n_classes == 0 {
        return Err(Error::Config("scene needs at least one class".into()));
    }
    if room.iter().any(|r| !(*r > 0.5) || !r.is_finite()) {
        return Err(Error::Config("room extent must exceed 0.5 m on each axis".into()));
    }
    let prototypes = separated_prototypes(&mut sub_rng(seed, 1), n_classes, feature_dim, separation)?;
    let mut rng = sub_rng(seed, 2);
    let primitives = if n_instances == 1 {
        let margin = 0.05;
        vec![Primitive::Cuboid { min: [margin; 3], max: math::sub(room, [margin; 3]) }]
    } else {
        let (lo, hi) = object_region(room);
        let cols = libm::ceil(libm::sqrt(n_instances as f64)) as usize;
        let rows = n_instances.div_ceil(cols);
        let cell = [(hi[0] - lo[0]) / cols as f64, (hi[1] - lo[1]) / rows as f64];
        let max_half = 0.35 * cell[0].min(cell[1]).min(hi[2] - lo[2]);
        (0..n_instances)
            .map(|i| {
                let (cx, cy) = ((i % cols) as f64, (i / cols) as f64);
                let half: f64 = rng.random_range(0.4 * max_half..=max_half);
                let slack = [0.5 * cell[0] - half, 0.5 * cell[1] - half];
                let center = [
                    lo[0] + (cx + 0.5) * cell[0] + rng.random_range(-0.5..=0.5) * slack[0].max(0.0),
                    lo[1] + (cy + 0.5) * cell[1] + rng.random_range(-0.5..=0.5) * slack[1].max(0.0),
                    rng.random_range(lo[2] + half..=(hi[2] - half).max(lo[2] + half)),
                ];
                if rng.random_bool(0.5) {
                    let e: Vec3 = core::array::from_fn(|_| half * rng.random_range(0.6..=1.0));
                    Primitive::Cuboid { min: math::sub(center, e), max: math::add(center, e) }
                } else {
                    Primitive::Sphere { center, radius: half }
                }
            })
            .collect()
    };
    let classes = (0..n_instances).map(|i| (i % n_classes) as u32).collect();
    Ok(Scene { room, primitives, classes, num_classes: n_classes, feature_dim, prototypes })
}

/// Camera pose at `eye` looking at `target`, with world `+z` up and the
/// camera's image `y` pointing down.
pub fn look_at(eye: Vec3, target: Vec3) -> Result<Pose> {
    let forward = math::sub(target, eye);
    if math::norm(forward) < 1e-9 {
        return Err(Error::InvalidPose("eye and target coincide"));
    }
    let f = math::normalize(forward);
    let side = math::cross(f, [0.0, 0.0, 1.0]);
    let right = if math::norm(side) < 1e-9 { [1.0, 0.0, 0.0] } else { math::normalize(side) };
    let down = math::cross(f, right);
    let rotation = [[right[0], down[0], f[0]], [right[1], down[1], f[1]], [right[2], down[2], f[2]]];
    Pose::new(rotation, eye)
}

/// Seeded orbit around the room center with a varying radius, an
/// oscillating height and an uneven angular step, so that consecutive pose
/// distances fall on both sides of a 0.1 keyframe threshold.
pub fn generate_trajectory(scene: &Scene, n_frames: usize, seed: u64) -> Result<Vec<Pose>> {
    let mut rng = sub_rng(seed, 3);
    let c = scene.center();
    let reach = 0.45 * scene.room[0].min(scene.room[1]);
    let (z_lo, z_hi) = (0.07 * scene.room[2], 0.93 * scene.room[2]);
    let mut angle: f64 = rng.random_range(0.0..core::f64::consts::TAU);
    let mut phase: f64 = rng.random_range(0.0..core::f64::consts::TAU);
    let mut poses = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let radius = reach * (0.95 + 0.05 * libm::sin(1.7 * angle));
        let z = 0.5 * (z_lo + z_hi) + 0.5 * (z_hi - z_lo) * libm::sin(phase);
        let eye = [c[0] + radius * libm::cos(angle), c[1] + radius * libm::sin(angle), z];
        let jitter: Vec3 = core::array::from_fn(|_| rng.random_range(-0.15..=0.15));
        let target = [c[0] + jitter[0], c[1] + jitter[1], c[2] + jitter[2]];
        poses.push(look_at(eye, target)?);
        let step: f64 = rng.random_range(0.004..=0.035);
        angle += step;
        phase += 2.5 * step;
    }
    Ok(poses)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NoiseConfig {
    pub seed: u64,
    /// Per-component standard deviation added to instance features before
    /// renormalization.
    pub feature_sigma: f64,
    /// Depth over which confidence halves.
    pub confidence_half_depth: f64,
    /// Relative per-pixel jitter of confidence, in `[0, 1)`.
    pub confidence_jitter: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { seed: 0, feature_sigma: 0.0, confidence_half_depth: 4.0, confidence_jitter: 0.1 }
    }
}

pub const MIN_CONFIDENCE: f32 = 0.05;

/// Ray-casts every pixel center. `step` selects the noise stream so each
/// frame's noise is independent and reproducible.
pub fn render_frame(scene: &Scene, pose: &Pose, intrinsics: &CameraIntrinsics, noise: &NoiseConfig, step: u64) -> Result<Frame> {
    intrinsics.validate()?;
    pose.validate()?;
    if !(noise.feature_sigma >= 0.0) || !(0.0..1.0).contains(&noise.confidence_jitter) || !(noise.confidence_half_depth > 0.0) {
        return Err(Error::Config("noise parameters out of range".into()));
    }
    let (w, h) = (intrinsics.width as usize, intrinsics.height as usize);
    let mut depth = vec![0.0f32; w * h];
    let mut hit = vec![u32::MAX; w * h];
    let mut rng = sub_rng(noise.seed, step.wrapping_mul(2).wrapping_add(0x5eed));
    let mut confidence = vec![0.0f32; w * h];
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let cam = [(u as f64 + 0.5 - intrinsics.cx) / intrinsics.fx, (v as f64 + 0.5 - intrinsics.cy) / intrinsics.fy, 1.0];
            let dir = math::mat_vec(&pose.rotation, cam);
            // `cam.z == 1`, so the ray parameter is the optical-axis depth.
            let jitter = 1.0 - noise.confidence_jitter * rng.random::<f64>();
            if let Some((t, prim)) = scene.cast(pose.translation, dir) {
                depth[i] = t as f32;
                hit[i] = prim as u32;
                let falloff = libm::exp2(-t / noise.confidence_half_depth);
                confidence[i] = ((falloff * jitter) as f32).clamp(MIN_CONFIDENCE, 1.0);
            }
        }
    }
    let mut visible: Vec<u32> = hit.iter().copied().filter(|&p| p != u32::MAX).collect();
    visible.sort_unstable();
    visible.dedup();
    let instance_ids = hit
        .iter()
        .map(|&p| if p == u32::MAX { 0 } else { visible.binary_search(&p).map_or(0, |k| k as u32 + 1) })
        .collect();
    let dim = scene.feature_dim;
    let mut feature_rng = sub_rng(noise.seed, step.wrapping_mul(2).wrapping_add(0x5eed + 1));
    let mut instance_features = Vec::with_capacity(visible.len() * dim);
    for &p in &visible {
        let proto = scene.prototype(scene.classes[p as usize]);
        if noise.feature_sigma == 0.0 {
            instance_features.extend_from_slice(proto);
            continue;
        }
        let noisy: Vec<f32> = proto
            .iter()
            .map(|&x| x + (noise.feature_sigma * { let z: f64 = StandardNormal.sample(&mut feature_rng); z }) as f32)
            .collect();
        let unit = crate::types::normalized(&noisy).ok_or(Error::Generation("noisy feature collapsed to zero".into()))?;
        instance_features.extend_from_slice(&unit);
    }
    let frame = Frame {
        step,
        intrinsics: *intrinsics,
        pose: *pose,
        depth,
        sensor_depth: None,
        confidence,
        instance_ids,
        feature_dim: dim,
        instance_features,
        latent_dim: 0,
        latents: None,
    };
    frame.validate()?;
    Ok(frame)
}

/// Visible-surface ground truth: `count` points drawn area-proportionally on
/// the primitives, skipping points buried inside another primitive.
/// Returns points and their class labels.
pub fn sample_surface_points(scene: &Scene, count: usize, seed: u64) -> Result<(Vec<[f32; 3]>, Vec<u32>)> {
    let areas: Vec<f64> = scene.primitives.iter().map(Primitive::surface_area).collect();
    let total: f64 = areas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Generation("scene has no surface".into()));
    }
    let mut rng = sub_rng(seed, 4);
    let (mut points, mut labels) = (Vec::with_capacity(count), Vec::with_capacity(count));
    let budget = count.saturating_mul(50).max(1000);
    let mut draws = 0;
    while points.len() < count {
        if draws == budget {
            return Err(Error::Generation(format!("only {} of {count} surface points are exposed", points.len())));
        }
        draws += 1;
        let mut pick = rng.random::<f64>() * total;
        let k = areas.iter().position(|a| {
            pick -= a;
            pick < 0.0
        });
        let k = k.unwrap_or(areas.len() - 1);
        let p = scene.primitives[k].sample_surface(&mut rng);
        if scene.primitives.iter().enumerate().any(|(j, q)| j != k && q.contains(p)) {
            continue;
        }
        points.push([p[0] as f32, p[1] as f32, p[2] as f32]);
        labels.push(scene.classes[k]);
    }
    Ok((points, labels))
}

/// Default camera for synthetic streams: `width × height` with a 70°
/// horizontal field of view.
pub fn default_intrinsics(width: u32, height: u32) -> Result<CameraIntrinsics> {
    let fx = 0.5 * width as f64 / libm::tan(35f64.to_radians());
    CameraIntrinsics::new(fx, fx, 0.5 * width as f64, 0.5 * height as f64, width, height)
}

/// Renders a whole stream along a seeded trajectory.
pub fn generate_stream(
    scene: &Scene,
    intrinsics: &CameraIntrinsics,
    n_frames: usize,
    trajectory_seed: u64,
    noise: &NoiseConfig,
) -> Result<Vec<Frame>> {
    generate_trajectory(scene, n_frames, trajectory_seed)?
        .iter()
        .enumerate()
        .map(|(i, pose)| render_frame(scene, pose, intrinsics, noise, i as u64))
        .collect()
}

/// Benchmark field: `gaussians` rows with 1 to `min(5, L−1)` live entries
/// over a random `codebook_len × dim` codebook. Centers are uniform in the
/// unit cube.
pub fn random_field(gaussians: usize, codebook_len: usize, dim: usize, cache_len: usize, seed: u64) -> Result<(GaussianField, Codebook)> {
    if codebook_len == 0 || dim == 0 {
        return Err(Error::Config("random field needs a non-empty codebook".into()));
    }
    let mut rng = sub_rng(seed, 5);
    let mut codebook = Codebook::new(dim);
    for _ in 0..codebook_len {
        let v: Vec<f32> = random_unit(&mut rng, dim).into_iter().map(|x| x as f32).collect();
        codebook.push_normalized(&v)?;
    }
    let mut field = GaussianField::new(cache_len, 0)?;
    let slots = field.slots();
    let max_live = slots.min(5).min(codebook_len);
    let (mut idx, mut wts) = (vec![0u32; slots], vec![0.0f32; slots]);
    for _ in 0..gaussians {
        idx.fill(0);
        wts.fill(0.0);
        let live = rng.random_range(1..=max_live);
        let mut k = 0;
        while k < live {
            let candidate = rng.random_range(1..=codebook_len as u32);
            if !idx[..k].contains(&candidate) {
                idx[k] = candidate;
                wts[k] = rng.random_range(0.05f32..=1.0);
                k += 1;
            }
        }
        let mut order: Vec<usize> = (0..live).collect();
        order.sort_by(|&a, &b| wts[b].total_cmp(&wts[a]).then(idx[a].cmp(&idx[b])));
        let (si, sw): (Vec<u32>, Vec<f32>) = order.iter().map(|&o| (idx[o], wts[o])).unzip();
        idx[..live].copy_from_slice(&si);
        wts[..live].copy_from_slice(&sw);
        let center: [f32; 3] = core::array::from_fn(|_| rng.random::<f32>());
        field.push(center, rng.random_range(0.05f32..=1.0), &[], &idx, &wts)?;
    }
    Ok((field, codebook))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scene() -> Scene {
        generate_scene(&SceneParams { seed: 3, ..Default::default() }).unwrap()
    }

    #[test]
    fn scenes_are_deterministic() {
        assert_eq!(small_scene(), small_scene());
        let other = generate_scene(&SceneParams { seed: 4, ..Default::default() }).unwrap();
        assert_ne!(small_scene(), other);
    }

    #[test]
    fn single_instance_fills_the_room() {
        let scene = generate_scene(&SceneParams { n_instances: 1, ..Default::default() }).unwrap();
        assert_eq!(scene.primitives.len(), 1);
        assert!(scene.primitives[0].contains(scene.center()));
    }

    #[test]
    fn prototypes_respect_the_separation_bound() {
        let scene = generate_scene(&SceneParams { n_classes: 16, n_instances: 16, ..Default::default() }).unwrap();
        for a in 0..16u32 {
            let pa = scene.prototype(a);
            let n: f32 = pa.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-5);
            for b in 0..a {
                let c: f32 = pa.iter().zip(scene.prototype(b)).map(|(x, y)| x * y).sum();
                assert!(c.abs() <= 0.3 + 1e-6);
            }
        }
    }

    #[test]
    fn impossible_separation_is_a_generation_error() {
        let p = SceneParams { n_classes: 40, feature_dim: 8, separation: 0.01, ..Default::default() };
        assert!(matches!(generate_scene(&p), Err(Error::Generation(_))));
        assert!(generate_scene(&SceneParams { feature_dim: 4, ..Default::default() }).is_err());
    }

    fn sphere_scene(radius: f64) -> Scene {
        Scene {
            room: [4.0; 3],
            primitives: vec![Primitive::Sphere { center: [0.0, 0.0, 0.0], radius }],
            classes: vec![0],
            num_classes: 1,
            feature_dim: 8,
            prototypes: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        }
    }

    #[test]
    fn sphere_on_axis_gives_distance_minus_radius() {
        let scene = sphere_scene(0.5);
        let k = CameraIntrinsics::new(10.0, 10.0, 2.5, 2.5, 5, 5).unwrap();
        let pose = Pose::from_translation([0.0, 0.0, -3.0]);
        let frame = render_frame(&scene, &pose, &k, &NoiseConfig::default(), 0).unwrap();
        assert!((frame.depth[12] as f64 - 2.5).abs() < 1e-6);
        assert_eq!(frame.instance_ids[12], 1);
        assert_eq!(frame.instance_feature(1).unwrap(), scene.prototype(0));
        assert!(frame.confidence[12] >= MIN_CONFIDENCE && frame.confidence[12] <= 1.0);
    }

    #[test]
    fn empty_view_has_no_depth() {
        let scene = sphere_scene(0.5);
        let k = CameraIntrinsics::new(10.0, 10.0, 2.5, 2.5, 5, 5).unwrap();
        let pose = Pose::from_translation([0.0, 0.0, 3.0]);
        let frame = render_frame(&scene, &pose, &k, &NoiseConfig::default(), 0).unwrap();
        assert!(frame.depth.iter().all(|&d| d == 0.0));
        assert!(frame.instance_ids.iter().all(|&i| i == 0));
        assert_eq!(frame.instance_count(), 0);
    }

    #[test]
    fn trajectory_is_deterministic_and_sized() {
        let scene = small_scene();
        assert_eq!(generate_trajectory(&scene, 1, 9).unwrap().len(), 1);
        let a = generate_trajectory(&scene, 50, 9).unwrap();
        assert_eq!(a, generate_trajectory(&scene, 50, 9).unwrap());
    }

    #[test]
    fn noisy_features_stay_unit_and_reproducible() {
        let scene = small_scene();
        let k = default_intrinsics(32, 24).unwrap();
        let pose = generate_trajectory(&scene, 1, 1).unwrap()[0];
        let noise = NoiseConfig { feature_sigma: 0.1, ..Default::default() };
        let a = render_frame(&scene, &pose, &k, &noise, 7).unwrap();
        assert_eq!(a, render_frame(&scene, &pose, &k, &noise, 7).unwrap());
        assert!(a.instance_count() > 0);
        for id in 1..=a.instance_count() as u32 {
            let n: f32 = a.instance_feature(id).unwrap().iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn random_field_is_valid() {
        let (field, codebook) = random_field(200, 30, 16, 6, 1).unwrap();
        assert_eq!(field.len(), 200);
        assert!(crate::types::validate_field(&field, &codebook).is_empty());
    }
}
