//! Stream ingestion: keyframe gating, sensor-depth hole filling and
//! unprojection of valid pixels into world-space local Gaussians.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::types::{Frame, Pose};

/// Distance between two camera poses from their relative transform:
/// `sqrt(‖t‖² + ⅔·tr(I − R))`.
pub fn pose_distance(rel: &Pose) -> Result<f64> {
    rel.validate()?;
    let t = rel.translation;
    let radicand = math::dot(t, t) + (2.0 / 3.0) * (3.0 - math::trace(&rel.rotation));
    Ok(libm::sqrt(radicand.max(0.0)))
}

/// True when `current` moved more than `threshold` away from the last
/// accepted keyframe.
pub fn is_keyframe(current: &Pose, last_keyframe: &Pose, threshold: f64) -> Result<bool> {
    if !(threshold > 0.0) {
        return Err(Error::Contract(format!("keyframe threshold {threshold} must be positive")));
    }
    current.validate()?;
    last_keyframe.validate()?;
    let rel = last_keyframe.inverse().compose(current);
    Ok(pose_distance(&rel)? > threshold)
}

/// Keeps sensor depth inside `(valid_min, valid_max)` and falls back to the
/// predicted depth everywhere else.
pub fn fill_depth(sensor: &[f32], predicted: &[f32], valid_min: f64, valid_max: f64) -> Result<Vec<f32>> {
    if sensor.len() != predicted.len() {
        return Err(Error::Shape(format!("sensor depth has {} pixels, predicted {}", sensor.len(), predicted.len())));
    }
    Ok(sensor
        .iter()
        .zip(predicted)
        .map(|(&s, &p)| if (s as f64) > valid_min && (s as f64) < valid_max { s } else { p })
        .collect())
}

/// Depth map the engine fuses: hole-filled sensor depth when the frame
/// carries one, otherwise the predicted depth.
pub fn effective_depth(frame: &Frame, valid_min: f64, valid_max: f64) -> Result<Vec<f32>> {
    match &frame.sensor_depth {
        Some(sensor) => fill_depth(sensor, &frame.depth, valid_min, valid_max),
        None => Ok(frame.depth.clone()),
    }
}

/// Camera-space point of the continuous image coordinate `(x, y)` at depth `d`.
#[inline]
pub fn unproject_coords(fx: f64, fy: f64, cx: f64, cy: f64, x: f64, y: f64, d: f64) -> Vec3 {
    [d * (x - cx) / fx, d * (y - cy) / fy, d]
}

/// Valid pixels of one frame lifted to world space, in row-major pixel order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalGaussians {
    pub pixels: Vec<u32>,
    pub centers: Vec<Vec3>,
    pub depths: Vec<f64>,
    pub confidences: Vec<f32>,
    pub instance_ids: Vec<u32>,
    pub latent_dim: usize,
    pub latents: Vec<f32>,
}

impl LocalGaussians {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn latent(&self, i: usize) -> &[f32] {
        &self.latents[i * self.latent_dim..(i + 1) * self.latent_dim]
    }
}

/// Unprojects every pixel of `depth` with nonzero depth. Pixel `(u, v)` is
/// lifted through its center `(u + 0.5, v + 0.5)`, so floor binning in
/// [`crate::pairing::project`] maps it back to the same pixel.
pub fn unproject_depth(frame: &Frame, depth: &[f32]) -> Result<LocalGaussians> {
    let k = &frame.intrinsics;
    let (w, h) = (frame.width(), frame.height());
    if depth.len() != w * h {
        return Err(Error::Shape(format!("depth has {} pixels, frame {}", depth.len(), w * h)));
    }
    let latent_dim = if frame.latents.is_some() { frame.latent_dim } else { 0 };
    let mut out = LocalGaussians { latent_dim, ..Default::default() };
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            let d = depth[i];
            if d == 0.0 {
                continue;
            }
            let d = d as f64;
            let cam = unproject_coords(k.fx, k.fy, k.cx, k.cy, u as f64 + 0.5, v as f64 + 0.5, d);
            out.pixels.push(i as u32);
            out.centers.push(frame.pose.transform_point(cam));
            out.depths.push(d);
            out.confidences.push(frame.confidence[i]);
            out.instance_ids.push(frame.instance_ids[i]);
            if let Some(latents) = &frame.latents {
                out.latents.extend_from_slice(&latents[i * latent_dim..(i + 1) * latent_dim]);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyFrame);
    }
    Ok(out)
}

/// [`unproject_depth`] on the frame's own depth map.
pub fn unproject(frame: &Frame) -> Result<LocalGaussians> {
    unproject_depth(frame, &frame.depth)
}
