//! Projection of the global field into the current frame and the
//! depth-threshold pairing rule between local pixels and global Gaussians.

use alloc::vec;
use alloc::vec::Vec;

use crate::ingest::LocalGaussians;
use crate::math::Vec3;
use crate::types::{CameraIntrinsics, GaussianField, PairSet, Pose};

/// Pinhole projection of a world point. Pixel indices use floor binning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: i64,
    pub v: i64,
    /// Continuous image coordinates before binning.
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    pub in_frustum: bool,
}

impl Projection {
    /// Row-major pixel index when in the frustum.
    #[inline]
    pub fn pixel(&self, width: u32) -> Option<usize> {
        self.in_frustum.then(|| self.v as usize * width as usize + self.u as usize)
    }
}

#[inline]
pub fn project_point(p: Vec3, k: &CameraIntrinsics, pose: &Pose) -> Projection {
    let c = pose.inverse_transform_point(p);
    let depth = c[2];
    let x = k.fx * c[0] / depth + k.cx;
    let y = k.fy * c[1] / depth + k.cy;
    let (fu, fv) = (libm::floor(x), libm::floor(y));
    let in_frustum = depth > 0.0
        && fu.is_finite()
        && fv.is_finite()
        && fu >= 0.0
        && fv >= 0.0
        && fu < k.width as f64
        && fv < k.height as f64;
    let (u, v) = if in_frustum { (fu as i64, fv as i64) } else { (-1, -1) };
    Projection { u, v, x, y, depth, in_frustum }
}

pub fn project(points: &[Vec3], k: &CameraIntrinsics, pose: &Pose) -> Vec<Projection> {
    points.iter().map(|&p| project_point(p, k, pose)).collect()
}

/// In-frustum pixel and camera depth of every global Gaussian.
fn project_field(field: &GaussianField, k: &CameraIntrinsics, pose: &Pose) -> Vec<Option<(usize, f64)>> {
    let one = |g: usize| {
        let p = project_point(field.center_f64(g), k, pose);
        p.pixel(k.width).map(|px| (px, p.depth))
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..field.len()).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..field.len()).map(one).collect()
    }
}

/// Pairs each valid local pixel with the nearest global Gaussian landing on
/// it, provided the local depth is not more than `delta` in front of that
/// Gaussian. Runs in `O(M + H·W)`: one projection pass fills a per-pixel
/// min-depth grid (ties keep the lowest global index), then one pass over
/// the local pixels resolves pairs. A global Gaussian fuses at most once; a
/// later pixel selecting an already claimed Gaussian goes to `unmatched`.
pub fn build_pairs(local: &LocalGaussians, field: &GaussianField, k: &CameraIntrinsics, pose: &Pose, delta: f64) -> PairSet {
    const NONE: usize = usize::MAX;
    let n = k.pixel_count();
    let mut best_depth = vec![f64::INFINITY; n];
    let mut best_index = vec![NONE; n];
    for (g, hit) in project_field(field, k, pose).into_iter().enumerate() {
        if let Some((px, d)) = hit {
            if d < best_depth[px] {
                best_depth[px] = d;
                best_index[px] = g;
            }
        }
    }

    let mut claimed = vec![false; field.len()];
    let mut out = PairSet::default();
    for (i, &px) in local.pixels.iter().enumerate() {
        let g = best_index[px as usize];
        if g != NONE && local.depths[i] - best_depth[px as usize] > -delta && !claimed[g] {
            claimed[g] = true;
            out.pairs.push((px, g));
        } else {
            out.unmatched.push(px);
        }
    }
    out
}
