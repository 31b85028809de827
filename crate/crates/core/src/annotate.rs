//! Transfer of per-Gaussian class probabilities onto an external point
//! cloud, and segmentation metrics against ground-truth labels.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Vec3};
use crate::types::{GaussianField, LabeledPointCloud, ShapeBlock};

/// Covariance model of one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GaussianShape {
    Isotropic(f64),
    /// Per-axis standard deviations in the frame of `rotation`.
    Anisotropic { scale: Vec3, rotation: Mat3 },
}

/// `exp(−½ (p−μ)ᵀ Σ⁻¹ (p−μ))`.
pub fn mahalanobis_weight(point: Vec3, center: Vec3, shape: &GaussianShape) -> Result<f64> {
    let d = math::sub(point, center);
    let m2 = match shape {
        GaussianShape::Isotropic(sigma) => {
            if !(*sigma > 0.0) {
                return Err(Error::Contract(format!("sigma {sigma} must be positive")));
            }
            math::dot(d, d) / (sigma * sigma)
        }
        GaussianShape::Anisotropic { scale, rotation } => {
            if scale.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::Contract("anisotropic scales must be positive".into()));
            }
            let local = math::mat_t_vec(rotation, d);
            (0..3).map(|i| (local[i] / scale[i]) * (local[i] / scale[i])).sum()
        }
    };
    Ok(libm::exp(-0.5 * m2))
}

type CellKey = (i64, i64, i64);

/// Uniform grid over a static point set, stored as `(cell, index)` pairs
/// sorted by cell so each cell is one contiguous run.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    cell: f64,
    entries: Vec<(CellKey, u32)>,
}

impl SpatialGrid {
    pub fn new(points: &[Vec3], cell: f64) -> Result<Self> {
        if !(cell > 0.0) || !cell.is_finite() {
            return Err(Error::Contract(format!("grid cell size {cell} must be positive")));
        }
        let mut entries: Vec<(CellKey, u32)> =
            points.iter().enumerate().map(|(i, &p)| (Self::key(p, cell), i as u32)).collect();
        entries.sort_unstable();
        Ok(Self { cell, entries })
    }

    #[inline]
    fn key(p: Vec3, cell: f64) -> CellKey {
        (libm::floor(p[0] / cell) as i64, libm::floor(p[1] / cell) as i64, libm::floor(p[2] / cell) as i64)
    }

    fn bucket(&self, key: CellKey) -> &[(CellKey, u32)] {
        let lo = self.entries.partition_point(|(k, _)| *k < key);
        let hi = lo + self.entries[lo..].partition_point(|(k, _)| *k <= key);
        &self.entries[lo..hi]
    }

    /// Indices of the points in the 27 cells around `p`, unsorted.
    pub fn candidates(&self, p: Vec3, out: &mut Vec<u32>) {
        out.clear();
        let (x, y, z) = Self::key(p, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    out.extend(self.bucket((x + dx, y + dy, z + dz)).iter().map(|(_, i)| *i));
                }
            }
        }
    }

    /// Indices within `radius` (≤ cell size) of `p`, ascending.
    pub fn within(&self, points: &[Vec3], p: Vec3, radius: f64, out: &mut Vec<u32>) {
        debug_assert!(radius <= self.cell);
        self.candidates(p, out);
        let r2 = radius * radius;
        out.retain(|&i| {
            let d = math::sub(points[i as usize], p);
            math::dot(d, d) <= r2
        });
        out.sort_unstable();
    }
}

fn field_centers(field: &GaussianField) -> Vec<Vec3> {
    (0..field.len()).map(|g| field.center_f64(g)).collect()
}

/// Median distance from each center to its nearest other center, among
/// centers that have a neighbor within `radius`.
pub fn median_nearest_neighbor_distance(centers: &[Vec3], radius: f64) -> Result<Option<f64>> {
    let grid = SpatialGrid::new(centers, radius)?;
    let mut buf = Vec::new();
    let mut nearest = Vec::with_capacity(centers.len());
    for (i, &c) in centers.iter().enumerate() {
        grid.within(centers, c, radius, &mut buf);
        let best = buf
            .iter()
            .filter(|&&j| j as usize != i)
            .map(|&j| math::norm(math::sub(centers[j as usize], c)))
            .fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            nearest.push(best);
        }
    }
    if nearest.is_empty() {
        return Ok(None);
    }
    nearest.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = nearest.len();
    Ok(Some(if n % 2 == 1 { nearest[n / 2] } else { 0.5 * (nearest[n / 2 - 1] + nearest[n / 2]) }))
}

/// Isotropic sigma used when the field carries no shapes: half the median
/// nearest-neighbor distance, or half the radius for isolated centers.
pub fn default_sigma(field: &GaussianField, radius: f64) -> Result<f64> {
    Ok(match median_nearest_neighbor_distance(&field_centers(field), radius)? {
        Some(d) if d > 0.0 => 0.5 * d,
        _ => 0.5 * radius,
    })
}

fn shape_of(field: &GaussianField, g: usize, sigma: f64) -> GaussianShape {
    match field.shape() {
        ShapeBlock::None => GaussianShape::Isotropic(sigma),
        ShapeBlock::Isotropic(s) => GaussianShape::Isotropic(s[g] as f64),
        ShapeBlock::Anisotropic { scales, rotations } => {
            let s = &scales[3 * g..3 * g + 3];
            let q = &rotations[4 * g..4 * g + 4];
            GaussianShape::Anisotropic {
                scale: [s[0] as f64, s[1] as f64, s[2] as f64],
                rotation: math::quat_to_mat([q[0] as f64, q[1] as f64, q[2] as f64, q[3] as f64]),
            }
        }
    }
}

/// Logits of one point from an ascending list of neighbor indices.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_logits(
    p: Vec3,
    neighbors: &[u32],
    centers: &[Vec3],
    field: &GaussianField,
    probs: &[f32],
    classes: usize,
    sigma: f64,
    acc: &mut [f64],
) -> Result<()> {
    acc.fill(0.0);
    for &g in neighbors {
        let g = g as usize;
        let w = mahalanobis_weight(p, centers[g], &shape_of(field, g, sigma))?;
        for (a, &pr) in acc.iter_mut().zip(&probs[g * classes..(g + 1) * classes]) {
            *a += w * pr as f64;
        }
    }
    Ok(())
}

/// Labels `points` by summing Mahalanobis-weighted probability rows of all
/// Gaussians within `radius`. Points without any contributing Gaussian get
/// zero logits and the sentinel label `classes`.
///
/// `sigma` is the isotropic sigma for fields without shapes; `None` picks
/// [`default_sigma`].
pub fn annotate_points(
    points: &[[f32; 3]],
    field: &GaussianField,
    probs: &[f32],
    classes: usize,
    radius: f64,
    sigma: Option<f64>,
) -> Result<LabeledPointCloud> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Contract(format!("radius {radius} must be positive")));
    }
    if classes == 0 || probs.len() != field.len() * classes {
        return Err(Error::Shape(format!("{} probabilities for {} Gaussians × {classes} classes", probs.len(), field.len())));
    }
    let sigma = match sigma {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::Contract(format!("sigma {s} must be positive"))),
        None => default_sigma(field, radius)?,
    };
    let centers = field_centers(field);
    let grid = SpatialGrid::new(&centers, radius)?;

    let label_one = |p: &[f32; 3], logits: &mut [f32], neighbors: &mut Vec<u32>, acc: &mut Vec<f64>| -> Result<u32> {
        let p = [p[0] as f64, p[1] as f64, p[2] as f64];
        grid.within(&centers, p, radius, neighbors);
        accumulate_logits(p, neighbors, &centers, field, probs, classes, sigma, acc)?;
        for (l, &a) in logits.iter_mut().zip(acc.iter()) {
            *l = a as f32;
        }
        Ok(if logits.iter().all(|&l| l == 0.0) { classes as u32 } else { crate::query::argmax(logits) as u32 })
    };

    let mut logits = vec![0.0f32; points.len() * classes];
    let mut labels = vec![0u32; points.len()];
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        logits
            .par_chunks_mut(classes)
            .zip(labels.par_iter_mut())
            .zip(points.par_iter())
            .try_for_each_init(
                || (Vec::new(), vec![0.0f64; classes]),
                |(nb, acc), ((lg, lb), p)| {
                    *lb = label_one(p, lg, nb, acc)?;
                    Ok::<(), Error>(())
                },
            )?;
    }
    #[cfg(not(feature = "parallel"))]
    {
        let (mut nb, mut acc) = (Vec::new(), vec![0.0f64; classes]);
        for ((lg, lb), p) in logits.chunks_exact_mut(classes).zip(labels.iter_mut()).zip(points) {
            *lb = label_one(p, lg, &mut nb, &mut acc)?;
        }
    }
    Ok(LabeledPointCloud { points: points.to_vec(), num_classes: classes, logits, labels })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SegmentationMetrics {
    /// Per-class IoU; `None` for classes absent from both prediction and
    /// ground truth.
    pub iou: Vec<Option<f64>>,
    pub miou: f64,
    /// Per-class accuracy (recall); `None` for classes absent from ground truth.
    pub accuracy: Vec<Option<f64>>,
    pub macc: f64,
    /// Points with a ground-truth class that received the unlabeled sentinel.
    pub unlabeled: usize,
    pub evaluated: usize,
}

/// IoU/accuracy per class. Label `classes` is the unlabeled sentinel: points
/// whose ground truth is the sentinel are skipped, and a sentinel
/// prediction counts as a miss for the true class.
pub fn segmentation_metrics(predicted: &[u32], ground_truth: &[u32], classes: usize) -> Result<SegmentationMetrics> {
    if predicted.len() != ground_truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} ground-truth labels", predicted.len(), ground_truth.len())));
    }
    let sentinel = classes as u32;
    if let Some(bad) = predicted.iter().chain(ground_truth).find(|&&l| l > sentinel) {
        return Err(Error::Contract(format!("label {bad} outside [0, {classes}]")));
    }
    let (mut tp, mut fp, mut fnn) = (vec![0usize; classes], vec![0usize; classes], vec![0usize; classes]);
    let (mut unlabeled, mut evaluated) = (0, 0);
    for (&p, &g) in predicted.iter().zip(ground_truth) {
        if g == sentinel {
            continue;
        }
        evaluated += 1;
        if p == g {
            tp[g as usize] += 1;
            continue;
        }
        fnn[g as usize] += 1;
        if p == sentinel {
            unlabeled += 1;
        } else {
            fp[p as usize] += 1;
        }
    }
    let iou: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let denom = tp[c] + fp[c] + fnn[c];
            (denom > 0).then(|| tp[c] as f64 / denom as f64)
        })
        .collect();
    let accuracy: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let gt = tp[c] + fnn[c];
            (gt > 0).then(|| tp[c] as f64 / gt as f64)
        })
        .collect();
    let mean = |v: &[Option<f64>]| {
        let (s, n) = v.iter().flatten().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        if n == 0 {
            0.0
        } else {
            s / n as f64
        }
    };
    Ok(SegmentationMetrics { miou: mean(&iou), macc: mean(&accuracy), iou, accuracy, unlabeled, evaluated })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_examples() {
        let iso = GaussianShape::Isotropic(0.1);
        assert_eq!(mahalanobis_weight([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], &iso).unwrap(), 1.0);
        for axis in 0..3 {
            let mut p = [0.0; 3];
            p[axis] = 0.1;
            let w = mahalanobis_weight(p, [0.0; 3], &iso).unwrap();
            assert!((w - libm::exp(-0.5)).abs() < 1e-12);
            assert!((w - 0.6065).abs() < 1e-4);
        }
        let w = mahalanobis_weight([0.0, 0.3, 0.0], [0.0; 3], &iso).unwrap();
        assert!((w - libm::exp(-4.5)).abs() < 1e-12 && (w - 0.0111).abs() < 1e-4);
        assert!(mahalanobis_weight([0.0; 3], [0.0; 3], &GaussianShape::Isotropic(0.0)).is_err());
    }

    #[test]
    fn anisotropic_weight_follows_rotated_axes() {
        let rot = math::axis_angle([0.0, 0.0, 1.0], core::f64::consts::FRAC_PI_2);
        let shape = GaussianShape::Anisotropic { scale: [0.2, 0.1, 0.1], rotation: rot };
        // Local x maps to world y, so a 0.2 step along world y is one sigma.
        let w = mahalanobis_weight([0.0, 0.2, 0.0], [0.0; 3], &shape).unwrap();
        assert!((w - libm::exp(-0.5)).abs() < 1e-12);
        let bad = GaussianShape::Anisotropic { scale: [0.2, 0.0, 0.1], rotation: rot };
        assert!(mahalanobis_weight([0.0; 3], [0.0; 3], &bad).is_err());
    }

    fn single_gaussian_field() -> GaussianField {
        let mut field = GaussianField::new(2, 0).unwrap();
        field.push([1.0, 1.0, 1.0], 1.0, &[], &[0], &[0.0]).unwrap();
        field
    }

    #[test]
    fn point_at_center_takes_the_gaussian_row() {
        let field = single_gaussian_field();
        let out = annotate_points(&[[1.0, 1.0, 1.0]], &field, &[0.2, 0.5, 0.3], 3, 0.2, Some(0.05)).unwrap();
        assert_eq!(out.logits, vec![0.2, 0.5, 0.3]);
        assert_eq!(out.labels, vec![1]);
    }

    #[test]
    fn far_point_is_unlabeled() {
        let field = single_gaussian_field();
        let out = annotate_points(&[[2.0, 1.0, 1.0]], &field, &[0.2, 0.5, 0.3], 3, 0.2, None).unwrap();
        assert_eq!(out.logits, vec![0.0; 3]);
        assert_eq!(out.labels, vec![3]);
        assert!(annotate_points(&[[0.0; 3]], &field, &[0.2, 0.5, 0.3], 3, 0.0, None).is_err());
    }

    #[test]
    fn metrics_examples() {
        let gt = [0, 0, 0, 1, 1, 1];
        let perfect = segmentation_metrics(&gt, &gt, 2).unwrap();
        assert_eq!((perfect.miou, perfect.macc), (1.0, 1.0));
        let m = segmentation_metrics(&[0, 0, 1, 1, 1, 1], &gt, 2).unwrap();
        assert!((m.iou[0].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.iou[1].unwrap() - 0.75).abs() < 1e-12);
        assert!((m.miou - 0.708333).abs() < 1e-6);
        let disjoint = segmentation_metrics(&[1, 1, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(disjoint.iou, vec![Some(0.0), Some(0.0)]);
        assert!(segmentation_metrics(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn sentinel_counts_as_a_miss_and_absent_classes_are_skipped() {
        let m = segmentation_metrics(&[0, 3, 0], &[0, 0, 3], 3).unwrap();
        assert_eq!(m.iou, vec![Some(0.5), None, None]);
        assert_eq!(m.unlabeled, 1);
        assert_eq!(m.evaluated, 2);
        assert_eq!(m.miou, 0.5);
    }
}
