//! Shared domain types: camera model, frames, the global codebook and the
//! columnar Gaussian field with its sparse index/weight caches.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Vec3};

/// Tolerance used for rotation orthonormality and codebook unit norms.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Pinhole intrinsics. Pixel `(u, v)` covers `[u, u+1) × [v, v+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidIntrinsics("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidIntrinsics("image size must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) || !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidIntrinsics("principal point outside the image"));
        }
        Ok(())
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub const fn identity() -> Self {
        Self { rotation: math::IDENTITY, translation: [0.0; 3] }
    }

    /// Builds a pose, rejecting rotations that are not proper orthonormal.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let pose = Self { rotation, translation };
        pose.validate()?;
        Ok(pose)
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: math::IDENTITY, translation }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if r.iter().flatten().chain(self.translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPose("non-finite entry"));
        }
        let rtr = math::mat_mul(&math::transpose(r), r);
        for (i, row) in rtr.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                if (v - expected).abs() > UNIT_TOLERANCE {
                    return Err(Error::InvalidPose("rotation is not orthonormal"));
                }
            }
        }
        if (math::determinant(r) - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::InvalidPose("rotation determinant is not +1"));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Self {
        let rt = math::transpose(&self.rotation);
        let t = math::mat_vec(&rt, self.translation);
        Self { rotation: rt, translation: [-t[0], -t[1], -t[2]] }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Self {
        Self {
            rotation: math::mat_mul(&self.rotation, &other.rotation),
            translation: math::add(math::mat_vec(&self.rotation, other.translation), self.translation),
        }
    }

    /// Camera-space point to world space.
    #[inline]
    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        math::add(math::mat_vec(&self.rotation, p), self.translation)
    }

    /// World-space point to camera space: `Rᵀ(p − t)`.
    #[inline]
    pub fn inverse_transform_point(&self, p: Vec3) -> Vec3 {
        math::mat_t_vec(&self.rotation, math::sub(p, self.translation))
    }
}

/// One time step of ingested data. Maps are row-major `height × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub step: u64,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    /// Metric depth along the optical axis; 0 marks invalid.
    pub depth: Vec<f32>,
    pub sensor_depth: Option<Vec<f32>>,
    pub confidence: Vec<f32>,
    /// Frame-local instance ids, 1-based; 0 means no instance.
    pub instance_ids: Vec<u32>,
    pub feature_dim: usize,
    /// `instance_count × feature_dim`, row `k - 1` belongs to instance id `k`.
    pub instance_features: Vec<f32>,
    pub latent_dim: usize,
    pub latents: Option<Vec<f32>>,
}

impl Frame {
    #[inline]
    pub fn width(&self) -> usize {
        self.intrinsics.width as usize
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.intrinsics.height as usize
    }

    pub fn instance_count(&self) -> usize {
        self.instance_features.len().checked_div(self.feature_dim).unwrap_or(0)
    }

    pub fn instance_feature(&self, id: u32) -> Option<&[f32]> {
        let k = (id as usize).checked_sub(1)?;
        self.instance_features.get(k * self.feature_dim..(k + 1) * self.feature_dim)
    }

    /// Checks every structural and value invariant of the frame.
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.pose.validate()?;
        let n = self.intrinsics.pixel_count();
        let check_len = |name: &str, len: usize, want: usize| -> Result<()> {
            if len != want {
                return Err(Error::Shape(format!("{name} has {len} entries, expected {want}")));
            }
            Ok(())
        };
        check_len("depth", self.depth.len(), n)?;
        check_len("confidence", self.confidence.len(), n)?;
        check_len("instance_ids", self.instance_ids.len(), n)?;
        if let Some(sensor) = &self.sensor_depth {
            check_len("sensor_depth", sensor.len(), n)?;
        }
        if let Some(latents) = &self.latents {
            check_len("latents", latents.len(), n * self.latent_dim)?;
        }
        if self.feature_dim == 0 {
            if !self.instance_features.is_empty() {
                return Err(Error::Shape("instance features present with feature_dim 0".into()));
            }
        } else if !self.instance_features.len().is_multiple_of(self.feature_dim) {
            return Err(Error::Shape("instance feature table is not a whole number of rows".into()));
        }
        if self.instance_features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFrame("non-finite instance feature".into()));
        }
        if let Some(latents) = &self.latents {
            if latents.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidFrame("non-finite latent".into()));
            }
        }
        let m = self.instance_count() as u32;
        for (i, &id) in self.instance_ids.iter().enumerate() {
            if id > m {
                return Err(Error::InvalidFrame(format!("pixel {i} references instance {id} but only {m} exist")));
            }
        }
        for (i, &c) in self.confidence.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidFrame(format!("confidence {c} at pixel {i} outside [0, 1]")));
            }
        }
        let maps = core::iter::once(&self.depth).chain(self.sensor_depth.iter());
        for map in maps {
            if let Some(i) = map.iter().position(|d| !d.is_finite() || *d < 0.0) {
                return Err(Error::InvalidFrame(format!("depth at pixel {i} is negative or non-finite")));
            }
        }
        Ok(())
    }
}

/// Append-only store of unit-normalized instance features. Index 0 is the
/// empty-slot sentinel; stored vectors are addressed from 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Codebook {
    dim: usize,
    vectors: Vec<f32>,
}

impl Codebook {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: Vec::new() }
    }

    /// Wraps raw storage without renormalizing; `validate_field` reports
    /// vectors that are not unit length.
    pub fn from_parts(dim: usize, vectors: Vec<f32>) -> Result<Self> {
        if (dim == 0 && !vectors.is_empty()) || (dim > 0 && !vectors.len().is_multiple_of(dim)) {
            return Err(Error::Shape(format!("{} codebook values do not form rows of {dim}", vectors.len())));
        }
        Ok(Self { dim, vectors })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.vectors.len().checked_div(self.dim).unwrap_or(0)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Index the next appended vector will receive.
    #[inline]
    pub fn next_index(&self) -> u32 {
        self.len() as u32 + 1
    }

    #[inline]
    pub fn get(&self, index: u32) -> Option<&[f32]> {
        let k = (index as usize).checked_sub(1)?;
        self.vectors.get(k * self.dim..(k + 1) * self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vectors
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> + '_ {
        self.vectors.chunks_exact(self.dim.max(1))
    }

    /// Normalizes `v` and appends it, returning its index. An empty codebook
    /// without a dimension adopts the dimension of the first vector.
    pub fn push_normalized(&mut self, v: &[f32]) -> Result<u32> {
        if self.dim == 0 && self.vectors.is_empty() {
            self.dim = v.len();
        }
        if v.len() != self.dim || self.dim == 0 {
            return Err(Error::Shape(format!("vector of dim {} pushed into codebook of dim {}", v.len(), self.dim)));
        }
        let unit = normalized(v).ok_or(Error::ZeroNorm { row: 0 })?;
        self.vectors.extend_from_slice(&unit);
        Ok(self.len() as u32)
    }

    pub(crate) fn extend_raw(&mut self, dim: usize, rows: &[f32]) {
        if self.dim == 0 && self.vectors.is_empty() {
            self.dim = dim;
        }
        debug_assert_eq!(dim, self.dim);
        self.vectors.extend_from_slice(rows);
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        self.vectors.truncate(len * self.dim);
    }

    pub fn resident_bytes(&self) -> usize {
        self.vectors.len() * core::mem::size_of::<f32>()
    }
}

/// L2-normalizes in f64 and rounds back to f32; `None` for zero or
/// non-finite norms.
pub fn normalized(v: &[f32]) -> Option<Vec<f32>> {
    let n = libm::sqrt(v.iter().map(|&x| x as f64 * x as f64).sum::<f64>());
    if !(n > 0.0) || !n.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| (x as f64 / n) as f32).collect())
}

/// Optional per-Gaussian shape used by annotation only.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum ShapeBlock {
    #[default]
    None,
    /// One isotropic sigma (meters) per Gaussian.
    Isotropic(Vec<f32>),
    /// Per-Gaussian scale 3-vectors and unit quaternions `(w, x, y, z)`.
    Anisotropic { scales: Vec<f32>, rotations: Vec<f32> },
}

impl ShapeBlock {
    pub fn tag(&self) -> u8 {
        match self {
            ShapeBlock::None => 0,
            ShapeBlock::Isotropic(_) => 1,
            ShapeBlock::Anisotropic { .. } => 2,
        }
    }

    fn matches(&self, count: usize) -> bool {
        match self {
            ShapeBlock::None => true,
            ShapeBlock::Isotropic(s) => s.len() == count,
            ShapeBlock::Anisotropic { scales, rotations } => scales.len() == 3 * count && rotations.len() == 4 * count,
        }
    }
}

/// Flat columnar store of Gaussians and their sparse semantic caches.
///
/// Each cache row holds `L - 1` slots: the fusion algorithm works on `L`
/// slots and always zeroes the last one, so only `L - 1` are ever live.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianField {
    cache_len: usize,
    latent_dim: usize,
    pub(crate) centers: Vec<f32>,
    pub(crate) confidences: Vec<f32>,
    pub(crate) latents: Vec<f32>,
    pub(crate) index_cache: Vec<u32>,
    pub(crate) weight_cache: Vec<f32>,
    shape: ShapeBlock,
}

/// Borrowed view of one Gaussian's caches (`L - 1` slots each).
#[derive(Debug, Clone, Copy)]
pub struct CacheRow<'a> {
    pub indices: &'a [u32],
    pub weights: &'a [f32],
}

impl CacheRow<'_> {
    pub fn live(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.indices.iter().zip(self.weights).filter(|(i, _)| **i != 0).map(|(&i, &w)| (i, w))
    }

    pub fn is_empty(&self) -> bool {
        self.indices.iter().all(|&i| i == 0)
    }
}

impl GaussianField {
    /// An empty field with cache length `L` (must be at least 2).
    pub fn new(cache_len: usize, latent_dim: usize) -> Result<Self> {
        if cache_len < 2 {
            return Err(Error::Config(format!("cache length {cache_len} must be at least 2")));
        }
        Ok(Self {
            cache_len,
            latent_dim,
            centers: Vec::new(),
            confidences: Vec::new(),
            latents: Vec::new(),
            index_cache: Vec::new(),
            weight_cache: Vec::new(),
            shape: ShapeBlock::None,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        cache_len: usize,
        latent_dim: usize,
        centers: Vec<f32>,
        confidences: Vec<f32>,
        latents: Vec<f32>,
        index_cache: Vec<u32>,
        weight_cache: Vec<f32>,
        shape: ShapeBlock,
    ) -> Result<Self> {
        let mut field = Self::new(cache_len, latent_dim)?;
        let m = confidences.len();
        let slots = cache_len - 1;
        if centers.len() != 3 * m
            || latents.len() != latent_dim * m
            || index_cache.len() != slots * m
            || weight_cache.len() != slots * m
            || !shape.matches(m)
        {
            return Err(Error::Shape(format!("field arrays are not aligned to {m} Gaussians")));
        }
        field.centers = centers;
        field.confidences = confidences;
        field.latents = latents;
        field.index_cache = index_cache;
        field.weight_cache = weight_cache;
        field.shape = shape;
        Ok(field)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.confidences.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.confidences.is_empty()
    }

    /// `L`, the working cache length of the fusion algorithm.
    #[inline]
    pub fn cache_len(&self) -> usize {
        self.cache_len
    }

    /// Stored slots per row, `L - 1`.
    #[inline]
    pub fn slots(&self) -> usize {
        self.cache_len - 1
    }

    #[inline]
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub(crate) fn set_latent_dim(&mut self, dim: usize) {
        debug_assert!(self.is_empty());
        self.latent_dim = dim;
    }

    #[inline]
    pub fn center(&self, i: usize) -> [f32; 3] {
        [self.centers[3 * i], self.centers[3 * i + 1], self.centers[3 * i + 2]]
    }

    #[inline]
    pub fn center_f64(&self, i: usize) -> Vec3 {
        let c = self.center(i);
        [c[0] as f64, c[1] as f64, c[2] as f64]
    }

    pub fn centers(&self) -> &[f32] {
        &self.centers
    }

    pub fn confidences(&self) -> &[f32] {
        &self.confidences
    }

    pub fn latents(&self) -> &[f32] {
        &self.latents
    }

    pub fn latent(&self, i: usize) -> &[f32] {
        &self.latents[i * self.latent_dim..(i + 1) * self.latent_dim]
    }

    pub fn index_cache(&self) -> &[u32] {
        &self.index_cache
    }

    pub fn weight_cache(&self) -> &[f32] {
        &self.weight_cache
    }

    pub fn shape(&self) -> &ShapeBlock {
        &self.shape
    }

    pub fn set_shape(&mut self, shape: ShapeBlock) -> Result<()> {
        if !shape.matches(self.len()) {
            return Err(Error::Shape("shape block is not aligned with the field".into()));
        }
        self.shape = shape;
        Ok(())
    }

    #[inline]
    pub fn row(&self, i: usize) -> CacheRow<'_> {
        let s = self.slots();
        CacheRow { indices: &self.index_cache[i * s..(i + 1) * s], weights: &self.weight_cache[i * s..(i + 1) * s] }
    }

    /// Appends one Gaussian. Cache rows must have `L - 1` slots.
    pub fn push(&mut self, center: [f32; 3], confidence: f32, latent: &[f32], indices: &[u32], weights: &[f32]) -> Result<()> {
        if latent.len() != self.latent_dim || indices.len() != self.slots() || weights.len() != self.slots() {
            return Err(Error::Shape("pushed Gaussian does not match the field layout".into()));
        }
        if !matches!(self.shape, ShapeBlock::None) {
            return Err(Error::Contract("cannot grow a field that carries per-Gaussian shapes".into()));
        }
        self.centers.extend_from_slice(&center);
        self.confidences.push(confidence);
        self.latents.extend_from_slice(latent);
        self.index_cache.extend_from_slice(indices);
        self.weight_cache.extend_from_slice(weights);
        Ok(())
    }

    pub(crate) fn truncate(&mut self, len: usize) {
        let s = self.slots();
        self.centers.truncate(3 * len);
        self.confidences.truncate(len);
        self.latents.truncate(self.latent_dim * len);
        self.index_cache.truncate(s * len);
        self.weight_cache.truncate(s * len);
    }

    /// Bytes held by the two cache arrays.
    pub fn cache_resident_bytes(&self) -> usize {
        self.index_cache.len() * core::mem::size_of::<u32>() + self.weight_cache.len() * core::mem::size_of::<f32>()
    }
}

/// Matched (local pixel, global Gaussian) pairs of one fusion step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSet {
    /// `(pixel linear index, global Gaussian index)`, in pixel order.
    pub pairs: Vec<(u32, usize)>,
    /// Valid pixels without a match, in pixel order.
    pub unmatched: Vec<u32>,
}

/// How a fresh local Gaussian seeds slot 0 of its weight cache.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum CacheSeed {
    /// Unit weight: the sparse field reproduces the dense confidence-weighted
    /// running average exactly (up to pruning).
    #[default]
    Unit,
    /// The pixel confidence itself, as in the original cache layout; each
    /// contributor then ends up weighted by the square of its confidence.
    Confidence,
}

/// Selector for the latent fusion operator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum LatentFusionKind {
    #[default]
    WeightedAverage,
    KeepGlobal,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct EngineConfig {
    /// `L`, slots per cache during fusion (`L - 1` are kept).
    pub cache_len: usize,
    /// Pairing threshold δ (meters).
    pub depth_pair_threshold: f64,
    pub keyframe_threshold: f64,
    pub depth_valid_min: f64,
    pub depth_valid_max: f64,
    /// Ensemble exponent τ.
    pub ensemble_tau: f64,
    /// Neighborhood radius for point annotation (meters).
    pub annotate_radius: f64,
    pub latent_fusion: LatentFusionKind,
    pub cache_seed: CacheSeed,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            cache_len: 6,
            depth_pair_threshold: 0.1,
            keyframe_threshold: 0.1,
            depth_valid_min: 1e-3,
            depth_valid_max: 10.0,
            ensemble_tau: 0.5,
            annotate_radius: 0.15,
            latent_fusion: LatentFusionKind::WeightedAverage,
            cache_seed: CacheSeed::Unit,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cache_len < 2 {
            return Err(Error::Config(format!("cache_len {} must be at least 2", self.cache_len)));
        }
        let positive = [
            ("depth_pair_threshold", self.depth_pair_threshold),
            ("keyframe_threshold", self.keyframe_threshold),
            ("depth_valid_min", self.depth_valid_min),
            ("depth_valid_max", self.depth_valid_max),
            ("annotate_radius", self.annotate_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.depth_valid_min >= self.depth_valid_max {
            return Err(Error::Config("depth_valid_min must be below depth_valid_max".into()));
        }
        if !(0.0..=1.0).contains(&self.ensemble_tau) {
            return Err(Error::Config(format!("ensemble_tau {} outside [0, 1]", self.ensemble_tau)));
        }
        Ok(())
    }
}

/// Query-time labeling of an external point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<[f32; 3]>,
    pub num_classes: usize,
    /// `N × C`.
    pub logits: Vec<f32>,
    /// Argmax class per point, or `num_classes` when unlabeled.
    pub labels: Vec<u32>,
}

impl LabeledPointCloud {
    pub fn unlabeled_label(&self) -> u32 {
        self.num_classes as u32
    }

    pub fn logits_of(&self, n: usize) -> &[f32] {
        &self.logits[n * self.num_classes..(n + 1) * self.num_classes]
    }
}

/// One invariant violation found by [`validate_field`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    NonPositiveConfidence { gaussian: usize },
    NonFiniteCenter { gaussian: usize },
    UnsortedWeights { gaussian: usize },
    DanglingIndex { gaussian: usize, index: u32 },
    DuplicateIndex { gaussian: usize, index: u32 },
    ZeroPairing { gaussian: usize, slot: usize },
    NonUnitCodebookVector { index: u32, norm: f64 },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NonPositiveConfidence { gaussian } => write!(f, "non-positive confidence at gaussian {gaussian}"),
            Diagnostic::NonFiniteCenter { gaussian } => write!(f, "non-finite center at gaussian {gaussian}"),
            Diagnostic::UnsortedWeights { gaussian } => write!(f, "unsorted weight cache at gaussian {gaussian}"),
            Diagnostic::DanglingIndex { gaussian, index } => {
                write!(f, "dangling codebook index {index} at gaussian {gaussian}")
            }
            Diagnostic::DuplicateIndex { gaussian, index } => {
                write!(f, "duplicate codebook index {index} at gaussian {gaussian}")
            }
            Diagnostic::ZeroPairing { gaussian, slot } => {
                write!(f, "index/weight zero mismatch at gaussian {gaussian} slot {slot}")
            }
            Diagnostic::NonUnitCodebookVector { index, norm } => {
                write!(f, "codebook vector {index} has norm {norm}")
            }
        }
    }
}

impl Diagnostic {
    pub fn message(&self) -> String {
        format!("{self}")
    }
}

/// Reports every invariant violation of `field` against `codebook`. Never
/// mutates; one diagnostic per offending row.
pub fn validate_field(field: &GaussianField, codebook: &Codebook) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let k = codebook.len() as u32;
    for (index, v) in codebook.iter().enumerate().take(codebook.len()) {
        let norm = libm::sqrt(v.iter().map(|&x| x as f64 * x as f64).sum::<f64>());
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            out.push(Diagnostic::NonUnitCodebookVector { index: index as u32 + 1, norm });
        }
    }
    for g in 0..field.len() {
        let c = field.confidences[g];
        if !(c > 0.0) || !c.is_finite() {
            out.push(Diagnostic::NonPositiveConfidence { gaussian: g });
        }
        if field.center(g).iter().any(|v| !v.is_finite()) {
            out.push(Diagnostic::NonFiniteCenter { gaussian: g });
        }
        let row = field.row(g);
        if row.weights.windows(2).any(|w| !(w[0] >= w[1])) {
            out.push(Diagnostic::UnsortedWeights { gaussian: g });
        }
        if let Some(slot) = row.indices.iter().zip(row.weights).position(|(&i, &w)| (i == 0) != (w == 0.0)) {
            out.push(Diagnostic::ZeroPairing { gaussian: g, slot });
        }
        if let Some(&index) = row.indices.iter().find(|&&i| i > k) {
            out.push(Diagnostic::DanglingIndex { gaussian: g, index });
        }
        let live: Vec<u32> = row.indices.iter().copied().filter(|&i| i != 0).collect();
        if let Some(&index) = live.iter().enumerate().find(|(n, i)| live[..*n].contains(i)).map(|(_, i)| i) {
            out.push(Diagnostic::DuplicateIndex { gaussian: g, index });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn empty_field_and_codebook_validate_clean() {
        let field = GaussianField::new(6, 0).unwrap();
        assert!(validate_field(&field, &Codebook::new(4)).is_empty());
    }

    #[test]
    fn unsorted_weight_row_is_reported_once() {
        let mut field = GaussianField::new(6, 0).unwrap();
        let mut cb = Codebook::new(2);
        cb.push_normalized(&[1.0, 0.0]).unwrap();
        cb.push_normalized(&[0.0, 1.0]).unwrap();
        field.push([0.0; 3], 1.0, &[], &[1, 2, 0, 0, 0], &[0.2, 0.5, 0.0, 0.0, 0.0]).unwrap();
        let diags = validate_field(&field, &cb);
        assert_eq!(diags, vec![Diagnostic::UnsortedWeights { gaussian: 0 }]);
        assert!(diags[0].message().contains("unsorted weight cache"));
    }

    #[test]
    fn dangling_index_is_reported_once() {
        let mut field = GaussianField::new(6, 0).unwrap();
        let mut cb = Codebook::new(2);
        for _ in 0..10 {
            cb.push_normalized(&[1.0, 1.0]).unwrap();
        }
        field.push([0.0; 3], 1.0, &[], &[99, 0, 0, 0, 0], &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let diags = validate_field(&field, &cb);
        assert_eq!(diags, vec![Diagnostic::DanglingIndex { gaussian: 0, index: 99 }]);
        assert!(diags[0].message().contains("dangling codebook index"));
    }

    #[test]
    fn codebook_indices_start_at_one() {
        let mut cb = Codebook::new(0);
        assert_eq!(cb.next_index(), 1);
        assert_eq!(cb.push_normalized(&[3.0, 4.0]).unwrap(), 1);
        assert_eq!(cb.get(1).unwrap(), &[0.6, 0.8]);
        assert!(cb.get(0).is_none());
        assert!(matches!(cb.push_normalized(&[0.0, 0.0]), Err(Error::ZeroNorm { .. })));
    }

    #[test]
    fn pose_rejects_reflection_and_skew() {
        let reflect = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(Pose::new(reflect, [0.0; 3]).is_err());
        let skew = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(Pose::new(skew, [0.0; 3]).is_err());
        let r = math::axis_angle([0.3, -0.2, 1.0], 0.7);
        let p = Pose::new(r, [1.0, 2.0, 3.0]).unwrap();
        let back = p.compose(&p.inverse());
        for (i, row) in back.rotation.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn config_defaults_validate() {
        let cfg = EngineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.cache_len, 6);
        let bad = EngineConfig { ensemble_tau: 1.5, ..cfg };
        assert!(bad.validate().is_err());
    }
}
