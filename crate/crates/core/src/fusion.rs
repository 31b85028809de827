//! Per-step fusion driver and the keyframe-gated stream loop.

use alloc::format;
use core::borrow::Borrow;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ingest::{effective_depth, is_keyframe, unproject_depth};
use crate::math::{self, Vec3};
use crate::pairing::build_pairs;
use crate::sparse::{fuse_row_in_place, init_caches};
use crate::types::{Codebook, EngineConfig, Frame, GaussianField, LatentFusionKind, PairSet, Pose, ShapeBlock};

/// Confidence-weighted position update and confidence accumulation for one
/// matched pair.
#[inline]
pub fn fuse_gaussian(local_center: Vec3, local_confidence: f64, global_center: Vec3, global_confidence: f64) -> (Vec3, f64) {
    let total = local_confidence + global_confidence;
    let center = math::scale(
        math::add(math::scale(local_center, local_confidence), math::scale(global_center, global_confidence)),
        1.0 / total,
    );
    (center, total)
}

/// Combines a local latent with its paired global latent.
pub trait LatentFusion {
    fn fuse(&self, local: &[f32], global: &[f32], local_confidence: f64, global_confidence: f64, out: &mut [f32]);
}

impl LatentFusion for LatentFusionKind {
    fn fuse(&self, local: &[f32], global: &[f32], wl: f64, wg: f64, out: &mut [f32]) {
        match self {
            LatentFusionKind::WeightedAverage => {
                let total = wl + wg;
                for ((o, &l), &g) in out.iter_mut().zip(local).zip(global) {
                    *o = ((wl * l as f64 + wg * g as f64) / total) as f32;
                }
            }
            LatentFusionKind::KeepGlobal => out.copy_from_slice(global),
        }
    }
}

/// The default latent operator: `(ω_l·f_l + ω_g·f_g) / (ω_l + ω_g)`.
pub fn latent_fusion_operator(local: &[f32], global: &[f32], local_confidence: f64, global_confidence: f64) -> Result<Vec<f32>> {
    if local.len() != global.len() {
        return Err(Error::Shape(format!("latent dims {} and {} differ", local.len(), global.len())));
    }
    let mut out = vec![0.0; local.len()];
    LatentFusionKind::WeightedAverage.fuse(local, global, local_confidence, global_confidence, &mut out);
    Ok(out)
}

/// Millisecond source for step timing.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// Clock that always reads zero; for `no_std` callers and tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepStats {
    pub step: u64,
    pub accepted: bool,
    pub pairs: usize,
    pub appended: usize,
    pub new_codebook_entries: usize,
    /// Cache entries dropped by pruning during this step.
    pub pruned: usize,
    pub field_size: usize,
    pub codebook_size: usize,
    pub step_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub stats: StepStats,
    pub pairs: PairSet,
}

/// One fusion step: unproject, seed caches, pair against the field, fuse
/// pairs and append the unmatched pixels. On error nothing is modified.
pub fn step(field: &mut GaussianField, codebook: &mut Codebook, frame: &Frame, config: &EngineConfig) -> Result<StepReport> {
    step_with_clock(field, codebook, frame, config, &NoClock)
}

pub fn step_with_clock(
    field: &mut GaussianField,
    codebook: &mut Codebook,
    frame: &Frame,
    config: &EngineConfig,
    clock: &dyn Clock,
) -> Result<StepReport> {
    let started = clock.now_ms();
    config.validate()?;
    frame.validate()?;
    if field.cache_len() != config.cache_len {
        return Err(Error::Config(format!("field cache length {} differs from config {}", field.cache_len(), config.cache_len)));
    }
    if !matches!(field.shape(), ShapeBlock::None) {
        return Err(Error::Contract("fusion requires a field without per-Gaussian shapes".into()));
    }
    let frame_latent_dim = if frame.latents.is_some() { frame.latent_dim } else { 0 };
    if field.is_empty() {
        field.set_latent_dim(frame_latent_dim);
    } else if frame_latent_dim != field.latent_dim() {
        return Err(Error::Shape(format!("frame latent dim {frame_latent_dim} differs from field {}", field.latent_dim())));
    }
    let depth = effective_depth(frame, config.depth_valid_min, config.depth_valid_max)?;
    let local = unproject_depth(frame, &depth)?;
    if let Some(i) = local.confidences.iter().position(|&c| !(c > 0.0)) {
        return Err(Error::InvalidFrame(format!("zero confidence at valid pixel {}", local.pixels[i])));
    }

    // Last fallible call; everything below only mutates.
    let codebook_before = codebook.len();
    let caches = init_caches(frame, codebook, config.cache_seed)?;
    debug_assert_eq!(codebook.len(), codebook_before + caches.new_entries);

    let pairs = build_pairs(&local, field, &frame.intrinsics, &frame.pose, config.depth_pair_threshold);

    let mut local_of_pixel = vec![u32::MAX; frame.intrinsics.pixel_count()];
    for (li, &px) in local.pixels.iter().enumerate() {
        local_of_pixel[px as usize] = li as u32;
    }

    let slots = field.slots();
    let ld = field.latent_dim();
    let mut scratch_idx = vec![0u32; slots + 1];
    let mut scratch_w = vec![0.0f64; slots + 1];
    let mut latent_out = vec![0.0f32; ld];
    let mut pruned = 0;
    for &(px, g) in &pairs.pairs {
        let li = local_of_pixel[px as usize] as usize;
        let wl = local.confidences[li] as f64;
        let wg = field.confidences[g] as f64;
        let (center, confidence) = fuse_gaussian(local.centers[li], wl, field.center_f64(g), wg);

        if ld > 0 {
            let global_latent = &field.latents[g * ld..(g + 1) * ld];
            config.latent_fusion.fuse(local.latent(li), global_latent, wl, wg, &mut latent_out);
            field.latents[g * ld..(g + 1) * ld].copy_from_slice(&latent_out);
        }

        let row = g * slots..(g + 1) * slots;
        scratch_idx[..slots].copy_from_slice(&field.index_cache[row.clone()]);
        scratch_idx[slots] = 0;
        for (s, &w) in scratch_w.iter_mut().zip(&field.weight_cache[row.clone()]) {
            *s = w as f64;
        }
        scratch_w[slots] = 0.0;
        let entry = (caches.indices[px as usize], caches.weights[px as usize] as f64);
        if fuse_row_in_place(&mut scratch_idx, &mut scratch_w, Some(entry), wl, wg).is_some() {
            pruned += 1;
        }
        for (slot, (&i, &w)) in scratch_idx[..slots].iter().zip(&scratch_w[..slots]).enumerate() {
            let w = w as f32;
            // An entry whose weight rounds to zero in storage is dropped; it
            // can only sit at the tail of the sorted row.
            let i = if w == 0.0 { 0 } else { i };
            field.index_cache[g * slots + slot] = i;
            field.weight_cache[g * slots + slot] = if i == 0 { 0.0 } else { w };
        }

        field.centers[3 * g..3 * g + 3].copy_from_slice(&[center[0] as f32, center[1] as f32, center[2] as f32]);
        field.confidences[g] = confidence as f32;
    }

    let mut idx_row = vec![0u32; slots];
    let mut w_row = vec![0.0f32; slots];
    for &px in &pairs.unmatched {
        let li = local_of_pixel[px as usize] as usize;
        let c = local.centers[li];
        idx_row[0] = caches.indices[px as usize];
        w_row[0] = caches.weights[px as usize];
        field.push([c[0] as f32, c[1] as f32, c[2] as f32], local.confidences[li], local.latent(li), &idx_row, &w_row)?;
    }

    let stats = StepStats {
        step: frame.step,
        accepted: true,
        pairs: pairs.pairs.len(),
        appended: pairs.unmatched.len(),
        new_codebook_entries: caches.new_entries,
        pruned,
        field_size: field.len(),
        codebook_size: codebook.len(),
        step_ms: clock.now_ms() - started,
    };
    Ok(StepReport { stats, pairs })
}

/// Sequential online loop: keyframe gating against the last accepted
/// keyframe, then one [`step`] per accepted frame.
#[derive(Debug, Clone)]
pub struct FusionEngine {
    config: EngineConfig,
    field: GaussianField,
    codebook: Codebook,
    last_keyframe: Option<Pose>,
    last_step: Option<u64>,
    log: Vec<StepStats>,
}

impl FusionEngine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let field = GaussianField::new(config.cache_len, 0)?;
        Ok(Self { config, field, codebook: Codebook::new(0), last_keyframe: None, last_step: None, log: Vec::new() })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn field(&self) -> &GaussianField {
        &self.field
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    /// One row per frame seen, rejected frames included.
    pub fn log(&self) -> &[StepStats] {
        &self.log
    }

    pub fn accepted(&self) -> impl Iterator<Item = &StepStats> {
        self.log.iter().filter(|s| s.accepted)
    }

    pub fn into_parts(self) -> (GaussianField, Codebook, Vec<StepStats>) {
        (self.field, self.codebook, self.log)
    }

    /// Gates and fuses one frame. A failed step leaves the engine unchanged;
    /// a frame without valid depth is logged as not accepted.
    pub fn push_frame(&mut self, frame: &Frame, clock: &dyn Clock) -> Result<StepStats> {
        if let Some(previous) = self.last_step {
            if frame.step <= previous {
                return Err(Error::Ordering { previous, got: frame.step });
            }
        }
        let accept = match &self.last_keyframe {
            None => true,
            Some(last) => is_keyframe(&frame.pose, last, self.config.keyframe_threshold)?,
        };
        let stats = if accept {
            let (field_len, codebook_len) = (self.field.len(), self.codebook.len());
            match step_with_clock(&mut self.field, &mut self.codebook, frame, &self.config, clock) {
                Ok(report) => {
                    self.last_keyframe = Some(frame.pose);
                    report.stats
                }
                // Nothing to fuse; the frame is logged as not accepted.
                Err(Error::EmptyFrame) => StepStats {
                    step: frame.step,
                    accepted: false,
                    field_size: field_len,
                    codebook_size: codebook_len,
                    ..Default::default()
                },
                Err(e) => {
                    debug_assert_eq!((self.field.len(), self.codebook.len()), (field_len, codebook_len));
                    self.field.truncate(field_len);
                    self.codebook.truncate(codebook_len);
                    return Err(e);
                }
            }
        } else {
            StepStats {
                step: frame.step,
                accepted: false,
                field_size: self.field.len(),
                codebook_size: self.codebook.len(),
                ..Default::default()
            }
        };
        self.last_step = Some(frame.step);
        self.log.push(stats);
        Ok(stats)
    }
}

/// Runs a whole ordered stream and returns the final field, codebook and
/// per-frame stats.
pub fn run_stream<I>(frames: I, config: &EngineConfig, clock: &dyn Clock) -> Result<(GaussianField, Codebook, Vec<StepStats>)>
where
    I: IntoIterator,
    I::Item: Borrow<Frame>,
{
    let mut engine = FusionEngine::new(config.clone())?;
    for frame in frames {
        engine.push_frame(frame.borrow(), clock)?;
    }
    Ok(engine.into_parts())
}
