//! Sparse coefficient field over the global codebook.
//!
//! Every Gaussian carries an index cache and a weight cache. A fresh local
//! Gaussian points at the codebook entry of its instance through slot 0;
//! fusion folds the local entry into the global row with confidence-weighted
//! scaling, sorts by weight and drops whatever falls into the last slot.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::types::{normalized, CacheRow, CacheSeed, Codebook, Frame, GaussianField};

/// Slot-0 entry of every pixel of a frame after cache initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCaches {
    /// Codebook index per pixel (0 for pixels without an instance).
    pub indices: Vec<u32>,
    /// Seed weight per pixel (0 for pixels without an instance).
    pub weights: Vec<f32>,
    /// First codebook index assigned to this frame's instances.
    pub first_index: u32,
    pub new_entries: usize,
}

impl LocalCaches {
    /// Full `L`-slot rows of pixel `px`, as the fusion algorithm sees them.
    pub fn row(&self, px: usize, cache_len: usize) -> (Vec<u32>, Vec<f32>) {
        let mut idx = vec![0; cache_len];
        let mut w = vec![0.0; cache_len];
        idx[0] = self.indices[px];
        w[0] = self.weights[px];
        (idx, w)
    }
}

#[inline]
pub fn seed_weight(seed: CacheSeed, confidence: f32) -> f32 {
    match seed {
        CacheSeed::Unit => 1.0,
        CacheSeed::Confidence => confidence,
    }
}

/// Normalizes the frame's instance features, appends them to `codebook`
/// (indices `next_index ..= next_index + M - 1` in row order) and seeds slot
/// 0 of every pixel. Fails before touching the codebook if any feature row
/// has zero norm.
pub fn init_caches(frame: &Frame, codebook: &mut Codebook, seed: CacheSeed) -> Result<LocalCaches> {
    let m = frame.instance_count();
    if m > 0 && !codebook.is_empty() && codebook.dim() != frame.feature_dim {
        return Err(Error::Shape(format!(
            "frame feature dim {} does not match codebook dim {}",
            frame.feature_dim,
            codebook.dim()
        )));
    }
    let mut rows = Vec::with_capacity(m * frame.feature_dim);
    for row in 0..m {
        let v = &frame.instance_features[row * frame.feature_dim..(row + 1) * frame.feature_dim];
        rows.extend(normalized(v).ok_or(Error::ZeroNorm { row })?);
    }
    let first_index = codebook.next_index();
    if m > 0 {
        codebook.extend_raw(frame.feature_dim, &rows);
    }
    let (indices, weights) = frame
        .instance_ids
        .iter()
        .zip(&frame.confidence)
        .map(|(&id, &c)| if id == 0 { (0, 0.0) } else { (first_index + id - 1, seed_weight(seed, c)) })
        .unzip();
    Ok(LocalCaches { indices, weights, first_index, new_entries: m })
}

/// Algorithm kernel on one `L`-slot row whose live entries form a prefix and
/// whose last slot is free. `local` is the local slot-0 entry, if any.
/// Returns the entry pruned from the last slot.
pub fn fuse_row_in_place(
    indices: &mut [u32],
    weights: &mut [f64],
    local: Option<(u32, f64)>,
    local_confidence: f64,
    global_confidence: f64,
) -> Option<(u32, f64)> {
    let len = indices.len();
    debug_assert!(len >= 2 && weights.len() == len && indices[len - 1] == 0);
    let total = local_confidence + global_confidence;
    let keep = global_confidence / total;
    let inject = local_confidence / total;
    for (i, w) in indices.iter().zip(weights.iter_mut()) {
        if *i != 0 {
            *w *= keep;
        }
    }
    if let Some((k, w_local)) = local.filter(|(k, _)| *k != 0) {
        match indices.iter().position(|&i| i == k) {
            Some(slot) => weights[slot] += inject * w_local,
            None => {
                indices[len - 1] = k;
                weights[len - 1] = inject * w_local;
            }
        }
    }
    sort_row(indices, weights);
    let pruned = (indices[len - 1] != 0).then(|| (indices[len - 1], weights[len - 1]));
    indices[len - 1] = 0;
    weights[len - 1] = 0.0;
    pruned
}

/// Live entries first by weight descending, ties toward the lower index.
fn sort_row(indices: &mut [u32], weights: &mut [f64]) {
    let before = |a: (u32, f64), b: (u32, f64)| match (a.0 == 0, b.0 == 0) {
        (false, true) => true,
        (true, _) => false,
        (false, false) => a.1 > b.1 || (a.1 == b.1 && a.0 < b.0),
    };
    for i in 1..indices.len() {
        let mut j = i;
        while j > 0 && before((indices[j], weights[j]), (indices[j - 1], weights[j - 1])) {
            indices.swap(j, j - 1);
            weights.swap(j, j - 1);
            j -= 1;
        }
    }
}

/// Fuses a local cache row (one live entry in slot 0) into a global row.
/// Both rows have `L` slots; the returned rows keep at most `L - 1` live
/// entries sorted by weight with the last slot zeroed.
pub fn fuse_caches(
    local_indices: &[u32],
    local_weights: &[f64],
    local_confidence: f64,
    global_indices: &[u32],
    global_weights: &[f64],
    global_confidence: f64,
) -> Result<(Vec<u32>, Vec<f64>)> {
    let len = global_indices.len();
    let contract = |msg: &str| Err(Error::Contract(msg.into()));
    if len < 2 || local_indices.len() != len || local_weights.len() != len || global_weights.len() != len {
        return contract("cache rows must share a length of at least 2");
    }
    if !(local_confidence > 0.0 && global_confidence > 0.0) {
        return contract("confidences must be positive");
    }
    if local_indices[0] == 0 || local_indices[1..].iter().any(|&i| i != 0) {
        return contract("local row must have exactly one live entry in slot 0");
    }
    if !(local_weights[0] > 0.0) || local_weights[1..].iter().any(|&w| w != 0.0) {
        return contract("local weight row must match its index row");
    }
    if global_indices[0] == 0 || global_indices[len - 1] != 0 {
        return contract("global row needs a live first slot and a free last slot");
    }
    let live = global_indices.iter().take_while(|&&i| i != 0).count();
    if global_indices[live..].iter().any(|&i| i != 0)
        || global_weights[..live].iter().any(|&w| !(w > 0.0))
        || global_weights[live..].iter().any(|&w| w != 0.0)
    {
        return contract("global row must hold a prefix of positive live entries");
    }
    let mut idx = global_indices.to_vec();
    let mut w = global_weights.to_vec();
    fuse_row_in_place(&mut idx, &mut w, Some((local_indices[0], local_weights[0])), local_confidence, global_confidence);
    Ok((idx, w))
}

/// Divides every nonzero weight by the row's nonzero sum.
pub fn renormalize(weights: &[f64]) -> Result<Vec<f64>> {
    let sum: f64 = weights.iter().filter(|w| **w != 0.0).sum();
    if !(sum > 0.0) {
        return Err(Error::EmptySemantics);
    }
    Ok(weights.iter().map(|&w| if w != 0.0 { w / sum } else { 0.0 }).collect())
}

/// `Σ_j w_j · C(I_j)` over the nonzero slots, without renormalizing the
/// output vector.
pub fn reconstruct_feature(indices: &[u32], weights: &[f64], codebook: &Codebook) -> Result<Vec<f64>> {
    let mut out = vec![0.0f64; codebook.dim()];
    for (&i, &w) in indices.iter().zip(weights) {
        if i == 0 {
            continue;
        }
        let c = codebook.get(i).ok_or(Error::DanglingIndex(i))?;
        for (o, &x) in out.iter_mut().zip(c) {
            *o += w * x as f64;
        }
    }
    Ok(out)
}

/// Renormalized weights of a stored row, `None` when the row is empty.
pub fn renormalized_row(row: CacheRow<'_>) -> Option<Vec<f64>> {
    let w: Vec<f64> = row.weights.iter().map(|&w| w as f64).collect();
    renormalize(&w).ok()
}

/// Dense semantic feature of Gaussian `g` from its renormalized caches.
pub fn gaussian_feature(field: &GaussianField, g: usize, codebook: &Codebook) -> Result<Option<Vec<f64>>> {
    let row = field.row(g);
    match renormalized_row(row) {
        Some(w) => reconstruct_feature(row.indices, &w, codebook).map(Some),
        None => Ok(None),
    }
}
