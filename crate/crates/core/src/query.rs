//! Open-vocabulary scoring of the field against text embeddings.
//!
//! Two paths produce per-Gaussian cosine scores: the dense path rebuilds
//! every Gaussian's feature from its caches (`O(M·D)` per query), the
//! codebook path scores each codebook entry once and mixes those scores
//! with the cache weights (`O(K·D + M·(L-1))`). With unit codebook vectors
//! the codebook score equals the dense score times the norm of the
//! reconstructed feature.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::types::{CacheRow, Codebook, GaussianField};

/// Score of a Gaussian whose caches hold no entry.
pub const EMPTY_SCORE: f32 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ScoreMode {
    Dense,
    Codebook,
}

/// Unit-normalized copies of `C` text vectors of dimension `dim`.
fn normalized_texts(texts: &[f32], dim: usize, codebook: &Codebook) -> Result<Vec<Vec<f64>>> {
    if dim == 0 || !texts.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!("{} text values are not rows of {dim}", texts.len())));
    }
    if !codebook.is_empty() && codebook.dim() != dim {
        return Err(Error::Shape(format!("text dim {dim} differs from codebook dim {}", codebook.dim())));
    }
    texts
        .chunks_exact(dim)
        .map(|t| {
            let n = libm::sqrt(t.iter().map(|&x| x as f64 * x as f64).sum::<f64>());
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::Contract("text vector must be nonzero and finite".into()));
            }
            Ok(t.iter().map(|&x| x as f64 / n).collect())
        })
        .collect()
}

fn row_sum(row: CacheRow<'_>) -> f64 {
    row.live().map(|(_, w)| w as f64).sum()
}

/// Rebuilds the renormalized feature of one row into `buf`; false if empty.
fn reconstruct_into(row: CacheRow<'_>, codebook: &Codebook, buf: &mut [f32]) -> Result<bool> {
    let sum = row_sum(row);
    if !(sum > 0.0) {
        return Ok(false);
    }
    buf.fill(0.0);
    for (i, w) in row.live() {
        let c = codebook.get(i).ok_or(Error::DanglingIndex(i))?;
        let w = (w as f64 / sum) as f32;
        for (b, &x) in buf.iter_mut().zip(c) {
            *b += w * x;
        }
    }
    Ok(true)
}

/// Scratch buffers reused across Gaussians: a `D`-vector and a `C`-vector.
struct Scratch {
    feature: Vec<f32>,
    acc: Vec<f64>,
}

fn for_each_gaussian<F>(m: usize, classes: usize, dim: usize, f: F) -> Result<Vec<f32>>
where
    F: Fn(usize, &mut [f32], &mut Scratch) -> Result<()> + Sync + Send,
{
    let mut out = vec![0.0f32; m * classes];
    if classes == 0 {
        return Ok(out);
    }
    let scratch = || Scratch { feature: vec![0.0; dim], acc: vec![0.0; classes] };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(classes)
            .enumerate()
            .try_for_each_init(scratch, |s, (g, dst)| f(g, dst, s))?;
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut s = scratch();
        for (g, dst) in out.chunks_exact_mut(classes).enumerate() {
            f(g, dst, &mut s)?;
        }
    }
    Ok(out)
}

/// `M × C` cosine scores of every Gaussian against `C` text vectors.
pub fn score_classes(texts: &[f32], dim: usize, field: &GaussianField, codebook: &Codebook, mode: ScoreMode) -> Result<Vec<f32>> {
    let texts = normalized_texts(texts, dim, codebook)?;
    let classes = texts.len();
    match mode {
        ScoreMode::Dense => for_each_gaussian(field.len(), classes, dim, |g, dst, s| {
            let buf = &mut s.feature;
            if !reconstruct_into(field.row(g), codebook, buf)? {
                dst.fill(EMPTY_SCORE);
                return Ok(());
            }
            let norm = libm::sqrt(buf.iter().map(|&x| x as f64 * x as f64).sum::<f64>());
            for (d, t) in dst.iter_mut().zip(&texts) {
                let dot: f64 = buf.iter().zip(t).map(|(&x, &y)| x as f64 * y).sum();
                *d = if norm > 0.0 { (dot / norm) as f32 } else { 0.0 };
            }
            Ok(())
        }),
        ScoreMode::Codebook => {
            // Text-to-codebook table, K × C.
            let mut table = vec![0.0f64; codebook.len() * classes];
            for (k, c) in codebook.iter().enumerate().take(codebook.len()) {
                for (j, t) in texts.iter().enumerate() {
                    table[k * classes + j] = c.iter().zip(t).map(|(&x, &y)| x as f64 * y).sum();
                }
            }
            let k_max = codebook.len() as u32;
            for_each_gaussian(field.len(), classes, 0, |g, dst, s| {
                let row = field.row(g);
                let sum = row_sum(row);
                if !(sum > 0.0) {
                    dst.fill(EMPTY_SCORE);
                    return Ok(());
                }
                let acc = &mut s.acc;
                acc.fill(0.0);
                for (i, w) in row.live() {
                    if i > k_max {
                        return Err(Error::DanglingIndex(i));
                    }
                    let w = w as f64 / sum;
                    let base = (i as usize - 1) * classes;
                    for (a, &t) in acc.iter_mut().zip(&table[base..base + classes]) {
                        *a += w * t;
                    }
                }
                for (d, &a) in dst.iter_mut().zip(acc.iter()) {
                    *d = a as f32;
                }
                Ok(())
            })
        }
    }
}

/// Per-Gaussian cosine similarity via on-the-fly feature reconstruction.
pub fn cosine_dense(text: &[f32], field: &GaussianField, codebook: &Codebook) -> Result<Vec<f32>> {
    score_classes(text, text.len(), field, codebook, ScoreMode::Dense)
}

/// Per-Gaussian cosine similarity through the text-to-codebook table.
pub fn cosine_codebook(text: &[f32], field: &GaussianField, codebook: &Codebook) -> Result<Vec<f32>> {
    score_classes(text, text.len(), field, codebook, ScoreMode::Codebook)
}

/// Row-wise softmax of an `M × C` score matrix.
pub fn classify(scores: &[f32], classes: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; scores.len()];
    if classes == 0 {
        return out;
    }
    for (src, dst) in scores.chunks_exact(classes).zip(out.chunks_exact_mut(classes)) {
        let max = src.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s as f64));
        let exps: Vec<f64> = src.iter().map(|&s| libm::exp(s as f64 - max)).collect();
        let total: f64 = exps.iter().sum();
        for (d, e) in dst.iter_mut().zip(exps) {
            *d = (e / total) as f32;
        }
    }
    out
}

/// Elementwise `max(a, b)^τ · min(a, b)^(1-τ)`; rows are not renormalized.
pub fn ensemble(p2d: &[f32], p3d: &[f32], tau: f64) -> Result<Vec<f32>> {
    if p2d.len() != p3d.len() {
        return Err(Error::Shape(format!("probability matrices have {} and {} entries", p2d.len(), p3d.len())));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Contract(format!("tau {tau} outside [0, 1]")));
    }
    Ok(p2d
        .iter()
        .zip(p3d)
        .map(|(&a, &b)| {
            let (hi, lo) = if a >= b { (a as f64, b as f64) } else { (b as f64, a as f64) };
            (libm::pow(hi, tau) * libm::pow(lo, 1.0 - tau)) as f32
        })
        .collect())
}

/// Index of the largest entry of each row, ties toward the lowest class.
pub fn argmax_rows(values: &[f32], classes: usize) -> Vec<u32> {
    if classes == 0 {
        return Vec::new();
    }
    values.chunks_exact(classes).map(|row| argmax(row) as u32).collect()
}

pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}
