//! Memory accounting and query-latency benchmarks.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semsplat_core::query::{cosine_codebook, cosine_dense};
use semsplat_core::{Codebook, GaussianField};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIB: f64 = (1u64 << 20) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub gaussians: u64,
    pub cache_len: u64,
    pub codebook_len: u64,
    pub dim: u64,
    pub entry_bytes: u64,
    /// `M·2(L−1)·w`.
    pub cache_bytes: u64,
    /// `K·D·w`.
    pub codebook_bytes: u64,
    pub sparse_bytes: u64,
    /// `M·D·w`: one raw feature per Gaussian.
    pub dense_bytes: u64,
    pub ratio: f64,
    pub sparse_mib: f64,
    pub dense_mib: f64,
    /// Bytes actually held by the cache and codebook arrays, when measured
    /// from a live field.
    pub resident_bytes: Option<u64>,
}

/// Analytic sparse and dense sizes for a field of the given shape.
pub fn memory_model(gaussians: u64, codebook_len: u64, dim: u64, cache_len: u64, entry_bytes: u64) -> MemoryReport {
    let cache_bytes = gaussians * 2 * cache_len.saturating_sub(1) * entry_bytes;
    let codebook_bytes = codebook_len * dim * entry_bytes;
    let sparse_bytes = cache_bytes + codebook_bytes;
    let dense_bytes = gaussians * dim * entry_bytes;
    MemoryReport {
        gaussians,
        cache_len,
        codebook_len,
        dim,
        entry_bytes,
        cache_bytes,
        codebook_bytes,
        sparse_bytes,
        dense_bytes,
        ratio: if sparse_bytes == 0 { 0.0 } else { dense_bytes as f64 / sparse_bytes as f64 },
        sparse_mib: sparse_bytes as f64 / MIB,
        dense_mib: dense_bytes as f64 / MIB,
        resident_bytes: None,
    }
}

/// [`memory_model`] of a live field, plus its measured resident bytes.
/// With 4-byte entries the two agree exactly.
pub fn memory_report(field: &GaussianField, codebook: &Codebook, entry_bytes: u64) -> MemoryReport {
    let mut report =
        memory_model(field.len() as u64, codebook.len() as u64, codebook.dim() as u64, field.cache_len() as u64, entry_bytes);
    report.resident_bytes = Some((field.cache_resident_bytes() + codebook.resident_bytes()) as u64);
    report
}

/// `(Gaussians, codebook entries)` of the ten reference scenes.
pub const BENCH_SCENES: [(u64, u64); 10] = [
    (3_200_000, 8_700),
    (2_400_000, 5_300),
    (1_500_000, 2_800),
    (1_100_000, 1_800),
    (600_000, 600),
    (1_900_000, 2_800),
    (900_000, 2_100),
    (1_100_000, 2_000),
    (700_000, 800),
    (2_300_000, 3_400),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMemoryTable {
    pub scenes: Vec<MemoryReport>,
    pub mean_ratio: f64,
}

pub fn bench_scene_memory(dim: u64, cache_len: u64, entry_bytes: u64) -> SceneMemoryTable {
    let scenes: Vec<MemoryReport> =
        BENCH_SCENES.iter().map(|&(m, k)| memory_model(m, k, dim, cache_len, entry_bytes)).collect();
    let mean_ratio = scenes.iter().map(|r| r.ratio).sum::<f64>() / scenes.len() as f64;
    SceneMemoryTable { scenes, mean_ratio }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBench {
    pub gaussians: usize,
    pub codebook_len: usize,
    pub dim: usize,
    pub queries: usize,
    pub dense_ms: f64,
    pub codebook_ms: f64,
    pub speedup: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times both scoring paths on `queries` seeded random unit vectors, after
/// one untimed warm-up query per path. Reports median milliseconds.
pub fn bench_query(field: &GaussianField, codebook: &Codebook, queries: usize, seed: u64) -> Result<QueryBench> {
    if field.is_empty() || codebook.is_empty() || queries == 0 {
        return Err(Error::Usage("query benchmark needs a non-empty field, codebook and query count".into()));
    }
    let dim = codebook.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut texts: Vec<Vec<f32>> = (0..=queries)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
        .collect();
    for t in &mut texts {
        let n = t.iter().map(|x| x * x).sum::<f32>().sqrt();
        t.iter_mut().for_each(|x| *x /= n);
    }
    let (warm, timed) = texts.split_first().expect("queries + 1 texts");
    cosine_dense(warm, field, codebook)?;
    cosine_codebook(warm, field, codebook)?;
    let (mut dense, mut sparse) = (Vec::with_capacity(queries), Vec::with_capacity(queries));
    for t in timed {
        let start = Instant::now();
        std::hint::black_box(cosine_dense(t, field, codebook)?);
        dense.push(start.elapsed().as_secs_f64() * 1e3);
        let start = Instant::now();
        std::hint::black_box(cosine_codebook(t, field, codebook)?);
        sparse.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let (dense_ms, codebook_ms) = (median(dense), median(sparse));
    Ok(QueryBench {
        gaussians: field.len(),
        codebook_len: codebook.len(),
        dim,
        queries,
        dense_ms,
        codebook_ms,
        speedup: dense_ms / codebook_ms,
    })
}
