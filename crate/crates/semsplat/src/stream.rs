//! File-backed stream runner: a directory of frames in, a field dump and a
//! per-frame stats log out.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use semsplat_core::fusion::{Clock, FusionEngine, StepStats};
use semsplat_core::{Codebook, EngineConfig, GaussianField};

use crate::error::{Error, Result};
use crate::format;

pub const FRAME_EXTENSION: &str = "esfr";

/// Monotonic wall clock for step timings.
pub struct WallClock(Instant);

impl Default for WallClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.{FRAME_EXTENSION}")
}

/// Frame files in `dir`, sorted by name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(Error::io(dir))?
        .map(|e| e.map(|e| e.path()).map_err(Error::io(dir)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == FRAME_EXTENSION))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Usage(format!("no .{FRAME_EXTENSION} files in {}", dir.display())));
    }
    Ok(paths)
}

pub fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    let config: EngineConfig = match path {
        Some(p) => format::read_json(p)?,
        None => EngineConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

/// Streams frames from disk one at a time through a fusion engine.
pub fn run_frames(paths: &[PathBuf], config: &EngineConfig) -> Result<(GaussianField, Codebook, Vec<StepStats>)> {
    let clock = WallClock::default();
    let mut engine = FusionEngine::new(config.clone())?;
    for path in paths {
        let frame = format::read_frame(path)?;
        engine.push_frame(&frame, &clock)?;
    }
    Ok(engine.into_parts())
}

pub const STATS_HEADER: &str = "step,accepted,pairs,appended,field_size,codebook_size,step_ms";

pub fn stats_csv(log: &[StepStats]) -> String {
    let mut out = String::with_capacity(48 * (log.len() + 1));
    out.push_str(STATS_HEADER);
    out.push('\n');
    for s in log {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.3}",
            s.step, s.accepted as u8, s.pairs, s.appended, s.field_size, s.codebook_size, s.step_ms
        )
        .unwrap();
    }
    out
}
