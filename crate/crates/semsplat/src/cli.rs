//! Command-line surface. Exit codes: 0 ok, 1 validation, 2 format or io,
//! 3 usage.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use semsplat_core::annotate::{annotate_points, segmentation_metrics, SegmentationMetrics};
use semsplat_core::query::{argmax_rows, classify, score_classes, ScoreMode};
use semsplat_core::synth::{self, NoiseConfig, Scene, SceneParams};
use semsplat_core::{validate_field, Codebook, EngineConfig, GaussianField};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{self, ClassVectors, PointCloud};
use crate::report;
use crate::stream;

#[derive(Debug, Parser)]
#[command(name = "semsplat", version, about = "Streaming semantic Gaussian field fusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Dense,
    Codebook,
}

impl From<Mode> for ScoreMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Dense => ScoreMode::Dense,
            Mode::Codebook => ScoreMode::Codebook,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchTarget {
    Memory,
    Query,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene: scene.json, gt.espc, classes.estx, classes.json.
    GenScene {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        instances: usize,
        #[arg(long, default_value_t = 8)]
        classes: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// Bound on |cos| between class prototypes.
        #[arg(long, default_value_t = 0.3)]
        separation: f64,
        /// Ground-truth surface points to sample.
        #[arg(long, default_value_t = 20_000)]
        gt_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a frame stream of a generated scene.
    GenStream {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 300)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        width: u32,
        #[arg(long, default_value_t = 48)]
        height: u32,
        /// Per-component feature noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fuse a directory of frames into a field dump and a stats CSV.
    Run {
        #[arg(long)]
        frames_dir: PathBuf,
        /// JSON engine configuration; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_field: PathBuf,
        /// Stats CSV path; defaults to the field path with `.stats.csv`.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Score every Gaussian against class vectors.
    Query {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Codebook)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label a point cloud from the field; writes labels.bin and, when the
    /// cloud carries ground truth, metrics.json.
    Annotate {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        radius: Option<f64>,
        /// Isotropic sigma for fields without shapes.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, value_enum, default_value_t = Mode::Codebook)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Memory or query-latency report as JSON. Without --field, memory
    /// covers the reference scene table and query uses a random field.
    Bench {
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long, value_enum)]
        what: BenchTarget,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        entry_bytes: u64,
        #[arg(long, default_value_t = 32)]
        queries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        gaussians: usize,
        #[arg(long, default_value_t = 10_000)]
        codebook_len: usize,
        #[arg(long, default_value_t = 768)]
        dim: usize,
        #[arg(long, default_value_t = 6)]
        cache_len: usize,
    },
    /// Check a field dump; exits 1 when any diagnostic is found.
    Validate {
        #[arg(long)]
        field: PathBuf,
    },
}

/// `scene.json`: the scene and the parameters that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    pub params: SceneParams,
    pub scene: Scene,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryOutput {
    pub mode: String,
    pub classes: usize,
    pub labels: Vec<u32>,
    /// Row-major `Gaussians × classes`.
    pub scores: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotateReport {
    pub points: usize,
    pub unlabeled: usize,
    pub radius: f64,
    pub metrics: Option<SegmentationMetrics>,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))
}

fn class_matrix(path: &Path, codebook: &Codebook) -> Result<ClassVectors> {
    let classes = format::read_classes(path)?;
    if !codebook.is_empty() && classes.dim != codebook.dim() {
        return Err(Error::Usage(format!("class dim {} does not match codebook dim {}", classes.dim, codebook.dim())));
    }
    Ok(classes)
}

fn probabilities(field: &GaussianField, codebook: &Codebook, classes: &ClassVectors, mode: Mode) -> Result<Vec<f32>> {
    let scores = score_classes(&classes.vectors, classes.dim, field, codebook, mode.into())?;
    Ok(classify(&scores, classes.len()))
}

fn stats_path(field: &Path) -> PathBuf {
    let mut s = field.as_os_str().to_owned();
    s.push(".stats.csv");
    PathBuf::from(s)
}

/// Executes one parsed command, writing human-readable summaries to `out`.
pub fn execute(command: Command, out: &mut dyn std::io::Write) -> Result<()> {
    let say = |out: &mut dyn std::io::Write, line: String| -> Result<()> {
        writeln!(out, "{line}").map_err(Error::io("stdout"))
    };
    match command {
        Command::GenScene { seed, instances, classes, dim, separation, gt_points, out: dir } => {
            let params = SceneParams { seed, n_instances: instances, n_classes: classes, feature_dim: dim, separation, ..Default::default() };
            let scene = synth::generate_scene(&params)?;
            let (points, labels) = synth::sample_surface_points(&scene, gt_points, seed)?;
            create_dir(&dir)?;
            format::write_json(&dir.join("scene.json"), &SceneFile { params, scene: scene.clone() })?;
            format::write_points(&dir.join("gt.espc"), &PointCloud { points, labels: Some(labels) })?;
            format::write_classes(&dir.join("classes.estx"), &ClassVectors { dim, vectors: scene.prototypes.clone() })?;
            let names: Vec<String> = (0..classes).map(|c| format!("class_{c}")).collect();
            format::write_json(&dir.join("classes.json"), &names)?;
            say(out, format!("scene: {} primitives, {} classes -> {}", scene.primitives.len(), classes, dir.display()))
        }
        Command::GenStream { scene, frames, seed, width, height, noise, out_dir } => {
            let file: SceneFile = format::read_json(&scene)?;
            let k = synth::default_intrinsics(width, height)?;
            let noise = NoiseConfig { seed, feature_sigma: noise, ..Default::default() };
            let poses = synth::generate_trajectory(&file.scene, frames, seed)?;
            create_dir(&out_dir)?;
            for (i, pose) in poses.iter().enumerate() {
                let frame = synth::render_frame(&file.scene, pose, &k, &noise, i as u64)?;
                format::write_frame(&out_dir.join(stream::frame_file_name(i)), &frame)?;
            }
            say(out, format!("stream: {frames} frames -> {}", out_dir.display()))
        }
        Command::Run { frames_dir, config, out_field, stats } => {
            let config = stream::load_config(config.as_deref())?;
            let paths = stream::list_frames(&frames_dir)?;
            let (field, codebook, log) = stream::run_frames(&paths, &config)?;
            format::save_field(&out_field, &field, &codebook)?;
            let stats = stats.unwrap_or_else(|| stats_path(&out_field));
            std::fs::write(&stats, stream::stats_csv(&log)).map_err(Error::io(&stats))?;
            let accepted = log.iter().filter(|s| s.accepted).count();
            say(
                out,
                format!("run: {} frames, {accepted} keyframes, {} gaussians, {} codebook entries", log.len(), field.len(), codebook.len()),
            )
        }
        Command::Query { field, classes, mode, out: path } => {
            let (field, codebook) = format::load_field(&field)?;
            let classes = class_matrix(&classes, &codebook)?;
            let scores = score_classes(&classes.vectors, classes.dim, &field, &codebook, mode.into())?;
            let labels = argmax_rows(&scores, classes.len());
            let mode = format!("{mode:?}").to_lowercase();
            format::write_json(&path, &QueryOutput { mode, classes: classes.len(), labels, scores })?;
            say(out, format!("query: {} gaussians x {} classes -> {}", field.len(), classes.len(), path.display()))
        }
        Command::Annotate { field, points, classes, radius, sigma, mode, out: dir } => {
            let (field, codebook) = format::load_field(&field)?;
            let classes = class_matrix(&classes, &codebook)?;
            let cloud = format::read_points(&points)?;
            let radius = radius.unwrap_or(EngineConfig::default().annotate_radius);
            let probs = probabilities(&field, &codebook, &classes, mode)?;
            let labeled = annotate_points(&cloud.points, &field, &probs, classes.len(), radius, sigma)?;
            let metrics = match &cloud.labels {
                Some(gt) => Some(segmentation_metrics(&labeled.labels, gt, classes.len())?),
                None => None,
            };
            create_dir(&dir)?;
            format::write_labels(&dir.join("labels.bin"), &labeled.labels)?;
            let unlabeled = labeled.labels.iter().filter(|&&l| l as usize == classes.len()).count();
            let report = AnnotateReport { points: cloud.points.len(), unlabeled, radius, metrics };
            if report.metrics.is_some() {
                format::write_json(&dir.join("metrics.json"), &report)?;
            }
            match &report.metrics {
                Some(m) => say(out, format!("annotate: {} points, mIoU {:.4}, mACC {:.4}", report.points, m.miou, m.macc)),
                None => say(out, format!("annotate: {} points, {unlabeled} unlabeled", report.points)),
            }
        }
        Command::Bench { field, what, out: path, entry_bytes, queries, seed, gaussians, codebook_len, dim, cache_len } => {
            let loaded = field.as_deref().map(format::load_field).transpose()?;
            let json = match (what, loaded) {
                (BenchTarget::Memory, Some((f, c))) => serde_json::to_value(report::memory_report(&f, &c, entry_bytes)),
                (BenchTarget::Memory, None) => {
                    serde_json::to_value(report::bench_scene_memory(dim as u64, cache_len as u64, entry_bytes))
                }
                (BenchTarget::Query, Some((f, c))) => serde_json::to_value(report::bench_query(&f, &c, queries, seed)?),
                (BenchTarget::Query, None) => {
                    let (f, c) = synth::random_field(gaussians, codebook_len, dim, cache_len, seed)?;
                    serde_json::to_value(report::bench_query(&f, &c, queries, seed)?)
                }
            }
            .expect("reports serialize");
            match path {
                Some(p) => format::write_json(&p, &json),
                None => say(out, serde_json::to_string_pretty(&json).expect("value serializes")),
            }
        }
        Command::Validate { field } => {
            let (field, codebook) = format::load_field(&field)?;
            let diagnostics = validate_field(&field, &codebook);
            for d in &diagnostics {
                say(out, d.to_string())?;
            }
            if diagnostics.is_empty() {
                say(out, format!("ok: {} gaussians, {} codebook entries", field.len(), codebook.len()))
            } else {
                Err(Error::Invalid(diagnostics.len()))
            }
        }
    }
}
