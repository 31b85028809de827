//! Streaming semantic Gaussian field fusion.
//!
//! Frames of depth, confidence and instance features are unprojected into
//! local Gaussians, paired with the global field by projection, and fused.
//! Semantics are stored per Gaussian as a short sparse cache of weights
//! over an append-only codebook of unit instance features, which keeps the
//! field small and lets similarity queries run against the codebook once.
//!
//! The crate is `no_std` with `alloc`. The `std` feature enables
//! `std::error::Error` on [`Error`], `parallel` adds rayon-backed kernels,
//! and `serde` derives serialization for configs and reports.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is used so that NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod annotate;
pub mod error;
pub mod fusion;
pub mod ingest;
pub mod math;
pub mod pairing;
pub mod query;
pub mod sparse;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use fusion::{run_stream, step, Clock, FusionEngine, NoClock, StepReport, StepStats};
pub use types::{
    validate_field, CacheSeed, CameraIntrinsics, Codebook, Diagnostic, EngineConfig, Frame, GaussianField,
    LabeledPointCloud, PairSet, Pose, ShapeBlock,
};
