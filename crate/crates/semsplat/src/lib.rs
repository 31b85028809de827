//! File formats, the file-backed stream runner, benchmark reports and the
//! command-line front end for `semsplat-core`.

pub mod cli;
pub mod error;
pub mod format;
pub mod report;
pub mod stream;

pub use error::{Error, Result};
