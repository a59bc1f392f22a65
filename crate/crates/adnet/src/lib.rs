//! File formats and command implementations for the `adnet` tool.
//!
//! On-disk formats:
//!
//! * feature files (`.adnf`): `b"ADNF"`, `u32` version (1), `u32` clip
//!   count, `u32` dimension, then `clips × dim` little-endian `f32`
//!   values, clip-major;
//! * annotation manifests, score timelines and evaluation reports: JSON;
//! * checkpoints (`.adnc`): `b"ADNC"`, `u32` version (1), `u64` header
//!   length, a JSON header, then every tensor listed in the header as
//!   little-endian `f64` values in header order.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use error::{Error, Result};

/// Version stamped into every document the tool writes.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
