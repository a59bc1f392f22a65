//! Anomaly localization over sequences of precomputed video-clip features.
//!
//! The crate is `no_std` (it needs `alloc`) and contains every algorithmic
//! piece: a small reverse-mode tensor engine with Adam, the multi-stage
//! masked dilated temporal convolution network, half-overlapping windowing
//! with overlap-averaged merging, the MSE and hard-pair margin losses, the
//! training loop, segmental F1@k / frame AUC evaluation, and a synthetic
//! corpus generator. File formats and the command-line driver live in the
//! `adnet` companion crate.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod annotation;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod synth;
pub mod training;
pub mod windowing;

pub use annotation::{AnnotationManifest, SegmentSpec};
pub use error::{Error, Result};
pub use model::{AdNetConfig, ModelParams, StageOutput};
pub use numerics::Tensor2;
pub use training::{LabelTimeline, TrainConfig};
pub use windowing::{ClipFeatureSequence, Window, WindowPlan};
