use std::fs;
use std::path::Path;

use adnet_core::{AnnotationManifest, LabelTimeline};

use super::write_atomic;
use crate::error::{Error, Result};

/// A validated manifest with its derived clip labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedVideo {
    pub manifest: AnnotationManifest,
    pub frame_labels: Vec<u8>,
    pub clip_labels: LabelTimeline,
}

/// Parses and validates an annotation manifest, then labels its clips.
pub fn read_annotations(path: &Path, clip_label_fraction: f64) -> Result<AnnotatedVideo> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: AnnotationManifest = serde_json::from_str(&text).map_err(|e| Error::document(path, e))?;
    let frame_labels = manifest.frame_labels().map_err(|e| Error::document(path, e))?;
    let clip_labels = manifest.clip_labels(clip_label_fraction).map_err(|e| Error::document(path, e))?;
    Ok(AnnotatedVideo { manifest, frame_labels, clip_labels })
}

pub fn write_annotations(manifest: &AnnotationManifest, path: &Path) -> Result<()> {
    manifest.validate().map_err(|e| Error::document(path, e))?;
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
