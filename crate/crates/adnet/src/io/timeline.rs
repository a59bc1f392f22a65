use std::fs;
use std::path::Path;

use adnet_core::evaluation::EvalReport;
use adnet_core::AdNetConfig;
use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};

/// Per-video output of `infer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreTimeline {
    pub tool_version: String,
    pub video_id: String,
    pub model: AdNetConfig,
    pub threshold: f64,
    pub frames_per_clip: usize,
    pub clip_scores: Vec<f64>,
    pub clip_labels: Vec<u8>,
    pub frame_scores: Vec<f64>,
}

/// Output of `eval`. Field order is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub tool_version: String,
    pub pred_dir: String,
    pub gt_dir: String,
    pub ks: Vec<u32>,
    pub report: EvalReport,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

pub fn write_timeline(timeline: &ScoreTimeline, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string(timeline).expect("timeline serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_timeline(path: &Path) -> Result<ScoreTimeline> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let timeline: ScoreTimeline = serde_json::from_str(&text).map_err(|e| Error::document(path, e))?;
    if timeline.clip_scores.is_empty() {
        return Err(Error::document(path, "clip_scores is empty"));
    }
    if timeline.clip_labels.len() != timeline.clip_scores.len() {
        return Err(Error::document(path, "clip_labels and clip_scores differ in length"));
    }
    if let Some(i) = timeline.clip_scores.iter().position(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::document(path, format!("clip_scores[{i}] is outside [0, 1]")));
    }
    if timeline.frames_per_clip == 0 {
        return Err(Error::document(path, "frames_per_clip is 0"));
    }
    Ok(timeline)
}

pub fn write_report(doc: &ReportDocument, path: &Path) -> Result<()> {
    write_atomic(path, doc.to_json().as_bytes())
}
