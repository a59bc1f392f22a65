//! Temporal annotations of one video.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{input_err, Result};
use crate::evaluation::{TemporalSegment, ABNORMAL, NORMAL};
use crate::training::{clip_labels_from_frames, LabelTimeline};

pub type SegmentSpec = TemporalSegment;

pub const DEFAULT_FRAMES_PER_CLIP: usize = 16;

/// Frame-level ground truth for one video.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AnnotationManifest {
    pub video_id: String,
    #[cfg_attr(feature = "serde", serde(default = "default_frames_per_clip"))]
    pub frames_per_clip: usize,
    pub total_frames: u64,
    pub segments: Vec<SegmentSpec>,
}

#[cfg(feature = "serde")]
fn default_frames_per_clip() -> usize {
    DEFAULT_FRAMES_PER_CLIP
}

impl AnnotationManifest {
    /// Checks that the segments partition `[0, total_frames)` with binary labels.
    /// All problems are reported together.
    pub fn validate(&self) -> Result<()> {
        let mut problems: Vec<String> = Vec::new();
        if self.frames_per_clip == 0 {
            problems.push("frames_per_clip must be at least 1".into());
        }
        if self.total_frames == 0 {
            problems.push("total_frames must be at least 1".into());
        }
        if self.segments.is_empty() {
            problems.push("no segments".into());
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.label != NORMAL && s.label != ABNORMAL {
                problems.push(alloc::format!("segment {i} has label {} (expected 0 or 1)", s.label));
            }
            if s.start_frame >= s.end_frame {
                problems.push(alloc::format!("segment {i} [{}, {}) is empty", s.start_frame, s.end_frame));
            }
        }
        if let Some(first) = self.segments.first() {
            if first.start_frame != 0 {
                problems.push(alloc::format!("segment 0 starts at frame {} instead of 0", first.start_frame));
            }
        }
        for (i, pair) in self.segments.windows(2).enumerate() {
            let (a, b) = (&pair[0], &pair[1]);
            if b.start_frame > a.end_frame {
                problems.push(alloc::format!(
                    "gap between segments {i} and {}: frames [{}, {})",
                    i + 1,
                    a.end_frame,
                    b.start_frame
                ));
            } else if b.start_frame < a.end_frame {
                problems.push(alloc::format!(
                    "segments {i} and {} overlap: [{}, {}) vs [{}, {})",
                    i + 1,
                    a.start_frame,
                    a.end_frame,
                    b.start_frame,
                    b.end_frame
                ));
            }
        }
        if let Some(last) = self.segments.last() {
            if last.end_frame != self.total_frames {
                problems.push(alloc::format!(
                    "last segment ends at frame {} but total_frames is {}",
                    last.end_frame,
                    self.total_frames
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(input_err!("video {}: {}", self.video_id, problems.join("; ")))
        }
    }

    /// One label per frame.
    pub fn frame_labels(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.total_frames as usize);
        for s in &self.segments {
            out.extend(core::iter::repeat_n(s.label, s.len() as usize));
        }
        Ok(out)
    }

    /// Number of clips spanned by the frames.
    pub fn num_clips(&self) -> usize {
        (self.total_frames as usize).div_ceil(self.frames_per_clip.max(1))
    }

    /// Clip labels under the abnormal-fraction rule.
    pub fn clip_labels(&self, clip_label_fraction: f64) -> Result<LabelTimeline> {
        clip_labels_from_frames(&self.frame_labels()?, self.frames_per_clip, clip_label_fraction)
    }
}
