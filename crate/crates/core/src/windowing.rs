//! Fixed-width, half-overlapping windows over clip-feature sequences and
//! overlap-averaged merging of per-window scores.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, input_err, Error, Result};
use crate::numerics::Tensor2;

/// Feature vectors of one video, stored as a `dim × num_clips` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatureSequence {
    pub video_id: String,
    features: Tensor2,
}

impl ClipFeatureSequence {
    /// Builds a sequence from clip-major data (`num_clips` rows of `dim` values).
    pub fn from_clip_major(video_id: impl Into<String>, num_clips: usize, dim: usize, data: &[f64]) -> Result<Self> {
        if num_clips == 0 || dim == 0 {
            return Err(input_err!("feature sequence must have at least one clip and one dimension"));
        }
        if data.len() != num_clips * dim {
            return Err(input_err!("expected {num_clips}x{dim} feature values, got {}", data.len()));
        }
        let mut features = Tensor2::zeros(dim, num_clips);
        for (t, clip) in data.chunks_exact(dim).enumerate() {
            for (d, &v) in clip.iter().enumerate() {
                features.set(d, t, v);
            }
        }
        let features = features.ensure_finite("feature sequence").map_err(|_| input_err!("non-finite feature value"))?;
        Ok(Self { video_id: video_id.into(), features })
    }

    pub fn from_tensor(video_id: impl Into<String>, features: Tensor2) -> Self {
        Self { video_id: video_id.into(), features }
    }

    pub fn num_clips(&self) -> usize {
        self.features.length()
    }

    pub fn dim(&self) -> usize {
        self.features.channels()
    }

    /// `dim × num_clips` view.
    pub fn features(&self) -> &Tensor2 {
        &self.features
    }

    /// Clip-major copy of the values.
    pub fn to_clip_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim() * self.num_clips());
        for t in 0..self.num_clips() {
            out.extend((0..self.dim()).map(|d| self.features.get(d, t)));
        }
        out
    }
}

/// Half-open clip span `[start, end)` covered by one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpan {
    pub start: usize,
    pub end: usize,
}

/// Window spans for a sequence of `num_clips` clips.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    pub width: usize,
    pub num_clips: usize,
    pub spans: Vec<WindowSpan>,
}

impl WindowPlan {
    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}

/// A `dim × width` slice of features with its padding mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub features: Tensor2,
    /// 1 for real clips, 0 for zero padding at the tail.
    pub mask: Vec<f64>,
    pub video_id: String,
    pub start_clip: usize,
}

impl Window {
    pub fn width(&self) -> usize {
        self.mask.len()
    }

    /// Number of real (unpadded) clips.
    pub fn valid_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0.0).count()
    }
}

/// Windows start every `width/2` clips until one reaches the end of the sequence.
pub fn plan_windows(num_clips: usize, width: usize) -> Result<WindowPlan> {
    if width < 2 || width % 2 != 0 {
        return Err(config_err!("window width must be even and at least 2, got {width}"));
    }
    if num_clips == 0 {
        return Err(input_err!("cannot plan windows over an empty sequence"));
    }
    let stride = width / 2;
    let mut spans = Vec::new();
    for i in 0.. {
        let start = stride * i;
        let end = start + width;
        spans.push(WindowSpan { start, end });
        if end >= num_clips {
            break;
        }
    }
    Ok(WindowPlan { width, num_clips, spans })
}

/// Slices `seq` along `plan`, zero-filling padded columns.
pub fn materialize(seq: &ClipFeatureSequence, plan: &WindowPlan) -> Result<Vec<Window>> {
    if plan.num_clips != seq.num_clips() {
        return Err(input_err!(
            "plan is for {} clips but sequence {} has {}",
            plan.num_clips,
            seq.video_id,
            seq.num_clips()
        ));
    }
    let dim = seq.dim();
    let t_total = seq.num_clips();
    plan.spans
        .iter()
        .map(|span| {
            let mut features = Tensor2::zeros(dim, plan.width);
            let real_end = span.end.min(t_total);
            let real = real_end - span.start;
            for d in 0..dim {
                features.row_mut(d)[..real].copy_from_slice(&seq.features.row(d)[span.start..real_end]);
            }
            let mut mask = vec![0.0; plan.width];
            mask[..real].fill(1.0);
            Ok(Window { features, mask, video_id: seq.video_id.clone(), start_clip: span.start })
        })
        .collect()
}

/// Per-window scores to be merged: `(start_clip, mask, scores)`.
pub type WindowScores<'a> = (usize, &'a [f64], &'a [f64]);

/// Averages the scores of every window covering each clip; padded positions
/// never contribute.
pub fn merge_scores(windows: &[WindowScores<'_>], num_clips: usize) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; num_clips];
    let mut count = vec![0u32; num_clips];
    for &(start, mask, scores) in windows {
        if mask.len() != scores.len() {
            return Err(input_err!("window at clip {start}: mask and score lengths differ"));
        }
        for (i, (&m, &s)) in mask.iter().zip(scores).enumerate() {
            if m == 0.0 {
                continue;
            }
            let t = start + i;
            if t >= num_clips {
                return Err(input_err!("window at clip {start} has an unmasked position past the sequence end"));
            }
            sum[t] += s;
            count[t] += 1;
        }
    }
    if let Some(t) = count.iter().position(|&c| c == 0) {
        return Err(Error::Internal(alloc::format!("clip {t} is not covered by any window")));
    }
    Ok(sum.iter().zip(&count).map(|(s, &c)| s / f64::from(c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(plan: &WindowPlan) -> Vec<(usize, usize)> {
        plan.spans.iter().map(|s| (s.start, s.end)).collect()
    }

    fn seq(t: usize, dim: usize) -> ClipFeatureSequence {
        let data: Vec<f64> = (0..t * dim).map(|i| i as f64 + 1.0).collect();
        ClipFeatureSequence::from_clip_major("v", t, dim, &data).unwrap()
    }

    #[test]
    fn plan_examples() {
        assert_eq!(spans(&plan_windows(64, 64).unwrap()), [(0, 64)]);
        assert_eq!(spans(&plan_windows(96, 64).unwrap()), [(0, 64), (32, 96)]);
        assert_eq!(spans(&plan_windows(100, 64).unwrap()), [(0, 64), (32, 96), (64, 128)]);
        assert_eq!(spans(&plan_windows(1, 8).unwrap()), [(0, 8)]);
    }

    #[test]
    fn odd_width_rejected() {
        assert!(matches!(plan_windows(10, 7), Err(Error::Config(_))));
        assert!(matches!(plan_windows(10, 0), Err(Error::Config(_))));
    }

    #[test]
    fn materialize_pads_tail() {
        let s = seq(4, 2);
        let w = materialize(&s, &plan_windows(4, 8).unwrap()).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].mask, [1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        for d in 0..2 {
            assert!(w[0].features.row(d)[4..].iter().all(|&v| v == 0.0));
            assert_eq!(w[0].features.get(d, 3), s.features().get(d, 3));
        }
    }

    #[test]
    fn materialize_second_window_full() {
        let s = seq(96, 1);
        let w = materialize(&s, &plan_windows(96, 64).unwrap()).unwrap();
        assert!(w[1].mask.iter().all(|&m| m == 1.0));
        assert_eq!(w[1].start_clip, 32);
        assert_eq!(w[1].features.get(0, 0), 33.0);
        let s = seq(100, 1);
        let w = materialize(&s, &plan_windows(100, 64).unwrap()).unwrap();
        assert_eq!(w[2].valid_len(), 36);
    }

    #[test]
    fn merge_two_windows() {
        let a = vec![0.2; 64];
        let b = vec![0.4; 64];
        let m = vec![1.0; 64];
        let merged = merge_scores(&[(0, &m, &a), (32, &m, &b)], 96).unwrap();
        assert!(merged[..32].iter().all(|&v| v == 0.2));
        assert!(merged[32..64].iter().all(|&v| (v - 0.3).abs() < 1e-15));
        assert!(merged[64..].iter().all(|&v| v == 0.4));
    }

    #[test]
    fn merge_detects_gap() {
        let m = vec![1.0; 4];
        let s = vec![0.5; 4];
        assert!(matches!(merge_scores(&[(0, &m, &s)], 6), Err(Error::Internal(_))));
    }

    #[test]
    fn clip_major_round_trip() {
        let s = seq(5, 3);
        let data: Vec<f64> = (0..15).map(|i| i as f64 + 1.0).collect();
        assert_eq!(s.to_clip_major(), data);
        assert_eq!(s.features().get(2, 1), 6.0);
    }
}
