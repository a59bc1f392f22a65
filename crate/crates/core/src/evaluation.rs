//! Segment-level and frame-level evaluation of anomaly timelines.
//!
//! Segmental F1@k treats normal runs as segments in their own right, so a
//! report carries three scopes: abnormal segments only, normal segments
//! only, and both. Counts are pooled across all videos before precision and
//! recall are formed.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{input_err, Error, Result};

pub const NORMAL: u8 = 0;
pub const ABNORMAL: u8 = 1;

/// Half-open frame run `[start_frame, end_frame)` sharing one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TemporalSegment {
    pub start_frame: u64,
    pub end_frame: u64,
    pub label: u8,
}

impl TemporalSegment {
    pub fn new(start_frame: u64, end_frame: u64, label: u8) -> Self {
        Self { start_frame, end_frame, label }
    }

    pub fn len(&self) -> u64 {
        self.end_frame - self.start_frame
    }

    pub fn is_empty(&self) -> bool {
        self.end_frame <= self.start_frame
    }

    pub fn intersection(&self, other: &Self) -> u64 {
        let lo = self.start_frame.max(other.start_frame);
        let hi = self.end_frame.min(other.end_frame);
        hi.saturating_sub(lo)
    }

    pub fn union(&self, other: &Self) -> u64 {
        self.len() + other.len() - self.intersection(other)
    }

    pub fn iou(&self, other: &Self) -> f64 {
        self.intersection(other) as f64 / self.union(other) as f64
    }
}

/// Which segment labels take part in a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Scope {
    Abnormal,
    Normal,
    All,
}

impl Scope {
    pub const ALL_SCOPES: [Scope; 3] = [Scope::Abnormal, Scope::Normal, Scope::All];

    pub fn includes(self, label: u8) -> bool {
        match self {
            Scope::Abnormal => label == ABNORMAL,
            Scope::Normal => label == NORMAL,
            Scope::All => true,
        }
    }
}

/// Copies each clip value onto its `frames_per_clip` frames.
pub fn expand_to_frames<T: Copy>(clip_values: &[T], frames_per_clip: usize, total_frames: usize) -> Result<alloc::vec::Vec<T>> {
    let n = frames_per_clip;
    let t = clip_values.len();
    if n == 0 || t == 0 {
        return Err(input_err!("need at least one clip and one frame per clip"));
    }
    let (lo, hi) = (n * (t - 1) + 1, n * t);
    if total_frames < lo || total_frames > hi {
        return Err(input_err!(
            "{total_frames} frames cannot come from {t} clips of {n} frames (expected {lo}..={hi})"
        ));
    }
    Ok((0..total_frames).map(|j| clip_values[j / n]).collect())
}

/// Run-length encodes frame labels into maximal constant-label segments.
pub fn segments_from_labels(frame_labels: &[u8]) -> Result<Vec<TemporalSegment>> {
    if frame_labels.is_empty() {
        return Err(input_err!("cannot segment an empty label sequence"));
    }
    let mut out = Vec::new();
    let mut start = 0usize;
    for i in 1..=frame_labels.len() {
        if i == frame_labels.len() || frame_labels[i] != frame_labels[start] {
            out.push(TemporalSegment::new(start as u64, i as u64, frame_labels[start]));
            start = i;
        }
    }
    Ok(out)
}

/// Checks that `segments` are sorted, contiguous, non-empty and cover
/// `[0, end)`; returns `end`.
pub fn partition_extent(segments: &[TemporalSegment]) -> Result<u64> {
    let mut cursor = 0u64;
    for (i, s) in segments.iter().enumerate() {
        if s.is_empty() {
            return Err(input_err!("segment {i} [{}, {}) is empty", s.start_frame, s.end_frame));
        }
        if s.start_frame != cursor {
            return Err(input_err!("segment {i} starts at frame {} but previous ends at {cursor}", s.start_frame));
        }
        cursor = s.end_frame;
    }
    Ok(cursor)
}

/// True-positive, false-positive and false-negative segment counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SegmentCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
}

impl core::ops::AddAssign for SegmentCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.true_positives += rhs.true_positives;
        self.false_positives += rhs.false_positives;
        self.false_negatives += rhs.false_negatives;
    }
}

/// Precision, recall and F1, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SegmentCounts {
    pub fn score(&self) -> F1Score {
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let precision = ratio(self.true_positives, self.true_positives + self.false_positives);
        let recall = ratio(self.true_positives, self.true_positives + self.false_negatives);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        F1Score { precision, recall, f1 }
    }
}

/// `iou >= k/100` evaluated on integer frame counts.
#[inline]
pub fn iou_passes(intersection: u64, union: u64, k: u32) -> bool {
    u128::from(intersection) * 100 >= u128::from(union) * u128::from(k)
}

/// Greedy in-order matching: each predicted segment claims its best-IoU
/// same-label ground-truth segment if that overlap passes `k` and the
/// ground truth is still unclaimed.
pub fn match_segments(pred: &[TemporalSegment], gt: &[TemporalSegment], k: u32, scope: Scope) -> SegmentCounts {
    let gt: Vec<&TemporalSegment> = gt.iter().filter(|s| scope.includes(s.label)).collect();
    let mut claimed = alloc::vec![false; gt.len()];
    let mut counts = SegmentCounts::default();
    for p in pred.iter().filter(|s| scope.includes(s.label)) {
        // best by IoU, ties broken by the earliest segment
        let mut best: Option<(usize, u64, u64)> = None;
        for (j, g) in gt.iter().enumerate() {
            if g.label != p.label {
                continue;
            }
            let (inter, uni) = (p.intersection(g), p.union(g));
            let better = match best {
                None => true,
                Some((_, bi, bu)) => u128::from(inter) * u128::from(bu) > u128::from(bi) * u128::from(uni),
            };
            if better {
                best = Some((j, inter, uni));
            }
        }
        match best {
            Some((j, inter, uni)) if inter > 0 && iou_passes(inter, uni, k) && !claimed[j] => {
                claimed[j] = true;
                counts.true_positives += 1;
            }
            _ => counts.false_positives += 1,
        }
    }
    counts.false_negatives = claimed.iter().filter(|&&c| !c).count() as u64;
    counts
}

/// Segmental precision, recall and F1 at IoU threshold `k` percent.
pub fn f1_at_k(pred: &[TemporalSegment], gt: &[TemporalSegment], k: u32, scope: Scope) -> Result<F1Score> {
    let (pe, ge) = (partition_extent(pred)?, partition_extent(gt)?);
    if pe != ge {
        return Err(input_err!("prediction covers {pe} frames but ground truth covers {ge}"));
    }
    Ok(match_segments(pred, gt, k, scope).score())
}

/// Frame-level ROC AUC as the Mann–Whitney statistic
/// `P(abnormal > normal) + 0.5·P(tie)`, computed from mid-ranks.
pub fn frame_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(input_err!("{} scores but {} labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(input_err!("non-finite score"));
    }
    let n_pos = labels.iter().filter(|&&l| l == ABNORMAL).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("frame AUC needs both normal and abnormal frames".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of 2·rank over positives, kept integral to avoid rounding
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the midrank (i + j + 2) / 2
        let twice_mid = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&o| labels[o] == ABNORMAL).count() as u128;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j + 1;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    // U = R - np(np+1)/2, doubled
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2.0 * np as f64 * nn as f64))
}

/// Thresholded frame scores of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTimeline {
    pub video_id: String,
    pub frame_scores: Vec<f64>,
    pub threshold: f64,
}

/// Ground-truth frame labels of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTimeline {
    pub video_id: String,
    pub frame_labels: Vec<u8>,
}

/// Metrics at one IoU threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreAtK {
    pub k: u32,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Corpus-level segmental F1@k per scope plus frame AUC.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub num_videos: usize,
    pub num_frames: usize,
    pub abnormal: Vec<ScoreAtK>,
    pub normal: Vec<ScoreAtK>,
    pub all: Vec<ScoreAtK>,
    /// `None` when the pooled ground truth contains a single class.
    pub frame_auc: Option<f64>,
}

impl EvalReport {
    pub fn scope(&self, scope: Scope) -> &[ScoreAtK] {
        match scope {
            Scope::Abnormal => &self.abnormal,
            Scope::Normal => &self.normal,
            Scope::All => &self.all,
        }
    }

    pub fn f1(&self, scope: Scope, k: u32) -> Option<f64> {
        self.scope(scope).iter().find(|s| s.k == k).map(|s| s.f1)
    }
}

pub const DEFAULT_KS: [u32; 3] = [10, 25, 50];

/// Pools segment counts over every video, per scope and `k`.
pub fn evaluate(preds: &[PredictedTimeline], truths: &[TruthTimeline], ks: &[u32]) -> Result<EvalReport> {
    if truths.is_empty() {
        return Err(input_err!("no ground-truth videos"));
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > 100) {
        return Err(input_err!("k must lie in 1..=100, got {k}"));
    }
    let by_id: BTreeMap<&str, &PredictedTimeline> = preds.iter().map(|p| (p.video_id.as_str(), p)).collect();
    if by_id.len() != preds.len() {
        return Err(input_err!("duplicate video id among predictions"));
    }
    let truth_ids: BTreeMap<&str, &TruthTimeline> = truths.iter().map(|t| (t.video_id.as_str(), t)).collect();
    if let Some(extra) = by_id.keys().find(|id| !truth_ids.contains_key(*id)) {
        return Err(input_err!("prediction for {extra} has no ground truth"));
    }
    let mut counts: BTreeMap<(Scope, u32), SegmentCounts> = BTreeMap::new();
    let mut all_scores = Vec::new();
    let mut all_labels = Vec::new();
    for truth in truth_ids.values() {
        let pred = by_id
            .get(truth.video_id.as_str())
            .ok_or_else(|| input_err!("missing prediction for video {}", truth.video_id))?;
        if pred.frame_scores.len() != truth.frame_labels.len() {
            return Err(input_err!(
                "video {}: {} predicted frames vs {} ground-truth frames",
                truth.video_id,
                pred.frame_scores.len(),
                truth.frame_labels.len()
            ));
        }
        let labels: Vec<u8> = pred.frame_scores.iter().map(|&s| u8::from(s >= pred.threshold)).collect();
        let pred_segs = segments_from_labels(&labels)?;
        let gt_segs = segments_from_labels(&truth.frame_labels)?;
        for scope in Scope::ALL_SCOPES {
            for &k in ks {
                *counts.entry((scope, k)).or_default() += match_segments(&pred_segs, &gt_segs, k, scope);
            }
        }
        all_scores.extend_from_slice(&pred.frame_scores);
        all_labels.extend_from_slice(&truth.frame_labels);
    }
    let table = |scope: Scope| -> Vec<ScoreAtK> {
        ks.iter()
            .map(|&k| {
                let F1Score { precision, recall, f1 } = counts[&(scope, k)].score();
                ScoreAtK { k, precision, recall, f1 }
            })
            .collect()
    };
    let frame_auc = match frame_auc(&all_scores, &all_labels) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        num_videos: truths.len(),
        num_frames: all_labels.len(),
        abnormal: table(Scope::Abnormal),
        normal: table(Scope::Normal),
        all: table(Scope::All),
        frame_auc,
    })
}
