//! Seeded generator of labelled clip-feature corpora.
//!
//! Every clip feature is drawn from an isotropic Gaussian centred at
//! `-separation/2` (normal) or `+separation/2` (abnormal) in every
//! dimension. Abnormal clips form contiguous runs; each video keeps at least
//! one normal clip. Values are rounded to `f32` so corpora survive the
//! on-disk feature format unchanged.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::annotation::{AnnotationManifest, DEFAULT_FRAMES_PER_CLIP};
use crate::error::{config_err, Result};
use crate::evaluation::segments_from_labels;
use crate::windowing::ClipFeatureSequence;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SynthConfig {
    pub num_videos: usize,
    pub clips_min: usize,
    pub clips_max: usize,
    /// Inclusive range of abnormal runs per video.
    pub abnormal_segments_min: usize,
    pub abnormal_segments_max: usize,
    /// Inclusive range of abnormal run lengths, in clips.
    pub segment_clips_min: usize,
    pub segment_clips_max: usize,
    pub input_dim: usize,
    pub class_mean_separation: f64,
    pub noise_std: f64,
    pub frames_per_clip: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_videos: 40,
            clips_min: 48,
            clips_max: 192,
            abnormal_segments_min: 0,
            abnormal_segments_max: 3,
            segment_clips_min: 4,
            segment_clips_max: 32,
            input_dim: 32,
            class_mean_separation: 4.0,
            noise_std: 1.0,
            frames_per_clip: DEFAULT_FRAMES_PER_CLIP,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_videos == 0 {
            return Err(config_err!("num_videos must be at least 1"));
        }
        if self.clips_min < 4 || self.clips_max < self.clips_min {
            return Err(config_err!(
                "clip range {}..={} must satisfy 4 <= clips_min <= clips_max",
                self.clips_min,
                self.clips_max
            ));
        }
        if self.abnormal_segments_max < self.abnormal_segments_min {
            return Err(config_err!("abnormal_segments_max is below abnormal_segments_min"));
        }
        if self.segment_clips_min == 0 || self.segment_clips_max < self.segment_clips_min {
            return Err(config_err!("segment clip range must satisfy 1 <= min <= max"));
        }
        if self.segment_clips_min >= self.clips_min {
            return Err(config_err!("segment_clips_min must be shorter than clips_min"));
        }
        if self.input_dim == 0 || self.frames_per_clip == 0 {
            return Err(config_err!("input_dim and frames_per_clip must be at least 1"));
        }
        if !(self.class_mean_separation >= 0.0 && self.class_mean_separation.is_finite()) {
            return Err(config_err!("class_mean_separation must be finite and non-negative"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(config_err!("noise_std must be finite and non-negative"));
        }
        Ok(())
    }
}

/// One generated video.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub features: ClipFeatureSequence,
    pub annotation: AnnotationManifest,
}

/// Clip labels with `count` abnormal runs placed at random, separated by at
/// least one normal clip and never covering the whole video.
fn place_runs(rng: &mut impl Rng, num_clips: usize, count: usize, cfg: &SynthConfig) -> Vec<u8> {
    let mut lengths: Vec<usize> =
        (0..count).map(|_| rng.random_range(cfg.segment_clips_min..=cfg.segment_clips_max).min(num_clips - 1)).collect();
    while !lengths.is_empty() && lengths.iter().sum::<usize>() + lengths.len() - 1 > num_clips - 1 {
        lengths.pop();
    }
    let mut labels = vec![0u8; num_clips];
    if lengths.is_empty() {
        return labels;
    }
    let k = lengths.len();
    let free = num_clips - lengths.iter().sum::<usize>() - (k - 1);
    let mut cuts: Vec<usize> = (0..k).map(|_| rng.random_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut pos = 0;
    let mut prev_cut = 0;
    for (i, (&len, &cut)) in lengths.iter().zip(&cuts).enumerate() {
        pos += cut - prev_cut + usize::from(i > 0);
        prev_cut = cut;
        labels[pos..pos + len].fill(1);
        pos += len;
    }
    labels
}

/// Generates `cfg.num_videos` videos; identical configs give identical corpora.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SyntheticVideo>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let half = cfg.class_mean_separation / 2.0;
    let mut videos = Vec::with_capacity(cfg.num_videos);
    let mut any_abnormal = false;
    for v in 0..cfg.num_videos {
        let num_clips = rng.random_range(cfg.clips_min..=cfg.clips_max);
        let mut count = rng.random_range(cfg.abnormal_segments_min..=cfg.abnormal_segments_max);
        if v + 1 == cfg.num_videos && !any_abnormal {
            count = count.max(1);
        }
        let clip_labels = place_runs(&mut rng, num_clips, count, cfg);
        any_abnormal |= clip_labels.contains(&1);

        let mut data = Vec::with_capacity(num_clips * cfg.input_dim);
        for &label in &clip_labels {
            let mean = if label == 1 { half } else { -half };
            for _ in 0..cfg.input_dim {
                let z: f64 = rng.sample(StandardNormal);
                data.push(f64::from((mean + cfg.noise_std * z) as f32));
            }
        }
        let video_id = format!("synth_{v:04}");
        let features = ClipFeatureSequence::from_clip_major(video_id.clone(), num_clips, cfg.input_dim, &data)?;
        let frame_labels: Vec<u8> =
            clip_labels.iter().flat_map(|&l| core::iter::repeat_n(l, cfg.frames_per_clip)).collect();
        let annotation = AnnotationManifest {
            video_id,
            frames_per_clip: cfg.frames_per_clip,
            total_frames: frame_labels.len() as u64,
            segments: segments_from_labels(&frame_labels)?,
        };
        videos.push(SyntheticVideo { features, annotation });
    }
    Ok(videos)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig { num_videos: 12, clips_min: 8, clips_max: 40, input_dim: 3, ..SynthConfig::default() }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SynthConfig { seed: 8, ..small() };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn annotations_partition_and_match_features() {
        let videos = generate(&small()).unwrap();
        let mut labels_seen = [false; 2];
        for v in &videos {
            v.annotation.validate().unwrap();
            assert_eq!(v.annotation.num_clips(), v.features.num_clips());
            for s in &v.annotation.segments {
                labels_seen[s.label as usize] = true;
            }
            let clips = v.annotation.clip_labels(0.5).unwrap();
            assert!(clips.labels.contains(&0));
        }
        assert_eq!(labels_seen, [true, true]);
    }

    #[test]
    fn class_means_follow_labels() {
        let cfg = SynthConfig { noise_std: 0.0, ..small() };
        for v in generate(&cfg).unwrap() {
            let labels = v.annotation.clip_labels(0.5).unwrap();
            for (t, &l) in labels.labels.iter().enumerate() {
                let want = if l == 1 { 2.0 } else { -2.0 };
                assert!((0..cfg.input_dim).all(|d| v.features.features().get(d, t) == want));
            }
        }
    }

    #[test]
    fn forced_abnormal_run() {
        let cfg = SynthConfig { abnormal_segments_min: 0, abnormal_segments_max: 0, ..small() };
        let videos = generate(&cfg).unwrap();
        assert!(videos.last().unwrap().annotation.segments.iter().any(|s| s.label == 1));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate(&SynthConfig { clips_min: 3, ..small() }).is_err());
        assert!(generate(&SynthConfig { class_mean_separation: -1.0, ..small() }).is_err());
    }
}
