//! Losses, clip labelling, and the window-per-step training loop.

mod loss;

pub use loss::{
    ad_loss, ad_loss_with_grad, ad_margins, mse_loss, mse_loss_with_grad, record_total_loss, total_loss, AdMargins,
    LossBreakdown,
};

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, input_err, Error, Result};
use crate::model::{AdNetConfig, ModelParams};
use crate::numerics::{AdamState, Tape};
use crate::windowing::{materialize, plan_windows, ClipFeatureSequence, Window};

/// Optimization hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Weight of the AD term, strictly between 0 and 1.
    pub lambda: f64,
    /// Target margin between hard pairs.
    pub alpha: f64,
    pub epochs: usize,
    /// Seeds both initialization and window shuffling.
    pub seed: u64,
    pub use_ad_loss: bool,
    /// A clip is abnormal when at least this fraction of its frames are.
    pub clip_label_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            lambda: 0.5,
            alpha: 0.5,
            epochs: 50,
            seed: 0,
            use_ad_loss: true,
            clip_label_fraction: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(config_err!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(config_err!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.epochs == 0 {
            return Err(config_err!("epochs must be at least 1"));
        }
        if !(self.clip_label_fraction > 0.0 && self.clip_label_fraction <= 1.0) {
            return Err(config_err!("clip_label_fraction must lie in (0, 1], got {}", self.clip_label_fraction));
        }
        Ok(())
    }
}

/// Binary per-clip targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTimeline {
    pub labels: Vec<u8>,
}

impl LabelTimeline {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(input_err!("label {} at clip {i} is not binary", labels[i]));
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Clip `i` covers frames `[n·i, n·(i+1))` (the last clip may be short) and
/// is abnormal when at least `fraction` of its frames are.
pub fn clip_labels_from_frames(frame_labels: &[u8], frames_per_clip: usize, fraction: f64) -> Result<LabelTimeline> {
    if frame_labels.is_empty() {
        return Err(input_err!("no frame labels"));
    }
    if frames_per_clip == 0 {
        return Err(input_err!("frames_per_clip must be at least 1"));
    }
    let labels = frame_labels
        .chunks(frames_per_clip)
        .map(|clip| {
            let abnormal = clip.iter().filter(|&&l| l == 1).count() as f64;
            u8::from(abnormal >= fraction * clip.len() as f64)
        })
        .collect();
    LabelTimeline::new(labels)
}

/// A window together with its (zero-padded) clip targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingWindow {
    pub window: Window,
    pub targets: Vec<u8>,
}

/// Splits every video into half-overlapping windows of `width` clips.
pub fn prepare_windows(dataset: &[(ClipFeatureSequence, LabelTimeline)], width: usize) -> Result<Vec<TrainingWindow>> {
    let mut out = Vec::new();
    for (seq, labels) in dataset {
        if labels.len() != seq.num_clips() {
            return Err(input_err!(
                "video {} has {} clips but {} labels",
                seq.video_id,
                seq.num_clips(),
                labels.len()
            ));
        }
        let plan = plan_windows(seq.num_clips(), width)?;
        for window in materialize(seq, &plan)? {
            let mut targets = vec![0u8; width];
            let real = window.valid_len();
            targets[..real].copy_from_slice(&labels.labels[window.start_clip..window.start_clip + real]);
            out.push(TrainingWindow { window, targets });
        }
    }
    Ok(out)
}

/// Mean per-window losses of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mse: f64,
    pub ad: f64,
    pub total: f64,
}

/// Model, optimizer and epoch counter of one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: ModelParams,
    optimizer: AdamState,
    config: TrainConfig,
    epochs_completed: usize,
}

impl Trainer {
    pub fn new(model: ModelParams, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = AdamState::new(model.params(), config.learning_rate);
        Ok(Self { model, optimizer, config, epochs_completed: 0 })
    }

    /// Continues a run from saved model and optimizer state.
    pub fn resume(model: ModelParams, optimizer: AdamState, config: TrainConfig, epochs_completed: usize) -> Result<Self> {
        config.validate()?;
        if optimizer.first_moment.len() != model.params().len() {
            return Err(config_err!("optimizer state does not match the model"));
        }
        Ok(Self { model, optimizer, config, epochs_completed })
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.optimizer
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_completed
    }

    pub fn into_parts(self) -> (ModelParams, AdamState, usize) {
        (self.model, self.optimizer, self.epochs_completed)
    }

    /// One forward/backward pass and one Adam update on a single window.
    pub fn step(&mut self, tw: &TrainingWindow) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let stages = self.model.config().num_stages;
        let heads = self.model.record(&mut tape, &tw.window, stages)?;
        let (root, losses) = record_total_loss(&mut tape, &heads, &tw.targets, &tw.window.mask, &self.config)?;
        if !losses.total.is_finite() {
            return Err(Error::Numeric(alloc::format!("loss became {} at window of {}", losses.total, tw.window.video_id)));
        }
        let params = self.model.params_mut();
        params.zero_grad();
        tape.backward(root, params)?;
        self.optimizer.step(params)?;
        if params.iter().any(|p| p.value.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("parameter became non-finite".into()));
        }
        Ok(losses)
    }

    /// Visits every window once in an order drawn from the seed and the
    /// epoch number, taking one optimizer step per window.
    pub fn run_epoch(&mut self, windows: &[TrainingWindow]) -> Result<EpochLog> {
        if windows.is_empty() {
            return Err(input_err!("no training windows"));
        }
        let epoch = self.epochs_completed + 1;
        let mut order: Vec<usize> = (0..windows.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        for &i in &order {
            let l = self.step(&windows[i])?;
            sum.mse += l.mse;
            sum.ad += l.ad;
            sum.total += l.total;
        }
        self.epochs_completed = epoch;
        let n = windows.len() as f64;
        Ok(EpochLog { epoch, mse: sum.mse / n, ad: sum.ad / n, total: sum.total / n })
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub optimizer: AdamState,
    pub log: Vec<EpochLog>,
}

/// Builds a model from `train_cfg.seed` and trains it for `train_cfg.epochs`.
pub fn train(
    dataset: &[(ClipFeatureSequence, LabelTimeline)],
    model_cfg: &AdNetConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(dataset, model_cfg, train_cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    dataset: &[(ClipFeatureSequence, LabelTimeline)],
    model_cfg: &AdNetConfig,
    train_cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(input_err!("empty training set"));
    }
    if let Some((seq, _)) = dataset.iter().find(|(s, _)| s.dim() != model_cfg.input_dim) {
        return Err(input_err!(
            "video {} has feature dimension {}, model expects {}",
            seq.video_id,
            seq.dim(),
            model_cfg.input_dim
        ));
    }
    let model = ModelParams::build(model_cfg, train_cfg.seed)?;
    let mut trainer = Trainer::new(model, train_cfg.clone())?;
    let windows = prepare_windows(dataset, model_cfg.window_width)?;
    let mut log = Vec::with_capacity(train_cfg.epochs);
    for _ in 0..train_cfg.epochs {
        let entry = trainer.run_epoch(&windows)?;
        on_epoch(&entry);
        log.push(entry);
    }
    let (model, optimizer, _) = trainer.into_parts();
    Ok(TrainOutcome { model, optimizer, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_label_boundaries() {
        assert_eq!(clip_labels_from_frames(&[1; 32], 16, 0.5).unwrap().labels, [1, 1]);
        let mut frames = [0u8; 16];
        frames[..8].fill(1);
        assert_eq!(clip_labels_from_frames(&frames, 16, 0.5).unwrap().labels, [1]);
        frames[7] = 0;
        assert_eq!(clip_labels_from_frames(&frames, 16, 0.5).unwrap().labels, [0]);
        assert!(clip_labels_from_frames(&[], 16, 0.5).is_err());
    }

    #[test]
    fn train_config_bounds() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { lambda: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { alpha: -0.1, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn empty_dataset_rejected() {
        let err = train(&[], &AdNetConfig::with_input_dim(4), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let seq = ClipFeatureSequence::from_clip_major("v", 2, 3, &[0.0; 6]).unwrap();
        let labels = LabelTimeline::new(alloc::vec![0, 1]).unwrap();
        let err = train(&[(seq, labels)], &AdNetConfig::with_input_dim(4), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }
}
