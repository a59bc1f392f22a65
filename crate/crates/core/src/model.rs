//! The multi-stage masked dilated residual network.
//!
//! Each stage projects its input to `hidden_channels` with a 1×1
//! convolution, runs `num_layers` residual blocks with dilation `2^l`, and
//! ends in a 1×1 sigmoid head producing one score per clip. Stage one reads
//! the window's clip features; every later stage reads the previous stage's
//! score sequence. The padding mask is reapplied after the input
//! projection, after every block and after the head, so padded columns hold
//! exact zeros throughout.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, Result};
use crate::numerics::{NodeId, ParamId, ParamSet, Tape, Tensor2};
use crate::windowing::{materialize, merge_scores, plan_windows, ClipFeatureSequence, Window};

/// Network hyperparameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AdNetConfig {
    /// Clips per window (W).
    pub window_width: usize,
    /// S
    pub num_stages: usize,
    /// Residual blocks per stage (L).
    pub num_layers: usize,
    pub kernel_size: usize,
    pub hidden_channels: usize,
    /// Clip feature dimension (D0).
    pub input_dim: usize,
    /// Score at or above which a clip is labelled abnormal.
    pub threshold: f64,
}

impl AdNetConfig {
    pub const DEFAULT_WINDOW_WIDTH: usize = 64;
    pub const DEFAULT_NUM_STAGES: usize = 5;
    pub const DEFAULT_NUM_LAYERS: usize = 6;
    pub const DEFAULT_KERNEL_SIZE: usize = 3;
    pub const DEFAULT_HIDDEN_CHANNELS: usize = 64;
    pub const DEFAULT_THRESHOLD: f64 = 0.5;

    /// Default W64-S5-L6, kernel 3, 64 hidden channels.
    pub fn with_input_dim(input_dim: usize) -> Self {
        Self {
            window_width: Self::DEFAULT_WINDOW_WIDTH,
            num_stages: Self::DEFAULT_NUM_STAGES,
            num_layers: Self::DEFAULT_NUM_LAYERS,
            kernel_size: Self::DEFAULT_KERNEL_SIZE,
            hidden_channels: Self::DEFAULT_HIDDEN_CHANNELS,
            input_dim,
            threshold: Self::DEFAULT_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_stages == 0 || self.num_layers == 0 || self.hidden_channels == 0 || self.input_dim == 0 {
            return Err(config_err!(
                "stages, layers, hidden channels and input dim must all be at least 1 ({self:?})"
            ));
        }
        if self.window_width < 2 || self.window_width % 2 != 0 {
            return Err(config_err!("window width must be even and at least 2, got {}", self.window_width));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(config_err!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        let max = max_layers(self.window_width, self.kernel_size)?;
        if self.num_layers > max {
            return Err(config_err!(
                "num_layers {} exceeds max_layers({}, {}) = {max}",
                self.num_layers,
                self.window_width,
                self.kernel_size
            ));
        }
        Ok(())
    }

    /// Dilation of each block within a stage.
    pub fn dilations(&self) -> Vec<usize> {
        (0..self.num_layers).map(|l| 1usize << l).collect()
    }

    /// Name and shape of every learnable tensor, in initialization order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let (h, k) = (self.hidden_channels, self.kernel_size);
        let mut out = Vec::new();
        for s in 0..self.num_stages {
            let cin = if s == 0 { self.input_dim } else { 1 };
            out.push((format!("stage{s}.proj.weight"), vec![h, cin]));
            out.push((format!("stage{s}.proj.bias"), vec![h]));
            for l in 0..self.num_layers {
                out.push((format!("stage{s}.block{l}.dilated.weight"), vec![h, h, k]));
                out.push((format!("stage{s}.block{l}.dilated.bias"), vec![h]));
                out.push((format!("stage{s}.block{l}.pointwise.weight"), vec![h, h]));
                out.push((format!("stage{s}.block{l}.pointwise.bias"), vec![h]));
            }
            out.push((format!("stage{s}.head.weight"), vec![1, h]));
            out.push((format!("stage{s}.head.bias"), vec![1]));
        }
        out
    }
}

/// Largest block count for a window: `ceil(log2(W / floor(K/2)))`, at least 1.
pub fn max_layers(window_width: usize, kernel_size: usize) -> Result<usize> {
    if window_width < 2 {
        return Err(config_err!("window width must be at least 2, got {window_width}"));
    }
    if kernel_size < 3 || kernel_size % 2 == 0 {
        return Err(config_err!("kernel size must be odd and at least 3, got {kernel_size}"));
    }
    let half = kernel_size / 2;
    // smallest L with half * 2^L >= W, computed on integers
    let mut layers = 0usize;
    while half << layers < window_width {
        layers += 1;
    }
    Ok(layers.max(1))
}

/// Receptive field `2^(l+1) - 1` associated with layer index `l` by the
/// layer-count rule. It does not describe the symmetric kernel-3 stack; see
/// [`locality_radius`] for that.
pub fn nominal_receptive_field(layer: u32) -> u64 {
    (1u64 << (layer + 1)) - 1
}

/// Furthest distance (in clips) one stage of `num_layers` blocks can carry
/// information: `(2^L - 1)·floor(K/2)`.
pub fn locality_radius(num_layers: usize, kernel_size: usize) -> usize {
    ((1usize << num_layers) - 1) * (kernel_size / 2)
}

/// `1` where `score >= threshold`.
pub fn predict_labels(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

/// Per-clip scores from one stage; masked positions are exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutput {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct BlockIds {
    dilated_w: ParamId,
    dilated_b: ParamId,
    pointwise_w: ParamId,
    pointwise_b: ParamId,
    dilation: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct StageIds {
    proj_w: ParamId,
    proj_b: ParamId,
    blocks: Vec<BlockIds>,
    head_w: ParamId,
    head_b: ParamId,
}

/// All learnable tensors of a network plus the config that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: AdNetConfig,
    params: ParamSet,
    stages: Vec<StageIds>,
}

impl ModelParams {
    /// Deterministic uniform `[-a, a]` initialization, `a = sqrt(1 / fan_in)`.
    pub fn build(config: &AdNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape) in config.param_layout() {
            let fan_in = if shape.len() == 1 {
                // a bias shares its weight's fan-in
                fan_in_of(config, &name)
            } else {
                shape[1..].iter().product()
            };
            let a = libm::sqrt(1.0 / fan_in as f64);
            let n: usize = shape.iter().product();
            let value = (0..n).map(|_| rng.random_range(-a..=a)).collect();
            params.push(name, shape, value)?;
        }
        Self::from_param_set(config, params)
    }

    /// Adopts `params`, checking that every tensor required by `config` is
    /// present with the right shape.
    pub fn from_param_set(config: &AdNetConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let layout = config.param_layout();
        if params.len() != layout.len() {
            return Err(config_err!(
                "parameter set holds {} tensors, configuration needs {}",
                params.len(),
                layout.len()
            ));
        }
        let lookup = |name: String| -> Result<ParamId> {
            let id = params.find(&name).ok_or_else(|| config_err!("missing tensor {name}"))?;
            let want = &layout.iter().find(|(n, _)| *n == name).expect("name from layout").1;
            let got = &params.get(id).shape;
            if got != want {
                return Err(config_err!("tensor {name} has shape {got:?}, configuration needs {want:?}"));
            }
            Ok(id)
        };
        let mut stages = Vec::with_capacity(config.num_stages);
        for s in 0..config.num_stages {
            let blocks = config
                .dilations()
                .into_iter()
                .enumerate()
                .map(|(l, dilation)| {
                    Ok(BlockIds {
                        dilated_w: lookup(format!("stage{s}.block{l}.dilated.weight"))?,
                        dilated_b: lookup(format!("stage{s}.block{l}.dilated.bias"))?,
                        pointwise_w: lookup(format!("stage{s}.block{l}.pointwise.weight"))?,
                        pointwise_b: lookup(format!("stage{s}.block{l}.pointwise.bias"))?,
                        dilation,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            stages.push(StageIds {
                proj_w: lookup(format!("stage{s}.proj.weight"))?,
                proj_b: lookup(format!("stage{s}.proj.bias"))?,
                blocks,
                head_w: lookup(format!("stage{s}.head.weight"))?,
                head_b: lookup(format!("stage{s}.head.bias"))?,
            });
        }
        Ok(Self { config: config.clone(), params, stages })
    }

    pub fn config(&self) -> &AdNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_param_set(self) -> ParamSet {
        self.params
    }

    /// Block dilations for each stage.
    pub fn stage_dilations(&self) -> Vec<Vec<usize>> {
        self.stages.iter().map(|s| s.blocks.iter().map(|b| b.dilation).collect()).collect()
    }

    fn check_window(&self, window: &Window) -> Result<()> {
        let (d0, w) = (self.config.input_dim, self.config.window_width);
        if window.features.channels() != d0 || window.features.length() != w {
            return Err(config_err!(
                "window features are {}x{}, model expects {d0}x{w}",
                window.features.channels(),
                window.features.length()
            ));
        }
        if window.mask.len() != w {
            return Err(config_err!("window mask has length {}, model expects {w}", window.mask.len()));
        }
        Ok(())
    }

    /// Records a forward pass of the first `num_stages` stages on `tape` and
    /// returns each stage's masked score node (shape `1 × W`).
    pub fn record(&self, tape: &mut Tape, window: &Window, num_stages: usize) -> Result<Vec<NodeId>> {
        self.check_window(window)?;
        let input = tape.leaf(window.features.clone());
        self.record_from(tape, input, &window.mask, num_stages)
    }

    /// [`record`](Self::record) starting from an already recorded
    /// `input_dim × W` feature node.
    pub fn record_from(&self, tape: &mut Tape, features: NodeId, mask: &[f64], num_stages: usize) -> Result<Vec<NodeId>> {
        let (d0, w) = (self.config.input_dim, self.config.window_width);
        let x = tape.value(features);
        if x.channels() != d0 || x.length() != w || mask.len() != w {
            return Err(config_err!(
                "features {}x{} with mask of length {}, model expects {d0}x{w}",
                x.channels(),
                x.length(),
                mask.len()
            ));
        }
        if num_stages == 0 || num_stages > self.stages.len() {
            return Err(config_err!("cannot run {num_stages} of {} stages", self.stages.len()));
        }
        let p = &self.params;
        let k = self.config.kernel_size;
        let mut input = features;
        let mut heads = Vec::with_capacity(num_stages);
        for stage in &self.stages[..num_stages] {
            let proj = tape.pointwise_conv(p, input, stage.proj_w, stage.proj_b)?;
            let mut v = tape.mask_mul(proj, mask)?;
            for b in &stage.blocks {
                let dilated = tape.conv1d_dilated(p, v, b.dilated_w, b.dilated_b, k, b.dilation)?;
                let act = tape.relu(dilated);
                let mixed = tape.pointwise_conv(p, act, b.pointwise_w, b.pointwise_b)?;
                let residual = tape.add(v, mixed)?;
                v = tape.mask_mul(residual, mask)?;
            }
            let logits = tape.pointwise_conv(p, v, stage.head_w, stage.head_b)?;
            let probs = tape.sigmoid(logits);
            let scores = tape.mask_mul(probs, mask)?;
            heads.push(scores);
            input = scores;
        }
        Ok(heads)
    }

    /// Scores of every stage for one window.
    pub fn forward(&self, window: &Window) -> Result<Vec<StageOutput>> {
        self.forward_stages(window, self.stages.len())
    }

    /// Scores of the first `num_stages` stages.
    pub fn forward_stages(&self, window: &Window, num_stages: usize) -> Result<Vec<StageOutput>> {
        let mut tape = Tape::new();
        let heads = self.record(&mut tape, window, num_stages)?;
        Ok(heads.into_iter().map(|h| StageOutput { scores: tape.value(h).as_slice().to_vec() }).collect())
    }

    /// Final-stage scores, the ones used for prediction.
    pub fn predict(&self, window: &Window) -> Result<Vec<f64>> {
        let mut outputs = self.forward(window)?;
        Ok(outputs.pop().expect("at least one stage").scores)
    }

    /// Final-stage score per clip of a whole sequence: half-stride windows,
    /// overlap-averaged.
    pub fn score_sequence(&self, seq: &ClipFeatureSequence) -> Result<Vec<f64>> {
        if seq.dim() != self.config.input_dim {
            return Err(crate::error::input_err!(
                "video {} has feature dimension {}, model expects {}",
                seq.video_id,
                seq.dim(),
                self.config.input_dim
            ));
        }
        let plan = plan_windows(seq.num_clips(), self.config.window_width)?;
        let windows = materialize(seq, &plan)?;
        let scores = windows.iter().map(|w| self.predict(w)).collect::<Result<Vec<_>>>()?;
        let parts: Vec<_> =
            windows.iter().zip(&scores).map(|(w, s)| (w.start_clip, w.mask.as_slice(), s.as_slice())).collect();
        merge_scores(&parts, seq.num_clips())
    }
}

fn fan_in_of(config: &AdNetConfig, bias_name: &str) -> usize {
    let (h, k) = (config.hidden_channels, config.kernel_size);
    if bias_name.ends_with("proj.bias") {
        if bias_name.starts_with("stage0.") {
            config.input_dim
        } else {
            1
        }
    } else if bias_name.ends_with("dilated.bias") {
        h * k
    } else {
        h
    }
}

/// Convenience for tests and tools: a full-width window with an all-ones mask.
pub fn unmasked_window(features: Tensor2) -> Window {
    let w = features.length();
    Window { features, mask: vec![1.0; w], video_id: String::new(), start_clip: 0 }
}
