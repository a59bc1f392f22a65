//! TOML run configuration.
//!
//! ```toml
//! [model]            # network shape; input_dim is inferred from the data
//! window_width = 64
//! num_stages = 5
//! num_layers = 6
//! kernel_size = 3
//! hidden_channels = 64
//! threshold = 0.5
//!
//! [train]
//! learning_rate = 5e-4
//! lambda = 0.5
//! alpha = 0.5
//! epochs = 50
//! seed = 0
//! use_ad_loss = true
//! clip_label_fraction = 0.5
//!
//! [paths]            # relative paths resolve against the config file's directory
//! features_dir = "data/features"
//! annotations_dir = "data/annotations"
//! checkpoint = "model.adnc"
//! output_dir = "data"
//!
//! [synth]            # see `adnet_core::synth::SynthConfig`
//! num_videos = 40
//! ```
//!
//! Every table and key is optional; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use adnet_core::synth::SynthConfig;
use adnet_core::{AdNetConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub window_width: usize,
    pub num_stages: usize,
    pub num_layers: usize,
    pub kernel_size: usize,
    pub hidden_channels: usize,
    pub threshold: f64,
    /// Checked against the data when set.
    pub input_dim: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            window_width: AdNetConfig::DEFAULT_WINDOW_WIDTH,
            num_stages: AdNetConfig::DEFAULT_NUM_STAGES,
            num_layers: AdNetConfig::DEFAULT_NUM_LAYERS,
            kernel_size: AdNetConfig::DEFAULT_KERNEL_SIZE,
            hidden_channels: AdNetConfig::DEFAULT_HIDDEN_CHANNELS,
            threshold: AdNetConfig::DEFAULT_THRESHOLD,
            input_dim: None,
        }
    }
}

impl ModelSection {
    /// Full model config for data of dimension `data_dim`.
    pub fn resolve(&self, data_dim: usize) -> Result<AdNetConfig> {
        if let Some(d) = self.input_dim {
            if d != data_dim {
                return Err(Error::Usage(format!("model.input_dim is {d} but the features have dimension {data_dim}")));
            }
        }
        let cfg = AdNetConfig {
            window_width: self.window_width,
            num_stages: self.num_stages,
            num_layers: self.num_layers,
            kernel_size: self.kernel_size,
            hidden_channels: self.hidden_channels,
            input_dim: data_dim,
            threshold: self.threshold,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub features_dir: Option<PathBuf>,
    pub annotations_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub paths: PathsSection,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Usage(format!("invalid config: {e}")))
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Usage(format!("{}: invalid config: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.paths.features_dir,
            &mut cfg.paths.annotations_dir,
            &mut cfg.paths.checkpoint,
            &mut cfg.paths.output_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.train.validate()?;
        cfg.synth.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Unwraps a required path setting.
pub(crate) fn required<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value.as_deref().ok_or_else(|| Error::Usage(format!("config is missing paths.{key}")))
}
