use std::fs;
use std::path::Path;

use adnet_core::numerics::{AdamState, ParamSet};
use adnet_core::{AdNetConfig, ModelParams, TrainConfig};
use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::TOOL_VERSION;

const MAGIC: &[u8; 4] = b"ADNC";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREFIX_LEN: usize = 16;
const FIRST_MOMENT: &str = "adam.m/";
const SECOND_MOMENT: &str = "adam.v/";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorEntry {
    fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Adam scalars; the moments travel as `adam.m/<name>` and `adam.v/<name>` tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerHeader {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
}

/// JSON header stored after the fixed prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub tool_version: String,
    pub model: AdNetConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub epochs_completed: usize,
    pub frames_per_clip: usize,
    pub optimizer: Option<OptimizerHeader>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: ModelParams,
    pub optimizer: Option<AdamState>,
}

/// Saves model parameters and, when given, the optimizer state needed to resume.
pub fn save_checkpoint(
    path: &Path,
    model: &ModelParams,
    optimizer: Option<&AdamState>,
    train: &TrainConfig,
    epochs_completed: usize,
    frames_per_clip: usize,
) -> Result<()> {
    let params = model.params();
    let mut tensors: Vec<TensorEntry> =
        params.iter().map(|p| TensorEntry { name: p.name.clone(), shape: p.shape.clone() }).collect();
    let mut blobs: Vec<&[f64]> = params.iter().map(|p| p.value.as_slice()).collect();
    if let Some(opt) = optimizer {
        if opt.first_moment.len() != params.len() || opt.second_moment.len() != params.len() {
            return Err(Error::Usage("optimizer state does not match the model".into()));
        }
        for (prefix, moments) in [(FIRST_MOMENT, &opt.first_moment), (SECOND_MOMENT, &opt.second_moment)] {
            for (p, m) in params.iter().zip(moments) {
                tensors.push(TensorEntry { name: format!("{prefix}{}", p.name), shape: p.shape.clone() });
                blobs.push(m);
            }
        }
    }
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        model: model.config().clone(),
        train: train.clone(),
        seed: train.seed,
        epochs_completed,
        frames_per_clip,
        optimizer: optimizer.map(|o| OptimizerHeader {
            lr: o.lr,
            beta1: o.beta1,
            beta2: o.beta2,
            epsilon: o.epsilon,
            step_count: o.step_count,
        }),
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let numel: usize = blobs.iter().map(|b| b.len()).sum();
    let mut bytes = Vec::with_capacity(PREFIX_LEN + json.len() + 8 * numel);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for blob in blobs {
        for v in blob {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    load(path, None)
}

/// Loads a checkpoint whose model configuration must equal `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &AdNetConfig) -> Result<Checkpoint> {
    load(path, Some(expected))
}

fn config_differences(stored: &AdNetConfig, wanted: &AdNetConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut cmp = |name: &str, a: String, b: String| {
        if a != b {
            out.push(format!("{name} is {a} in the checkpoint, {b} requested"));
        }
    };
    cmp("window_width", stored.window_width.to_string(), wanted.window_width.to_string());
    cmp("num_stages", stored.num_stages.to_string(), wanted.num_stages.to_string());
    cmp("num_layers", stored.num_layers.to_string(), wanted.num_layers.to_string());
    cmp("kernel_size", stored.kernel_size.to_string(), wanted.kernel_size.to_string());
    cmp("hidden_channels", stored.hidden_channels.to_string(), wanted.hidden_channels.to_string());
    cmp("input_dim", stored.input_dim.to_string(), wanted.input_dim.to_string());
    cmp("threshold", stored.threshold.to_string(), wanted.threshold.to_string());
    out
}

fn load(path: &Path, expected: Option<&AdNetConfig>) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < PREFIX_LEN {
        return Err(Error::format(path, bytes.len() as u64, format!("file has {} bytes, prefix needs {PREFIX_LEN}", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(path, 0, format!("bad magic {:?}, expected \"ADNC\"", &bytes[..4])));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(path, 4, format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = match usize::try_from(header_len).ok().and_then(|n| n.checked_add(PREFIX_LEN)) {
        Some(end) if end <= bytes.len() => end,
        _ => return Err(Error::format(path, 8, format!("header length {header_len} exceeds file size {}", bytes.len()))),
    };
    let header: CheckpointHeader = serde_json::from_slice(&bytes[PREFIX_LEN..header_end])
        .map_err(|e| Error::format(path, PREFIX_LEN as u64, format!("invalid header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::format(
            path,
            PREFIX_LEN as u64,
            format!("header format_version {} does not match {CHECKPOINT_VERSION}", header.format_version),
        ));
    }
    if let Some(want) = expected {
        let diffs = config_differences(&header.model, want);
        if !diffs.is_empty() {
            return Err(Error::Incompatible { path: path.to_path_buf(), message: diffs.join("; ") });
        }
    }
    header.model.validate().map_err(|e| Error::document(path, format!("stored model config: {e}")))?;

    let layout = header.model.param_layout();
    let mut wanted: Vec<TensorEntry> =
        layout.iter().map(|(name, shape)| TensorEntry { name: name.clone(), shape: shape.clone() }).collect();
    if header.optimizer.is_some() {
        for prefix in [FIRST_MOMENT, SECOND_MOMENT] {
            wanted.extend(layout.iter().map(|(n, s)| TensorEntry { name: format!("{prefix}{n}"), shape: s.clone() }));
        }
    }
    for entry in &header.tensors {
        match wanted.iter().find(|w| w.name == entry.name) {
            None => return Err(Error::document(path, format!("unexpected tensor {}", entry.name))),
            Some(w) if w.shape != entry.shape => {
                return Err(Error::document(
                    path,
                    format!("shape mismatch for tensor {}: stored {:?}, model expects {:?}", entry.name, entry.shape, w.shape),
                ))
            }
            Some(_) => {}
        }
    }
    if let Some(missing) = wanted.iter().find(|w| !header.tensors.iter().any(|t| t.name == w.name)) {
        return Err(Error::document(path, format!("missing tensor {}", missing.name)));
    }
    if header.tensors.len() != wanted.len() {
        return Err(Error::document(path, "duplicate tensor entries"));
    }

    let total: usize = header.tensors.iter().map(TensorEntry::numel).sum();
    let expected_len = header_end + 8 * total;
    if bytes.len() != expected_len {
        return Err(Error::format(
            path,
            bytes.len().min(expected_len) as u64,
            format!("expected {expected_len} bytes for {total} stored values, found {}", bytes.len()),
        ));
    }
    let mut offset = header_end;
    let mut values: Vec<(String, Vec<f64>)> = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let n = entry.numel();
        let data: Vec<f64> = bytes[offset..offset + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::format(path, (offset + 8 * i) as u64, format!("non-finite value in tensor {}", entry.name)));
        }
        values.push((entry.name.clone(), data));
        offset += 8 * n;
    }
    let mut take = |name: &str| -> Vec<f64> {
        let i = values.iter().position(|(n, _)| n == name).expect("presence checked");
        values.swap_remove(i).1
    };

    let mut params = ParamSet::new();
    for (name, shape) in &layout {
        let v = take(name);
        params.push(name.clone(), shape.clone(), v)?;
    }
    let optimizer = header.optimizer.as_ref().map(|o| {
        let first_moment = layout.iter().map(|(n, _)| take(&format!("{FIRST_MOMENT}{n}"))).collect();
        let second_moment = layout.iter().map(|(n, _)| take(&format!("{SECOND_MOMENT}{n}"))).collect();
        AdamState { lr: o.lr, beta1: o.beta1, beta2: o.beta2, epsilon: o.epsilon, step_count: o.step_count, first_moment, second_moment }
    });
    let model = ModelParams::from_param_set(&header.model, params)?;
    Ok(Checkpoint { header, model, optimizer })
}
