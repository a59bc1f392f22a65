//! The four subcommands, callable without the binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use adnet_core::evaluation::{evaluate, expand_to_frames, PredictedTimeline, TruthTimeline, DEFAULT_KS};
use adnet_core::model::predict_labels;
use adnet_core::synth::generate;
use adnet_core::training::{prepare_windows, EpochLog, Trainer};
use adnet_core::{ClipFeatureSequence, LabelTimeline, ModelParams};

use crate::config::{required, RunConfig};
use crate::error::{Error, Result};
use crate::io::{
    list_files, load_checkpoint, load_checkpoint_for, read_annotations, read_features, read_timeline, save_checkpoint,
    video_id_of, write_annotations, write_atomic, write_features, write_timeline, ReportDocument, ScoreTimeline,
};
use crate::TOOL_VERSION;

pub const FEATURE_EXT: &str = "adnf";
pub const JSON_EXT: &str = "json";

/// Writes `<out>/features/*.adnf`, `<out>/annotations/*.json` and
/// `<out>/corpus.json`. Returns the number of videos.
pub fn synth(cfg: &RunConfig, out: Option<&Path>) -> Result<usize> {
    let out = match out {
        Some(p) => p,
        None => required(&cfg.paths.output_dir, "output_dir")?,
    };
    let videos = generate(&cfg.synth)?;
    for v in &videos {
        let id = &v.annotation.video_id;
        write_features(&v.features, &out.join("features").join(format!("{id}.{FEATURE_EXT}")))?;
        write_annotations(&v.annotation, &out.join("annotations").join(format!("{id}.{JSON_EXT}")))?;
    }
    let corpus = serde_json::json!({ "tool_version": TOOL_VERSION, "synth": cfg.synth });
    let mut text = serde_json::to_string_pretty(&corpus).expect("corpus serializes");
    text.push('\n');
    write_atomic(&out.join("corpus.json"), text.as_bytes())?;
    Ok(videos.len())
}

/// A labelled corpus read from disk.
#[derive(Debug, Clone)]
pub struct LabelledCorpus {
    pub videos: Vec<(ClipFeatureSequence, LabelTimeline)>,
    pub frames_per_clip: usize,
}

/// Pairs every feature file with `<annotations_dir>/<id>.json`.
pub fn load_corpus(features_dir: &Path, annotations_dir: &Path, clip_label_fraction: f64) -> Result<LabelledCorpus> {
    let files = list_files(features_dir, FEATURE_EXT)?;
    if files.is_empty() {
        return Err(Error::document(features_dir, format!("no .{FEATURE_EXT} files")));
    }
    let mut videos = Vec::with_capacity(files.len());
    let mut frames_per_clip = None;
    let mut dim = None;
    for file in &files {
        let seq = read_features(file, dim)?;
        dim = Some(seq.dim());
        let ann_path = annotations_dir.join(format!("{}.{JSON_EXT}", video_id_of(file)));
        let ann = read_annotations(&ann_path, clip_label_fraction)?;
        if ann.manifest.video_id != seq.video_id {
            return Err(Error::document(
                &ann_path,
                format!("video_id is {}, expected {}", ann.manifest.video_id, seq.video_id),
            ));
        }
        if ann.clip_labels.len() != seq.num_clips() {
            return Err(Error::document(
                &ann_path,
                format!("annotation spans {} clips, feature file has {}", ann.clip_labels.len(), seq.num_clips()),
            ));
        }
        match frames_per_clip {
            None => frames_per_clip = Some(ann.manifest.frames_per_clip),
            Some(n) if n != ann.manifest.frames_per_clip => {
                return Err(Error::document(
                    &ann_path,
                    format!("frames_per_clip is {}, other videos use {n}", ann.manifest.frames_per_clip),
                ))
            }
            Some(_) => {}
        }
        videos.push((seq, ann.clip_labels));
    }
    Ok(LabelledCorpus { videos, frames_per_clip: frames_per_clip.expect("at least one video") })
}

/// Trains (or resumes) and saves the checkpoint. Each epoch is written to
/// `log` as one JSON line.
pub fn train(cfg: &RunConfig, resume: bool, log: &mut dyn Write) -> Result<Vec<EpochLog>> {
    let features_dir = required(&cfg.paths.features_dir, "features_dir")?;
    let annotations_dir = required(&cfg.paths.annotations_dir, "annotations_dir")?;
    let checkpoint = required(&cfg.paths.checkpoint, "checkpoint")?;
    cfg.train.validate()?;
    let corpus = load_corpus(features_dir, annotations_dir, cfg.train.clip_label_fraction)?;
    let model_cfg = cfg.model.resolve(corpus.videos[0].0.dim())?;

    let mut trainer = if resume {
        let ck = load_checkpoint_for(checkpoint, &model_cfg)?;
        let optimizer = ck.optimizer.ok_or_else(|| Error::Incompatible {
            path: checkpoint.to_path_buf(),
            message: "no optimizer state to resume from".into(),
        })?;
        Trainer::resume(ck.model, optimizer, cfg.train.clone(), ck.header.epochs_completed)?
    } else {
        Trainer::new(ModelParams::build(&model_cfg, cfg.train.seed)?, cfg.train.clone())?
    };
    let windows = prepare_windows(&corpus.videos, model_cfg.window_width)?;
    let mut entries = Vec::with_capacity(cfg.train.epochs);
    for _ in 0..cfg.train.epochs {
        let entry = trainer.run_epoch(&windows)?;
        let line = serde_json::to_string(&entry).expect("epoch log serializes");
        writeln!(log, "{line}").map_err(|e| Error::io(Path::new("<log>"), e))?;
        entries.push(entry);
    }
    save_checkpoint(
        checkpoint,
        trainer.model(),
        Some(trainer.optimizer()),
        &cfg.train,
        trainer.epochs_completed(),
        corpus.frames_per_clip,
    )?;
    Ok(entries)
}

/// Scores one feature file or every `.adnf` file in a directory and writes
/// `<out>/<video_id>.json` for each. Returns the written paths.
pub fn infer(checkpoint: &Path, features: &Path, out: &Path, threshold: Option<f64>) -> Result<Vec<PathBuf>> {
    let ck = load_checkpoint(checkpoint)?;
    let threshold = threshold.unwrap_or(ck.header.model.threshold);
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Usage(format!("threshold must lie in [0, 1], got {threshold}")));
    }
    let files = if features.is_dir() { list_files(features, FEATURE_EXT)? } else { vec![features.to_path_buf()] };
    let n = ck.header.frames_per_clip;
    let mut written = Vec::with_capacity(files.len());
    for file in &files {
        let seq = read_features(file, Some(ck.header.model.input_dim))?;
        let clip_scores = ck.model.score_sequence(&seq)?;
        let frame_scores = expand_to_frames(&clip_scores, n, n * clip_scores.len())?;
        let timeline = ScoreTimeline {
            tool_version: TOOL_VERSION.to_string(),
            video_id: seq.video_id.clone(),
            model: ck.header.model.clone(),
            threshold,
            frames_per_clip: n,
            clip_labels: predict_labels(&clip_scores, threshold),
            clip_scores,
            frame_scores,
        };
        let path = out.join(format!("{}.{JSON_EXT}", seq.video_id));
        write_timeline(&timeline, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Scores every timeline in `pred` against the manifests in `gt`.
pub fn eval(pred: &Path, gt: &Path, ks: Option<&[u32]>) -> Result<ReportDocument> {
    let ks = ks.map(<[u32]>::to_vec).unwrap_or_else(|| DEFAULT_KS.to_vec());
    let mut truths = Vec::new();
    let mut geometry = std::collections::BTreeMap::new();
    for path in list_files(gt, JSON_EXT)? {
        let ann = read_annotations(&path, 0.5)?;
        geometry.insert(ann.manifest.video_id.clone(), (ann.manifest.frames_per_clip, ann.frame_labels.len(), path));
        truths.push(TruthTimeline { video_id: ann.manifest.video_id, frame_labels: ann.frame_labels });
    }
    let mut preds = Vec::new();
    for path in list_files(pred, JSON_EXT)? {
        let t = read_timeline(&path)?;
        let frame_scores = match geometry.get(&t.video_id) {
            Some((n, total, gt_path)) => {
                let clips = total.div_ceil(*n);
                if t.clip_scores.len() != clips {
                    return Err(Error::document(
                        &path,
                        format!("{} clip scores, but {} implies {clips} clips", t.clip_scores.len(), gt_path.display()),
                    ));
                }
                expand_to_frames(&t.clip_scores, *n, *total)?
            }
            None => t.frame_scores,
        };
        preds.push(PredictedTimeline { video_id: t.video_id, frame_scores, threshold: t.threshold });
    }
    let report = evaluate(&preds, &truths, &ks)?;
    Ok(ReportDocument {
        tool_version: TOOL_VERSION.to_string(),
        pred_dir: pred.display().to_string(),
        gt_dir: gt.display().to_string(),
        ks,
        report,
    })
}
