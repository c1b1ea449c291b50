//! Training over segments and per-minute prediction by segment voting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureLayout, FeatureSet, SensorSubset};
use crate::ingest::{Label, LabeledRecording};
use crate::model::{self, BaggingModel, Prediction, TrainConfig};
use crate::windowing::{self, Epoch, ABLATION_WINDOWS_S};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window_s: f64,
    pub sensors: SensorSubset,
    pub feature_set: FeatureSet,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_s: 10.0,
            sensors: SensorSubset::Both,
            feature_set: FeatureSet::Invariant,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new(self.sensors, self.feature_set)
    }

    /// True when the window is one of the swept ablation sizes.
    pub fn is_standard_window(&self) -> bool {
        ABLATION_WINDOWS_S.contains(&self.window_s)
    }

    pub fn label(&self) -> String {
        format!(
            "window={}s sensors={} features={}",
            self.window_s,
            self.sensors,
            self.feature_set.as_str()
        )
    }
}

/// Full feature rows (invariant + per-axis) for every segment of one minute.
#[derive(Clone, Debug, PartialEq)]
pub struct MinuteFeatures {
    pub patient_id: String,
    pub minute_index: usize,
    pub label: Label,
    pub segment_offsets: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

pub fn featurize_epoch(epoch: &Epoch, window_s: f64) -> Result<MinuteFeatures> {
    let segments = windowing::segment_epoch(epoch, window_s)?;
    let rows = segments
        .iter()
        .map(features::full_segment_row)
        .collect::<Result<Vec<_>>>()?;
    Ok(MinuteFeatures {
        patient_id: epoch.patient_id.clone(),
        minute_index: epoch.minute_index,
        label: epoch.label,
        segment_offsets: segments.iter().map(|s| s.offset_s).collect(),
        rows,
    })
}

pub fn featurize_recording(rec: &LabeledRecording, window_s: f64) -> Result<Vec<MinuteFeatures>> {
    windowing::split_epochs(rec)
        .par_iter()
        .map(|e| featurize_epoch(e, window_s))
        .collect()
}

/// Segment-level training matrix for a layout; every segment carries its
/// minute's label.
pub fn training_matrix<'a>(
    minutes: impl IntoIterator<Item = &'a MinuteFeatures>,
    layout: &FeatureLayout,
) -> (Vec<Vec<f64>>, Vec<Label>) {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for m in minutes {
        for r in &m.rows {
            rows.push(layout.project(r));
            labels.push(m.label);
        }
    }
    (rows, labels)
}

pub fn train_on_features<'a>(
    minutes: impl IntoIterator<Item = &'a MinuteFeatures>,
    cfg: &PipelineConfig,
) -> Result<BaggingModel> {
    let layout = cfg.layout();
    let (rows, labels) = training_matrix(minutes, &layout);
    if rows.is_empty() {
        return Err(Error::Data("no labeled minutes to train on".into()));
    }
    let mut m = model::train_bagging(&rows, &labels, &cfg.train, cfg.seed, layout)?;
    m.window_s = Some(cfg.window_s);
    Ok(m)
}

pub fn train_pipeline(data: &[LabeledRecording], cfg: &PipelineConfig) -> Result<BaggingModel> {
    let minutes = data
        .iter()
        .map(|r| featurize_recording(r, cfg.window_s))
        .collect::<Result<Vec<_>>>()?;
    train_on_features(minutes.iter().flatten(), cfg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinutePrediction {
    pub patient_id: String,
    pub minute_index: usize,
    pub predicted: Label,
    pub segment_votes: [usize; 2],
    /// Mean class-1 score over the minute's segments.
    pub mean_score: f64,
}

/// Majority over segment predictions; a vote tie goes to the class with the
/// higher mean segment score, and a remaining tie to class 0.
pub fn vote(patient_id: &str, minute_index: usize, segments: &[Prediction]) -> MinutePrediction {
    let mut votes = [0usize; 2];
    for p in segments {
        votes[p.class.index()] += 1;
    }
    let mean_score = if segments.is_empty() {
        0.0
    } else {
        segments.iter().map(|p| p.score).sum::<f64>() / segments.len() as f64
    };
    let predicted = match votes[1].cmp(&votes[0]) {
        std::cmp::Ordering::Greater => Label::LyingEm,
        std::cmp::Ordering::Less => Label::LyingNoEm,
        // mean score of class 1 vs. class 0 (1 - mean_score)
        std::cmp::Ordering::Equal if mean_score > 0.5 => Label::LyingEm,
        std::cmp::Ordering::Equal => Label::LyingNoEm,
    };
    MinutePrediction {
        patient_id: patient_id.to_string(),
        minute_index,
        predicted,
        segment_votes: votes,
        mean_score,
    }
}

pub fn predict_minute_features(
    model: &BaggingModel,
    minute: &MinuteFeatures,
    layout: &FeatureLayout,
) -> Result<MinutePrediction> {
    model.check_layout(layout)?;
    let preds = minute
        .rows
        .iter()
        .map(|r| model.predict(&layout.project(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(vote(&minute.patient_id, minute.minute_index, &preds))
}

pub fn predict_minute(
    model: &BaggingModel,
    epoch: &Epoch,
    cfg: &PipelineConfig,
) -> Result<MinutePrediction> {
    let layout = cfg.layout();
    model.check_layout(&layout)?;
    predict_minute_features(model, &featurize_epoch(epoch, cfg.window_s)?, &layout)
}

/// Predict every labeled minute of a recording, in minute order.
pub fn predict_recording(
    model: &BaggingModel,
    rec: &LabeledRecording,
    cfg: &PipelineConfig,
) -> Result<Vec<MinutePrediction>> {
    let layout = cfg.layout();
    model.check_layout(&layout)?;
    featurize_recording(rec, cfg.window_s)?
        .par_iter()
        .map(|m| predict_minute_features(model, m, &layout))
        .collect()
}
