//! Leave-one-patient-out evaluation and the ablation sweeps.
//!
//! Accuracy for a held-out patient is correct minutes over labeled minutes.
//! A report's mean accuracy weights patients equally; instability is the
//! population standard deviation of the per-patient accuracies.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, SensorSubset};
use crate::ingest::LabeledRecording;
use crate::model::stable_hash;
use crate::pipeline::{self, MinuteFeatures, PipelineConfig};

/// Exhaustive subset enumeration is used up to this many subsets.
pub const MAX_EXHAUSTIVE_SUBSETS: usize = 56;
/// Random subsets drawn when enumeration would exceed the limit.
pub const SAMPLED_SUBSETS: usize = 30;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: String,
}

pub fn lopo_folds(patients: &[String]) -> Result<Vec<Fold>> {
    let ids: BTreeSet<&String> = patients.iter().collect();
    if ids.len() != patients.len() {
        return Err(Error::Data("duplicate patient ids".into()));
    }
    if ids.len() < 2 {
        return Err(Error::Data(format!(
            "leave-one-patient-out needs at least 2 patients, got {}",
            ids.len()
        )));
    }
    Ok(ids
        .iter()
        .map(|&test| Fold {
            train: ids
                .iter()
                .filter(|&&id| id != test)
                .map(|s| s.to_string())
                .collect(),
            test: test.clone(),
        })
        .collect())
}

/// Fails when a fold trains on its own test patient.
pub fn assert_no_leakage(fold: &Fold) -> Result<()> {
    if fold.train.contains(&fold.test) {
        return Err(Error::Data(format!(
            "fold for `{}` trains on its own test patient",
            fold.test
        )));
    }
    Ok(())
}

/// Featurized minutes of one patient.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientFeatures {
    pub patient_id: String,
    pub minutes: Vec<MinuteFeatures>,
}

pub fn featurize_dataset(data: &[LabeledRecording], window_s: f64) -> Result<Vec<PatientFeatures>> {
    data.iter()
        .map(|r| {
            Ok(PatientFeatures {
                patient_id: r.patient_id().to_string(),
                minutes: pipeline::featurize_recording(r, window_s)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: String,
    pub per_patient_accuracy: BTreeMap<String, f64>,
    pub mean_accuracy: f64,
    pub instability: f64,
    pub folds: usize,
}

/// Unweighted mean and population standard deviation.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn from_accuracies(
        config: impl Into<String>,
        per_patient_accuracy: BTreeMap<String, f64>,
    ) -> Self {
        let acc: Vec<f64> = per_patient_accuracy.values().copied().collect();
        let (mean_accuracy, instability) = mean_and_std(&acc);
        Self {
            config: config.into(),
            folds: per_patient_accuracy.len(),
            per_patient_accuracy,
            mean_accuracy,
            instability,
        }
    }
}

/// LOPO over pre-featurized patients.
pub fn evaluate_features(patients: &[PatientFeatures], cfg: &PipelineConfig) -> Result<EvalReport> {
    let ids: Vec<String> = patients.iter().map(|p| p.patient_id.clone()).collect();
    let folds = lopo_folds(&ids)?;
    if let Some(p) = patients.iter().find(|p| p.minutes.is_empty()) {
        return Err(Error::Data(format!(
            "patient `{}` has no labeled minutes",
            p.patient_id
        )));
    }
    let by_id: BTreeMap<&str, &PatientFeatures> = patients
        .iter()
        .map(|p| (p.patient_id.as_str(), p))
        .collect();
    let layout = cfg.layout();
    let accuracies = folds
        .par_iter()
        .map(|fold| {
            assert_no_leakage(fold)?;
            let train = fold
                .train
                .iter()
                .flat_map(|id| by_id[id.as_str()].minutes.iter());
            let model = pipeline::train_on_features(train, cfg)?;
            let test = by_id[fold.test.as_str()];
            let mut correct = 0usize;
            for m in &test.minutes {
                if pipeline::predict_minute_features(&model, m, &layout)?.predicted == m.label {
                    correct += 1;
                }
            }
            Ok((
                fold.test.clone(),
                correct as f64 / test.minutes.len() as f64,
            ))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(EvalReport::from_accuracies(cfg.label(), accuracies))
}

pub fn evaluate(data: &[LabeledRecording], cfg: &PipelineConfig) -> Result<EvalReport> {
    evaluate_features(&featurize_dataset(data, cfg.window_s)?, cfg)
}

/// One row of an ablation table. Rows built from several LOPO runs (patient
/// subsets) average mean accuracy and instability over those runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub mean_accuracy: f64,
    pub instability: f64,
    /// Per patient, the average accuracy over the runs that held it out.
    pub per_patient_accuracy: BTreeMap<String, f64>,
    pub reports: Vec<EvalReport>,
}

impl AblationRow {
    fn from_reports(config: impl Into<String>, reports: Vec<EvalReport>) -> Self {
        let n = reports.len() as f64;
        let mean_accuracy = reports.iter().map(|r| r.mean_accuracy).sum::<f64>() / n;
        let instability = reports.iter().map(|r| r.instability).sum::<f64>() / n;
        let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in &reports {
            for (id, &a) in &r.per_patient_accuracy {
                let e = sums.entry(id.clone()).or_default();
                e.0 += a;
                e.1 += 1;
            }
        }
        Self {
            config: config.into(),
            mean_accuracy,
            instability,
            per_patient_accuracy: sums
                .into_iter()
                .map(|(id, (s, c))| (id, s / c as f64))
                .collect(),
            reports,
        }
    }
}

pub fn ablate_windows(
    data: &[LabeledRecording],
    windows: &[f64],
    base: &PipelineConfig,
) -> Result<Vec<AblationRow>> {
    windows
        .iter()
        .map(|&w| {
            let cfg = PipelineConfig {
                window_s: w,
                ..base.clone()
            };
            let r = evaluate(data, &cfg)?;
            Ok(AblationRow::from_reports(format!("window={w}s"), vec![r]))
        })
        .collect()
}

pub fn ablate_sensors(
    data: &[LabeledRecording],
    subsets: &[SensorSubset],
    base: &PipelineConfig,
) -> Result<Vec<AblationRow>> {
    let feats = featurize_dataset(data, base.window_s)?;
    subsets
        .iter()
        .map(|&s| {
            let cfg = PipelineConfig {
                sensors: s,
                ..base.clone()
            };
            let r = evaluate_features(&feats, &cfg)?;
            Ok(AblationRow::from_reports(format!("sensors={s}"), vec![r]))
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] != i + n - k) else {
            return out;
        };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Patient-index subsets of size `k` used by the patient-count ablation.
pub fn patient_subsets(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    if binomial(n, k) <= MAX_EXHAUSTIVE_SUBSETS {
        return combinations(n, k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(seed, k as u64));
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let all: Vec<usize> = (0..n).collect();
    while out.len() < SAMPLED_SUBSETS {
        let mut s: Vec<usize> = all.choose_multiple(&mut rng, k).copied().collect();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

pub fn ablate_patient_count(
    data: &[LabeledRecording],
    counts: &[usize],
    base: &PipelineConfig,
) -> Result<Vec<AblationRow>> {
    let mut feats = featurize_dataset(data, base.window_s)?;
    feats.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    counts
        .iter()
        .map(|&k| {
            if k < 2 || k > feats.len() {
                return Err(Error::Parameter(format!(
                    "patient count {k} outside 2..={}",
                    feats.len()
                )));
            }
            let reports = patient_subsets(feats.len(), k, base.seed)
                .iter()
                .map(|subset| {
                    let chosen: Vec<PatientFeatures> =
                        subset.iter().map(|&i| feats[i].clone()).collect();
                    evaluate_features(&chosen, base)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AblationRow::from_reports(format!("patients={k}"), reports))
        })
        .collect()
}

/// Invariant features versus invariant plus per-axis features.
pub fn compare_feature_sets(
    data: &[LabeledRecording],
    base: &PipelineConfig,
) -> Result<Vec<AblationRow>> {
    let feats = featurize_dataset(data, base.window_s)?;
    [FeatureSet::Invariant, FeatureSet::WithPerAxis]
        .iter()
        .map(|&fs| {
            let cfg = PipelineConfig {
                feature_set: fs,
                ..base.clone()
            };
            let r = evaluate_features(&feats, &cfg)?;
            Ok(AblationRow::from_reports(
                format!("features={}", fs.as_str()),
                vec![r],
            ))
        })
        .collect()
}

/// Long-format CSV: `config,patient_id,accuracy`, then one `mean` and one
/// `instability` summary row per configuration.
pub fn write_rows_csv<W: Write>(rows: &[AblationRow], mut w: W) -> Result<()> {
    writeln!(w, "config,patient_id,accuracy")?;
    for r in rows {
        for (id, a) in &r.per_patient_accuracy {
            writeln!(w, "{},{id},{a}", r.config)?;
        }
        writeln!(w, "{},mean,{}", r.config, r.mean_accuracy)?;
        writeln!(w, "{},instability,{}", r.config, r.instability)?;
    }
    Ok(())
}

pub fn write_report_csv<W: Write>(report: &EvalReport, w: W) -> Result<()> {
    write_rows_csv(
        &[AblationRow::from_reports(
            report.config.clone(),
            vec![report.clone()],
        )],
        w,
    )
}

/// Human-readable table of configurations.
pub fn format_table(rows: &[AblationRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.config.len())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut s = format!(
        "{:<width$}  {:>9}  {:>11}\n",
        "config", "accuracy", "instability"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<width$}  {:>8.2}%  {:>10.2}%\n",
            r.config,
            100.0 * r.mean_accuracy,
            100.0 * r.instability
        ));
    }
    s
}

pub fn format_report(report: &EvalReport) -> String {
    let mut s = String::new();
    for (id, a) in &report.per_patient_accuracy {
        s.push_str(&format!("{id:>12}  {:>8.2}%\n", 100.0 * a));
    }
    s.push_str(&format!(
        "{:>12}  {:>8.2}%\n{:>12}  {:>8.2}%\n",
        "accuracy",
        100.0 * report.mean_accuracy,
        "instability",
        100.0 * report.instability
    ));
    s
}
