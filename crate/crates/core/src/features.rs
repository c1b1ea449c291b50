//! Orientation-insensitive segment features.
//!
//! Each sensor stream is reduced to four magnitude signals (raw, low band,
//! high band, time-derivative of the high band) and each magnitude signal to
//! eight metrics. The canonical order is
//! `sensor (chest, thigh) × signal × metric`, 64 values in total.
//!
//! A per-axis comparator block (eight metrics of raw x/y/z per sensor, 48
//! values) is computed alongside for feature-set comparisons; it is never part
//! of the invariant vector.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp::{self, TriaxialSeries};
use crate::error::{Error, Result};
use crate::windowing::Segment;

pub const METRIC_NAMES: [&str; 8] = [
    "mean", "max", "min", "std", "median", "entropy", "rms", "iqr",
];
pub const SIGNAL_NAMES: [&str; 4] = ["raw_mag", "low_mag", "high_mag", "dhigh_mag"];
pub const SENSOR_NAMES: [&str; 2] = ["chest", "thigh"];
pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

pub const METRIC_COUNT: usize = METRIC_NAMES.len();
pub const FEATURES_PER_SENSOR: usize = SIGNAL_NAMES.len() * METRIC_COUNT;
pub const FEATURE_COUNT: usize = SENSOR_NAMES.len() * FEATURES_PER_SENSOR;
pub const PER_AXIS_PER_SENSOR: usize = AXIS_NAMES.len() * METRIC_COUNT;
pub const PER_AXIS_COUNT: usize = SENSOR_NAMES.len() * PER_AXIS_PER_SENSOR;
/// Length of a full segment row: invariant block followed by per-axis block.
pub const FULL_ROW_LEN: usize = FEATURE_COUNT + PER_AXIS_COUNT;

/// Histogram resolution used by the entropy metric.
pub const ENTROPY_BINS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub std: f64,
    pub median: f64,
    pub entropy: f64,
    pub rms: f64,
    pub iqr: f64,
}

impl MetricSet {
    pub fn to_array(&self) -> [f64; METRIC_COUNT] {
        [
            self.mean,
            self.max,
            self.min,
            self.std,
            self.median,
            self.entropy,
            self.rms,
            self.iqr,
        ]
    }
}

/// Linear-interpolation quantile of sorted data (`h = (n-1)·p`).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Shannon entropy in bits of the equal-width histogram over `[min, max]`.
fn histogram_entropy(series: &[f64], min: f64, max: f64) -> f64 {
    let span = max - min;
    if span.is_nan() || span <= 0.0 {
        return 0.0;
    }
    let mut counts = [0usize; ENTROPY_BINS];
    for &v in series {
        let bin = ((v - min) / span * ENTROPY_BINS as f64) as usize;
        counts[bin.min(ENTROPY_BINS - 1)] += 1;
    }
    let n = series.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

pub fn metrics(series: &[f64]) -> Result<MetricSet> {
    if series.is_empty() {
        return Err(Error::Length("metrics of an empty series".into()));
    }
    let n = series.len() as f64;
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    // exact for constant input, where the summed mean can drift by an ulp
    let mean = if min == max {
        min
    } else {
        series.iter().sum::<f64>() / n
    };
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let rms = (series.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    Ok(MetricSet {
        mean,
        max,
        min,
        std: var.sqrt(),
        median: quantile_sorted(&sorted, 0.5),
        entropy: histogram_entropy(series, min, max),
        rms,
        iqr: quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25),
    })
}

/// The four magnitude signals of one sensor stream, in canonical order.
pub fn magnitude_signals(s: &TriaxialSeries) -> Result<[Vec<f64>; 4]> {
    if s.len() < 2 {
        return Err(Error::Length(format!(
            "segment needs at least 2 samples, got {}",
            s.len()
        )));
    }
    let bands = dsp::band_split_default(s)?;
    let d_high = dsp::derivative(&bands.high)?;
    Ok([
        dsp::magnitude_series(s),
        dsp::magnitude_series(&bands.low),
        dsp::magnitude_series(&bands.high),
        dsp::magnitude_series(&d_high),
    ])
}

/// 32 invariant features of one sensor stream.
pub fn sensor_features(s: &TriaxialSeries) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(FEATURES_PER_SENSOR);
    for signal in magnitude_signals(s)? {
        out.extend(metrics(&signal)?.to_array());
    }
    Ok(out)
}

/// 24 per-axis comparator features of one sensor stream.
pub fn per_axis_features(s: &TriaxialSeries) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(PER_AXIS_PER_SENSOR);
    for axis in s.axes() {
        out.extend(metrics(axis)?.to_array());
    }
    Ok(out)
}

/// The 64 orientation-insensitive attributes of one segment. Serializes as
/// a plain list in canonical order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Self {
        v.0
    }
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != FEATURE_COUNT {
            return Err(Error::Length(format!(
                "feature vector must have {FEATURE_COUNT} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite feature value".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn segment_features(seg: &Segment) -> Result<FeatureVector> {
    let mut v = sensor_features(&seg.chest)?;
    v.extend(sensor_features(&seg.thigh)?);
    FeatureVector::new(v)
}

/// Invariant block followed by the per-axis comparator block.
pub fn full_segment_row(seg: &Segment) -> Result<Vec<f64>> {
    let mut row = segment_features(seg)?.into_inner();
    row.extend(per_axis_features(&seg.chest)?);
    row.extend(per_axis_features(&seg.thigh)?);
    Ok(row)
}

/// Canonical names of the 64 invariant features.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    for sensor in SENSOR_NAMES {
        for signal in SIGNAL_NAMES {
            for metric in METRIC_NAMES {
                names.push(format!("{sensor}_{signal}_{metric}"));
            }
        }
    }
    names
}

fn per_axis_names(sensor: &str) -> impl Iterator<Item = String> + '_ {
    AXIS_NAMES.into_iter().flat_map(move |axis| {
        METRIC_NAMES
            .into_iter()
            .map(move |m| format!("{sensor}_{axis}_{m}"))
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensorSubset {
    ChestOnly,
    ThighOnly,
    #[default]
    Both,
}

impl SensorSubset {
    pub const ALL: [SensorSubset; 3] = [
        SensorSubset::ChestOnly,
        SensorSubset::ThighOnly,
        SensorSubset::Both,
    ];

    fn sensors(self) -> &'static [usize] {
        match self {
            SensorSubset::ChestOnly => &[0],
            SensorSubset::ThighOnly => &[1],
            SensorSubset::Both => &[0, 1],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SensorSubset::ChestOnly => "chest",
            SensorSubset::ThighOnly => "thigh",
            SensorSubset::Both => "both",
        }
    }
}

impl fmt::Display for SensorSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensorSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "chest" | "chest-only" | "chestonly" => Ok(SensorSubset::ChestOnly),
            "thigh" | "thigh-only" | "thighonly" => Ok(SensorSubset::ThighOnly),
            "both" => Ok(SensorSubset::Both),
            other => Err(Error::Parameter(format!("unknown sensor subset `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    /// The 64 magnitude features.
    #[default]
    Invariant,
    /// Magnitude features plus per-axis raw metrics.
    WithPerAxis,
}

impl FeatureSet {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Invariant => "invariant",
            FeatureSet::WithPerAxis => "per-axis",
        }
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "invariant" => Ok(FeatureSet::Invariant),
            "per-axis" | "per_axis" => Ok(FeatureSet::WithPerAxis),
            other => Err(Error::Parameter(format!("unknown feature set `{other}`"))),
        }
    }
}

/// Which columns of a full segment row a model consumes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub sensors: SensorSubset,
    pub feature_set: FeatureSet,
}

impl FeatureLayout {
    pub fn new(sensors: SensorSubset, feature_set: FeatureSet) -> Self {
        Self {
            sensors,
            feature_set,
        }
    }

    /// Column indices into a full segment row.
    pub fn columns(&self) -> Vec<usize> {
        let mut cols = Vec::new();
        for &s in self.sensors.sensors() {
            cols.extend(s * FEATURES_PER_SENSOR..(s + 1) * FEATURES_PER_SENSOR);
        }
        if self.feature_set == FeatureSet::WithPerAxis {
            for &s in self.sensors.sensors() {
                let base = FEATURE_COUNT + s * PER_AXIS_PER_SENSOR;
                cols.extend(base..base + PER_AXIS_PER_SENSOR);
            }
        }
        cols
    }

    pub fn len(&self) -> usize {
        self.columns().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> Vec<String> {
        let invariant = feature_names();
        let mut names = Vec::new();
        for &s in self.sensors.sensors() {
            names.extend_from_slice(
                &invariant[s * FEATURES_PER_SENSOR..(s + 1) * FEATURES_PER_SENSOR],
            );
        }
        if self.feature_set == FeatureSet::WithPerAxis {
            for &s in self.sensors.sensors() {
                names.extend(per_axis_names(SENSOR_NAMES[s]));
            }
        }
        names
    }

    /// Hex SHA-256 of the newline-joined feature names.
    pub fn digest(&self) -> String {
        digest_names(&self.names())
    }

    pub fn project(&self, full_row: &[f64]) -> Vec<f64> {
        debug_assert_eq!(full_row.len(), FULL_ROW_LEN);
        self.columns().into_iter().map(|c| full_row[c]).collect()
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.sensors, self.feature_set.as_str())
    }
}

pub fn digest_names(names: &[String]) -> String {
    let mut h = Sha256::new();
    for n in names {
        h.update(n.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn metrics_of_one_to_four() {
        let m = metrics(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(close(m.mean, 2.5));
        assert_eq!(m.max, 4.0);
        assert_eq!(m.min, 1.0);
        assert!(close(m.median, 2.5));
        assert!((m.std - 1.118_033_988_749_895).abs() < 1e-12);
        assert!(close(m.rms, 7.5f64.sqrt()));
        // quartiles 1.75 and 3.25
        assert!(close(m.iqr, 1.5));
        // four values spread into bins 0, 5, 10, 15
        assert!(close(m.entropy, 2.0));
    }

    #[test]
    fn constant_series_is_degenerate() {
        let m = metrics(&[0.7, 0.7, 0.7]).unwrap();
        assert_eq!(m.std, 0.0);
        assert_eq!(m.iqr, 0.0);
        assert_eq!(m.entropy, 0.0);
        assert_eq!(m.median, 0.7);
    }

    #[test]
    fn empty_series_errors() {
        assert!(matches!(metrics(&[]), Err(Error::Length(_))));
    }

    #[test]
    fn uniform_fill_gives_four_bits() {
        // Brute-force oracle: 100 values at the centre of each of 16 bins over [0, 16].
        let mut v = Vec::new();
        for b in 0..16 {
            for _ in 0..100 {
                v.push(b as f64 + 0.5);
            }
        }
        v[0] = 0.0;
        v[1599] = 16.0;
        let mut counts = [0usize; 16];
        for &x in &v {
            counts[((x / 16.0 * 16.0) as usize).min(15)] += 1;
        }
        assert!(counts.iter().all(|&c| c == 100));
        let oracle: f64 = counts
            .iter()
            .map(|&c| -(c as f64 / 1600.0) * (c as f64 / 1600.0).log2())
            .sum();
        let m = metrics(&v).unwrap();
        assert!((m.entropy - oracle).abs() < 1e-12);
        assert!((m.entropy - 4.0).abs() < 1e-12);
    }

    #[test]
    fn feature_names_are_64_and_unique() {
        let names = feature_names();
        assert_eq!(names.len(), 64);
        assert_eq!(names[0], "chest_raw_mag_mean");
        assert_eq!(names[7], "chest_raw_mag_iqr");
        assert_eq!(names[8], "chest_low_mag_mean");
        assert_eq!(names[32], "thigh_raw_mag_mean");
        assert_eq!(names[63], "thigh_dhigh_mag_iqr");
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 64);
    }

    #[test]
    fn layouts_select_expected_columns() {
        let both = FeatureLayout::default();
        assert_eq!(both.columns(), (0..64).collect::<Vec<_>>());
        let chest = FeatureLayout::new(SensorSubset::ChestOnly, FeatureSet::Invariant);
        assert_eq!(chest.columns(), (0..32).collect::<Vec<_>>());
        let thigh = FeatureLayout::new(SensorSubset::ThighOnly, FeatureSet::Invariant);
        assert_eq!(thigh.columns(), (32..64).collect::<Vec<_>>());
        assert_eq!(thigh.names()[0], "thigh_raw_mag_mean");
        let cmp = FeatureLayout::new(SensorSubset::Both, FeatureSet::WithPerAxis);
        assert_eq!(cmp.len(), 112);
        assert_eq!(cmp.names()[64], "chest_x_mean");
        assert_eq!(cmp.names()[111], "thigh_z_iqr");
        let thigh_cmp = FeatureLayout::new(SensorSubset::ThighOnly, FeatureSet::WithPerAxis);
        assert_eq!(thigh_cmp.columns()[32], 64 + 24);
        assert_ne!(both.digest(), chest.digest());
        assert_eq!(both.digest().len(), 64);
    }

    #[test]
    fn subset_parsing() {
        assert_eq!(
            "chest".parse::<SensorSubset>().unwrap(),
            SensorSubset::ChestOnly
        );
        assert_eq!("Both".parse::<SensorSubset>().unwrap(), SensorSubset::Both);
        assert!("hip".parse::<SensorSubset>().is_err());
    }
}
