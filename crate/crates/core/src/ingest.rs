//! Sensor and annotation file ingestion.
//!
//! File layout for one patient inside a data directory:
//!
//! * `<patient_id>_chest.csv`, `<patient_id>_thigh.csv`: header
//!   `timestamp,x,y,z`; timestamps in seconds or ISO-8601; accelerations in g.
//! * `<patient_id>_labels.csv`: header `minute,label`; label `0` is lying
//!   without early-mobility activity, `1` is lying with it.
//!
//! The two streams are aligned onto a common `1/fs` grid that starts at the
//! later of the two first timestamps and ends at the earlier of the two last
//! ones. Each grid point takes the nearest recorded sample when one lies
//! within half a sample period; otherwise the point is linearly interpolated
//! across the gap, provided the gap is at most [`MAX_GAP_S`].

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::dsp::TriaxialSeries;
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLING_RATE_HZ: f64 = 30.0;
/// Longest run without samples that synchronization will bridge.
pub const MAX_GAP_S: f64 = 1.0;
pub const MINUTE_S: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    LyingNoEm = 0,
    LyingEm = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::LyingNoEm),
            1 => Some(Label::LyingEm),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Label::LyingNoEm => Label::LyingEm,
            Label::LyingEm => Label::LyingNoEm,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensorPosition {
    Chest,
    Thigh,
}

impl SensorPosition {
    pub fn as_str(self) -> &'static str {
        match self {
            SensorPosition::Chest => "chest",
            SensorPosition::Thigh => "thigh",
        }
    }
}

impl fmt::Display for SensorPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorSample {
    pub timestamp: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorRecording {
    pub position: SensorPosition,
    pub sampling_rate_hz: f64,
    pub samples: Vec<SensorSample>,
}

impl SensorRecording {
    pub fn first_timestamp(&self) -> Option<f64> {
        self.samples.first().map(|s| s.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<f64> {
        self.samples.last().map(|s| s.timestamp)
    }
}

/// Numeric seconds, or an ISO-8601 date-time converted to seconds since the
/// Unix epoch (naive date-times are read as UTC).
fn parse_timestamp(field: &str) -> Option<f64> {
    let field = field.trim();
    if let Ok(v) = field.parse::<f64>() {
        return Some(v);
    }
    let dt = DateTime::parse_from_rfc3339(field)
        .map(|d| d.naive_utc())
        .or_else(|_| NaiveDateTime::parse_from_str(field, "%Y-%m-%dT%H:%M:%S%.f"))
        .or_else(|_| NaiveDateTime::parse_from_str(field, "%Y-%m-%d %H:%M:%S%.f"))
        .ok()?
        .and_utc();
    Some(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9)
}

fn parse_number(field: &str, row: u64, name: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        row,
        message: format!("{name} `{field}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            row,
            message: format!("{name} `{field}` is not finite"),
        });
    }
    Ok(v)
}

fn check_header(header: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            row: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        });
    }
    Ok(())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader)
}

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line());
    Error::Parse {
        row,
        message: e.to_string(),
    }
}

/// Parse a `timestamp,x,y,z` CSV stream. Row numbers in errors count the
/// header as row 1.
pub fn parse_recording<R: Read>(
    reader: R,
    position: SensorPosition,
    sampling_rate_hz: f64,
) -> Result<SensorRecording> {
    if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
        return Err(Error::Parameter(format!(
            "sampling rate must be positive, got {sampling_rate_hz}"
        )));
    }
    let mut rdr = csv_reader(reader);
    check_header(
        rdr.headers().map_err(csv_error)?,
        &["timestamp", "x", "y", "z"],
    )?;
    let mut samples: Vec<SensorSample> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i as u64 + 2;
        let record = record.map_err(csv_error)?;
        if record.len() != 4 {
            return Err(Error::Parse {
                row,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let timestamp = parse_timestamp(&record[0])
            .filter(|t| t.is_finite() && *t >= 0.0)
            .ok_or_else(|| Error::Parse {
                row,
                message: format!("invalid timestamp `{}`", &record[0]),
            })?;
        let sample = SensorSample {
            timestamp,
            x: parse_number(&record[1], row, "x")?,
            y: parse_number(&record[2], row, "y")?,
            z: parse_number(&record[3], row, "z")?,
        };
        if let Some(prev) = samples.last() {
            if sample.timestamp <= prev.timestamp {
                return Err(Error::Ordering { row, timestamp });
            }
        }
        samples.push(sample);
    }
    Ok(SensorRecording {
        position,
        sampling_rate_hz,
        samples,
    })
}

/// Write a recording as `timestamp,x,y,z` with shortest round-trip floats.
pub fn write_recording<W: Write>(rec: &SensorRecording, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "timestamp,x,y,z")?;
    for s in &rec.samples {
        writeln!(w, "{},{},{},{}", s.timestamp, s.x, s.y, s.z)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyncedRecording {
    pub patient_id: String,
    pub sampling_rate_hz: f64,
    /// Absolute time of sample 0, in the recordings' timestamp units.
    pub origin: f64,
    pub chest: TriaxialSeries,
    pub thigh: TriaxialSeries,
}

impl SyncedRecording {
    pub fn len(&self) -> usize {
        self.chest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chest.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sampling_rate_hz
    }
}

fn resample(rec: &SensorRecording, start: f64, n: usize, fs: f64) -> Result<TriaxialSeries> {
    let s = &rec.samples;
    let half_period = 0.5 / fs + 1e-9;
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut j = 0usize;
    for k in 0..n {
        let t = start + k as f64 / fs;
        while j + 1 < s.len() && s[j + 1].timestamp <= t {
            j += 1;
        }
        let a = &s[j];
        let Some(b) = s.get(j + 1) else {
            out.push([a.x, a.y, a.z]);
            continue;
        };
        let (da, db) = ((t - a.timestamp).abs(), (b.timestamp - t).abs());
        let nearest = if db < da { b } else { a };
        if da.min(db) <= half_period {
            out.push([nearest.x, nearest.y, nearest.z]);
            continue;
        }
        let gap = b.timestamp - a.timestamp;
        if gap > MAX_GAP_S {
            return Err(Error::Gap {
                position: rec.position.to_string(),
                start: a.timestamp,
                end: b.timestamp,
            });
        }
        let w = (t - a.timestamp) / gap;
        out.push([
            a.x + w * (b.x - a.x),
            a.y + w * (b.y - a.y),
            a.z + w * (b.z - a.z),
        ]);
    }
    TriaxialSeries::from_samples(fs, &out)
}

/// Align the chest and thigh streams on a shared grid over their common span.
pub fn synchronize(
    patient_id: &str,
    chest: &SensorRecording,
    thigh: &SensorRecording,
) -> Result<SyncedRecording> {
    let fs = chest.sampling_rate_hz;
    if (fs - thigh.sampling_rate_hz).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "sampling rates differ: chest {fs} Hz, thigh {} Hz",
            thigh.sampling_rate_hz
        )));
    }
    let (Some(c0), Some(c1), Some(t0), Some(t1)) = (
        chest.first_timestamp(),
        chest.last_timestamp(),
        thigh.first_timestamp(),
        thigh.last_timestamp(),
    ) else {
        return Err(Error::Sync("a recording has no samples".into()));
    };
    let start = c0.max(t0);
    let end = c1.min(t1);
    if end < start {
        return Err(Error::Sync(format!(
            "chest [{c0}, {c1}] s and thigh [{t0}, {t1}] s do not overlap"
        )));
    }
    let n = ((end - start) * fs + 1e-6).floor() as usize + 1;
    Ok(SyncedRecording {
        patient_id: patient_id.to_string(),
        sampling_rate_hz: fs,
        origin: start,
        chest: resample(chest, start, n, fs)?,
        thigh: resample(thigh, start, n, fs)?,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnnotationSet {
    pub patient_id: String,
    pub labels: Vec<(usize, Label)>,
}

impl AnnotationSet {
    pub fn label_of(&self, minute: usize) -> Option<Label> {
        self.labels
            .iter()
            .find(|(m, _)| *m == minute)
            .map(|&(_, l)| l)
    }
}

pub fn parse_annotations<R: Read>(reader: R, patient_id: &str) -> Result<AnnotationSet> {
    let mut rdr = csv_reader(reader);
    check_header(rdr.headers().map_err(csv_error)?, &["minute", "label"])?;
    let mut labels: Vec<(usize, Label)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i as u64 + 2;
        let record = record.map_err(csv_error)?;
        if record.len() != 2 {
            return Err(Error::Parse {
                row,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let minute: usize = record[0].trim().parse().map_err(|_| Error::Parse {
            row,
            message: format!("minute `{}` is not a non-negative integer", &record[0]),
        })?;
        let label = record[1]
            .trim()
            .parse::<usize>()
            .ok()
            .and_then(Label::from_index)
            .ok_or_else(|| Error::Parse {
                row,
                message: format!("label `{}` must be 0 or 1", &record[1]),
            })?;
        if labels.iter().any(|(m, _)| *m == minute) {
            return Err(Error::Parse {
                row,
                message: format!("duplicate minute {minute}"),
            });
        }
        labels.push((minute, label));
    }
    labels.sort_by_key(|&(m, _)| m);
    Ok(AnnotationSet {
        patient_id: patient_id.to_string(),
        labels,
    })
}

pub fn write_annotations<W: Write>(ann: &AnnotationSet, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "minute,label")?;
    for (m, l) in &ann.labels {
        writeln!(w, "{m},{}", l.index())?;
    }
    w.flush()?;
    Ok(())
}

/// A synchronized recording plus the annotated, complete minutes it contains.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRecording {
    pub recording: SyncedRecording,
    pub minutes: Vec<(usize, Label)>,
}

impl LabeledRecording {
    pub fn patient_id(&self) -> &str {
        &self.recording.patient_id
    }
}

/// Samples per minute at `fs`.
pub fn minute_len(fs: f64) -> usize {
    (MINUTE_S * fs).round() as usize
}

pub fn attach_labels(rec: SyncedRecording, ann: &AnnotationSet) -> Result<LabeledRecording> {
    if ann.patient_id != rec.patient_id {
        return Err(Error::Identity {
            expected: rec.patient_id.clone(),
            found: ann.patient_id.clone(),
        });
    }
    let complete = rec.len() / minute_len(rec.sampling_rate_hz);
    let mut minutes: Vec<(usize, Label)> = ann
        .labels
        .iter()
        .copied()
        .filter(|&(m, _)| m < complete)
        .collect();
    minutes.sort_by_key(|&(m, _)| m);
    Ok(LabeledRecording {
        recording: rec,
        minutes,
    })
}

pub fn sensor_path(dir: &Path, patient_id: &str, position: SensorPosition) -> PathBuf {
    dir.join(format!("{patient_id}_{position}.csv"))
}

pub fn labels_path(dir: &Path, patient_id: &str) -> PathBuf {
    dir.join(format!("{patient_id}_labels.csv"))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::from(e).in_file(path))
}

/// Load, synchronize and label one patient from a data directory.
pub fn load_patient(
    dir: &Path,
    patient_id: &str,
    sampling_rate_hz: f64,
) -> Result<LabeledRecording> {
    let read_sensor = |pos| {
        let path = sensor_path(dir, patient_id, pos);
        parse_recording(open(&path)?, pos, sampling_rate_hz).map_err(|e| e.in_file(&path))
    };
    let chest = read_sensor(SensorPosition::Chest)?;
    let thigh = read_sensor(SensorPosition::Thigh)?;
    let path = labels_path(dir, patient_id);
    let ann = parse_annotations(open(&path)?, patient_id).map_err(|e| e.in_file(&path))?;
    let synced = synchronize(patient_id, &chest, &thigh)?;
    attach_labels(synced, &ann)
}

/// Patient ids with a `<id>_labels.csv` file in `dir`, sorted.
pub fn discover_patients(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let mut ids = Vec::new();
    for entry in entries {
        let name = entry?.file_name();
        if let Some(id) = name.to_str().and_then(|n| n.strip_suffix("_labels.csv")) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Data(format!(
            "no `*_labels.csv` files in {}",
            dir.display()
        )));
    }
    Ok(ids)
}

pub fn load_dataset(dir: &Path, sampling_rate_hz: f64) -> Result<Vec<LabeledRecording>> {
    use rayon::prelude::*;
    discover_patients(dir)?
        .par_iter()
        .map(|id| load_patient(dir, id, sampling_rate_hz))
        .collect()
}

impl FromStr for SensorPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chest" => Ok(SensorPosition::Chest),
            "thigh" => Ok(SensorPosition::Thigh),
            other => Err(Error::Parameter(format!(
                "unknown sensor position `{other}`"
            ))),
        }
    }
}
