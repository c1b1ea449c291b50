//! Seeded synthetic patients: dual-sensor recordings with class-dependent
//! motion, a random fixed orientation per sensor and patient, and optional
//! within-minute activity splicing that leaves the minute's label at its
//! majority class.
//!
//! Signal model, per sensor, in the body frame before rotation:
//!
//! * gravity: a unit vector for the lying posture, tilted by a few degrees
//!   per minute;
//! * lying without EM: breathing-like chest motion below 0.05 g, no thigh
//!   motion;
//! * lying with EM: short Hann-windowed sinusoidal bursts separated by
//!   pauses, along random directions, 0.5–3 Hz, stronger on the thigh than
//!   on the chest, scaled per patient and per minute;
//! * white Gaussian noise of `noise_std` per axis.
//!
//! The whole body-frame stream is then rotated by the sensor's orientation.

use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{apply, Matrix3};
use crate::error::{Error, Result};
use crate::ingest::{
    self, attach_labels, synchronize, AnnotationSet, Label, LabeledRecording, SensorPosition,
    SensorRecording, SensorSample, MINUTE_S,
};
use crate::model::stable_hash;

/// Motion-burst parameters of the EM class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurstConfig {
    /// Burst duration range in seconds.
    pub duration_s: (f64, f64),
    /// Pause between consecutive bursts in seconds.
    pub pause_s: (f64, f64),
    /// Frequency range in Hz.
    pub frequency_hz: (f64, f64),
    /// Thigh peak amplitude range in g.
    pub thigh_amplitude_g: (f64, f64),
    /// Chest peak amplitude range in g.
    pub chest_amplitude_g: (f64, f64),
    /// Breathing amplitude on the chest during rest, in g.
    pub rest_motion_g: (f64, f64),
    /// Maximum per-minute posture tilt in degrees.
    pub posture_tilt_deg: f64,
    /// Per-patient multiplicative spread of burst amplitude (e.g. 0.3 = ±30%).
    pub patient_intensity_spread: f64,
    /// Per-minute multiplicative spread of burst amplitude.
    pub minute_intensity_spread: f64,
    /// Per-patient factor range applied to every pause.
    pub patient_pause_scale: (f64, f64),
    /// Per-minute factor range applied to every pause.
    pub minute_pause_scale: (f64, f64),
}

impl Default for BurstConfig {
    fn default() -> Self {
        Self {
            duration_s: (0.4, 2.0),
            pause_s: (1.0, 3.0),
            frequency_hz: (0.5, 3.0),
            thigh_amplitude_g: (0.3, 0.6),
            chest_amplitude_g: (0.1, 0.3),
            rest_motion_g: (0.005, 0.03),
            posture_tilt_deg: 10.0,
            patient_intensity_spread: 0.5,
            minute_intensity_spread: 0.3,
            patient_pause_scale: (0.3, 3.0),
            minute_pause_scale: (0.15, 2.5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub minutes_per_patient: usize,
    pub fs: f64,
    /// Probability that a minute's recorded class is EM.
    pub class_balance: f64,
    /// Fraction of minutes that contain a spliced interval of the other class.
    pub label_mix_rate: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// Apply a random orientation per sensor and patient.
    pub rotate: bool,
    pub bursts: BurstConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 8,
            minutes_per_patient: 70,
            fs: 30.0,
            class_balance: 0.5,
            label_mix_rate: 0.0,
            noise_std: 0.02,
            seed: 0,
            rotate: true,
            bursts: BurstConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "{name} must lie in [0, 1], got {v}"
                )))
            }
        };
        unit("class_balance", self.class_balance)?;
        unit("label_mix_rate", self.label_mix_rate)?;
        if self.n_patients == 0 || self.minutes_per_patient == 0 {
            return Err(Error::Parameter(
                "need at least one patient and one minute".into(),
            ));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::Parameter(format!(
                "sampling rate must be positive, got {}",
                self.fs
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Parameter(format!(
                "noise_std must be non-negative, got {}",
                self.noise_std
            )));
        }
        let b = &self.bursts;
        let ordered = |name: &str, (lo, hi): (f64, f64), min: f64| {
            if lo.is_finite() && hi.is_finite() && min <= lo && lo <= hi {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "{name} range ({lo}, {hi}) is invalid"
                )))
            }
        };
        ordered("burst duration", b.duration_s, f64::MIN_POSITIVE)?;
        ordered("burst pause", b.pause_s, 0.0)?;
        ordered("burst frequency", b.frequency_hz, f64::MIN_POSITIVE)?;
        ordered("thigh amplitude", b.thigh_amplitude_g, 0.0)?;
        ordered("chest amplitude", b.chest_amplitude_g, 0.0)?;
        ordered("rest motion", b.rest_motion_g, 0.0)?;
        ordered("patient pause scale", b.patient_pause_scale, 0.0)?;
        ordered("minute pause scale", b.minute_pause_scale, 0.0)?;
        if b.frequency_hz.1 >= self.fs / 2.0 {
            return Err(Error::Parameter(format!(
                "burst frequency {} Hz must stay below Nyquist ({} Hz)",
                b.frequency_hz.1,
                self.fs / 2.0
            )));
        }
        if !(0.0..1.0).contains(&b.patient_intensity_spread)
            || !(0.0..1.0).contains(&b.minute_intensity_spread)
        {
            return Err(Error::Parameter(
                "intensity spreads must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Uniform random rotation from a uniformly drawn unit quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3 {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (x, y, z, w) = (
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
        b * (2.0 * PI * u3).cos(),
    );
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
        ],
        [
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
        ],
        [
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// One sinusoidal motion burst inside a minute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub start_s: f64,
    pub duration_s: f64,
    pub amplitude_g: f64,
    pub frequency_hz: f64,
    pub phase: f64,
    pub direction: [f64; 3],
}

impl Burst {
    fn value(&self, t: f64) -> Option<[f64; 3]> {
        let u = (t - self.start_s) / self.duration_s;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let envelope = 0.5 - 0.5 * (2.0 * PI * u).cos();
        let a = self.amplitude_g
            * envelope
            * (2.0 * PI * self.frequency_hz * (t - self.start_s) + self.phase).sin();
        Some(self.direction.map(|d| a * d))
    }
}

/// Body-frame generative description of one minute on one sensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityProfile {
    pub class: Label,
    pub gravity: [f64; 3],
    pub bursts: Vec<Burst>,
}

/// A contiguous interval of one activity within a minute.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub class: Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinuteTruth {
    pub minute: usize,
    pub label: Label,
    pub intervals: Vec<ActivityInterval>,
}

impl MinuteTruth {
    pub fn is_mixed(&self) -> bool {
        self.intervals.iter().any(|i| i.class != self.label)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPatient {
    pub patient_id: String,
    pub chest: SensorRecording,
    pub thigh: SensorRecording,
    pub annotations: AnnotationSet,
    pub schedule: Vec<MinuteTruth>,
    pub chest_rotation: Matrix3,
    pub thigh_rotation: Matrix3,
}

impl SyntheticPatient {
    pub fn labeled(&self) -> Result<LabeledRecording> {
        let synced = synchronize(&self.patient_id, &self.chest, &self.thigh)?;
        attach_labels(synced, &self.annotations)
    }
}

pub fn patient_id(index: usize) -> String {
    format!("p{:02}", index + 1)
}

fn minute_schedule<R: Rng + ?Sized>(rng: &mut R, minute: usize, cfg: &SynthConfig) -> MinuteTruth {
    let label = if rng.gen_bool(cfg.class_balance) {
        Label::LyingEm
    } else {
        Label::LyingNoEm
    };
    let mut intervals = vec![ActivityInterval {
        start_s: 0.0,
        end_s: MINUTE_S,
        class: label,
    }];
    if rng.gen_bool(cfg.label_mix_rate) {
        let len = rng.gen_range(10.0..30.0);
        let start = rng.gen_range(0.0..MINUTE_S - len);
        let other = label.opposite();
        intervals = vec![
            ActivityInterval {
                start_s: 0.0,
                end_s: start,
                class: label,
            },
            ActivityInterval {
                start_s: start,
                end_s: start + len,
                class: other,
            },
            ActivityInterval {
                start_s: start + len,
                end_s: MINUTE_S,
                class: label,
            },
        ];
        intervals.retain(|i| i.end_s > i.start_s);
    }
    MinuteTruth {
        minute,
        label,
        intervals,
    }
}

fn tilt<R: Rng + ?Sized>(rng: &mut R, base: [f64; 3], max_deg: f64) -> [f64; 3] {
    let angle = rng.gen_range(0.0..=max_deg.max(0.0)).to_radians();
    let axis = random_unit(rng);
    // Rodrigues rotation of `base` about `axis`
    let (s, c) = angle.sin_cos();
    let cross = [
        axis[1] * base[2] - axis[2] * base[1],
        axis[2] * base[0] - axis[0] * base[2],
        axis[0] * base[1] - axis[1] * base[0],
    ];
    let dot = axis[0] * base[0] + axis[1] * base[1] + axis[2] * base[2];
    [0, 1, 2].map(|i| base[i] * c + cross[i] * s + axis[i] * dot * (1.0 - c))
}

/// Per-patient activity style.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Style {
    intensity: f64,
    pause_scale: f64,
}

fn em_bursts<R: Rng + ?Sized>(
    rng: &mut R,
    interval: &ActivityInterval,
    amplitude: (f64, f64),
    style: Style,
    b: &BurstConfig,
) -> Vec<Burst> {
    let mut out = Vec::new();
    // activity starts at a random phase of its burst/pause cycle
    let offset = uniform(rng, b.pause_s) * style.pause_scale * rng.gen::<f64>();
    let mut t = interval.start_s + offset.min(0.5 * (interval.end_s - interval.start_s));
    while t < interval.end_s {
        let duration = uniform(rng, b.duration_s).min(interval.end_s - t);
        out.push(Burst {
            start_s: t,
            duration_s: duration.max(1e-3),
            amplitude_g: (uniform(rng, amplitude) * style.intensity).max(amplitude.0),
            frequency_hz: uniform(rng, b.frequency_hz),
            phase: rng.gen_range(0.0..2.0 * PI),
            direction: random_unit(rng),
        });
        t += duration + uniform(rng, b.pause_s) * style.pause_scale;
    }
    out
}

fn rest_motion<R: Rng + ?Sized>(
    rng: &mut R,
    interval: &ActivityInterval,
    b: &BurstConfig,
) -> Burst {
    // slow breathing, one long low-amplitude oscillation across the interval
    Burst {
        start_s: interval.start_s,
        duration_s: (interval.end_s - interval.start_s).max(1e-3),
        amplitude_g: uniform(rng, b.rest_motion_g),
        frequency_hz: rng.gen_range(0.2..0.4),
        phase: rng.gen_range(0.0..2.0 * PI),
        direction: random_unit(rng),
    }
}

/// Body-frame profiles of one minute for (chest, thigh).
fn minute_profiles<R: Rng + ?Sized>(
    rng: &mut R,
    truth: &MinuteTruth,
    style: Style,
    cfg: &SynthConfig,
) -> [ActivityProfile; 2] {
    let b = &cfg.bursts;
    let spread = b.minute_intensity_spread;
    let style = Style {
        intensity: if spread > 0.0 {
            style.intensity * rng.gen_range(1.0 - spread..1.0 + spread)
        } else {
            style.intensity
        },
        pause_scale: style.pause_scale * uniform(rng, b.minute_pause_scale),
    };
    let chest_g = tilt(rng, [0.0, 0.0, 1.0], b.posture_tilt_deg);
    let thigh_g = tilt(rng, [0.0, 0.0, 1.0], b.posture_tilt_deg);
    let mut chest = Vec::new();
    let mut thigh = Vec::new();
    for iv in &truth.intervals {
        match iv.class {
            Label::LyingEm => {
                chest.extend(em_bursts(rng, iv, b.chest_amplitude_g, style, b));
                thigh.extend(em_bursts(rng, iv, b.thigh_amplitude_g, style, b));
            }
            Label::LyingNoEm => chest.push(rest_motion(rng, iv, b)),
        }
    }
    [
        ActivityProfile {
            class: truth.label,
            gravity: chest_g,
            bursts: chest,
        },
        ActivityProfile {
            class: truth.label,
            gravity: thigh_g,
            bursts: thigh,
        },
    ]
}

pub fn generate_patient(cfg: &SynthConfig, index: usize) -> Result<SyntheticPatient> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(cfg.seed, index as u64));
    let chest_rotation = random_rotation(&mut rng);
    let thigh_rotation = random_rotation(&mut rng);
    let identity = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let rotations = if cfg.rotate {
        [chest_rotation, thigh_rotation]
    } else {
        [identity, identity]
    };
    let spread = cfg.bursts.patient_intensity_spread;
    let style = Style {
        intensity: if spread > 0.0 {
            rng.gen_range(1.0 - spread..1.0 + spread)
        } else {
            1.0
        },
        pause_scale: uniform(&mut rng, cfg.bursts.patient_pause_scale),
    };
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Parameter(e.to_string()))?;

    let per_minute = ingest::minute_len(cfg.fs);
    let total = per_minute * cfg.minutes_per_patient;
    let mut streams: [Vec<SensorSample>; 2] =
        [Vec::with_capacity(total), Vec::with_capacity(total)];
    let mut schedule = Vec::with_capacity(cfg.minutes_per_patient);
    for minute in 0..cfg.minutes_per_patient {
        let truth = minute_schedule(&mut rng, minute, cfg);
        let profiles = minute_profiles(&mut rng, &truth, style, cfg);
        for i in 0..per_minute {
            let k = minute * per_minute + i;
            let t = i as f64 / cfg.fs;
            let timestamp = k as f64 / cfg.fs;
            for (sensor, profile) in profiles.iter().enumerate() {
                let mut v = profile.gravity;
                for burst in &profile.bursts {
                    if let Some(m) = burst.value(t) {
                        v = [v[0] + m[0], v[1] + m[1], v[2] + m[2]];
                    }
                }
                for c in &mut v {
                    *c += noise.sample(&mut rng);
                }
                let [x, y, z] = apply(&rotations[sensor], v);
                streams[sensor].push(SensorSample { timestamp, x, y, z });
            }
        }
        schedule.push(truth);
    }
    let [chest, thigh] = streams;
    let id = patient_id(index);
    Ok(SyntheticPatient {
        annotations: AnnotationSet {
            patient_id: id.clone(),
            labels: schedule.iter().map(|m| (m.minute, m.label)).collect(),
        },
        patient_id: id,
        chest: SensorRecording {
            position: SensorPosition::Chest,
            sampling_rate_hz: cfg.fs,
            samples: chest,
        },
        thigh: SensorRecording {
            position: SensorPosition::Thigh,
            sampling_rate_hz: cfg.fs,
            samples: thigh,
        },
        schedule,
        chest_rotation,
        thigh_rotation,
    })
}

pub fn generate_dataset(cfg: &SynthConfig) -> Result<Vec<SyntheticPatient>> {
    cfg.validate()?;
    (0..cfg.n_patients)
        .into_par_iter()
        .map(|i| generate_patient(cfg, i))
        .collect()
}

/// Generate and go through synchronization and labeling.
pub fn generate_labeled(cfg: &SynthConfig) -> Result<Vec<LabeledRecording>> {
    generate_dataset(cfg)?
        .iter()
        .map(SyntheticPatient::labeled)
        .collect()
}

pub fn truth_path(dir: &Path, patient_id: &str) -> std::path::PathBuf {
    dir.join("truth").join(format!("{patient_id}_truth.csv"))
}

/// `minute,start_s,end_s,class` per activity interval.
pub fn write_truth<W: Write>(schedule: &[MinuteTruth], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "minute,start_s,end_s,class")?;
    for m in schedule {
        for iv in &m.intervals {
            writeln!(
                w,
                "{},{},{},{}",
                m.minute,
                iv.start_s,
                iv.end_s,
                iv.class.index()
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Sensor and label files at the top of `dir`, splice schedules under `dir/truth/`.
pub fn write_dataset(dir: &Path, patients: &[SyntheticPatient]) -> Result<()> {
    fs::create_dir_all(dir.join("truth")).map_err(|e| Error::from(e).in_file(dir))?;
    let create = |p: &Path| File::create(p).map_err(|e| Error::from(e).in_file(p));
    for p in patients {
        ingest::write_recording(
            &p.chest,
            create(&ingest::sensor_path(
                dir,
                &p.patient_id,
                SensorPosition::Chest,
            ))?,
        )?;
        ingest::write_recording(
            &p.thigh,
            create(&ingest::sensor_path(
                dir,
                &p.patient_id,
                SensorPosition::Thigh,
            ))?,
        )?;
        ingest::write_annotations(
            &p.annotations,
            create(&ingest::labels_path(dir, &p.patient_id))?,
        )?;
        write_truth(&p.schedule, create(&truth_path(dir, &p.patient_id))?)?;
    }
    Ok(())
}

/// Largest standardized class-mean difference over the feature columns:
/// `|μ₁ − μ₀| / σ_pooled`.
pub fn max_class_separation(rows: &[Vec<f64>], labels: &[Label]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let width = rows[0].len();
    (0..width)
        .map(|f| {
            let mut groups: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            for (r, l) in rows.iter().zip(labels) {
                groups[l.index()].push(r[f]);
            }
            if groups.iter().any(|g| g.len() < 2) {
                return 0.0;
            }
            let stats = groups.clone().map(|g| {
                let n = g.len() as f64;
                let mean = g.iter().sum::<f64>() / n;
                let ss = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                (mean, ss, n)
            });
            let pooled = ((stats[0].1 + stats[1].1) / (stats[0].2 + stats[1].2 - 2.0)).sqrt();
            if pooled > 0.0 {
                (stats[1].0 - stats[0].0).abs() / pooled
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}
