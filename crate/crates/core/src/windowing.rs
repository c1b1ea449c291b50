//! Epochs (labeled minutes) and their half-overlapped segments.

use crate::dsp::TriaxialSeries;
use crate::error::{Error, Result};
use crate::ingest::{minute_len, Label, LabeledRecording, MINUTE_S};

/// Window lengths swept by the window-size ablation, in seconds.
pub const ABLATION_WINDOWS_S: [f64; 5] = [4.0, 10.0, 20.0, 30.0, 60.0];

#[derive(Clone, Debug, PartialEq)]
pub struct Epoch {
    pub patient_id: String,
    pub minute_index: usize,
    pub chest: TriaxialSeries,
    pub thigh: TriaxialSeries,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub patient_id: String,
    pub minute_index: usize,
    pub offset_s: f64,
    pub chest: TriaxialSeries,
    pub thigh: TriaxialSeries,
    pub label: Label,
}

/// Sample-level geometry of segmenting one minute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SegmentPlan {
    pub window: usize,
    pub hop: usize,
    pub count: usize,
}

impl SegmentPlan {
    pub fn new(window_s: f64, fs: f64) -> Result<Self> {
        if !(window_s.is_finite() && window_s > 0.0) {
            return Err(Error::Window(format!(
                "window must be positive, got {window_s}"
            )));
        }
        if window_s > MINUTE_S {
            return Err(Error::Window(format!(
                "window {window_s}s exceeds the {MINUTE_S}s epoch"
            )));
        }
        let epoch = minute_len(fs);
        let window = (window_s * fs).round() as usize;
        if window < 2 {
            return Err(Error::Window(format!(
                "window {window_s}s holds {window} samples at {fs} Hz; at least 2 required"
            )));
        }
        let overlap = (window_s * fs / 2.0).round() as usize;
        let hop = window - overlap;
        let count = (epoch - window) / hop + 1;
        Ok(Self { window, hop, count })
    }

    pub fn offsets(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.count).map(move |i| i * self.hop)
    }
}

/// Number of segments per minute for a window length.
pub fn segment_count(window_s: f64, fs: f64) -> Result<usize> {
    SegmentPlan::new(window_s, fs).map(|p| p.count)
}

pub fn split_epochs(rec: &LabeledRecording) -> Vec<Epoch> {
    let r = &rec.recording;
    let len = minute_len(r.sampling_rate_hz);
    rec.minutes
        .iter()
        .map(|&(m, label)| Epoch {
            patient_id: r.patient_id.clone(),
            minute_index: m,
            chest: r.chest.slice(m * len, len),
            thigh: r.thigh.slice(m * len, len),
            label,
        })
        .collect()
}

pub fn segment_epoch(epoch: &Epoch, window_s: f64) -> Result<Vec<Segment>> {
    let fs = epoch.chest.fs_hz;
    let plan = SegmentPlan::new(window_s, fs)?;
    Ok(plan
        .offsets()
        .map(|start| Segment {
            patient_id: epoch.patient_id.clone(),
            minute_index: epoch.minute_index,
            offset_s: start as f64 / fs,
            chest: epoch.chest.slice(start, plan.window),
            thigh: epoch.thigh.slice(start, plan.window),
            label: epoch.label,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::ingest::SyncedRecording;

    fn ramp_epoch(fs: f64) -> Epoch {
        let n = minute_len(fs);
        let v: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let s = TriaxialSeries::new(fs, v.clone(), v.clone(), v).unwrap();
        Epoch {
            patient_id: "p".into(),
            minute_index: 4,
            chest: s.clone(),
            thigh: s,
            label: Label::LyingEm,
        }
    }

    #[test]
    fn ablation_counts() {
        let counts: Vec<usize> = ABLATION_WINDOWS_S
            .iter()
            .map(|&w| segment_count(w, 30.0).unwrap())
            .collect();
        assert_eq!(counts, vec![29, 11, 5, 3, 1]);
    }

    #[test]
    fn window_errors() {
        assert!(matches!(segment_count(61.0, 30.0), Err(Error::Window(_))));
        assert!(matches!(segment_count(0.0, 30.0), Err(Error::Window(_))));
        assert!(matches!(segment_count(0.03, 30.0), Err(Error::Window(_))));
    }

    #[test]
    fn segments_are_slices_of_the_epoch() {
        let e = ramp_epoch(30.0);
        let segs = segment_epoch(&e, 10.0).unwrap();
        assert_eq!(segs.len(), 11);
        for (i, s) in segs.iter().enumerate() {
            assert_eq!(s.offset_s, i as f64 * 5.0);
            assert_eq!(s.chest.len(), 300);
            assert_eq!(s.chest.x[0], (i * 150) as f64);
            assert_eq!(s.label, Label::LyingEm);
            assert_eq!(s.minute_index, 4);
        }
        let whole = segment_epoch(&e, 60.0).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].chest, e.chest);
    }

    #[test]
    fn split_epochs_follows_minutes() {
        let fs = 30.0;
        let n = 3 * minute_len(fs) + 7;
        let v: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let s = TriaxialSeries::new(fs, v.clone(), v.clone(), v).unwrap();
        let rec = LabeledRecording {
            recording: SyncedRecording {
                patient_id: "p".into(),
                sampling_rate_hz: fs,
                origin: 0.0,
                chest: s.clone(),
                thigh: s,
            },
            minutes: vec![
                (0, Label::LyingNoEm),
                (1, Label::LyingEm),
                (2, Label::LyingNoEm),
            ],
        };
        let epochs = split_epochs(&rec);
        assert_eq!(
            epochs.iter().map(|e| e.minute_index).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert!(epochs
            .iter()
            .all(|e| e.chest.len() == 1800 && e.thigh.len() == 1800));
        assert_eq!(epochs[2].chest.x[0], 3600.0);
        let empty = LabeledRecording {
            minutes: vec![],
            ..rec
        };
        assert!(split_epochs(&empty).is_empty());
    }

    proptest! {
        #[test]
        fn coverage_and_overlap(window_s in 0.1f64..=60.0, fs in prop::sample::select(vec![10.0, 25.0, 30.0, 50.0])) {
            let Ok(plan) = SegmentPlan::new(window_s, fs) else { return Ok(()) };
            let epoch = minute_len(fs);
            let overlap = (window_s * fs / 2.0).round() as usize;
            let offsets: Vec<usize> = plan.offsets().collect();
            for w in offsets.windows(2) {
                // consecutive windows share exactly `overlap` samples
                prop_assert_eq!(w[0] + plan.window - w[1], overlap);
            }
            let last_end = offsets.last().unwrap() + plan.window;
            prop_assert!(last_end <= epoch);
            prop_assert!(epoch - last_end < plan.hop);
        }
    }
}
