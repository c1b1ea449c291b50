use emrec::dsp::{self, Matrix3, TriaxialSeries};
use emrec::features::{self, FeatureVector, FEATURE_COUNT};
use emrec::ingest::{self, Label, SensorPosition, SensorRecording, SensorSample};
use emrec::model::{Prediction, TrainConfig};
use emrec::pipeline::{self, vote};
use emrec::synth::{self, SynthConfig};
use emrec::windowing;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rotation(seed: u64) -> Matrix3 {
    synth::random_rotation(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn series_strategy(min: usize, max: usize) -> impl Strategy<Value = TriaxialSeries> {
    (min..=max)
        .prop_flat_map(|n| prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), n))
        .prop_map(|samples| TriaxialSeries::from_samples(30.0, &samples).unwrap())
}

fn recording(
    position: SensorPosition,
    samples: &[[f64; 3]],
    start: f64,
    jitter: &[f64],
) -> SensorRecording {
    SensorRecording {
        position,
        sampling_rate_hz: 30.0,
        samples: samples
            .iter()
            .zip(jitter)
            .enumerate()
            .map(|(i, (v, j))| SensorSample {
                timestamp: start + (i as f64 + j) / 30.0,
                x: v[0],
                y: v[1],
                z: v[2],
            })
            .collect(),
    }
}

fn to_recording(position: SensorPosition, origin: f64, s: &TriaxialSeries) -> SensorRecording {
    SensorRecording {
        position,
        sampling_rate_hz: s.fs_hz,
        samples: (0..s.len())
            .map(|i| SensorSample {
                timestamp: origin + i as f64 / s.fs_hz,
                x: s.x[i],
                y: s.y[i],
                z: s.z[i],
            })
            .collect(),
    }
}

fn max_abs_diff(a: &TriaxialSeries, b: &TriaxialSeries) -> f64 {
    a.axes()
        .iter()
        .zip(b.axes())
        .flat_map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip_is_bit_identical(values in prop::collection::vec(prop::array::uniform3(prop::num::f64::NORMAL | prop::num::f64::ZERO), 1..50)) {
        let jitter = vec![0.0; values.len()];
        let rec = recording(SensorPosition::Chest, &values, 12.5, &jitter);
        let mut buf = Vec::new();
        ingest::write_recording(&rec, &mut buf).unwrap();
        let back = ingest::parse_recording(buf.as_slice(), SensorPosition::Chest, 30.0).unwrap();
        prop_assert_eq!(back.samples.len(), rec.samples.len());
        for (a, b) in back.samples.iter().zip(&rec.samples) {
            prop_assert_eq!(a.timestamp.to_bits(), b.timestamp.to_bits());
            prop_assert_eq!([a.x.to_bits(), a.y.to_bits(), a.z.to_bits()], [b.x.to_bits(), b.y.to_bits(), b.z.to_bits()]);
        }
    }

    #[test]
    fn synchronize_gives_equal_lengths_and_is_idempotent(
        chest in prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), 40..200),
        thigh in prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), 40..200),
        offset in 0.0f64..0.5,
        jitter_seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(jitter_seed);
        let jitter = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rand::Rng::gen_range(rng, -0.2..0.2)).collect() };
        let (jc, jt) = (jitter(chest.len(), &mut rng), jitter(thigh.len(), &mut rng));
        let c = recording(SensorPosition::Chest, &chest, 100.0, &jc);
        let t = recording(SensorPosition::Thigh, &thigh, 100.0 + offset, &jt);
        let synced = ingest::synchronize("p", &c, &t).unwrap();
        prop_assert_eq!(synced.chest.len(), synced.thigh.len());
        prop_assert!(!synced.is_empty());

        let again = ingest::synchronize(
            "p",
            &to_recording(SensorPosition::Chest, synced.origin, &synced.chest),
            &to_recording(SensorPosition::Thigh, synced.origin, &synced.thigh),
        )
        .unwrap();
        prop_assert_eq!(&again.chest, &synced.chest);
        prop_assert_eq!(&again.thigh, &synced.thigh);
    }

    #[test]
    fn segments_inherit_the_epoch_label(em in any::<bool>(), w in prop::sample::select(vec![4.0, 10.0, 20.0, 30.0, 60.0])) {
        let label = if em { Label::LyingEm } else { Label::LyingNoEm };
        let n = ingest::minute_len(30.0);
        let s = TriaxialSeries::new(30.0, vec![0.0; n], vec![0.0; n], vec![1.0; n]).unwrap();
        let epoch = windowing::Epoch { patient_id: "p".into(), minute_index: 2, chest: s.clone(), thigh: s, label };
        let segs = windowing::segment_epoch(&epoch, w).unwrap();
        prop_assert_eq!(segs.len(), windowing::segment_count(w, 30.0).unwrap());
        prop_assert!(segs.iter().all(|g| g.label == label && g.minute_index == 2));
    }

    #[test]
    fn band_split_and_derivative_commute_with_rotation(s in series_strategy(8, 400), seed in any::<u64>()) {
        let r = rotation(seed);
        let rs = s.rotated(&r);
        let (a, b) = (dsp::band_split_default(&s).unwrap(), dsp::band_split_default(&rs).unwrap());
        prop_assert!(max_abs_diff(&a.low.rotated(&r), &b.low) < 1e-9);
        prop_assert!(max_abs_diff(&a.high.rotated(&r), &b.high) < 1e-9);
        let da = dsp::derivative(&a.high).unwrap();
        let db = dsp::derivative(&b.high).unwrap();
        prop_assert!(max_abs_diff(&da.rotated(&r), &db) < 1e-7);
        for (x, y) in dsp::magnitude_series(&a.high).iter().zip(dsp::magnitude_series(&b.high)) {
            prop_assert!(close(*x, y, 1e-6));
        }
    }

    #[test]
    fn bands_reconstruct_and_parseval_holds(s in series_strategy(1, 700), fs in prop::sample::select(vec![30.0, 45.0, 100.0])) {
        let s = TriaxialSeries::new(fs, s.x.clone(), s.y.clone(), s.z.clone()).unwrap();
        let bands = dsp::band_split_default(&s).unwrap();
        prop_assert!(max_abs_diff(&bands.reconstruct(), &s) < 1e-9);
        prop_assert_eq!(bands.residual.is_some(), dsp::default_high_cut(fs) < fs / 2.0);
        let spectrum = dsp::dft(&s.x).unwrap();
        let time: f64 = s.x.iter().map(|v| v * v).sum();
        let freq: f64 = spectrum.iter().map(|c| c.norm_sqr()).sum::<f64>() / s.len() as f64;
        prop_assert!((time - freq).abs() <= 1e-9 * time.max(1e-300));
    }

    #[test]
    fn segment_features_ignore_sensor_orientation(
        chest in series_strategy(300, 300),
        thigh in series_strategy(300, 300),
        seeds in (any::<u64>(), any::<u64>()),
    ) {
        let seg = windowing::Segment { patient_id: "p".into(), minute_index: 0, offset_s: 0.0, chest, thigh, label: Label::LyingNoEm };
        let base = features::segment_features(&seg).unwrap();
        let mut rotated = seg.clone();
        rotated.chest = seg.chest.rotated(&rotation(seeds.0));
        rotated.thigh = seg.thigh.rotated(&rotation(seeds.1));
        let got = features::segment_features(&rotated).unwrap();
        for (a, b) in got.values().iter().zip(base.values()) {
            prop_assert!(close(*a, *b, 1e-6), "{} vs {}", a, b);
        }
    }

    #[test]
    fn metrics_scale_with_the_signal(values in prop::collection::vec(-10.0f64..10.0, 2..200), power in -4i32..5) {
        // powers of two scale exactly, so bin membership is preserved
        let k = 2f64.powi(power);
        let shifted: Vec<f64> = values.iter().map(|v| v + 20.0).collect();
        let scaled: Vec<f64> = shifted.iter().map(|v| v * k).collect();
        let (a, b) = (features::metrics(&shifted).unwrap(), features::metrics(&scaled).unwrap());
        let (a, b) = (a.to_array(), b.to_array());
        for i in [0, 1, 2, 3, 4, 6, 7] {
            prop_assert!(close(a[i] * k, b[i], 1e-12), "metric {}: {} vs {}", i, a[i] * k, b[i]);
        }
        prop_assert_eq!(a[5], b[5]);
    }

    #[test]
    fn feature_vectors_round_trip_through_json(values in prop::collection::vec(-1e6f64..1e6, FEATURE_COUNT)) {
        let v = FeatureVector::new(values.clone()).unwrap();
        let back: FeatureVector = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        prop_assert_eq!(back.values(), values.as_slice());
    }

    #[test]
    fn voting_rules(classes in prop::collection::vec((any::<bool>(), 0.0f64..1.0), 1..30), flip in any::<prop::sample::Index>()) {
        let preds: Vec<Prediction> = classes
            .iter()
            .map(|&(em, s)| Prediction { class: if em { Label::LyingEm } else { Label::LyingNoEm }, score: if em { 0.5 + s / 2.0 } else { s / 2.0 } })
            .collect();
        let m = vote("p", 0, &preds);
        prop_assert_eq!(m.segment_votes[0] + m.segment_votes[1], preds.len());
        if preds.iter().all(|p| p.class == preds[0].class) {
            prop_assert_eq!(m.predicted, preds[0].class);
        }
        // flipping one vote changes the outcome only if the vote ordering changes
        let i = flip.index(preds.len());
        let mut flipped = preds.clone();
        flipped[i].class = flipped[i].class.opposite();
        let f = vote("p", 0, &flipped);
        let order = |v: [usize; 2]| v[1].cmp(&v[0]);
        if f.predicted != m.predicted {
            prop_assert!(order(f.segment_votes) != order(m.segment_votes) || f.segment_votes[0] == f.segment_votes[1]);
        }
    }

    #[test]
    fn gini_peaks_at_balance(a in 0u32..1000, b in 0u32..1000) {
        prop_assume!(a + b > 0);
        let g = emrec::model::tree::gini(&[a, b]).unwrap();
        prop_assert!((0.0..=0.5).contains(&g));
        prop_assert_eq!(g == 0.5, a == b);
        prop_assert_eq!(g == 0.0, a == 0 || b == 0);
    }
}

fn small_synth(mix: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        n_patients: 3,
        minutes_per_patient: 6,
        label_mix_rate: mix,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn synth_is_deterministic_byte_for_byte() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        synth::write_dataset(
            d.path(),
            &synth::generate_dataset(&small_synth(0.3, 21)).unwrap(),
        )
        .unwrap();
    }
    let mut checked = 0;
    for sub in ["", "truth"] {
        for entry in std::fs::read_dir(a.path().join(sub)).unwrap() {
            let entry = entry.unwrap();
            if entry.path().is_file() {
                let other = b.path().join(sub).join(entry.file_name());
                assert_eq!(
                    std::fs::read(entry.path()).unwrap(),
                    std::fs::read(other).unwrap()
                );
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 12);
}

#[test]
fn unmixed_minutes_follow_their_labels() {
    for p in synth::generate_dataset(&small_synth(0.0, 2)).unwrap() {
        for m in &p.schedule {
            assert_eq!(m.intervals.len(), 1);
            assert_eq!(m.intervals[0].class, m.label);
        }
    }
}

#[test]
fn removing_rotations_leaves_features_unchanged() {
    let rotated = synth::generate_labeled(&small_synth(0.3, 8)).unwrap();
    let plain = synth::generate_labeled(&SynthConfig {
        rotate: false,
        ..small_synth(0.3, 8)
    })
    .unwrap();
    for (r, p) in rotated.iter().zip(&plain) {
        assert_ne!(r.recording.chest, p.recording.chest);
        let fr = pipeline::featurize_recording(r, 10.0).unwrap();
        let fp = pipeline::featurize_recording(p, 10.0).unwrap();
        for (mr, mp) in fr.iter().zip(&fp) {
            for (a, b) in mr.rows.iter().zip(&mp.rows) {
                for (x, y) in a[..FEATURE_COUNT].iter().zip(&b[..FEATURE_COUNT]) {
                    assert!(close(*x, *y, 1e-6), "{x} vs {y}");
                }
            }
        }
    }
}

#[test]
fn labels_and_truth_files_match_the_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let patients = synth::generate_dataset(&small_synth(0.5, 4)).unwrap();
    synth::write_dataset(dir.path(), &patients).unwrap();
    for p in &patients {
        let text = std::fs::read(ingest::labels_path(dir.path(), &p.patient_id)).unwrap();
        let ann = ingest::parse_annotations(text.as_slice(), &p.patient_id).unwrap();
        let expect: Vec<(usize, Label)> = p.schedule.iter().map(|m| (m.minute, m.label)).collect();
        assert_eq!(ann.labels, expect);
        let truth = std::fs::read_to_string(synth::truth_path(dir.path(), &p.patient_id)).unwrap();
        let rows = p.schedule.iter().map(|m| m.intervals.len()).sum::<usize>();
        assert_eq!(truth.lines().count(), rows + 1);
    }
}

#[test]
fn resting_gravity_is_about_one_g() {
    let cfg = SynthConfig {
        noise_std: 0.0,
        ..small_synth(0.0, 6)
    };
    let patients = synth::generate_dataset(&cfg).unwrap();
    let mut checked = 0;
    for p in &patients {
        let rec = p.labeled().unwrap();
        for epoch in windowing::split_epochs(&rec)
            .iter()
            .filter(|e| e.label == Label::LyingNoEm)
        {
            for s in [&epoch.chest, &epoch.thigh] {
                let low = dsp::band_split_default(s).unwrap().low;
                let mags = dsp::magnitude_series(&low);
                let inside = mags.iter().filter(|m| (0.9..=1.1).contains(*m)).count();
                assert!(inside as f64 >= 0.95 * mags.len() as f64);
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn classes_separate_by_construction() {
    let data = synth::generate_labeled(&SynthConfig {
        n_patients: 4,
        minutes_per_patient: 20,
        ..SynthConfig::default()
    })
    .unwrap();
    let layout = features::FeatureLayout::default();
    let minutes: Vec<_> = data
        .iter()
        .flat_map(|r| pipeline::featurize_recording(r, 10.0).unwrap())
        .collect();
    let (rows, labels) = pipeline::training_matrix(&minutes, &layout);
    let sep = synth::max_class_separation(&rows, &labels);
    assert!(sep >= 3.0, "best separation {sep}");
}

#[test]
fn training_matrix_shapes() {
    let data = synth::generate_labeled(&small_synth(0.0, 1)).unwrap();
    let minutes: Vec<_> = data
        .iter()
        .flat_map(|r| pipeline::featurize_recording(r, 10.0).unwrap())
        .collect();
    let total: usize = data.iter().map(|r| r.minutes.len()).sum();
    for (sensors, width) in [
        (features::SensorSubset::Both, 64),
        (features::SensorSubset::ChestOnly, 32),
        (features::SensorSubset::ThighOnly, 32),
    ] {
        let layout = features::FeatureLayout::new(sensors, features::FeatureSet::Invariant);
        let (rows, labels) = pipeline::training_matrix(&minutes, &layout);
        assert_eq!(rows.len(), 11 * total);
        assert_eq!(labels.len(), rows.len());
        assert!(rows.iter().all(|r| r.len() == width));
    }
}

#[test]
fn one_minute_window_is_a_single_segment_vote() {
    let data = synth::generate_labeled(&small_synth(0.3, 3)).unwrap();
    let cfg = pipeline::PipelineConfig {
        window_s: 60.0,
        train: TrainConfig {
            n_trees: 5,
            ..TrainConfig::default()
        },
        ..Default::default()
    };
    let model = pipeline::train_pipeline(&data, &cfg).unwrap();
    for epoch in windowing::split_epochs(&data[0]) {
        let m = pipeline::predict_minute(&model, &epoch, &cfg).unwrap();
        let seg = &windowing::segment_epoch(&epoch, 60.0).unwrap()[0];
        let p = model
            .predict(features::segment_features(seg).unwrap().values())
            .unwrap();
        assert_eq!(m.segment_votes[0] + m.segment_votes[1], 1);
        assert_eq!(m.predicted, p.class);
        assert_eq!(m.mean_score, p.score);
    }
}

#[test]
fn reports_are_deterministic() {
    let data = synth::generate_labeled(&small_synth(0.3, 12)).unwrap();
    let cfg = pipeline::PipelineConfig {
        train: TrainConfig {
            n_trees: 4,
            ..TrainConfig::default()
        },
        seed: 9,
        ..Default::default()
    };
    let a = emrec::eval::evaluate(&data, &cfg).unwrap();
    let b = emrec::eval::evaluate(&data, &cfg).unwrap();
    assert_eq!(a.per_patient_accuracy, b.per_patient_accuracy);
    assert_eq!(a.folds, 3);
}
