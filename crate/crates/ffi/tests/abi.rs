use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use emrec::features::{self, FEATURE_COUNT};
use emrec::pipeline::{self, PipelineConfig};
use emrec::synth::{self, SynthConfig};
use emrec::windowing::{self, Epoch};
use emrec::{BaggingModel, TrainConfig};
use emrec_ffi::*;

fn interleave(s: &emrec::dsp::TriaxialSeries) -> Vec<f64> {
    (0..s.len())
        .flat_map(|i| [s.x[i], s.y[i], s.z[i]])
        .collect()
}

fn last_error() -> String {
    let p = emrec_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn sample_epochs() -> Vec<Epoch> {
    let data = synth::generate_labeled(&SynthConfig {
        n_patients: 2,
        minutes_per_patient: 6,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    data.iter().flat_map(windowing::split_epochs).collect()
}

fn trained_model() -> (BaggingModel, PipelineConfig) {
    let data = synth::generate_labeled(&SynthConfig {
        n_patients: 2,
        minutes_per_patient: 6,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = PipelineConfig {
        train: TrainConfig {
            n_trees: 5,
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    };
    (pipeline::train_pipeline(&data, &cfg).unwrap(), cfg)
}

fn load(model: &BaggingModel) -> *mut EmrecModel {
    let json = CString::new(model.to_json().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(
        unsafe { emrec_model_load_json(json.as_ptr(), &mut handle) },
        EmrecStatus::Ok
    );
    assert!(!handle.is_null());
    handle
}

#[test]
fn feature_names_match_the_library() {
    assert_eq!(emrec_feature_count(), FEATURE_COUNT);
    for (i, name) in features::feature_names().iter().enumerate() {
        let got = unsafe { CStr::from_ptr(emrec_feature_name(i)) };
        assert_eq!(got.to_str().unwrap(), name);
    }
    assert!(emrec_feature_name(FEATURE_COUNT).is_null());
    assert!(!emrec_version().is_null());
}

#[test]
fn segment_features_match_the_library() {
    let epoch = &sample_epochs()[0];
    let seg = &windowing::segment_epoch(epoch, 10.0).unwrap()[3];
    let (chest, thigh) = (interleave(&seg.chest), interleave(&seg.thigh));
    let mut out = vec![0.0; FEATURE_COUNT];
    let status = unsafe {
        emrec_segment_features(
            chest.as_ptr(),
            thigh.as_ptr(),
            seg.chest.len(),
            30.0,
            out.as_mut_ptr(),
            out.len(),
        )
    };
    assert_eq!(status, EmrecStatus::Ok);
    assert_eq!(out, features::segment_features(seg).unwrap().into_inner());
}

#[test]
fn segment_feature_errors() {
    let xyz = vec![0.0; 30];
    let mut out = vec![0.0; FEATURE_COUNT];
    let s = unsafe {
        emrec_segment_features(
            ptr::null(),
            xyz.as_ptr(),
            10,
            30.0,
            out.as_mut_ptr(),
            out.len(),
        )
    };
    assert_eq!(s, EmrecStatus::NullPointer);
    assert!(last_error().contains("chest_xyz"));
    let s = unsafe {
        emrec_segment_features(xyz.as_ptr(), xyz.as_ptr(), 10, 30.0, out.as_mut_ptr(), 10)
    };
    assert_eq!(s, EmrecStatus::BufferTooSmall);
    let s = unsafe {
        emrec_segment_features(
            xyz.as_ptr(),
            xyz.as_ptr(),
            0,
            30.0,
            out.as_mut_ptr(),
            out.len(),
        )
    };
    assert_ne!(s, EmrecStatus::Ok);
    let s = unsafe {
        emrec_segment_features(
            xyz.as_ptr(),
            xyz.as_ptr(),
            10,
            -1.0,
            out.as_mut_ptr(),
            out.len(),
        )
    };
    assert_ne!(s, EmrecStatus::Ok);
}

#[test]
fn model_handle_predicts_like_the_library() {
    let (model, cfg) = trained_model();
    let handle = load(&model);
    let mut n = 0usize;
    let mut w = 0.0;
    unsafe {
        assert_eq!(emrec_model_n_features(handle, &mut n), EmrecStatus::Ok);
        assert_eq!(emrec_model_window_s(handle, &mut w), EmrecStatus::Ok);
    }
    assert_eq!((n, w), (FEATURE_COUNT, 10.0));

    for epoch in sample_epochs().iter().take(4) {
        let want = pipeline::predict_minute(&model, epoch, &cfg).unwrap();
        let (chest, thigh) = (interleave(&epoch.chest), interleave(&epoch.thigh));
        let mut got = EmrecMinutePrediction::default();
        let s = unsafe {
            emrec_model_predict_minute(
                handle,
                chest.as_ptr(),
                thigh.as_ptr(),
                epoch.chest.len(),
                30.0,
                &mut got,
            )
        };
        assert_eq!(s, EmrecStatus::Ok);
        assert_eq!(got.class_id as usize, want.predicted.index());
        assert_eq!([got.votes_no_em, got.votes_em], want.segment_votes);
        assert_eq!(got.mean_score, want.mean_score);

        let seg = &windowing::segment_epoch(epoch, 10.0).unwrap()[0];
        let v = features::segment_features(seg).unwrap().into_inner();
        let p = model.predict(&v).unwrap();
        let (mut class, mut score) = (-1, -1.0);
        assert_eq!(
            unsafe { emrec_model_predict(handle, v.as_ptr(), v.len(), &mut class, &mut score) },
            EmrecStatus::Ok
        );
        assert_eq!((class as usize, score), (p.class.index(), p.score));
    }

    let short = vec![0.0; 30];
    let s = unsafe {
        emrec_model_predict(handle, short.as_ptr(), 10, ptr::null_mut(), ptr::null_mut())
    };
    assert_eq!(s, EmrecStatus::Compatibility);
    let mut out = EmrecMinutePrediction::default();
    let s = unsafe {
        emrec_model_predict_minute(handle, short.as_ptr(), short.as_ptr(), 10, 30.0, &mut out)
    };
    assert_eq!(s, EmrecStatus::Length);
    assert!(last_error().contains("1800"));
    unsafe { emrec_model_free(handle) };
    unsafe { emrec_model_free(ptr::null_mut()) };
}

#[test]
fn model_load_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut handle = ptr::null_mut();
    let missing = CString::new(dir.path().join("none.json").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { emrec_model_load(missing.as_ptr(), &mut handle) },
        EmrecStatus::Io
    );
    assert!(handle.is_null());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let bad = CString::new(bad.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { emrec_model_load(bad.as_ptr(), &mut handle) },
        EmrecStatus::Parse
    );

    let (model, _) = trained_model();
    let mut json: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
    json["version"] = 99.into();
    let future = CString::new(json.to_string()).unwrap();
    assert_eq!(
        unsafe { emrec_model_load_json(future.as_ptr(), &mut handle) },
        EmrecStatus::Compatibility
    );

    let good = dir.path().join("model.json");
    model.save(std::fs::File::create(&good).unwrap()).unwrap();
    let good = CString::new(good.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { emrec_model_load(good.as_ptr(), &mut handle) },
        EmrecStatus::Ok
    );
    unsafe { emrec_model_free(handle) };

    assert_eq!(
        unsafe { emrec_model_load(ptr::null(), &mut handle) },
        EmrecStatus::NullPointer
    );
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/emrec.h")).unwrap();
    for f in [
        "emrec_last_error",
        "emrec_version",
        "emrec_feature_count",
        "emrec_feature_name",
        "emrec_segment_features",
        "emrec_model_load",
        "emrec_model_load_json",
        "emrec_model_free",
        "emrec_model_n_features",
        "emrec_model_window_s",
        "emrec_model_predict",
        "emrec_model_predict_minute",
    ] {
        assert!(
            header.contains(&format!(" {f}(")) || header.contains(&format!("*{f}(")),
            "{f} missing from header"
        );
    }
    assert!(header.contains("typedef struct EmrecModel EmrecModel;"));
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = target_dir().join("libemrec_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !lib.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!(
            "skipping: no C compiler or static library at {}",
            lib.display()
        );
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "emrec.h"

int main(void) {
    double chest[3 * 300], thigh[3 * 300], out[64];
    for (int i = 0; i < 300; i++) {
        chest[3 * i] = 0.0; chest[3 * i + 1] = 0.0; chest[3 * i + 2] = 1.0 + 0.01 * (i % 7);
        thigh[3 * i] = 1.0; thigh[3 * i + 1] = 0.0; thigh[3 * i + 2] = 0.02 * (i % 5);
    }
    if (emrec_feature_count() != 64) return 1;
    if (emrec_segment_features(chest, thigh, 300, 30.0, out, 64) != EMREC_STATUS_OK) return 2;
    if (emrec_segment_features(NULL, thigh, 300, 30.0, out, 64) != EMREC_STATUS_NULL_POINTER) return 3;
    if (emrec_last_error() == NULL || strlen(emrec_last_error()) == 0) return 4;
    EmrecModel *m = NULL;
    if (emrec_model_load("/nonexistent/model.json", &m) != EMREC_STATUS_IO || m != NULL) return 5;
    emrec_model_free(m);
    printf("%s %.6f\n", emrec_feature_name(0), out[0]);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "C smoke program exited with {:?}",
        out.status
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("chest_raw_mag_mean "));
}
