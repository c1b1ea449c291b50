//! C ABI over the emrec library.
//!
//! Conventions:
//!
//! * Every fallible function returns an [`EmrecStatus`]; `EMREC_STATUS_OK` is
//!   zero. On failure the message is available from [`emrec_last_error`] on
//!   the same thread until the next failing call.
//! * Models are opaque handles created by [`emrec_model_load`] or
//!   [`emrec_model_load_json`] and released with [`emrec_model_free`].
//! * Tri-axial inputs are interleaved `x, y, z` doubles, `3 * n_samples`
//!   values per sensor, in g-units.
//! * Panics never cross the boundary; they surface as `EMREC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;
use std::sync::OnceLock;

use emrec::dsp::TriaxialSeries;
use emrec::features::{self, FEATURE_COUNT};
use emrec::ingest::Label;
use emrec::pipeline::{self, PipelineConfig};
use emrec::windowing::{Epoch, Segment};
use emrec::{BaggingModel, Error};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmrecStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Data = 5,
    Compatibility = 6,
    Window = 7,
    Length = 8,
    BufferTooSmall = 9,
    Panic = 99,
}

/// Opaque trained model.
pub struct EmrecModel {
    inner: BaggingModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EmrecStatus {
    match e {
        Error::Parse { .. } | Error::Ordering { .. } | Error::Json(_) => EmrecStatus::Parse,
        Error::Io(_) => EmrecStatus::Io,
        Error::File { source, .. } => status_of(source),
        Error::Compatibility(_) => EmrecStatus::Compatibility,
        Error::Window(_) => EmrecStatus::Window,
        Error::Length(_) => EmrecStatus::Length,
        Error::Parameter(_) => EmrecStatus::InvalidArgument,
        Error::Sync(_) | Error::Gap { .. } | Error::Identity { .. } | Error::Data(_) => {
            EmrecStatus::Data
        }
    }
}

struct Failure(EmrecStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: EmrecStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Run `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EmrecStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmrecStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            EmrecStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(EmrecStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn c_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| {
        fail(
            EmrecStatus::InvalidArgument,
            format!("`{name}` is not valid UTF-8"),
        )
    })
}

unsafe fn model_ref<'a>(model: *const EmrecModel) -> Result<&'a BaggingModel, Failure> {
    non_null(model, "model")?;
    Ok(&(*model).inner)
}

/// Tri-axial series from `3 * n` interleaved doubles.
unsafe fn series(p: *const f64, n: usize, fs: f64, name: &str) -> Result<TriaxialSeries, Failure> {
    non_null(p, name)?;
    let len = n
        .checked_mul(3)
        .ok_or_else(|| fail(EmrecStatus::InvalidArgument, "sample count overflows"))?;
    let data = slice::from_raw_parts(p, len);
    let samples: Vec<[f64; 3]> = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok(TriaxialSeries::from_samples(fs, &samples)?)
}

fn config_for(model: &BaggingModel) -> PipelineConfig {
    PipelineConfig {
        window_s: model.window_s.unwrap_or(PipelineConfig::default().window_s),
        sensors: model.feature_layout.sensors,
        feature_set: model.feature_layout.feature_set,
        train: model.config.clone(),
        seed: model.seed,
    }
}

/// Message of the last failure on this thread, or null if none. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn emrec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn emrec_version() -> *const c_char {
    static VERSION: OnceLock<CString> = OnceLock::new();
    VERSION
        .get_or_init(|| CString::new(env!("CARGO_PKG_VERSION")).unwrap_or_default())
        .as_ptr()
}

/// Number of orientation-invariant features per segment.
#[no_mangle]
pub extern "C" fn emrec_feature_count() -> usize {
    FEATURE_COUNT
}

/// Name of invariant feature `index` as a static string, or null when out of range.
#[no_mangle]
pub extern "C" fn emrec_feature_name(index: usize) -> *const c_char {
    static NAMES: OnceLock<Vec<CString>> = OnceLock::new();
    let names = NAMES.get_or_init(|| {
        features::feature_names()
            .into_iter()
            .map(|n| CString::new(n).unwrap_or_default())
            .collect()
    });
    names.get(index).map_or(std::ptr::null(), |c| c.as_ptr())
}

/// Compute the invariant features of one segment into `out[0..emrec_feature_count()]`.
///
/// # Safety
/// `chest_xyz` and `thigh_xyz` must point to `3 * n_samples` doubles and
/// `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn emrec_segment_features(
    chest_xyz: *const f64,
    thigh_xyz: *const f64,
    n_samples: usize,
    fs_hz: f64,
    out: *mut f64,
    out_len: usize,
) -> EmrecStatus {
    guard(|| {
        non_null(out, "out")?;
        if out_len < FEATURE_COUNT {
            return Err(fail(
                EmrecStatus::BufferTooSmall,
                format!("output holds {out_len} values, need {FEATURE_COUNT}"),
            ));
        }
        let seg = Segment {
            patient_id: String::new(),
            minute_index: 0,
            offset_s: 0.0,
            chest: series(chest_xyz, n_samples, fs_hz, "chest_xyz")?,
            thigh: series(thigh_xyz, n_samples, fs_hz, "thigh_xyz")?,
            label: Label::LyingNoEm,
        };
        let values = features::segment_features(&seg)?;
        slice::from_raw_parts_mut(out, FEATURE_COUNT).copy_from_slice(values.values());
        Ok(())
    })
}

/// Load a model file; on success `*out_model` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emrec_model_load(
    path: *const c_char,
    out_model: *mut *mut EmrecModel,
) -> EmrecStatus {
    guard(|| {
        non_null(out_model, "out_model")?;
        let path = c_str(path, "path")?;
        let file = std::fs::File::open(Path::new(path))
            .map_err(|e| fail(EmrecStatus::Io, format!("{path}: {e}")))?;
        let inner = BaggingModel::load(file).map_err(|e| {
            Failure::from(Error::File {
                path: path.into(),
                source: Box::new(e),
            })
        })?;
        *out_model = Box::into_raw(Box::new(EmrecModel { inner }));
        Ok(())
    })
}

/// Parse a model from NUL-terminated JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emrec_model_load_json(
    json: *const c_char,
    out_model: *mut *mut EmrecModel,
) -> EmrecStatus {
    guard(|| {
        non_null(out_model, "out_model")?;
        let inner = BaggingModel::from_json(c_str(json, "json")?)?;
        *out_model = Box::into_raw(Box::new(EmrecModel { inner }));
        Ok(())
    })
}

/// Release a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from a load call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emrec_model_free(model: *mut EmrecModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of input features the model expects per segment.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emrec_model_n_features(
    model: *const EmrecModel,
    out: *mut usize,
) -> EmrecStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = model_ref(model)?.n_features;
        Ok(())
    })
}

/// Segment window in seconds used for minute prediction.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emrec_model_window_s(
    model: *const EmrecModel,
    out: *mut f64,
) -> EmrecStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = config_for(model_ref(model)?).window_s;
        Ok(())
    })
}

/// Classify one feature vector laid out as the model expects. `out_class`
/// receives 0 (lying, no EM) or 1 (lying, EM); `out_score` the fraction of
/// trees voting 1. Either output may be null.
///
/// # Safety
/// `features` must point to `n_features` doubles; outputs must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn emrec_model_predict(
    model: *const EmrecModel,
    features: *const f64,
    n_features: usize,
    out_class: *mut c_int,
    out_score: *mut f64,
) -> EmrecStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(features, "features")?;
        let p = m.predict(slice::from_raw_parts(features, n_features))?;
        if !out_class.is_null() {
            *out_class = p.class.index() as c_int;
        }
        if !out_score.is_null() {
            *out_score = p.score;
        }
        Ok(())
    })
}

/// Per-minute result of segment voting.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EmrecMinutePrediction {
    /// 0 = lying without EM, 1 = lying with EM.
    pub class_id: c_int,
    pub votes_no_em: usize,
    pub votes_em: usize,
    /// Mean class-1 score over the minute's segments.
    pub mean_score: f64,
}

/// Segment, featurize and vote over one synchronized minute of both sensors.
/// `n_samples` must equal one minute at `fs_hz`.
///
/// # Safety
/// `chest_xyz` and `thigh_xyz` must point to `3 * n_samples` doubles and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn emrec_model_predict_minute(
    model: *const EmrecModel,
    chest_xyz: *const f64,
    thigh_xyz: *const f64,
    n_samples: usize,
    fs_hz: f64,
    out: *mut EmrecMinutePrediction,
) -> EmrecStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        let expected = emrec::ingest::minute_len(fs_hz);
        if n_samples != expected {
            return Err(fail(
                EmrecStatus::Length,
                format!("a minute at {fs_hz} Hz has {expected} samples, got {n_samples}"),
            ));
        }
        let epoch = Epoch {
            patient_id: String::new(),
            minute_index: 0,
            chest: series(chest_xyz, n_samples, fs_hz, "chest_xyz")?,
            thigh: series(thigh_xyz, n_samples, fs_hz, "thigh_xyz")?,
            label: Label::LyingNoEm,
        };
        let p = pipeline::predict_minute(m, &epoch, &config_for(m))?;
        *out = EmrecMinutePrediction {
            class_id: p.predicted.index() as c_int,
            votes_no_em: p.segment_votes[0],
            votes_em: p.segment_votes[1],
            mean_score: p.mean_score,
        };
        Ok(())
    })
}
