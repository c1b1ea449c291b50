//! Early-mobility recognition for bed-bound patients from two body-worn
//! accelerometers (chest and thigh).
//!
//! The pipeline runs: ingest and synchronize the two streams, cut labeled
//! minutes into half-overlapped segments, reduce each segment to 64
//! orientation-insensitive features, classify segments with a bagged CART
//! ensemble, and vote the segment predictions into one label per minute.
//! [`eval`] runs leave-one-patient-out evaluation and the ablation sweeps;
//! [`synth`] generates seeded synthetic patients to exercise all of it.

pub mod cli;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod windowing;

pub use error::{Error, Result};
pub use features::{FeatureLayout, FeatureSet, FeatureVector, SensorSubset, FEATURE_COUNT};
pub use ingest::{Label, LabeledRecording, SensorPosition};
pub use model::{BaggingModel, TrainConfig};
pub use pipeline::{MinutePrediction, PipelineConfig};
