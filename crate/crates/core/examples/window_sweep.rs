//! Directional window-size and feature-set comparison on synthetic patients.
//!
//! `cargo run --release --example window_sweep -- [mix_rate] [seed] [n_trees] [windows,comma,separated]`

use std::time::Instant;

use emrec::eval;
use emrec::features::FeatureSet;
use emrec::synth::{self, SynthConfig};
use emrec::{PipelineConfig, TrainConfig};

fn main() -> emrec::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mix: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(7);
    let n_trees: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(100);
    let windows: Vec<f64> = args
        .get(4)
        .map(|s| s.split(',').filter_map(|w| w.parse().ok()).collect())
        .unwrap_or_else(|| vec![60.0, 30.0, 20.0, 10.0, 4.0]);

    let t = Instant::now();
    let mut cfg = SynthConfig {
        label_mix_rate: mix,
        seed,
        ..SynthConfig::default()
    };
    if let Ok(json) = std::env::var("BURSTS") {
        cfg.bursts = serde_json::from_str(&json).expect("BURSTS must be a burst config object");
    }
    println!("{}", serde_json::to_string(&cfg.bursts).unwrap());
    let data = synth::generate_labeled(&cfg)?;
    println!("generated in {:.1?}", t.elapsed());

    let base = PipelineConfig {
        train: TrainConfig {
            n_trees,
            ..TrainConfig::default()
        },
        seed,
        ..PipelineConfig::default()
    };
    for w in windows {
        let t = Instant::now();
        let r = eval::evaluate(
            &data,
            &PipelineConfig {
                window_s: w,
                ..base.clone()
            },
        )?;
        println!(
            "W={w:>4}: acc {:.4} instab {:.4} ({:.1?}) {:?}",
            r.mean_accuracy,
            r.instability,
            t.elapsed(),
            r.per_patient_accuracy
                .values()
                .map(|a| (a * 100.0).round())
                .collect::<Vec<_>>()
        );
    }
    let t = Instant::now();
    let feats = eval::featurize_dataset(&data, 10.0)?;
    for fs in [FeatureSet::Invariant, FeatureSet::WithPerAxis] {
        let r = eval::evaluate_features(
            &feats,
            &PipelineConfig {
                feature_set: fs,
                ..base.clone()
            },
        )?;
        println!(
            "{:>9}: acc {:.4} instab {:.4}",
            fs.as_str(),
            r.mean_accuracy,
            r.instability
        );
    }
    println!("feature sets in {:.1?}", t.elapsed());
    Ok(())
}
