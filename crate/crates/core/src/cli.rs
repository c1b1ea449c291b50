//! `emrec` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data, format or I/O
//! errors. `--config <file>` reads `key = value` lines whose keys are long
//! flag names of the chosen subcommand; flags given on the command line win.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{self, AblationRow};
use crate::features::{self, FeatureLayout, FeatureSet, SensorSubset};
use crate::ingest::{self, DEFAULT_SAMPLING_RATE_HZ};
use crate::model::{BaggingModel, TrainConfig};
use crate::pipeline::{self, PipelineConfig};
use crate::synth::{self, SynthConfig};
use crate::windowing::ABLATION_WINDOWS_S;

const FILE_FORMATS: &str = "\
Data directory layout (one set per patient):
  <id>_chest.csv, <id>_thigh.csv   header `timestamp,x,y,z`; seconds or ISO-8601; g units
  <id>_labels.csv                  header `minute,label`; 0 = lying, 1 = lying with EM
Outputs:
  features  CSV: 64 feature columns, then patient_id,minute,offset_s,label
  train     JSON model file (versioned)
  predict   CSV: patient_id,minute,predicted,votes_0,votes_1,mean_score
  evaluate  CSV: config,patient_id,accuracy plus mean and instability rows
  ablate    same long format, one block per configuration";

#[derive(Debug, Parser)]
#[command(name = "emrec", version, about = "Early-mobility recognition from chest and thigh accelerometers", after_help = FILE_FORMATS)]
struct Cli {
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// key = value file of default flags for the subcommand
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset
    #[command(args_override_self = true, after_help = FILE_FORMATS)]
    Synth(SynthArgs),
    /// Write per-segment feature rows
    #[command(args_override_self = true, after_help = FILE_FORMATS)]
    Features(FeaturesArgs),
    /// Train a bagging model on all patients
    #[command(args_override_self = true, after_help = FILE_FORMATS)]
    Train(TrainArgs),
    /// Predict every labeled minute with a trained model
    #[command(args_override_self = true, after_help = FILE_FORMATS)]
    Predict(PredictArgs),
    /// Leave-one-patient-out evaluation
    #[command(args_override_self = true, after_help = FILE_FORMATS)]
    Evaluate(EvaluateArgs),
    /// Ablation sweep over windows, sensors, patient counts or feature sets
    #[command(args_override_self = true, after_help = FILE_FORMATS)]
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Number of patients
    #[arg(long, default_value_t = 8)]
    patients: usize,
    /// Minutes per patient
    #[arg(long, default_value_t = 70)]
    minutes: usize,
    /// Fraction of minutes with a spliced interval of the other class
    #[arg(long, default_value_t = 0.0)]
    mix_rate: f64,
    /// Probability of the EM class per minute
    #[arg(long, default_value_t = 0.5)]
    class_balance: f64,
    /// Per-axis white noise in g
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    /// Sampling rate in Hz
    #[arg(long, default_value_t = DEFAULT_SAMPLING_RATE_HZ)]
    fs: f64,
    /// Keep sensors axis-aligned instead of randomly oriented
    #[arg(long)]
    no_rotation: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Directory with <id>_chest.csv, <id>_thigh.csv and <id>_labels.csv
    #[arg(long)]
    data: PathBuf,
    /// Sampling rate of the recordings in Hz
    #[arg(long, default_value_t = DEFAULT_SAMPLING_RATE_HZ)]
    fs: f64,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Segment window in seconds (half-overlapped)
    #[arg(long, default_value_t = 10.0)]
    window: f64,
    /// Sensors to use: chest, thigh or both
    #[arg(long, default_value = "both")]
    sensors: SensorSubset,
    /// Feature set: invariant or per-axis
    #[arg(long, default_value = "invariant")]
    features: FeatureSet,
    /// Trees in the bagging ensemble
    #[arg(long, default_value_t = 100)]
    n_trees: usize,
    /// Maximum tree depth (unlimited when omitted)
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 2)]
    min_samples_leaf: usize,
    /// Train every tree on the full set
    #[arg(long)]
    no_bootstrap: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PipelineArgs {
    fn config(&self) -> PipelineConfig {
        let cfg = PipelineConfig {
            window_s: self.window,
            sensors: self.sensors,
            feature_set: self.features,
            train: TrainConfig {
                n_trees: self.n_trees,
                max_depth: self.max_depth,
                min_samples_leaf: self.min_samples_leaf,
                bootstrap: !self.no_bootstrap,
            },
            seed: self.seed,
        };
        if !cfg.is_standard_window() {
            eprintln!(
                "warning: window {}s is outside the standard sweep {ABLATION_WINDOWS_S:?}",
                cfg.window_s
            );
        }
        cfg
    }
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10.0)]
    window: f64,
    #[arg(long, default_value = "features.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model file written by `train`
    #[arg(long)]
    model: PathBuf,
    /// Override the window stored in the model
    #[arg(long)]
    window: Option<f64>,
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Sweep {
    Windows,
    Sensors,
    Patients,
    Features,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Which sweep to run
    #[arg(long, value_enum)]
    sweep: Sweep,
    /// Smallest patient count for the patients sweep
    #[arg(long, default_value_t = 5)]
    min_patients: usize,
    #[arg(long, default_value = "ablation.csv")]
    out: PathBuf,
}

/// Read `key = value` lines into `--key value` arguments. Blank lines and
/// `#` comments are skipped; `true`/`false` values toggle bare flags.
pub fn config_args(text: &str) -> std::result::Result<Vec<OsString>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        let key = key.trim().trim_start_matches("--");
        let value = value.trim();
        match value {
            "true" => out.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{key}").into());
                out.push(value.into());
            }
        }
    }
    Ok(out)
}

/// Insert config-file arguments right after the subcommand name so that
/// command-line flags, parsed later, override them.
fn expand_config(mut argv: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let mut config_path = None;
    let mut sub_index = None;
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy().into_owned();
        if a == "--config" {
            config_path = argv.get(i + 1).cloned();
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.into());
        } else if a == "--jobs" && sub_index.is_none() {
            i += 2;
            continue;
        } else if !a.starts_with('-') && sub_index.is_none() {
            sub_index = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(sub)) = (config_path, sub_index) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config {}: {e}", Path::new(&path).display()))?;
    let extra = config_args(&text)?;
    argv.splice(sub + 1..sub + 1, extra);
    Ok(argv)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::from(e).in_file(parent))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::from(e).in_file(path))
}

fn run_synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_patients: a.patients,
        minutes_per_patient: a.minutes,
        fs: a.fs,
        class_balance: a.class_balance,
        label_mix_rate: a.mix_rate,
        noise_std: a.noise,
        seed: a.seed,
        rotate: !a.no_rotation,
        ..SynthConfig::default()
    };
    let patients = synth::generate_dataset(&cfg)?;
    synth::write_dataset(&a.out, &patients)?;
    eprintln!("wrote {} patients to {}", patients.len(), a.out.display());
    Ok(())
}

fn run_features(a: &FeaturesArgs) -> Result<()> {
    let data = ingest::load_dataset(&a.data.data, a.data.fs)?;
    let mut w = create(&a.out)?;
    let names = features::feature_names();
    writeln!(w, "{},patient_id,minute,offset_s,label", names.join(","))?;
    for rec in &data {
        for m in pipeline::featurize_recording(rec, a.window)? {
            for (row, offset) in m.rows.iter().zip(&m.segment_offsets) {
                for v in &row[..features::FEATURE_COUNT] {
                    write!(w, "{v},")?;
                }
                writeln!(
                    w,
                    "{},{},{offset},{}",
                    m.patient_id,
                    m.minute_index,
                    m.label.index()
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.pipeline.config();
    let data = ingest::load_dataset(&a.data.data, a.data.fs)?;
    let model = pipeline::train_pipeline(&data, &cfg)?;
    let mut w = create(&a.out)?;
    model.save(&mut w)?;
    w.flush()?;
    eprintln!(
        "trained {} trees on {} patients -> {}",
        model.trees.len(),
        data.len(),
        a.out.display()
    );
    Ok(())
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    let file = File::open(&a.model).map_err(|e| Error::from(e).in_file(&a.model))?;
    let model =
        BaggingModel::load(std::io::BufReader::new(file)).map_err(|e| e.in_file(&a.model))?;
    let layout: FeatureLayout = model.feature_layout;
    let cfg = PipelineConfig {
        window_s: a.window.or(model.window_s).unwrap_or(10.0),
        sensors: layout.sensors,
        feature_set: layout.feature_set,
        train: model.config.clone(),
        seed: model.seed,
    };
    let data = ingest::load_dataset(&a.data.data, a.data.fs)?;
    let mut w = create(&a.out)?;
    writeln!(w, "patient_id,minute,predicted,votes_0,votes_1,mean_score")?;
    for rec in &data {
        for p in pipeline::predict_recording(&model, rec, &cfg)? {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.patient_id,
                p.minute_index,
                p.predicted.index(),
                p.segment_votes[0],
                p.segment_votes[1],
                p.mean_score
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let cfg = a.pipeline.config();
    let data = ingest::load_dataset(&a.data.data, a.data.fs)?;
    let report = eval::evaluate(&data, &cfg)?;
    print!("{}\n{}", report.config, eval::format_report(&report));
    let mut w = create(&a.out)?;
    eval::write_report_csv(&report, &mut w)?;
    w.flush()?;
    Ok(())
}

fn run_ablate(a: &AblateArgs) -> Result<()> {
    let base = a.pipeline.config();
    let data = ingest::load_dataset(&a.data.data, a.data.fs)?;
    let rows: Vec<AblationRow> = match a.sweep {
        Sweep::Windows => eval::ablate_windows(&data, &ABLATION_WINDOWS_S, &base)?,
        Sweep::Sensors => eval::ablate_sensors(&data, &SensorSubset::ALL, &base)?,
        Sweep::Patients => {
            let counts: Vec<usize> = (a.min_patients.max(2)..=data.len()).collect();
            eval::ablate_patient_count(&data, &counts, &base)?
        }
        Sweep::Features => eval::compare_feature_sets(&data, &base)?,
    };
    print!("{}", eval::format_table(&rows));
    let mut w = create(&a.out)?;
    eval::write_rows_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Synth(a) => run_synth(a),
        Command::Features(a) => run_features(a),
        Command::Train(a) => run_train(a),
        Command::Predict(a) => run_predict(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Ablate(a) => run_ablate(a),
    }
}

/// Run the CLI on `argv` (including the program name) and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.jobs {
        Some(0) => {
            eprintln!("error: --jobs must be at least 1");
            return 1;
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        },
        None => dispatch(&cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
