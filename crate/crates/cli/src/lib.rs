//! Batch command-line front end: `ovo train | calibrate | couple | predict |
//! evaluate | benchmark`.
//!
//! Exit status is 0 on success, 1 for invalid input or usage and 2 for
//! numerical failures (degenerate calibration fits or coupling systems).

pub mod io;

use std::collections::HashMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ovo_core::calibration::CalibrationSet;
use ovo_core::classifiers::{parse_external_scores, ExternalScores};
use ovo_core::eval::{evaluate, run_benchmark, BenchmarkConfig, Strategy};
use ovo_core::pipeline::{
    calibrate_external, calibrate_suite, predict_all, predict_calibrated, predict_matrix, raw_as_calibrated, Prediction,
};
use ovo_core::seed::derive_seed;
use ovo_core::{
    argmax_label, refine_ova_to_ovo, threshold_labels, train_multioutput, train_pairwise_suite, ClassSet,
    ClassifierSuite, FitOptions, LogisticHyper, MultiOutputModel, OvoError, ProbabilityVector, RefineHyper,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid `{field}`: {message}")]
    Input { field: String, message: String },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] OvoError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }

    fn input(field: &str, message: impl Into<String>) -> Self {
        CliError::Input {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ovo",
    version,
    about = "Calibrated one-versus-one multiclass probability estimation"
)]
pub struct Cli {
    /// Log filter (e.g. `info`, `ovo_core=debug`); overrides OVO_LOG.
    #[arg(long, global = true)]
    pub log: Option<String>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a pairwise suite or a one-vs-all model from a CSV dataset.
    Train(TrainArgs),
    /// Fit per-pair sigmoid calibration.
    Calibrate(CalibrateArgs),
    /// Couple external pairwise scores into class probabilities.
    Couple(CoupleArgs),
    /// Score, calibrate, couple and label a CSV dataset.
    Predict(PredictArgs),
    /// Compare a predictions file against a labelled CSV.
    Evaluate(EvaluateArgs),
    /// Compare strategies on seeded synthetic data.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    /// One logistic scorer per class pair.
    Pairwise,
    /// A single multi-output one-vs-all model.
    Ova,
    /// A one-vs-all model refined into pair scorers.
    Refine,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = nonempty_path)]
    pub input: PathBuf,
    #[arg(long, value_parser = nonempty_path)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = TrainMode::Pairwise)]
    pub mode: TrainMode,
    #[arg(long, default_value_t = 1.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub l2: f64,
    #[arg(long, default_value_t = 0.5)]
    pub refine_learning_rate: f64,
    #[arg(long, default_value_t = 20)]
    pub refine_epochs: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Pairwise suite whose scores are calibrated on `--input`.
    #[arg(long, value_parser = nonempty_path, requires = "input", conflicts_with = "scores")]
    pub suite: Option<PathBuf>,
    /// Labelled CSV used with `--suite`.
    #[arg(long, value_parser = nonempty_path)]
    pub input: Option<PathBuf>,
    /// Labelled external score file.
    #[arg(long, value_parser = nonempty_path, required_unless_present = "suite")]
    pub scores: Option<PathBuf>,
    #[arg(long, value_parser = nonempty_path)]
    pub out: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Args)]
pub struct CoupleArgs {
    #[arg(long, value_parser = nonempty_path)]
    pub scores: PathBuf,
    /// Calibration file; without it raw scores are used as estimates.
    #[arg(long, value_parser = nonempty_path)]
    pub calib: Option<PathBuf>,
    #[arg(long, value_parser = nonempty_path)]
    pub out: PathBuf,
    /// Multi-label threshold in (0, 1).
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `train`.
    #[arg(long, value_parser = nonempty_path)]
    pub suite: PathBuf,
    /// Calibration file; required for pairwise suites.
    #[arg(long, value_parser = nonempty_path)]
    pub calib: Option<PathBuf>,
    #[arg(long, value_parser = nonempty_path)]
    pub input: PathBuf,
    #[arg(long, value_parser = nonempty_path)]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_parser = nonempty_path)]
    pub predictions: PathBuf,
    /// Labelled CSV; rows are matched to predictions by `id`.
    #[arg(long, value_parser = nonempty_path)]
    pub truth: PathBuf,
    #[arg(long, value_parser = nonempty_path)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// JSON benchmark configuration; replaces the flags below.
    #[arg(long, value_parser = nonempty_path)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = nonempty_path)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 300)]
    pub per_class: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 2.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    /// Fraction of each training split held out for calibration.
    #[arg(long, default_value_t = 0.0)]
    pub calib_holdout: f64,
    /// Number of seeds, derived from `--seed`.
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, value_delimiter = ',', default_value = "proposed,voting,ova")]
    pub strategies: Vec<String>,
}

fn nonempty_path(s: &str) -> Result<PathBuf, String> {
    if s.trim().is_empty() {
        Err("path must not be empty".into())
    } else {
        Ok(PathBuf::from(s))
    }
}

/// Model file written by `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelFile {
    Suite(ClassifierSuite),
    Ova(MultiOutputModel),
}

impl ModelFile {
    pub fn classes(&self) -> &ClassSet {
        match self {
            ModelFile::Suite(s) => &s.classes,
            ModelFile::Ova(m) => &m.classes,
        }
    }
}

/// One output row of `couple` and `predict`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub p: Vec<f64>,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub votes: Vec<usize>,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub classes: Vec<String>,
    pub predictions: Vec<PredictionRecord>,
}

fn method_name<T: Serialize>(m: &T) -> String {
    serde_json::to_value(m)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

fn record(classes: &ClassSet, id: String, pred: Prediction) -> PredictionRecord {
    PredictionRecord {
        id,
        label: classes.name(pred.label).to_string(),
        labels: pred
            .labels
            .map(|ls| ls.iter().map(|&l| classes.name(l).to_string()).collect()),
        votes: pred.votes,
        method: method_name(&pred.method),
        p: pred.p.values().to_vec(),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    init_logging(cli.log.as_deref());
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(flag: Option<&str>) {
    let filter = flag
        .map(String::from)
        .or_else(|| std::env::var("OVO_LOG").ok())
        .unwrap_or_else(|| "warn".into());
    let _ = env_logger::Builder::new().parse_filters(&filter).try_init();
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(0) => Err(CliError::input("threads", "must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| run_command(cli)),
        None => run_command(cli),
    }
}

fn run_command(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => train(a, cli.seed),
        Command::Calibrate(a) => calibrate(a),
        Command::Couple(a) => couple(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Benchmark(a) => benchmark(a, cli.seed),
    }
}

fn train(a: &TrainArgs, seed: u64) -> Result<(), CliError> {
    let ds = io::read_dataset_csv(&a.input)?.dataset(None)?;
    let hyper = LogisticHyper {
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        l2: a.l2,
        seed: derive_seed(seed, "train", 0),
    };
    let model = match a.mode {
        TrainMode::Pairwise => ModelFile::Suite(train_pairwise_suite(&ds, &hyper)?),
        TrainMode::Ova => ModelFile::Ova(train_multioutput(&ds, &hyper)?),
        TrainMode::Refine => {
            let base = train_multioutput(&ds, &hyper)?;
            let refine = RefineHyper {
                learning_rate: a.refine_learning_rate,
                epochs: a.refine_epochs,
                seed: derive_seed(seed, "refine", 0),
            };
            ModelFile::Suite(refine_ova_to_ovo(&base, &ds, &refine)?)
        }
    };
    log::info!("trained {:?} model on {} samples", a.mode, ds.len());
    io::write_json(&a.out, &model)
}

fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    let model: ModelFile = io::read_json(path, "suite")?;
    match &model {
        ModelFile::Suite(s) => s.validate()?,
        ModelFile::Ova(m) => m.validate()?,
    }
    Ok(model)
}

fn load_calibration(path: &Path, k: usize) -> Result<CalibrationSet, CliError> {
    let set = CalibrationSet::from_json(&io::read_text(path)?, k)
        .map_err(|e| CliError::input("calib", format!("{}: {e}", path.display())))?;
    if !set.is_complete() {
        return Err(CliError::input(
            "calib",
            format!("{}: does not cover all {k}-class pairs", path.display()),
        ));
    }
    Ok(set)
}

fn load_scores(path: &Path) -> Result<ExternalScores, CliError> {
    parse_external_scores(&io::read_text(path)?).map_err(|e| match e {
        OvoError::InvalidRecord { .. } => CliError::Core(e),
        other => CliError::input("scores", format!("{}: {other}", path.display())),
    })
}

fn calibrate(a: &CalibrateArgs) -> Result<(), CliError> {
    let set = match (&a.suite, &a.scores) {
        (Some(suite_path), _) => {
            let input = a
                .input
                .as_ref()
                .ok_or_else(|| CliError::input("input", "required with --suite"))?;
            let suite = match load_model(suite_path)? {
                ModelFile::Suite(s) => s,
                ModelFile::Ova(_) => {
                    return Err(CliError::input(
                        "suite",
                        "calibration needs a pairwise suite, not a one-vs-all model",
                    ))
                }
            };
            let ds = io::read_dataset_csv(input)?.dataset(Some(&suite.classes))?;
            calibrate_suite(&suite, &ds, &a.fit.options())?
        }
        (None, Some(scores)) => calibrate_external(&load_scores(scores)?, &a.fit.options())?,
        (None, None) => {
            return Err(CliError::input(
                "scores",
                "either --suite with --input or --scores is required",
            ))
        }
    };
    let mut text = set.to_json()?;
    text.push('\n');
    io::write_atomic(&a.out, text.as_bytes())
}

fn couple(a: &CoupleArgs) -> Result<(), CliError> {
    let scores = load_scores(&a.scores)?;
    let k = scores.classes.k();
    let calib = a.calib.as_deref().map(|p| load_calibration(p, k)).transpose()?;
    let predictions = scores
        .records
        .par_iter()
        .map(|r| match &calib {
            Some(c) => predict_matrix(&r.matrix, c, a.threshold),
            None => predict_calibrated(&raw_as_calibrated(&r.matrix)?, a.threshold),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let file = PredictionFile {
        classes: scores.classes.labels().to_vec(),
        predictions: scores
            .records
            .iter()
            .zip(predictions)
            .map(|(r, p)| record(&scores.classes, r.id.clone(), p))
            .collect(),
    };
    io::write_json(&a.out, &file)
}

fn ova_records(
    model: &MultiOutputModel,
    ids: &[String],
    features: &[Vec<f64>],
    threshold: Option<f64>,
) -> Result<Vec<PredictionRecord>, CliError> {
    let classes = &model.classes;
    features
        .par_iter()
        .zip(ids)
        .map(|(x, id)| {
            let p = ProbabilityVector::repaired(model.outputs(x)?)?;
            let labels = threshold
                .map(|t| threshold_labels(&p, t))
                .transpose()?
                .map(|ls| ls.iter().map(|&l| classes.name(l).to_string()).collect());
            Ok(PredictionRecord {
                id: id.clone(),
                label: classes.name(argmax_label(&p)).to_string(),
                labels,
                votes: Vec::new(),
                method: "ova".into(),
                p: p.values().to_vec(),
            })
        })
        .collect()
}

fn predict(a: &PredictArgs) -> Result<(), CliError> {
    let model = load_model(&a.suite)?;
    let data = io::read_dataset_csv(&a.input)?;
    let classes = model.classes().clone();
    let predictions = match &model {
        ModelFile::Suite(suite) => {
            let calib_path = a
                .calib
                .as_deref()
                .ok_or_else(|| CliError::input("calib", "required for a pairwise suite"))?;
            let calib = load_calibration(calib_path, suite.k())?;
            predict_all(suite, &calib, &data.features, a.threshold)?
                .into_iter()
                .zip(&data.ids)
                .map(|(p, id)| record(&classes, id.clone(), p))
                .collect()
        }
        ModelFile::Ova(m) => ova_records(m, &data.ids, &data.features, a.threshold)?,
    };
    io::write_json(
        &a.out,
        &PredictionFile {
            classes: classes.labels().to_vec(),
            predictions,
        },
    )
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<(), CliError> {
    let preds: PredictionFile = io::read_json(&a.predictions, "predictions")?;
    let classes = ClassSet::new(preds.classes.clone()).map_err(|e| CliError::input("predictions", e.to_string()))?;
    let truth = io::read_dataset_csv(&a.truth)?;
    let truth_labels = truth.label_indices(&classes)?;
    let by_id: HashMap<&str, usize> = truth.ids.iter().enumerate().map(|(n, id)| (id.as_str(), n)).collect();

    let to_index = |name: &str, n: usize| {
        classes
            .index_of(name)
            .ok_or_else(|| CliError::input("predictions", format!("record {n}: unknown class {name:?}")))
    };
    let mut predicted = Vec::with_capacity(preds.predictions.len());
    let mut expected = Vec::with_capacity(preds.predictions.len());
    for (n, rec) in preds.predictions.iter().enumerate() {
        let row = *by_id
            .get(rec.id.as_str())
            .ok_or_else(|| CliError::input("truth", format!("no row with id {:?} (prediction record {n})", rec.id)))?;
        let set = match &rec.labels {
            Some(ls) => ls.iter().map(|l| to_index(l, n)).collect::<Result<Vec<_>, _>>()?,
            None => vec![to_index(&rec.label, n)?],
        };
        predicted.push(set);
        expected.push(truth_labels[row].clone());
    }
    let report = evaluate(&classes, &predicted, &expected)?;
    let mut text = report.to_json()?;
    text.push('\n');
    io::write_atomic(&a.out, text.as_bytes())
}

fn benchmark(a: &BenchmarkArgs, seed: u64) -> Result<(), CliError> {
    let cfg = match &a.config {
        Some(path) => io::read_json::<BenchmarkConfig>(path, "config")?,
        None => {
            let strategies = a
                .strategies
                .iter()
                .map(|s| s.trim().parse::<Strategy>())
                .collect::<Result<Vec<_>, _>>()?;
            BenchmarkConfig {
                k: a.k,
                per_class: a.per_class,
                dim: a.dim,
                separation: a.separation,
                train_fraction: a.train_fraction,
                strategies,
                seeds: (0..a.seeds as u64).map(|i| derive_seed(seed, "benchmark", i)).collect(),
                hyper: LogisticHyper::default(),
                refine: RefineHyper::default(),
                fit: FitOptions::default(),
                calib_holdout: a.calib_holdout,
            }
        }
    };
    let report = run_benchmark(&cfg)?;
    for s in &report.strategies {
        log::info!(
            "{}: mean accuracy {:.4} (sd {:.4})",
            method_name(&s.strategy),
            s.mean_accuracy,
            s.std_accuracy
        );
    }
    let mut text = report.to_json()?;
    text.push('\n');
    io::write_atomic(&a.out, text.as_bytes())
}
