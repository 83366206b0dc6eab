//! Command-line interface.
//!
//! Arguments are parsed with clap, resolved into a [`RunConfig`] (every
//! value explicit, defaults included), validated, written out as a JSON
//! manifest and only then executed. `psnl rerun <manifest>` executes a
//! stored configuration again.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use psnl_core::{
    cross_validate, predict, run_search_with, train, train_from, CvOptions, FactorState,
    HyperParams, LabelMap, ParamSpec, SearchSpace, ShdiMatrix, TpeConfig, TrainConfig, Tuning,
};
use serde::{Deserialize, Serialize};

use crate::edges::{self, Format, RawEdges};
use crate::error::CliError;
use crate::folds;
use crate::model::{self, Model};
use crate::summary;
use crate::trial_log::TrialLog;

#[derive(Debug, Parser)]
#[command(
    name = "psnl",
    version,
    about = "Symmetric nonnegative latent factor analysis of weighted networks"
)]
pub struct Cli {
    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Commands,
}

#[derive(Debug, Subcommand)]
pub enum Commands {
    /// Assign every edge to one of k folds.
    Split(SplitArgs),
    /// Train a model on a training set, stopping on a validation set.
    Train(TrainArgs),
    /// Search hyperparameters with TPE, optionally retraining at the best point.
    Tune(TuneArgs),
    /// Predict weights for node pairs.
    Predict(PredictArgs),
    /// RMSE of a model on a test set.
    Eval(EvalArgs),
    /// Tenfold cross-validation.
    Cv(CvArgs),
    /// Execute a run manifest again.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input format; detected from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = HyperParams::default().lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = HyperParams::default().gamma)]
    pub gamma: f64,
    #[arg(long, default_value_t = HyperParams::default().mu)]
    pub mu: f64,
    #[arg(long, default_value_t = HyperParams::default().eta)]
    pub eta: f64,
}

impl HyperArgs {
    fn resolve(&self) -> HyperParams {
        HyperParams {
            lambda: self.lambda,
            gamma: self.gamma,
            mu: self.mu,
            eta: self.eta,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainCfgArgs {
    #[arg(long, default_value_t = TrainConfig::default().rank)]
    pub rank: usize,
    #[arg(long, default_value_t = TrainConfig::default().max_iters)]
    pub max_iters: usize,
    #[arg(long, default_value_t = TrainConfig::default().tol)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = TrainConfig::default().init_scale)]
    pub init_scale: f64,
    /// Train without the proximal term (μ = 0).
    #[arg(long)]
    pub ablate_proximal: bool,
    #[arg(long, default_value_t = TrainConfig::default().refresh_every)]
    pub refresh_every: usize,
}

impl TrainCfgArgs {
    fn resolve(&self) -> TrainConfig {
        TrainConfig {
            rank: self.rank,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed,
            init_scale: self.init_scale,
            ablate_proximal: self.ablate_proximal,
            refresh_every: self.refresh_every,
        }
    }
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, default_value_t = SearchSpace::default().lambda.lower)]
    pub lambda_min: f64,
    #[arg(long, default_value_t = SearchSpace::default().lambda.upper)]
    pub lambda_max: f64,
    #[arg(long, default_value_t = SearchSpace::default().gamma.lower)]
    pub gamma_min: f64,
    #[arg(long, default_value_t = SearchSpace::default().gamma.upper)]
    pub gamma_max: f64,
    #[arg(long, default_value_t = SearchSpace::default().mu.lower)]
    pub mu_min: f64,
    #[arg(long, default_value_t = SearchSpace::default().mu.upper)]
    pub mu_max: f64,
    #[arg(long, default_value_t = SearchSpace::default().eta.lower)]
    pub eta_min: f64,
    #[arg(long, default_value_t = SearchSpace::default().eta.upper)]
    pub eta_max: f64,
    #[arg(long, default_value_t = TpeConfig::default().n_trials)]
    pub trials: usize,
    #[arg(long, default_value_t = TpeConfig::default().n_startup)]
    pub startup: usize,
    #[arg(long, default_value_t = TpeConfig::default().n_candidates)]
    pub candidates: usize,
    #[arg(long, default_value_t = TpeConfig::default().theta)]
    pub theta: f64,
    /// Sweep cap for each trial.
    #[arg(long, default_value_t = TpeConfig::default().trial_budget_iters)]
    pub trial_iters: usize,
    /// Draw every trial from the prior (random search baseline).
    #[arg(long)]
    pub random: bool,
}

impl SearchArgs {
    fn resolve(&self) -> (SearchSpace, TpeConfig) {
        let space = SearchSpace {
            lambda: ParamSpec::log(self.lambda_min, self.lambda_max),
            gamma: ParamSpec::log(self.gamma_min, self.gamma_max),
            mu: ParamSpec::log(self.mu_min, self.mu_max),
            eta: ParamSpec::log(self.eta_min, self.eta_max),
        };
        let tpe = TpeConfig {
            n_trials: self.trials,
            n_startup: if self.random {
                self.trials
            } else {
                self.startup
            },
            n_candidates: self.candidates,
            theta: self.theta,
            trial_budget_iters: self.trial_iters,
        };
        (space, tpe)
    }
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub input_format: InputArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Fold file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write train.tsv, valid.tsv and test.tsv for one rotation here.
    #[arg(long)]
    pub emit_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub rotation: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub valid: PathBuf,
    /// Extra edge file whose node labels are added to the model.
    #[arg(long)]
    pub universe: Option<PathBuf>,
    #[command(flatten)]
    pub input_format: InputArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub cfg: TrainCfgArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Store X and W as well, so training can be resumed.
    #[arg(long)]
    pub checkpoint: bool,
    /// Continue from a checkpointed model instead of a fresh start.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write the training report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub cfg: TrainCfgArgs,
    /// Trial log to write.
    #[arg(long)]
    pub log: PathBuf,
    /// Retrain at the best point with the full budget and save the model.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// File of `<label_a>\t<label_b>` pairs; extra columns are ignored.
    #[arg(long, conflicts_with_all = ["a", "b"])]
    pub pairs: Option<PathBuf>,
    #[arg(long, requires = "b")]
    pub a: Option<String>,
    #[arg(long, requires = "a")]
    pub b: Option<String>,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[command(flatten)]
    pub input_format: InputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TuneMode {
    Off,
    Once,
    PerRotation,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub input_format: InputArgs,
    #[arg(long, value_enum, default_value_t = TuneMode::Once)]
    pub tune: TuneMode,
    #[arg(long, default_value_t = 10)]
    pub rotations: usize,
    /// Hyperparameters used when tuning is off.
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub cfg: TrainCfgArgs,
    /// Per-rotation CSV to write.
    #[arg(long)]
    pub csv: PathBuf,
    /// Write 0 in the time columns so the CSV is reproducible byte for byte.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    pub run_manifest: PathBuf,
}

/// An input file with its resolved format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub format: Format,
}

impl InputFile {
    fn new(path: &Path, format: Option<Format>) -> Self {
        Self {
            path: path.to_path_buf(),
            format: format.unwrap_or_else(|| Format::detect(path)),
        }
    }

    fn load(&self) -> Result<RawEdges, CliError> {
        Ok(edges::load_raw(&self.path, Some(self.format))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRun {
    pub input: InputFile,
    pub seed: u64,
    pub folds: usize,
    pub out: PathBuf,
    pub emit_dir: Option<PathBuf>,
    pub rotation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRun {
    pub train: InputFile,
    pub valid: InputFile,
    pub universe: Option<InputFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub data: DataRun,
    pub params: HyperParams,
    pub config: TrainConfig,
    pub model: PathBuf,
    pub checkpoint: bool,
    pub resume: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRun {
    pub data: DataRun,
    pub space: SearchSpace,
    pub tpe: TpeConfig,
    pub config: TrainConfig,
    pub log: PathBuf,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRun {
    pub model: PathBuf,
    pub pairs: Option<PathBuf>,
    pub pair: Option<(String, String)>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub model: PathBuf,
    pub test: InputFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRun {
    pub input: InputFile,
    pub tuning: Tuning,
    pub rotations: usize,
    pub params: HyperParams,
    pub space: SearchSpace,
    pub tpe: TpeConfig,
    pub config: TrainConfig,
    pub csv: PathBuf,
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    Split(SplitRun),
    Train(TrainRun),
    Tune(TuneRun),
    Predict(PredictRun),
    Eval(EvalRun),
    Cv(CvRun),
}

/// Fully resolved configuration of one run, as stored in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub psnl_version: String,
    pub threads: Option<usize>,
    pub manifest: PathBuf,
    #[serde(flatten)]
    pub command: Command,
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

impl Command {
    /// Default manifest location for this command.
    fn manifest_path(&self) -> PathBuf {
        match self {
            Command::Split(r) => with_suffix(&r.out, ".manifest.json"),
            Command::Train(r) => with_suffix(&r.model, ".manifest.json"),
            Command::Tune(r) => with_suffix(&r.log, ".manifest.json"),
            Command::Predict(r) => match &r.out {
                Some(out) => with_suffix(out, ".manifest.json"),
                None => with_suffix(&r.model, ".predict.manifest.json"),
            },
            Command::Eval(r) => with_suffix(&r.model, ".eval.manifest.json"),
            Command::Cv(r) => with_suffix(&r.csv, ".manifest.json"),
        }
    }

    /// Checks every value before any file is touched.
    pub fn validate(&self) -> Result<(), CliError> {
        let finite_tol = |cfg: &TrainConfig| {
            cfg.validate()?;
            if !cfg.tol.is_finite() {
                return Err(CliError::Usage("--tol must be finite".into()));
            }
            Ok(())
        };
        match self {
            Command::Split(r) => {
                if r.folds < 3 {
                    return Err(CliError::Usage("--folds must be at least 3".into()));
                }
                if r.rotation >= r.folds {
                    return Err(CliError::Usage(format!(
                        "--rotation must be below --folds ({})",
                        r.folds
                    )));
                }
            }
            Command::Train(r) => {
                r.params.validate()?;
                finite_tol(&r.config)?;
            }
            Command::Tune(r) => {
                r.space.validate()?;
                r.tpe.validate()?;
                finite_tol(&r.config)?;
            }
            Command::Predict(r) => {
                if r.pairs.is_none() && r.pair.is_none() {
                    return Err(CliError::Usage("give --pairs or both --a and --b".into()));
                }
            }
            Command::Eval(_) => {}
            Command::Cv(r) => {
                if !(1..=psnl_core::eval::FOLDS).contains(&r.rotations) {
                    return Err(CliError::Usage(format!(
                        "--rotations must lie in 1..={}",
                        psnl_core::eval::FOLDS
                    )));
                }
                finite_tol(&r.config)?;
                match r.tuning {
                    Tuning::Off => r.params.validate()?,
                    _ => {
                        r.space.validate()?;
                        r.tpe.validate()?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn resolve_data(d: &DataArgs) -> DataRun {
    let f = d.input_format.format;
    DataRun {
        train: InputFile::new(&d.train, f),
        valid: InputFile::new(&d.valid, f),
        universe: d.universe.as_deref().map(|p| InputFile::new(p, f)),
    }
}

/// Turns parsed arguments into an explicit configuration.
pub fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    let command = match cli.command {
        Commands::Split(a) => Command::Split(SplitRun {
            input: InputFile::new(&a.input, a.input_format.format),
            seed: a.seed,
            folds: a.folds,
            out: a.out,
            emit_dir: a.emit_dir,
            rotation: a.rotation,
        }),
        Commands::Train(a) => Command::Train(TrainRun {
            data: resolve_data(&a.data),
            params: a.hyper.resolve(),
            config: a.cfg.resolve(),
            model: a.model,
            checkpoint: a.checkpoint,
            resume: a.resume,
            report: a.report,
        }),
        Commands::Tune(a) => {
            let (space, tpe) = a.search.resolve();
            Command::Tune(TuneRun {
                data: resolve_data(&a.data),
                space,
                tpe,
                config: a.cfg.resolve(),
                log: a.log,
                model: a.model,
            })
        }
        Commands::Predict(a) => Command::Predict(PredictRun {
            model: a.model,
            pairs: a.pairs,
            pair: a.a.zip(a.b),
            out: a.out,
        }),
        Commands::Eval(a) => Command::Eval(EvalRun {
            model: a.model,
            test: InputFile::new(&a.test, a.input_format.format),
        }),
        Commands::Cv(a) => {
            let (space, tpe) = a.search.resolve();
            Command::Cv(CvRun {
                input: InputFile::new(&a.input, a.input_format.format),
                tuning: match a.tune {
                    TuneMode::Off => Tuning::Off,
                    TuneMode::Once => Tuning::Once,
                    TuneMode::PerRotation => Tuning::PerRotation,
                },
                rotations: a.rotations,
                params: a.hyper.resolve(),
                space,
                tpe,
                config: a.cfg.resolve(),
                csv: a.csv,
                timing: !a.no_timing,
            })
        }
        Commands::Rerun(a) => {
            let mut run = read_manifest(&a.run_manifest)?;
            if cli.threads.is_some() {
                run.threads = cli.threads;
            }
            if let Some(m) = cli.manifest {
                run.manifest = m;
            }
            return Ok(run);
        }
    };
    let manifest = cli.manifest.unwrap_or_else(|| command.manifest_path());
    Ok(RunConfig {
        psnl_version: env!("CARGO_PKG_VERSION").to_owned(),
        threads: cli.threads,
        manifest,
        command,
    })
}

pub fn read_manifest(path: &Path) -> Result<RunConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: invalid manifest: {e}", path.display())))
}

pub fn write_manifest(run: &RunConfig) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(run)
        .map_err(|e| CliError::Data(format!("cannot serialize manifest: {e}")))?;
    text.push('\n');
    write_file(&run.manifest, |out| out.write_all(text.as_bytes()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), CliError> {
    let mut out = create(path)?;
    f(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<Model, CliError> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    model::read_model(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn save_model(
    path: &Path,
    state: &FactorState,
    labels: &LabelMap,
    checkpoint: bool,
) -> Result<(), CliError> {
    write_file(path, |out| {
        model::write_model(out, state, labels, checkpoint)
    })
}

/// Loads train and validation sets over one label map.
fn load_data(
    d: &DataRun,
    labels: Option<&Arc<LabelMap>>,
) -> Result<(ShdiMatrix, ShdiMatrix), CliError> {
    let train_raw = d.train.load()?;
    let valid_raw = d.valid.load()?;
    let labels = match labels {
        Some(l) => l.clone(),
        None => {
            let universe = d.universe.as_ref().map(InputFile::load).transpose()?;
            let mut raws = vec![&train_raw, &valid_raw];
            raws.extend(universe.as_ref());
            Arc::new(edges::shared_labels(&raws))
        }
    };
    Ok((
        edges::build_with(&labels, &train_raw)?,
        edges::build_with(&labels, &valid_raw)?,
    ))
}

fn run_split(r: &SplitRun, out: &mut dyn Write) -> Result<(), CliError> {
    let mat = edges::load_edges(&r.input.path, Some(r.input.format))?;
    let split = mat.kfold_split(r.folds, r.seed)?;
    write_file(&r.out, |w| folds::write_folds(w, &mat, &split))?;
    let sizes: Vec<String> = split.folds().iter().map(|f| f.len().to_string()).collect();
    writeln!(
        out,
        "{} edges in {} folds: {}",
        mat.edge_count(),
        r.folds,
        sizes.join(" ")
    )?;
    if let Some(dir) = &r.emit_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        let rot = split.rotation(r.rotation)?;
        for (name, idx) in [
            ("train.tsv", &rot.train),
            ("valid.tsv", &rot.validation),
            ("test.tsv", &rot.test),
        ] {
            write_file(&dir.join(name), |w| edges::write_tsv(w, &mat, Some(idx)))?;
        }
        writeln!(
            out,
            "rotation {}: {} train, {} validation, {} test",
            r.rotation,
            rot.train.len(),
            rot.validation.len(),
            rot.test.len()
        )?;
    }
    Ok(())
}

fn run_train(r: &TrainRun, out: &mut dyn Write) -> Result<(), CliError> {
    let resumed = r.resume.as_deref().map(load_model).transpose()?;
    if let Some(m) = &resumed {
        if !m.has_checkpoint {
            return Err(CliError::Data(
                "--resume needs a model saved with --checkpoint".into(),
            ));
        }
    }
    let (train_mat, valid) = load_data(&r.data, resumed.as_ref().map(|m| &m.labels))?;
    let (state, report) = match resumed {
        Some(m) => train_from(m.state, &train_mat, &valid, &r.params, &r.config)?,
        None => train(&train_mat, &valid, &r.params, &r.config)?,
    };
    save_model(&r.model, &state, train_mat.labels(), r.checkpoint)?;
    if let Some(path) = &r.report {
        let text = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Data(format!("cannot serialize report: {e}")))?;
        write_file(path, |w| writeln!(w, "{text}"))?;
    }
    writeln!(out, "iterations\t{}", report.iterations_run)?;
    writeln!(out, "stop_reason\t{:?}", report.stop_reason)?;
    writeln!(out, "initial_rmse\t{}", report.initial_rmse)?;
    writeln!(out, "valid_rmse\t{}", report.final_rmse())?;
    writeln!(out, "constraint_gap\t{}", report.final_gap)?;
    Ok(())
}

fn run_tune(r: &TuneRun, out: &mut dyn Write) -> Result<(), CliError> {
    let (train_mat, valid) = load_data(&r.data, None)?;
    let mut log = TrialLog::create(&r.log)?;
    let mut log_error = None;
    let outcome = run_search_with(
        &train_mat,
        &valid,
        &r.space,
        &r.tpe,
        &r.config,
        r.config.seed,
        |t| {
            if let Err(e) = log.append(t) {
                log_error.get_or_insert(e);
            }
        },
    );
    if let Some(e) = log_error {
        return Err(CliError::Data(format!("{}: {e}", r.log.display())));
    }
    let outcome = outcome?;
    let best = outcome.best;
    writeln!(out, "best_trial\t{}", outcome.best_index)?;
    writeln!(out, "best_valid_rmse\t{}", outcome.best_loss)?;
    writeln!(
        out,
        "lambda\t{}\ngamma\t{}\nmu\t{}\neta\t{}",
        best.lambda, best.gamma, best.mu, best.eta
    )?;
    if let Some(path) = &r.model {
        let (state, report) = train(&train_mat, &valid, &best, &r.config)?;
        save_model(path, &state, train_mat.labels(), false)?;
        writeln!(out, "retrain_valid_rmse\t{}", report.final_rmse())?;
    }
    Ok(())
}

fn run_predict(r: &PredictRun, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&r.model)?;
    let mut pairs = Vec::new();
    if let Some((a, b)) = &r.pair {
        pairs.push((a.clone(), b.clone(), 0));
    }
    if let Some(path) = &r.pairs {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            match (fields.next(), fields.next()) {
                (Some(a), Some(b)) => pairs.push((a.to_owned(), b.to_owned(), i + 1)),
                _ => {
                    return Err(CliError::Data(format!(
                        "{}: line {}: expected <label_a>\\t<label_b>",
                        path.display(),
                        i + 1
                    )))
                }
            }
        }
    }
    let index = |label: &str, line: usize| {
        model.labels.index_of(label).ok_or_else(|| {
            let at = if line > 0 {
                format!(" (line {line})")
            } else {
                String::new()
            };
            CliError::Data(format!("label `{label}` is not in the model{at}"))
        })
    };
    let mut text = String::new();
    for (a, b, line) in &pairs {
        let y = predict(&model.state, index(a, *line)?, index(b, *line)?)?;
        text.push_str(&format!("{a}\t{b}\t{y}\n"));
    }
    match &r.out {
        Some(path) => write_file(path, |w| w.write_all(text.as_bytes())),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

fn run_eval(r: &EvalRun, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&r.model)?;
    let test = edges::build_with(&model.labels, &r.test.load()?)?;
    let score = psnl_core::rmse(test.edges(), &model.state)?;
    writeln!(out, "rmse\t{score}")?;
    writeln!(out, "n_pairs\t{}", test.edge_count())?;
    Ok(())
}

fn run_cv(r: &CvRun, out: &mut dyn Write) -> Result<(), CliError> {
    let mat = edges::load_edges(&r.input.path, Some(r.input.format))?;
    let opts = CvOptions {
        tuning: r.tuning,
        params: r.params,
        rotations: r.rotations,
    };
    let summary = cross_validate(&mat, &r.config, &r.space, &r.tpe, &opts, r.config.seed)?;
    write_file(&r.csv, |w| summary::write_csv(w, &summary, r.timing))?;
    summary::write_table(out, &summary)?;
    Ok(())
}

/// Validates, writes the manifest and executes, inside a pool of
/// `threads` workers when given.
pub fn execute(run: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    if run.threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    run.command.validate()?;
    write_manifest(run)?;
    let work = |out: &mut dyn Write| match &run.command {
        Command::Split(r) => run_split(r, out),
        Command::Train(r) => run_train(r, out),
        Command::Tune(r) => run_tune(r, out),
        Command::Predict(r) => run_predict(r, out),
        Command::Eval(r) => run_eval(r, out),
        Command::Cv(r) => run_cv(r, out),
    };
    match run.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
            let mut buf = Vec::new();
            let result = pool.install(|| work(&mut buf));
            out.write_all(&buf)?;
            result
        }
        None => work(out),
    }
}

/// Entry point shared by the binary and tests: returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 1,
                _ => 1,
            };
            let text = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let result = resolve(cli).and_then(|run| execute(&run, out));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "psnl: {e}");
            e.exit_code()
        }
    }
}
