//! Argument parsing, configuration resolution and the command implementations
//! behind the `cats` binary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cats_core::caci::{evaluate_by_step, HorizonMetrics};
use cats_core::classifier::ClassifierLoss;
use cats_core::dataset::{load_csv, WindowSet};
use cats_core::theory::{channel_design_sweep, checks_table, mc_validate_thm1, mc_validate_thm2, report_table, synthetic_classes, RiskReport, SweepConfig};
use cats_core::{Checkpoint, ClassifierKind, ModelConfig, Parameters, SeriesDataset, SplitRatio, TrainConfig, TsLinearConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub const OUTPUT_DIR_ENV: &str = "CATS_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "runs";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const THEORY_REPORT_FILE: &str = "theory_report.tsv";

#[derive(Debug, Parser)]
#[command(name = "cats", version, about = "Trend/seasonal linear forecasting with classifier-routed predictors")]
#[command(args_conflicts_with_subcommands = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    /// Running without a subcommand trains.
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Train a model and write checkpoint, metric log and summary.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a dataset.
    Eval(EvalArgs),
    /// Run the Monte Carlo excess-risk checks and write a report table.
    VerifyTheory(TheoryArgs),
    /// Print the shapes and constants stored in a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Etth,
    Ettm,
    Weather,
    Electricity,
    Traffic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    /// 6:2:2
    Ett,
    /// 7:1:2
    Custom,
}

impl SplitKind {
    fn ratio(self) -> SplitRatio {
        match self {
            SplitKind::Ett => SplitRatio::ETT,
            SplitKind::Custom => SplitRatio::CUSTOM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

impl From<LossKind> for ClassifierLoss {
    fn from(k: LossKind) -> Self {
        match k {
            LossKind::Mse => ClassifierLoss::Mse,
            LossKind::CrossEntropy => ClassifierLoss::CrossEntropy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierArg {
    Mlp,
    Cnn,
}

impl From<ClassifierArg> for ClassifierKind {
    fn from(c: ClassifierArg) -> Self {
        match c {
            ClassifierArg::Mlp => ClassifierKind::Mlp,
            ClassifierArg::Cnn => ClassifierKind::Cnn,
        }
    }
}

/// Training options. Every field is optional so that a config file and a
/// profile can fill whatever the command line leaves out.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    /// Dataset CSV (header row; an optional leading `date` column is ignored).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// TOML file with any of these options (flag names, `-` written as `_`).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Dataset preset for period, batch size, classifier and split.
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    /// Output directory (default: $CATS_OUTPUT_DIR, then `runs`).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Number of classes / predictors.
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub classes: Option<usize>,
    /// Lookback length.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub lookback: Option<usize>,
    /// Forecast horizon.
    #[arg(long = "H")]
    #[serde(rename = "H")]
    pub horizon: Option<usize>,
    /// Windows per batch.
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub batch_size: Option<usize>,
    /// Seasonal period.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub period: Option<usize>,
    #[arg(long)]
    pub ma_window: Option<usize>,
    /// Trend smoothing constant.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Recoupling kernel length minus one.
    #[arg(long)]
    pub m: Option<usize>,
    /// Hidden width of the MLP classifier.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lr_predictor: Option<f64>,
    #[arg(long)]
    pub lr_classifier: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Step between consecutive training windows.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, value_enum)]
    pub classifier: Option<ClassifierArg>,
    #[arg(long, value_enum)]
    pub classifier_loss: Option<LossKind>,
    #[arg(long, value_enum)]
    pub split: Option<SplitKind>,
    /// Learnable per-feature affine in the instance normalization.
    #[arg(long)]
    pub affine: Option<bool>,
    /// Z-score features with train-split statistics before windowing.
    #[arg(long)]
    pub standardize: Option<bool>,
}

impl TrainArgs {
    /// Fields set here win over fields set in `lower`.
    fn over(self, lower: TrainArgs) -> TrainArgs {
        TrainArgs {
            data: self.data.or(lower.data),
            config: self.config.or(lower.config),
            profile: self.profile.or(lower.profile),
            output: self.output.or(lower.output),
            classes: self.classes.or(lower.classes),
            lookback: self.lookback.or(lower.lookback),
            horizon: self.horizon.or(lower.horizon),
            batch_size: self.batch_size.or(lower.batch_size),
            period: self.period.or(lower.period),
            ma_window: self.ma_window.or(lower.ma_window),
            alpha: self.alpha.or(lower.alpha),
            m: self.m.or(lower.m),
            hidden: self.hidden.or(lower.hidden),
            lr_predictor: self.lr_predictor.or(lower.lr_predictor),
            lr_classifier: self.lr_classifier.or(lower.lr_classifier),
            epochs: self.epochs.or(lower.epochs),
            patience: self.patience.or(lower.patience),
            seed: self.seed.or(lower.seed),
            stride: self.stride.or(lower.stride),
            classifier: self.classifier.or(lower.classifier),
            classifier_loss: self.classifier_loss.or(lower.classifier_loss),
            split: self.split.or(lower.split),
            affine: self.affine.or(lower.affine),
            standardize: self.standardize.or(lower.standardize),
        }
    }
}

impl Profile {
    fn preset(self) -> TrainArgs {
        let (period, batch_size, classifier, split) = match self {
            Profile::Etth => (24, 128, ClassifierArg::Mlp, SplitKind::Ett),
            Profile::Ettm => (96, 128, ClassifierArg::Mlp, SplitKind::Ett),
            Profile::Weather => (144, 128, ClassifierArg::Cnn, SplitKind::Custom),
            Profile::Electricity => (24, 32, ClassifierArg::Mlp, SplitKind::Custom),
            Profile::Traffic => (24, 8, ClassifierArg::Mlp, SplitKind::Custom),
        };
        TrainArgs {
            period: Some(period),
            batch_size: Some(batch_size),
            classifier: Some(classifier),
            split: Some(split),
            ..TrainArgs::default()
        }
    }
}

/// Fully resolved training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub output: PathBuf,
    pub profile: Option<Profile>,
    pub classes: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub batch_size: usize,
    pub period: usize,
    pub ma_window: usize,
    pub alpha: f64,
    pub m: usize,
    pub hidden: usize,
    pub lr_predictor: f64,
    pub lr_classifier: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub stride: usize,
    pub classifier: ClassifierArg,
    pub classifier_loss: LossKind,
    pub split: SplitKind,
    pub affine: bool,
    pub standardize: bool,
}

fn default_output() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn read_file_config(path: &Path) -> Result<TrainArgs> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
}

/// Number of feature columns of a CSV, from its header alone.
fn peek_feature_count(path: &Path) -> Option<usize> {
    let text = fs::read_to_string(path).ok()?;
    let header = text.lines().next()?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let date = cols.first().is_some_and(|c| c.eq_ignore_ascii_case("date"));
    Some(cols.len() - usize::from(date))
}

impl RunConfig {
    /// Resolves flags over the config file over the profile over defaults.
    pub fn resolve(flags: TrainArgs) -> Result<RunConfig> {
        let file = match &flags.config {
            Some(path) => read_file_config(path)?,
            None => TrainArgs::default(),
        };
        let merged = flags.over(file);
        let merged = match merged.profile {
            Some(p) => merged.over(p.preset()),
            None => merged,
        };
        let data = merged
            .data
            .ok_or_else(|| anyhow::anyhow!("missing dataset path: pass --data <CSV> or set `data` in the config file"))?;
        let config = RunConfig {
            data,
            output: merged.output.unwrap_or_else(default_output),
            profile: merged.profile,
            classes: merged.classes.unwrap_or(10),
            lookback: merged.lookback.unwrap_or(336),
            horizon: merged.horizon.unwrap_or(96),
            batch_size: merged.batch_size.unwrap_or(128),
            period: merged.period.unwrap_or(24),
            ma_window: merged.ma_window.unwrap_or(25),
            alpha: merged.alpha.unwrap_or(0.5),
            m: merged.m.unwrap_or(10),
            hidden: merged.hidden.unwrap_or(64),
            lr_predictor: merged.lr_predictor.unwrap_or(1e-4),
            lr_classifier: merged.lr_classifier.unwrap_or(1e-5),
            epochs: merged.epochs.unwrap_or(30),
            patience: merged.patience.unwrap_or(5),
            seed: merged.seed.unwrap_or(2021),
            stride: merged.stride.unwrap_or(1),
            classifier: merged.classifier.unwrap_or(ClassifierArg::Mlp),
            classifier_loss: merged.classifier_loss.unwrap_or(LossKind::Mse),
            split: merged.split.unwrap_or(SplitKind::Ett),
            affine: merged.affine.unwrap_or(true),
            standardize: merged.standardize.unwrap_or(true),
        };
        let features = peek_feature_count(&config.data).unwrap_or(1);
        config.train_config(features).validate().map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;
        Ok(config)
    }

    pub fn model_config(&self, n_features: usize) -> ModelConfig {
        let predictor = TsLinearConfig {
            period: self.period,
            ma_window: self.ma_window,
            alpha: self.alpha,
            m: self.m,
            ..TsLinearConfig::new(self.lookback, self.horizon)
        };
        let mut model = ModelConfig::new(predictor, self.classes, n_features);
        model.classifier = self.classifier.into();
        model.hidden = self.hidden;
        model.affine = self.affine;
        model
    }

    pub fn train_config(&self, n_features: usize) -> TrainConfig {
        let mut config = TrainConfig::new(self.model_config(n_features));
        config.batch_size = self.batch_size;
        config.epochs = self.epochs;
        config.patience = self.patience;
        config.seed = self.seed;
        config.predictor_lr = self.lr_predictor;
        config.classifier_lr = self.lr_classifier;
        config.classifier_loss = self.classifier_loss.into();
        config.stride = self.stride;
        config.standardize = self.standardize;
        config
    }
}

/// Parses training options from `argv` (program name first), reading the
/// config file named by `--config` if any.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    match cli.command {
        Some(Command::Train(args)) => RunConfig::resolve(args),
        None => RunConfig::resolve(cli.train),
        Some(_) => bail!("not a training command"),
    }
}

/// Writes `bytes` next to `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub mse: f64,
    pub mae: f64,
}

/// Final record of a training run. Contains no timing so that identical
/// seeds give identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config: RunConfig,
    pub features: Vec<String>,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_val_mse: Option<f64>,
    pub test_mse: f64,
    pub test_mae: f64,
    pub test_count: usize,
    pub per_step: Vec<StepSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

fn split_metrics(checkpoint: &Checkpoint, dataset: &SeriesDataset, which: SplitName) -> Result<HorizonMetrics> {
    let model = &checkpoint.model;
    let (l, h) = (model.config.predictor.lookback, model.config.predictor.horizon);
    let ranges = dataset.split(l, h)?;
    let values = match &checkpoint.scaler {
        Some(s) => s.transform(&dataset.values),
        None => dataset.values.clone(),
    };
    let range = match which {
        SplitName::Train => ranges.train,
        SplitName::Val => ranges.val,
        SplitName::Test => ranges.test,
    };
    let windows = WindowSet::new(values.view(), range, l, h, 1);
    Ok(evaluate_by_step(model, windows.batches(256, false, 0).map(|b| b.flatten()))?)
}

fn per_step(metrics: &HorizonMetrics) -> Vec<StepSummary> {
    metrics.per_step.iter().enumerate().map(|(i, m)| StepSummary { step: i + 1, mse: m.mse, mae: m.mae }).collect()
}

fn load_dataset(path: &Path, split: SplitKind) -> Result<SeriesDataset> {
    let dataset = load_csv(path, None).with_context(|| format!("cannot load dataset {}", path.display()))?;
    Ok(dataset.with_split_ratio(split.ratio())?)
}

/// Trains and writes checkpoint, metric log and summary into the output
/// directory. Nothing is written unless training succeeds.
pub fn run_train(config: &RunConfig) -> Result<TrainSummary> {
    let dataset = load_dataset(&config.data, config.split)?;
    let train_config = config.train_config(dataset.n_features());
    let outcome = cats_core::train_loop(&train_config, &dataset)?;
    let checkpoint = Checkpoint::new(outcome.model, outcome.scaler, dataset.feature_names.clone());
    let test = split_metrics(&checkpoint, &dataset, SplitName::Test)?;
    let summary = TrainSummary {
        config: config.clone(),
        features: dataset.feature_names.clone(),
        epochs_run: outcome.log.len(),
        best_epoch: outcome.best_epoch,
        best_val_mse: outcome.best_epoch.map(|e| outcome.log[e - 1].val_mse),
        test_mse: test.overall.mse,
        test_mae: test.overall.mae,
        test_count: test.overall.count,
        per_step: per_step(&test),
    };

    let mut log = String::new();
    for record in &outcome.log {
        log.push_str(&serde_json::to_string(record)?);
        log.push('\n');
    }
    let checkpoint_bytes = checkpoint.to_bytes()?;
    let summary_bytes = serde_json::to_vec_pretty(&summary)?;

    fs::create_dir_all(&config.output).with_context(|| format!("cannot create {}", config.output.display()))?;
    write_atomic(&config.output.join(CHECKPOINT_FILE), &checkpoint_bytes)?;
    write_atomic(&config.output.join(METRICS_FILE), log.as_bytes())?;
    write_atomic(&config.output.join(SUMMARY_FILE), &summary_bytes)?;
    Ok(summary)
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// Ratio used to cut the dataset into splits.
    #[arg(long, value_enum, default_value = "ett")]
    pub split_ratio: SplitKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: SplitName,
    pub mse: f64,
    pub mae: f64,
    pub count: usize,
    pub per_step: Vec<StepSummary>,
}

pub fn run_eval(args: &EvalArgs) -> Result<EvalReport> {
    let checkpoint = Checkpoint::load(&args.checkpoint).with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let dataset = load_dataset(&args.data, args.split_ratio)?;
    if dataset.n_features() != checkpoint.model.config.n_features {
        bail!(
            "checkpoint expects {} features, dataset has {}",
            checkpoint.model.config.n_features,
            dataset.n_features()
        );
    }
    let metrics = split_metrics(&checkpoint, &dataset, args.split)?;
    Ok(EvalReport {
        split: args.split,
        mse: metrics.overall.mse,
        mae: metrics.overall.mae,
        count: metrics.overall.count,
        per_step: per_step(&metrics),
    })
}

#[derive(Debug, Clone, Args)]
pub struct TheoryArgs {
    /// Number of classes.
    #[arg(long = "K", default_value_t = 2)]
    pub classes: usize,
    /// Parameter dimension.
    #[arg(long = "L", default_value_t = 3)]
    pub lookback: usize,
    /// Total number of rows.
    #[arg(long = "N", default_value_t = 600)]
    pub instances: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    /// Seed of the noise draws.
    #[arg(long, default_value_t = 2021)]
    pub seed: u64,
    /// Seed of the fixed designs and class parameters.
    #[arg(long, default_value_t = 1)]
    pub design_seed: u64,
    /// Feature count of the channel-design sweep.
    #[arg(long = "D", default_value_t = 4)]
    pub features: usize,
    /// Spread of the class parameters.
    #[arg(long, default_value_t = 1.0)]
    pub heterogeneity: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TheoryOutcome {
    pub report_path: PathBuf,
    pub table: String,
    pub failed: Vec<String>,
}

/// Runs the per-class, pooled and channel-design checks and writes the
/// report table. The outcome lists every failed check by name.
pub fn run_verify_theory(args: &TheoryArgs) -> Result<TheoryOutcome> {
    let specs = synthetic_classes(args.classes, args.lookback, args.instances, args.sigma, args.heterogeneity, args.design_seed)?;
    let per_class = mc_validate_thm1(&specs, args.trials, args.seed)?;
    let pooled = mc_validate_thm2(&specs, args.trials, args.seed)?;
    let sweep = channel_design_sweep(&SweepConfig {
        features: args.features,
        classes: args.classes,
        lookback: args.lookback,
        instances: args.instances,
        sigma: args.sigma,
        heterogeneity: args.heterogeneity,
        trials: args.trials,
        seed: args.seed,
    })?;

    let mut checks = per_class.checks();
    checks.extend(pooled.checks());
    checks.extend(sweep.checks().into_iter().map(|mut c| {
        c.name = format!("sweep/{}", c.name);
        c
    }));
    let sweep_rows: Vec<_> = sweep
        .reports()
        .into_iter()
        .map(|r| RiskReport { design: format!("sweep/{}", r.design), ..r.clone() })
        .collect();
    let table = format!("{}\n{}", report_table([&per_class, &pooled].into_iter().chain(&sweep_rows)), checks_table(&checks));

    let output = args.output.clone().unwrap_or_else(default_output);
    fs::create_dir_all(&output).with_context(|| format!("cannot create {}", output.display()))?;
    let report_path = output.join(THEORY_REPORT_FILE);
    write_atomic(&report_path, table.as_bytes())?;
    let failed = checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
    Ok(TheoryOutcome { report_path, table, failed })
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    pub checkpoint: PathBuf,
}

/// Human-readable description of a checkpoint.
pub fn run_inspect(args: &InspectArgs) -> Result<String> {
    let checkpoint = Checkpoint::load(&args.checkpoint).with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let model = &checkpoint.model;
    let p = &model.config.predictor;
    let mut out = String::new();
    let mut line = |k: &str, v: String| out.push_str(&format!("{k:<22}{v}\n"));
    line("classes", model.classes().to_string());
    line("features", format!("{} {:?}", model.config.n_features, checkpoint.feature_names));
    line("lookback", p.lookback.to_string());
    line("horizon", p.horizon.to_string());
    line("period", p.period.to_string());
    line("ma_window", p.ma_window.to_string());
    line("alpha", p.alpha.to_string());
    line("m", p.m.to_string());
    line("complex_bias", p.complex_bias.to_string());
    line("classifier", model.classifier.kind().to_string());
    line("classifier_params", model.classifier.n_params().to_string());
    line("predictor_params", format!("{} x {}", model.predictors.len(), model.predictors[0].n_params()));
    let f = &model.predictors[0];
    line("seasonal_weight", format!("{:?} complex", f.seasonal_re.shape()));
    line("trend_weight", format!("{:?}", f.trend_weight.shape()));
    line("affine", format!("enabled={} alpha={:?} beta={:?}", model.revin.affine.enabled, model.revin.affine.alpha, model.revin.affine.beta));
    line("revin_eps", model.revin.eps.to_string());
    line("standardized", checkpoint.scaler.is_some().to_string());
    Ok(out)
}
