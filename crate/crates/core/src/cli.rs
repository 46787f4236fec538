//! Batch entry points behind the `millgnn` binary.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
//! failure, 5 selfcheck failure. Failures print one line
//! `error[<category>]: <message>` on stderr.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, write_predictions, CsvOptions, DataError, MissingPolicy, MtsFrame, SplitScheme};
use crate::hierarchy::{ClusterAlgo, HierarchyError};
use crate::leadlag::LeadLagError;
use crate::model::{ablate, fit, load_checkpoint, save_checkpoint, write_history, Experiment, Metrics, ModelConfig, ModelError};
use crate::selfcheck::run_selfcheck;
use crate::synth::{gen_planted, PlantedSpec};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const GRAPH_FILE: &str = "graph.edges";
pub const HIERARCHY_FILE: &str = "hierarchy.txt";
pub const CONFIG_ECHO_FILE: &str = "config.echo";
pub const METRICS_FILE: &str = "metrics.csv";

/// Windows whose effective edge weights are averaged for the graph export.
const EXPORT_WEIGHT_WINDOWS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Numerical,
    Selfcheck,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Data => 3,
            Category::Numerical => 4,
            Category::Selfcheck => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Data => "data",
            Category::Numerical => "numerical",
            Category::Selfcheck => "selfcheck",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    fn config(m: impl Into<String>) -> Self {
        Self {
            category: Category::Config,
            message: m.into(),
        }
    }

    fn data(m: impl Into<String>) -> Self {
        Self {
            category: Category::Data,
            message: m.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let one_line = self.message.replace(['\n', '\r'], " ");
        write!(f, "error[{}]: {one_line}", self.category.name())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

fn hierarchy_category(e: &HierarchyError) -> Category {
    match e {
        HierarchyError::Quantile(_) | HierarchyError::PatchLength { .. } | HierarchyError::Config(_) => Category::Config,
        _ => Category::Data,
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let category = match &e {
            ModelError::Config(_) => Category::Config,
            ModelError::Hierarchy(h) => hierarchy_category(h),
            ModelError::LeadLag(LeadLagError::Hierarchy(h)) => hierarchy_category(h),
            ModelError::LeadLag(LeadLagError::ZeroK | LeadLagError::MaxLag { .. }) => Category::Config,
            ModelError::NonFinite { .. } | ModelError::Tensor(_) => Category::Numerical,
            _ => Category::Data,
        };
        Self {
            category,
            message: e.to_string(),
        }
    }
}

/// How the training series is cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    #[default]
    Ratios,
    Ett,
}

/// Everything `millgnn train` reads: data and output locations, file
/// handling and the model. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub split: SplitKind,
    pub ratios: [f64; 3],
    pub steps_per_hour: usize,
    /// `None` skips the first column when its header looks like a timestamp.
    pub skip_first_column: Option<bool>,
    pub missing: MissingPolicy,
    pub normalized_metrics: bool,
    /// Fill the `wall_seconds` history column (makes reruns differ).
    pub record_time: bool,
    pub model: ModelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: None,
            split: SplitKind::Ratios,
            ratios: [0.7, 0.1, 0.2],
            steps_per_hour: 1,
            skip_first_column: None,
            missing: MissingPolicy::Reject,
            normalized_metrics: false,
            record_time: false,
            model: ModelConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn split_scheme(&self) -> SplitScheme {
        match self.split {
            SplitKind::Ratios => SplitScheme::Ratios {
                train: self.ratios[0],
                val: self.ratios[1],
                test: self.ratios[2],
            },
            SplitKind::Ett => SplitScheme::Ett {
                steps_per_hour: self.steps_per_hour,
            },
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::config(format!("cannot serialise config: {e}")))
    }
}

#[derive(Debug, Parser)]
#[command(name = "millgnn", version, about = "Multi-scale lead-lag graph forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a CSV and write checkpoint, history, predictions and exports.
    Train(TrainArgs),
    /// Forecast the next H steps after the last L rows of a CSV.
    Forecast(ForecastArgs),
    /// Run the embedded oracle suite.
    Selfcheck(SelfcheckArgs),
    /// Write a synthetic planted lead-lag dataset and its ground truth.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// no_ms, no_init, no_weight or no_hmp; repeatable.
    #[arg(long)]
    pub ablate: Vec<String>,
    #[arg(long)]
    pub per_window_lags: bool,
    #[arg(long)]
    pub normalized_metrics: bool,
    /// spectral, kmeans or hierarchical.
    #[arg(long)]
    pub clustering: Option<ClusterAlgo>,
    #[arg(long)]
    pub record_time: bool,
    /// Override any config key, e.g. `--set model.hidden=32`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV with at least L rows and the checkpoint's variates in order.
    #[arg(long, alias = "data")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub skip_first_column: Option<bool>,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    /// Corrupt one vector-Jacobian product (negative control).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4096)]
    pub length: usize,
    /// `benchmark` (12 variates, 3 groups) or `pair`.
    #[arg(long, default_value = "benchmark")]
    pub preset: String,
    #[arg(long, default_value_t = 4)]
    pub lag: usize,
    #[arg(long, default_value_t = 10.0)]
    pub snr: f64,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Category::Config.exit_code() } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.category.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Forecast(a) => cmd_forecast(a),
        Command::Selfcheck(a) => cmd_selfcheck(a),
        Command::Generate(a) => cmd_generate(a),
    }
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::config(format!("empty key in `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Defaults, then the config file, then `--set`, then the named flags.
pub fn merge_config(a: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut table = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            toml::from_str::<toml::Table>(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        }
        None => toml::Table::new(),
    };
    for o in &a.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("override `{o}` is not KEY=VALUE")))?;
        set_path(&mut table, k.trim(), parse_value(v.trim()))?;
    }
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
    if let Some(d) = &a.data {
        cfg.data = Some(d.clone());
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    if let Some(s) = a.seed {
        cfg.model.seed = s;
    }
    for flag in &a.ablate {
        cfg.model = ablate(&cfg.model, flag)?;
    }
    if a.per_window_lags {
        cfg.model.per_window_lags = true;
    }
    if a.normalized_metrics {
        cfg.normalized_metrics = true;
    }
    if let Some(c) = a.clustering {
        cfg.model.clustering = c;
    }
    if a.record_time {
        cfg.record_time = true;
    }
    Ok(cfg)
}

fn looks_like_timestamp(header: &str) -> bool {
    let h = header.trim().trim_matches('"').to_ascii_lowercase();
    matches!(h.as_str(), "date" | "time" | "timestamp" | "datetime" | "date_time")
}

/// Reads the CSV, deciding on the timestamp column from its header when
/// `skip_first_column` is unset.
pub fn read_frame(path: &Path, skip_first_column: Option<bool>, missing: MissingPolicy) -> Result<MtsFrame, CliError> {
    let skip = match skip_first_column {
        Some(s) => s,
        None => {
            let mut first = String::new();
            BufReader::new(File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?)
                .read_line(&mut first)?;
            looks_like_timestamp(first.split(',').next().unwrap_or(""))
        }
    };
    let opts = CsvOptions {
        skip_first_column: skip,
        missing,
        ..CsvOptions::default()
    };
    load_csv(path, &opts).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn write_metrics(path: &Path, exp: &Experiment) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(e.to_string()))?;
    let io = |e: csv::Error| CliError::data(e.to_string());
    w.write_record(["scale", "mse", "mae", "rmse", "mape", "mape_skipped", "count"]).map_err(io)?;
    for (name, m) in [("denormalized", &exp.test.denormalized), ("normalized", &exp.test.normalized)] {
        w.write_record([
            name.to_string(),
            m.mse.to_string(),
            m.mae.to_string(),
            m.rmse.to_string(),
            m.mape.to_string(),
            m.mape_skipped.to_string(),
            m.count.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn print_metrics(label: &str, m: &Metrics) {
    println!(
        "test ({label}): mse {:.6} mae {:.6} rmse {:.6} mape {:.6} ({} zero targets skipped)",
        m.mse, m.mae, m.rmse, m.mape, m.mape_skipped
    );
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = merge_config(a)?;
    let data = cfg.data.clone().ok_or_else(|| CliError::config("no data path (use --data or `data` in the config)"))?;
    let out = cfg.out.clone().ok_or_else(|| CliError::config("no output directory (use --out or `out` in the config)"))?;
    // Validate as far as possible before touching the data.
    let echo = cfg.to_toml()?;
    let frame = read_frame(&data, cfg.skip_first_column, cfg.missing)?;
    cfg.model.resolve(frame.num_variates())?;
    fs::create_dir_all(&out).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
    fs::write(out.join(CONFIG_ECHO_FILE), &echo)?;

    let exp = fit(&frame, &cfg.model, cfg.split_scheme(), cfg.record_time)?;
    let model = exp.model();
    save_checkpoint(out.join(CHECKPOINT_FILE), model)?;
    write_history(BufWriter::new(File::create(out.join(HISTORY_FILE))?), &exp.outcome.history)?;
    write_predictions(
        BufWriter::new(File::create(out.join(PREDICTIONS_FILE))?),
        model.variate_names(),
        &exp.test.predictions,
    )?;
    write_metrics(&out.join(METRICS_FILE), &exp)?;

    match (model.hierarchy(), model.graph()) {
        (Some(h), Some(g)) => {
            let mut text = h.export_text(model.variate_names());
            if let Some(w) = model.work_report() {
                text.push('\n');
                for line in w.to_text().lines() {
                    text.push_str("# ");
                    text.push_str(line);
                    text.push('\n');
                }
            }
            fs::write(out.join(HIERARCHY_FILE), text)?;
            let train = exp.split.train.normalized_with(model.norm_stats());
            let l = model.config().input_len;
            let origins = train.len() - l + 1;
            let count = origins.min(EXPORT_WEIGHT_WINDOWS);
            let windows: Vec<_> = (0..count)
                .map(|k| model.input_window(train.values(), if count == 1 { 0 } else { k * (origins - 1) / (count - 1) }))
                .collect();
            let refs: Vec<_> = windows.iter().collect();
            let weights = model.mean_edge_weights(&refs)?;
            g.write_edges(BufWriter::new(File::create(out.join(GRAPH_FILE))?), weights.as_deref())
                .map_err(|e| CliError::data(e.to_string()))?;
        }
        _ => {
            fs::write(out.join(HIERARCHY_FILE), "# linear baseline: single scale, no grouping\n")?;
            fs::write(out.join(GRAPH_FILE), "")?;
        }
    }

    let best = &exp.outcome;
    println!(
        "trained {} epochs (best {} with val mse {:.6}); outputs in {}",
        best.history.len(),
        best.best_epoch,
        best.best_val_mse,
        out.display()
    );
    if cfg.normalized_metrics {
        print_metrics("normalized", &exp.test.normalized);
    }
    print_metrics("original units", &exp.test.denormalized);
    Ok(())
}

pub fn cmd_forecast(a: &ForecastArgs) -> Result<(), CliError> {
    let model = load_checkpoint(&a.checkpoint)?;
    let frame = read_frame(&a.input, a.skip_first_column, MissingPolicy::Reject)?;
    let expected = model.variate_names();
    if frame.num_variates() != expected.len() {
        return Err(CliError::data(format!(
            "variate count mismatch: expected {}, found {}",
            expected.len(),
            frame.num_variates()
        )));
    }
    if let Some((k, (e, f))) = expected.iter().zip(&frame.variate_names).enumerate().find(|(_, (e, f))| e != f) {
        return Err(CliError::data(format!("variate name mismatch at column {k}: expected `{e}`, found `{f}`")));
    }
    let l = model.config().input_len;
    if frame.len() < l {
        return Err(CliError::data(format!("input has {} rows, need at least L = {l}", frame.len())));
    }
    let origin = frame.len() - l;
    let raw = frame.slice(origin, frame.len());
    let pred = model.forecast(raw.values())?;
    fs::create_dir_all(&a.out)?;
    write_predictions(BufWriter::new(File::create(a.out.join(PREDICTIONS_FILE))?), expected, &[(origin, pred)])?;
    println!("forecast of {} steps written to {}", model.config().horizon, a.out.join(PREDICTIONS_FILE).display());
    Ok(())
}

pub fn cmd_selfcheck(a: &SelfcheckArgs) -> Result<(), CliError> {
    let report = run_selfcheck(a.inject_fault);
    print!("{}", report.table());
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
        Err(CliError {
            category: Category::Selfcheck,
            message: format!("failed checks: {}", failed.join(", ")),
        })
    }
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<(), CliError> {
    let spec = match a.preset.as_str() {
        "benchmark" => PlantedSpec::benchmark(a.length, a.seed),
        "pair" => PlantedSpec::pair(a.length, a.lag, 1.0, a.snr, a.seed),
        other => return Err(CliError::config(format!("unknown preset `{other}` (benchmark, pair)"))),
    };
    let (frame, truth) = gen_planted(&spec).map_err(|e| CliError::config(e.to_string()))?;
    fs::create_dir_all(&a.out)?;
    let data = a.out.join("data.csv");
    frame.write_csv(BufWriter::new(File::create(&data)?))?;
    let mut side = BufWriter::new(File::create(a.out.join("truth.csv"))?);
    truth.write_sidecar(&mut side, &frame.variate_names)?;
    side.flush()?;
    println!("{} x {} series written to {}", frame.num_variates(), frame.len(), data.display());
    Ok(())
}
