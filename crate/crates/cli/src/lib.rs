//! `sigwatch` command-line front end.
//!
//! Every verb reads one JSON config (optional for the simulation verbs),
//! applies `--set key=value` overrides on top of it, and writes its artifacts
//! into `--out`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sigwatch::detect::DetectionConfig;
use sigwatch::detect::DEFAULT_COHORT_PERIOD;
use sigwatch::io::{self, ReportLine};
use sigwatch::model::{QoSAttribute, Signature, Timeline, TrialObservation, WorkloadCategory};
use sigwatch::noise::{initial_bandwidth, NoiseBandwidth, DEFAULT_CAP, DEFAULT_FLOOR};
use sigwatch::siggen::{
    generate_categorical_signature, generate_general_signature, DEFAULT_DOMINANCE,
};
use sigwatch::simlab::{
    compare_detectors, prepare_scenarios, score_baseline, score_detector, sweep_thresholds,
    ExperimentConfig, Scenario, SweepPoint,
};
use sigwatch::ErrorKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Verb {
    GenSig,
    Detect,
    Baseline,
    Simulate,
    Sweep,
    Compare,
}

#[derive(Debug, Parser)]
#[command(
    name = "sigwatch",
    version,
    about = "IaaS performance signatures and signature change detection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trial CSV → general and per-category signature JSON.
    GenSig(Options),
    /// Signatures + trials → per-cohort detection report.
    Detect(Options),
    /// Signatures + trials → CUSUM alarm report.
    Baseline(Options),
    /// One synthetic experiment at the configured thresholds.
    Simulate(Options),
    /// Threshold grid sweep → results.csv.
    Sweep(Options),
    /// Proposed detector and CUSUM baseline on shared seeds.
    Compare(Options),
}

#[derive(Debug, Clone, clap::Args)]
pub struct Options {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Override a config key; dotted paths reach nested keys. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Shortcut for `--set seed=N`.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn verb(&self) -> Verb {
        match self {
            Command::GenSig(_) => Verb::GenSig,
            Command::Detect(_) => Verb::Detect,
            Command::Baseline(_) => Verb::Baseline,
            Command::Simulate(_) => Verb::Simulate,
            Command::Sweep(_) => Verb::Sweep,
            Command::Compare(_) => Verb::Compare,
        }
    }

    pub fn options(&self) -> &Options {
        match self {
            Command::GenSig(o)
            | Command::Detect(o)
            | Command::Baseline(o)
            | Command::Simulate(o)
            | Command::Sweep(o)
            | Command::Compare(o) => o,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Runtime => 4,
        }
    }

    /// Single-line JSON for the diagnostic stream.
    pub fn to_json_line(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Runtime => "runtime",
        };
        serde_json::json!({ "error": kind, "message": self.message }).to_string()
    }
}

impl From<sigwatch::Error> for CliError {
    fn from(e: sigwatch::Error) -> Self {
        Self {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

/// Maps a failure to read an input file onto a data error.
fn input<T>(path: &Path, r: sigwatch::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match e {
        sigwatch::Error::Io(io) => CliError::data(format!("cannot read {}: {io}", path.display())),
        other => other.into(),
    })
}

fn output<T>(r: sigwatch::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError {
        kind: ErrorKind::Runtime,
        message: e.to_string(),
    })
}

/// Inputs of `gen-sig`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSigConfig {
    /// Long-format trial CSV.
    pub trials: PathBuf,
    pub horizon: usize,
    /// Minimum category-mix fraction for a trial to feed a categorical signature.
    pub dominance: f64,
    /// Categories to build; empty means every category some trial is dominated by.
    pub categories: Vec<WorkloadCategory>,
    /// Units per attribute id, used in the output records.
    pub units: std::collections::BTreeMap<String, String>,
}

impl Default for GenSigConfig {
    fn default() -> Self {
        Self {
            trials: PathBuf::from("trials.csv"),
            horizon: sigwatch::model::DEFAULT_HORIZON,
            dominance: DEFAULT_DOMINANCE,
            categories: Vec::new(),
            units: Default::default(),
        }
    }
}

/// Inputs of `detect` and `baseline`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorConfig {
    /// Signature JSON as written by `gen-sig`.
    pub signatures: PathBuf,
    /// Long-format trial CSV of the monitoring period.
    pub trials: PathBuf,
    /// Optional bandwidth snapshot(s); otherwise the band is derived from the signatures.
    pub bandwidth: Option<PathBuf>,
    /// Restrict to one provider; every provider in the trial file otherwise.
    pub provider_id: Option<String>,
    pub category: WorkloadCategory,
    /// Attribute to monitor; the first attribute in the signature file otherwise.
    pub attribute: Option<String>,
    pub dominance: f64,
    pub floor: f64,
    pub cap: f64,
    pub cohort_period: usize,
    pub detection: DetectionConfig,
    pub baseline_allowance: f64,
    pub baseline_h: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        Self {
            signatures: PathBuf::from("signatures.json"),
            trials: PathBuf::from("trials.csv"),
            bandwidth: None,
            provider_id: None,
            category: WorkloadCategory::Cpu,
            attribute: None,
            dominance: DEFAULT_DOMINANCE,
            floor: DEFAULT_FLOOR,
            cap: DEFAULT_CAP,
            cohort_period: DEFAULT_COHORT_PERIOD,
            detection: DetectionConfig::default(),
            baseline_allowance: exp.baseline_allowance,
            baseline_h: exp.baseline_h,
        }
    }
}

/// Applies `key=value` to a JSON object. The key must already exist; the
/// value is parsed as JSON and falls back to a plain string.
pub fn apply_override(target: &mut Value, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override `{assignment}` is not KEY=VALUE")))?;
    let mut slot = &mut *target;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| CliError::config(format!("unknown config key `{key}`")))?;
    }
    *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

fn merge(base: &mut Value, file: Value) {
    match (base, file) {
        (Value::Object(b), Value::Object(f)) => {
            for (k, v) in f {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, f) => *b = f,
    }
}

/// Defaults ← config file ← `--seed` ← `--set` overrides.
pub fn load_config<T>(opts: &Options, config_required: bool) -> Result<T, CliError>
where
    T: Default + Serialize + DeserializeOwned,
{
    let mut value =
        serde_json::to_value(T::default()).map_err(|e| CliError::config(e.to_string()))?;
    match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::config(format!("cannot read config {}: {e}", path.display()))
            })?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))?;
            if !file.is_object() {
                return Err(CliError::config("config must be a JSON object"));
            }
            merge(&mut value, file);
        }
        None if config_required => {
            return Err(CliError::config("--config is required for this command"))
        }
        None => {}
    }
    if let Some(seed) = opts.seed {
        apply_override(&mut value, &format!("seed={seed}"))?;
    }
    for assignment in &opts.overrides {
        apply_override(&mut value, assignment)?;
    }
    serde_json::from_value(value).map_err(|e| CliError::config(e.to_string()))
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError {
        kind: ErrorKind::Runtime,
        message: format!("cannot create {}: {e}", dir.display()),
    })
}

fn gen_sig(opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let cfg: GenSigConfig = load_config(opts, true)?;
    let trials = input(&cfg.trials, io::read_trials_csv(&cfg.trials))?;
    if trials.is_empty() {
        return Err(CliError::data(format!(
            "{}: no trial rows",
            cfg.trials.display()
        )));
    }
    let timeline = Timeline::new(cfg.horizon)?;
    let attr_ids: BTreeSet<&str> = trials
        .iter()
        .flat_map(TrialObservation::attributes)
        .collect();
    let attrs = attr_ids
        .iter()
        .map(|id| QoSAttribute::new(*id, cfg.units.get(*id).cloned().unwrap_or_default()))
        .collect::<sigwatch::Result<Vec<_>>>()?;
    let providers: BTreeSet<&str> = trials.iter().map(TrialObservation::provider_id).collect();
    let categories: Vec<WorkloadCategory> = if cfg.categories.is_empty() {
        let present: BTreeSet<WorkloadCategory> = trials
            .iter()
            .flat_map(|t| t.category_mix().iter())
            .filter(|(_, f)| **f >= cfg.dominance)
            .map(|(c, _)| c.clone())
            .collect();
        present.into_iter().collect()
    } else {
        cfg.categories.clone()
    };

    let mut records = Vec::new();
    for provider in providers {
        let general = generate_general_signature(&trials, provider, &attrs, timeline)?;
        records.extend(io::signature_records(&general));
        for category in &categories {
            let sig = generate_categorical_signature(
                &trials,
                provider,
                category,
                cfg.dominance,
                &attrs,
                timeline,
            )?;
            records.extend(io::signature_records(&sig));
        }
    }
    prepare_out(&opts.out)?;
    let path = opts.out.join("signatures.json");
    output(io::write_signature_records(&path, &records))?;
    Ok(vec![path])
}

/// Builds one scenario per monitored provider from files on disk.
fn monitor_scenarios(cfg: &MonitorConfig) -> Result<Vec<Scenario>, CliError> {
    let records = input(&cfg.signatures, io::read_signature_records(&cfg.signatures))?;
    let trials = input(&cfg.trials, io::read_trials_csv(&cfg.trials))?;
    let snapshots = match &cfg.bandwidth {
        Some(path) => input(path, io::read_bandwidths(path))?,
        None => Vec::new(),
    };
    let providers: Vec<String> = match &cfg.provider_id {
        Some(p) => vec![p.clone()],
        None => trials
            .iter()
            .map(|t| t.provider_id().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    if providers.is_empty() {
        return Err(CliError::data(format!(
            "{}: no trial rows",
            cfg.trials.display()
        )));
    }

    let mut scenarios = Vec::new();
    for provider in providers {
        let general = io::general_from_records(&records, &provider)?;
        let categorical = io::categorical_from_records(&records, &provider, &cfg.category)?;
        let attribute = match &cfg.attribute {
            Some(a) => a.clone(),
            None => categorical
                .series()
                .iter()
                .next()
                .map(|s| s.attribute.id.clone())
                .ok_or_else(|| CliError::data("signature has no attributes"))?,
        };
        let snapshot = snapshots.iter().find(|s| {
            s.provider_id == provider && s.category == cfg.category && s.attribute == attribute
        });
        let bandwidth = match snapshot {
            Some(s) => NoiseBandwidth::from_snapshot(s.clone(), &categorical)?,
            None => initial_bandwidth(&general, &categorical, &attribute, cfg.floor, cfg.cap)?,
        };
        let mut own: Vec<TrialObservation> = trials
            .iter()
            .filter(|t| {
                t.provider_id() == provider && t.mix_fraction(&cfg.category) >= cfg.dominance
            })
            .cloned()
            .collect();
        if own.is_empty() {
            return Err(CliError::data(format!(
                "no {} trials for provider `{provider}`",
                cfg.category
            )));
        }
        own.sort_by_key(TrialObservation::window_end);
        scenarios.push(Scenario {
            repetition: 0,
            provider_id: provider,
            general,
            categorical,
            initial_bandwidth: bandwidth,
            trials: own,
            injected_day: None,
        });
    }
    Ok(scenarios)
}

fn write_runs(
    out: &Path,
    runs: &[sigwatch::simlab::ProviderRun],
    tag_runs: bool,
    bandwidths: bool,
) -> Result<Vec<PathBuf>, CliError> {
    prepare_out(out)?;
    let lines: Vec<ReportLine> = runs
        .iter()
        .flat_map(|run| {
            run.events.iter().map(move |e| {
                let mut line = ReportLine::tagged(e, run.repetition, &run.provider_id);
                if !tag_runs {
                    line.run = None;
                }
                line
            })
        })
        .collect();
    let report = out.join("report.jsonl");
    output(io::write_report_jsonl(&report, &lines))?;
    let mut paths = vec![report];
    if bandwidths {
        let path = out.join("bandwidth.json");
        let snapshots: Vec<_> = runs.iter().map(|r| r.final_bandwidth.clone()).collect();
        output(io::write_bandwidths(&path, &snapshots))?;
        paths.push(path);
    }
    Ok(paths)
}

fn detect(opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let cfg: MonitorConfig = load_config(opts, true)?;
    let scenarios = monitor_scenarios(&cfg)?;
    let result = score_detector(&scenarios, &cfg.detection, cfg.cohort_period)?;
    write_runs(&opts.out, &result.runs, false, true)
}

fn baseline(opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let cfg: MonitorConfig = load_config(opts, true)?;
    let scenarios = monitor_scenarios(&cfg)?;
    let result = score_baseline(
        &scenarios,
        cfg.baseline_allowance,
        cfg.baseline_h,
        cfg.cohort_period,
    )?;
    write_runs(&opts.out, &result.runs, false, false)
}

fn simulate(opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let cfg: ExperimentConfig = load_config(opts, false)?;
    let scenarios = prepare_scenarios(&cfg)?;
    let result = score_detector(&scenarios, &cfg.detection, cfg.cohort_period)?;
    let mut paths = write_runs(&opts.out, &result.runs, true, true)?;
    let results = opts.out.join("results.csv");
    let point = SweepPoint {
        ts: cfg.detection.ts,
        th: cfg.detection.th,
        metrics: result.metrics,
    };
    output(io::write_sweep_csv(&results, &[point]))?;
    paths.insert(0, results);
    Ok(paths)
}

fn sweep(opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let cfg: ExperimentConfig = load_config(opts, false)?;
    let points = sweep_thresholds(&cfg)?;
    prepare_out(&opts.out)?;
    let path = opts.out.join("results.csv");
    output(io::write_sweep_csv(&path, &points))?;
    Ok(vec![path])
}

fn compare(opts: &Options) -> Result<Vec<PathBuf>, CliError> {
    let cfg: ExperimentConfig = load_config(opts, false)?;
    let rows = compare_detectors(&cfg)?;
    prepare_out(&opts.out)?;
    let path = opts.out.join("compare.csv");
    output(io::write_compare_csv(&path, &rows))?;
    Ok(vec![path])
}

/// Runs one command and returns the files it wrote.
pub fn execute(command: &Command) -> Result<Vec<PathBuf>, CliError> {
    let opts = command.options();
    match command.verb() {
        Verb::GenSig => gen_sig(opts),
        Verb::Detect => detect(opts),
        Verb::Baseline => baseline(opts),
        Verb::Simulate => simulate(opts),
        Verb::Sweep => sweep(opts),
        Verb::Compare => compare(opts),
    }
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::config(first).to_json_line());
            return 2;
        }
    };
    match execute(&cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            e.exit_code()
        }
    }
}
