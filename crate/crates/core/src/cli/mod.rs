//! The `scorescope` command line.
//!
//! Every command prints (or writes to `--output`) a JSON [`Report`]. Exit
//! codes: 0 success, 1 bad input, 2 violated precondition, 3 finding under
//! `--strict`.

pub mod config;
pub mod report;
pub mod svg;
mod watch;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use serde_json::{json, Value};

use crate::blocked::{self, BlockedDesign, BlockedSimConfig};
use crate::construction::{
    bias_severity, class_balance, learnability_gap, BiasConfig, ConstructionScore, Severity, Solver,
};
use crate::error::{Error, Result};
use crate::experiments;
use crate::ingest::{self, RawTable, ScoreLogOptions, ScoreRecord, TabularDataset, TabularOptions};
use crate::monitor::{read_override_rules, Overrides};
use crate::rdc::{build_rdc, diagnose, log_view, one_vs_rest, DiagnosisConfig, Pattern, Rdc};
use crate::synth::{self, Family};

pub use config::ToolConfig;
pub use report::Report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_FINDING: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "scorescope", version, about = "Label-free classifier diagnostics and experiment design")]
pub struct Cli {
    /// Write the report here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,

    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Exit with code 3 when the command finds a pathology, alert or bias.
    #[arg(long, global = true)]
    pub strict: bool,

    /// JSON file overriding built-in thresholds; explicit flags win over it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Response distribution chart and pathology diagnosis per model.
    Rdc(RdcArgs),
    /// Selection-bias probe: can features predict which rows have labels?
    Bias(BiasArgs),
    /// Score a problem construction: class balance, learnability, bias.
    Setup(SetupArgs),
    /// Disagreement between two models' paired predictions.
    Disagree(DisagreeArgs),
    /// Sample size for a disagreement-routed A/B test.
    Power(PowerArgs),
    /// Upper bound of impacted traffic as a function of new-model accuracy.
    Curve(CurveArgs),
    /// Three-variant blocked experiment (base / compute-only / compute+expose).
    #[command(subcommand)]
    Blocked(BlockedCommand),
    /// Windowed monitoring of a score log with drift and pathology alerts.
    Watch(WatchArgs),
    /// Write a synthetic score log of a known chart shape.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RdcArgs {
    /// Score log (one JSON object per line).
    #[arg(long)]
    pub input: PathBuf,
    /// Number of equal-width bins on [0, 1] [default: 100].
    #[arg(long)]
    pub bins: Option<usize>,
    /// SVG chart path; with several models, one file per model is written
    /// with the model id appended to the file stem.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Plot ln(1 + count) instead of frequencies.
    #[arg(long)]
    pub log_scale: bool,
    /// Also chart each class label separately (one-vs-rest).
    #[arg(long)]
    pub by_class: bool,
    /// Min-max rescale scores into [0, 1] instead of rejecting out-of-range values.
    #[arg(long)]
    pub rescale: bool,
    /// JSON list of score override rules applied before charting.
    #[arg(long, value_name = "PATH")]
    pub overrides: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverChoice {
    Newton,
    Gd,
}

impl SolverChoice {
    fn solver(self) -> Solver {
        match self {
            SolverChoice::Newton => Solver::NEWTON_DEFAULT,
            SolverChoice::Gd => Solver::GD_DEFAULT,
        }
    }
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Numeric CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Replace missing feature cells by the column mean.
    #[arg(long)]
    pub impute: bool,
    /// Columns to ignore (repeatable).
    #[arg(long, value_name = "COLUMN")]
    pub exclude: Vec<String>,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// 0/1 column: 1 when the row's target could be computed.
    #[arg(long)]
    pub availability_column: String,
    /// Cross-validation folds [default: 5].
    #[arg(long)]
    pub folds: Option<usize>,
    /// Label permutations for the p-value [default: 200].
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Logistic solver for the probe [default: newton].
    #[arg(long, value_enum)]
    pub solver: Option<SolverChoice>,
}

#[derive(Debug, Args)]
pub struct SetupArgs {
    #[command(flatten)]
    pub table: TableArgs,
    /// Binary target column; rows where it is missing count as unlabeled.
    #[arg(long)]
    pub target: String,
    /// 0/1 column marking labeled rows, instead of inferring them from
    /// missing targets.
    #[arg(long)]
    pub availability_column: Option<String>,
    /// Cross-validation folds [default: 5].
    #[arg(long)]
    pub folds: Option<usize>,
    /// Label permutations for the bias probe [default: 200].
    #[arg(long)]
    pub permutations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DisagreeArgs {
    /// CSV with entity_id, pred_a, pred_b and optional label columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Scores at or above this are positive decisions [default: 0.5].
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// Control conversion rate.
    #[arg(long)]
    pub p_control: f64,
    /// Minimum detectable effect (absolute).
    #[arg(long)]
    pub mde: f64,
    /// Two-sided significance level [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Target power [default: 0.8].
    #[arg(long)]
    pub power: Option<f64>,
    /// Share of traffic on which the two models disagree.
    #[arg(long, default_value_t = 1.0)]
    pub disagreement: f64,
    /// Also estimate the power at the computed size with this many
    /// simulated experiments.
    #[arg(long, value_name = "RUNS")]
    pub monte_carlo: Option<u64>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Accuracy of the model being replaced.
    #[arg(long)]
    pub baseline: String,
    /// New-model accuracies as start:end:step.
    #[arg(long, default_value = "0.5:1.0:0.01")]
    pub grid: String,
    /// SVG chart of the curve.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BlockedCommand {
    /// Simulate users and report the analysis of the simulated outcomes.
    Simulate(BlockedSimArgs),
    /// Analyze a `variant,converted` outcomes CSV.
    Analyze(BlockedAnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct BlockedSimArgs {
    /// Simulated users.
    #[arg(long, default_value_t = 100_000)]
    pub n_users: usize,
    /// Conversion rate of the base variant.
    #[arg(long, default_value_t = 0.10)]
    pub base_cvr: f64,
    /// Conversion-rate change caused by computing the model (v1 and v2).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub latency_penalty: f64,
    /// Conversion-rate change caused by showing its output (v2 only).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub feature_effect: f64,
    /// Shares for base,v1,v2 [default: equal thirds].
    #[arg(long, value_delimiter = ',', value_name = "BASE,V1,V2")]
    pub allocation: Option<Vec<f64>>,
    /// Also write the simulated outcomes to this CSV.
    #[arg(long, value_name = "PATH")]
    pub outcomes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BlockedAnalyzeArgs {
    /// CSV with variant (base, v1, v2) and converted (0/1) columns.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct WatchArgs {
    /// Score log to tail.
    #[arg(long)]
    pub input: PathBuf,
    /// Records per window and model [default: 1000].
    #[arg(long)]
    pub window_size: Option<usize>,
    /// Total-variation distance above which DRIFT fires [default: 0.15].
    #[arg(long)]
    pub tv_threshold: Option<f64>,
    /// Number of bins [default: 100].
    #[arg(long)]
    pub bins: Option<usize>,
    /// Score log whose chart is the fixed reference; otherwise each model's
    /// first window.
    #[arg(long, value_name = "PATH")]
    pub reference: Option<PathBuf>,
    /// JSON list of score override rules.
    #[arg(long, value_name = "PATH")]
    pub overrides: Option<PathBuf>,
    /// Keep polling the file for appended lines.
    #[arg(long)]
    pub follow: bool,
    /// Poll interval when following.
    #[arg(long, default_value_t = 500)]
    pub poll_ms: u64,
    /// Stop following after this long without new data.
    #[arg(long)]
    pub idle_exit_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    /// Records to write.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Model id stamped on every record.
    #[arg(long, default_value = "model")]
    pub model_id: String,
}

/// What a command hands back to the dispatcher.
pub struct Outcome {
    pub report: Option<Report>,
    /// Something `--strict` should fail on.
    pub finding: bool,
}

pub(crate) struct Context<'a> {
    pub seed: u64,
    pub config: ToolConfig,
    pub out: &'a mut dyn Write,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(io_err(path))
}

/// Run with explicit arguments and streams; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_INPUT
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    match execute(cli, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_input() {
                EXIT_INPUT
            } else {
                EXIT_PRECONDITION
            }
        }
    }
}

pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<i32> {
    let config = ToolConfig::load(cli.config.as_deref())?;
    let mut ctx = Context {
        seed: cli.seed,
        config,
        out: stdout,
    };
    let outcome = match &cli.command {
        Command::Rdc(a) => cmd_rdc(a, &ctx)?,
        Command::Bias(a) => cmd_bias(a, &ctx)?,
        Command::Setup(a) => cmd_setup(a, &ctx)?,
        Command::Disagree(a) => cmd_disagree(a, &ctx)?,
        Command::Power(a) => cmd_power(a, &ctx)?,
        Command::Curve(a) => cmd_curve(a)?,
        Command::Blocked(BlockedCommand::Simulate(a)) => cmd_blocked_simulate(a, &ctx)?,
        Command::Blocked(BlockedCommand::Analyze(a)) => cmd_blocked_analyze(a)?,
        Command::Watch(a) => watch::cmd_watch(a, &mut ctx)?,
        Command::Synth(a) => cmd_synth(a, &mut ctx, cli.output.as_deref())?,
    };
    if let Some(report) = &outcome.report {
        match &cli.output {
            Some(path) => write_file(path, &report.pretty())?,
            None => ctx
                .out
                .write_all(report.pretty().as_bytes())
                .map_err(|e| Error::input(format!("stdout: {e}")))?,
        }
    }
    Ok(if cli.strict && outcome.finding {
        EXIT_FINDING
    } else {
        EXIT_OK
    })
}

fn svg_path_for(base: &Path, model: &str, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("rdc");
    let safe: String = model
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    base.with_file_name(format!("{stem}-{safe}.svg"))
}

fn chart_entry(rdc: &Rdc, config: &DiagnosisConfig) -> (Value, Option<crate::rdc::RdcDiagnosis>) {
    let mut entry = json!({
        "n": rdc.n(),
        "edges": rdc.edges(),
        "counts": rdc.counts(),
        "frequencies": rdc.frequencies(),
        "log_counts": log_view(rdc),
    });
    match diagnose(rdc, config) {
        Ok(d) => {
            entry["pattern"] = json!(d.pattern);
            entry["threshold_band"] = json!(d.threshold_band);
            entry["diagnosis"] = json!(d);
            (entry, Some(d))
        }
        Err(e) => {
            entry["pattern"] = Value::Null;
            entry["note"] = json!(e.to_string());
            (entry, None)
        }
    }
}

fn load_overrides(path: Option<&Path>, report: &mut Report) -> Result<Overrides> {
    match path {
        Some(p) => {
            report.add_input(p)?;
            Overrides::new(read_override_rules(p)?)
        }
        None => Ok(Overrides::default()),
    }
}

fn cmd_rdc(a: &RdcArgs, ctx: &Context) -> Result<Outcome> {
    let mut report = Report::new("rdc");
    report.add_input(&a.input)?;
    let bins = a.bins.unwrap_or(ctx.config.bins);
    let diag = &ctx.config.diagnosis;
    let log = ingest::read_score_log(&a.input, ScoreLogOptions { rescale: a.rescale })?;
    let mut records = log.records;
    let mut overrides = load_overrides(a.overrides.as_deref(), &mut report)?;
    for r in records.iter_mut() {
        overrides.apply(r);
    }
    if records.is_empty() {
        return Err(Error::precondition("score log holds no records"));
    }

    let mut by_model: BTreeMap<&str, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in &records {
        by_model.entry(r.model_id.as_str()).or_default().push(r);
    }
    let several = by_model.len() > 1;
    let mut models = serde_json::Map::new();
    let mut finding = false;
    for (model, recs) in &by_model {
        let scores: Vec<f64> = recs.iter().map(|r| r.score).collect();
        let rdc = build_rdc(&scores, bins)?;
        let (mut entry, d) = chart_entry(&rdc, diag);
        finding |= d.as_ref().is_none_or(|d| d.pattern != Pattern::HealthyBimodal);
        if a.by_class {
            let owned: Vec<ScoreRecord> = recs.iter().map(|r| (*r).clone()).collect();
            let classes = one_vs_rest(&owned, bins)?;
            let per_class: serde_json::Map<String, Value> = classes
                .iter()
                .map(|(c, rdc)| (c.clone(), chart_entry(rdc, diag).0))
                .collect();
            entry["classes"] = Value::Object(per_class);
        }
        if let Some(base) = &a.svg {
            let path = svg_path_for(base, model, several);
            let (modes, band) = match &d {
                Some(d) => (d.evidence.modes.clone(), d.threshold_band),
                None => (Vec::new(), None),
            };
            let title = format!("Response distribution: {model}");
            write_file(&path, &svg::rdc_chart(&rdc, &title, a.log_scale, &modes, band.as_ref()))?;
            entry["svg"] = json!(path.display().to_string());
        }
        models.insert(model.to_string(), entry);
    }
    report.results = json!({
        "lines": log.lines,
        "skipped_lines": log.skipped,
        "overrides_applied": overrides.applied(),
        "models": models,
    });
    report.decisions = json!({
        "bins": bins,
        "rescale": a.rescale,
        "diagnosis": diag,
        "strict_fails_on": "any pattern other than HEALTHY_BIMODAL",
    });
    Ok(Outcome {
        report: Some(report),
        finding,
    })
}

fn bias_config(ctx: &Context, folds: Option<usize>, permutations: Option<usize>) -> BiasConfig {
    let mut c = ctx.config.bias.clone();
    c.seed = ctx.seed;
    if let Some(f) = folds {
        c.folds = f;
    }
    if let Some(p) = permutations {
        c.permutations = p;
    }
    c
}

fn cmd_bias(a: &BiasArgs, ctx: &Context) -> Result<Outcome> {
    let mut report = Report::new("bias");
    report.add_input(&a.table.input)?;
    let mut config = bias_config(ctx, a.folds, a.permutations);
    if let Some(s) = a.solver {
        config.solver = s.solver();
    }
    let options = TabularOptions {
        impute: a.table.impute,
        exclude: a.table.exclude.clone(),
    };
    let data = ingest::read_tabular(&a.table.input, &a.availability_column, &options)?;
    let r = bias_severity(&data.rows, &data.target, &config)?;
    let finding = r.severity != Severity::None;
    report.results = json!({
        "features": data.feature_names,
        "bias": r,
    });
    report.decisions = json!({ "bias": config, "impute": a.table.impute });
    Ok(Outcome {
        report: Some(report),
        finding,
    })
}

fn subtable(table: &RawTable, keep: &[bool]) -> RawTable {
    RawTable {
        columns: table.columns.clone(),
        rows: table
            .rows
            .iter()
            .zip(keep)
            .filter(|(_, k)| **k)
            .map(|(r, _)| r.clone())
            .collect(),
    }
}

fn cmd_setup(a: &SetupArgs, ctx: &Context) -> Result<Outcome> {
    let mut report = Report::new("setup");
    report.add_input(&a.table.input)?;
    let mut table = ingest::read_table(&a.table.input)?;
    let col = |name: &str| {
        table
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::input(format!("no column named {name:?}")))
    };
    let ti = col(&a.target)?;

    // availability: explicit column, or "target present"
    let (avail_name, labeled): (String, Vec<bool>) = match &a.availability_column {
        Some(name) => {
            let ai = col(name)?;
            let flags = table
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| match r[ai] {
                    Some(v) if v == 1.0 => Ok(true),
                    Some(v) if v == 0.0 => Ok(false),
                    _ => Err(Error::input(format!("row {}: {name:?} must be 0 or 1", i + 2))),
                })
                .collect::<Result<_>>()?;
            (name.clone(), flags)
        }
        None => {
            let flags: Vec<bool> = table.rows.iter().map(|r| r[ti].is_some()).collect();
            let mut name = "has_label".to_string();
            while table.columns.contains(&name) {
                name.insert(0, '_');
            }
            table.columns.push(name.clone());
            for (r, f) in table.rows.iter_mut().zip(&flags) {
                r.push(Some(if *f { 1.0 } else { 0.0 }));
            }
            (name, flags)
        }
    };

    let mut exclude = a.table.exclude.clone();
    exclude.push(avail_name.clone());
    let labeled_data = TabularDataset::from_table(
        &subtable(&table, &labeled),
        &a.target,
        &TabularOptions {
            impute: a.table.impute,
            exclude,
        },
    )?;
    let balance = class_balance(&labeled_data.target)?;
    let mut learn_config = ctx.config.learnability.clone();
    learn_config.seed = ctx.seed;
    if let Some(f) = a.folds {
        learn_config.folds = f;
    }
    let learnability = learnability_gap(&labeled_data, &learn_config)?;

    let n_labeled = labeled.iter().filter(|&&l| l).count();
    let bias_cfg = bias_config(ctx, a.folds, a.permutations);
    let bias = if n_labeled > 0 && n_labeled < labeled.len() {
        let mut exclude = a.table.exclude.clone();
        exclude.push(a.target.clone());
        let probe = TabularDataset::from_table(
            &table,
            &avail_name,
            &TabularOptions {
                impute: a.table.impute,
                exclude,
            },
        )?;
        Some(bias_severity(&probe.rows, &probe.target, &bias_cfg)?)
    } else {
        None
    };
    let finding =
        balance.warning.is_some() || bias.as_ref().is_some_and(|b| b.severity != Severity::None);
    let bias_note = bias
        .is_none()
        .then_some("every row is labeled; the selection-bias probe needs unlabeled rows");
    let score = ConstructionScore {
        class_balance: balance,
        learnability,
        bias,
    };
    report.results = json!({
        "features": labeled_data.feature_names,
        "n_rows": labeled.len(),
        "construction": score,
        "bias_note": bias_note,
    });
    report.decisions = json!({
        "learnability": learn_config,
        "bias": bias_cfg,
        "impute": a.table.impute,
        "availability": avail_name,
        "strict_fails_on": "class-balance warning or bias severity above NONE",
    });
    Ok(Outcome {
        report: Some(report),
        finding,
    })
}

fn cmd_disagree(a: &DisagreeArgs, ctx: &Context) -> Result<Outcome> {
    let mut report = Report::new("disagree");
    report.add_input(&a.input)?;
    let threshold = a.threshold.unwrap_or(ctx.config.experiments.threshold);
    let pairs = ingest::read_paired(&a.input)?;
    let r = experiments::disagreement(&pairs, threshold)?;
    report.results = json!(r);
    report.decisions = json!({ "threshold": threshold });
    Ok(Outcome {
        report: Some(report),
        finding: false,
    })
}

fn cmd_power(a: &PowerArgs, ctx: &Context) -> Result<Outcome> {
    let mut report = Report::new("power");
    let alpha = a.alpha.unwrap_or(ctx.config.experiments.alpha);
    let power = a.power.unwrap_or(ctx.config.experiments.power);
    let r = experiments::required_sample_size(a.p_control, a.mde, alpha, power, a.disagreement)?;
    let mut results = json!(r);
    if let Some(runs) = a.monte_carlo {
        let p = experiments::monte_carlo_power(
            r.p_control,
            r.p_treatment,
            alpha,
            r.n_per_arm,
            runs,
            ctx.seed,
        )?;
        results["monte_carlo"] = json!({ "replications": runs, "rejection_rate": p });
    }
    report.results = results;
    report.decisions = json!({ "alpha": alpha, "power": power, "test": "two-sided pooled two-proportion z-test" });
    Ok(Outcome {
        report: Some(report),
        finding: false,
    })
}

fn cmd_curve(a: &CurveArgs) -> Result<Outcome> {
    let mut report = Report::new("curve");
    let baseline = experiments::parse_decimal(&a.baseline)?;
    let grid = experiments::parse_grid_exact(&a.grid)?;
    let points = experiments::impacted_traffic_curve_exact(baseline, &grid)?;
    let baseline_f64 = baseline.to_f64().expect("small ratio");
    if let Some(path) = &a.svg {
        write_file(path, &svg::curve_chart(&points, baseline_f64))?;
    }
    report.results = json!({
        "baseline": baseline_f64,
        "series": points,
        "svg": a.svg.as_ref().map(|p| p.display().to_string()),
    });
    report.decisions = json!({ "grid": a.grid });
    Ok(Outcome {
        report: Some(report),
        finding: false,
    })
}

fn cmd_blocked_simulate(a: &BlockedSimArgs, ctx: &Context) -> Result<Outcome> {
    let mut report = Report::new("blocked simulate");
    let design = match a.allocation.as_deref() {
        Some(&[base, v1, v2]) => BlockedDesign::new(base, v1, v2)?,
        Some(_) => return Err(Error::input("--allocation takes exactly three shares")),
        None => BlockedDesign::default(),
    };
    let config = BlockedSimConfig {
        n_users: a.n_users,
        base_cvr: a.base_cvr,
        latency_penalty: a.latency_penalty,
        feature_effect: a.feature_effect,
        design,
        seed: ctx.seed,
    };
    let outcomes = blocked::simulate_blocked(&config)?;
    if let Some(path) = &a.outcomes {
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        blocked::write_outcomes(file, &outcomes).map_err(io_err(path))?;
    }
    let analysis = match blocked::analyze_blocked(&outcomes) {
        Ok(an) => json!(an),
        Err(e) => json!({ "note": e.to_string() }),
    };
    report.results = json!({
        "config": config,
        "true_rates": config.rates(),
        "analysis": analysis,
        "outcomes": a.outcomes.as_ref().map(|p| p.display().to_string()),
    });
    report.decisions = json!({ "confidence": blocked::CONFIDENCE, "allocation": design.allocation() });
    Ok(Outcome {
        report: Some(report),
        finding: false,
    })
}

fn cmd_blocked_analyze(a: &BlockedAnalyzeArgs) -> Result<Outcome> {
    let mut report = Report::new("blocked analyze");
    report.add_input(&a.input)?;
    let outcomes = blocked::read_outcomes(&a.input)?;
    report.results = json!(blocked::analyze_blocked(&outcomes)?);
    report.decisions = json!({
        "confidence": blocked::CONFIDENCE,
        "interval": "unpooled normal approximation per contrast",
    });
    Ok(Outcome {
        report: Some(report),
        finding: false,
    })
}

fn cmd_synth(a: &SynthArgs, ctx: &mut Context, output: Option<&Path>) -> Result<Outcome> {
    let records = synth::records(&a.model_id, a.family, a.n, ctx.seed);
    let mut buf = Vec::new();
    ingest::write_score_log(&records, &mut buf)?;
    match output {
        Some(p) => std::fs::write(p, &buf).map_err(io_err(p))?,
        None => ctx
            .out
            .write_all(&buf)
            .map_err(|e| Error::input(format!("stdout: {e}")))?,
    }
    Ok(Outcome {
        report: None,
        finding: false,
    })
}
