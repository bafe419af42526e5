//! Argument parsing and command dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use teffect_core::sim::report::to_table;

use crate::config::{Command, EstimandRequest, EstimatorChoice, Format, RunConfig};
use crate::error::{exit_code, CliError};
use crate::estimate::{cmd_estimate, curves_csv, results_csv, results_table};
use crate::ingest::ingest_csv;
use crate::output::write_atomic;
use crate::report::{cmd_report, report_csv, report_table};
use crate::simulate::cmd_simulate;

pub const THREADS_ENV: &str = "TEFFECT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "teffect", version, about = "Treatment effects with neural-network nuisance estimates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Estimate effects from a CSV file.
    Estimate(EstimateArgs),
    /// Run the Monte Carlo harness.
    Simulate(SimulateArgs),
    /// Merge simulation CSVs into one table.
    Report(ReportArgs),
}

/// Flags shared by `estimate` and `simulate`; each overrides the config document.
#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Propensity trimming floor.
    #[arg(long)]
    pub trim: Option<f64>,
    /// Repeatable; replaces the configured estimand list.
    #[arg(long = "estimand")]
    pub estimands: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorChoice>,
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long)]
    pub treatment: Option<String>,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Write fitted arm-mean curves along one covariate to this CSV.
    #[arg(long)]
    pub emit_curves: Option<PathBuf>,
    /// Zero-based covariate index for --emit-curves.
    #[arg(long)]
    pub curve_covariate: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directory for report.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Repeatable: ANN-IPW, ANN-OR, GLM-IPW, GLM-OR, Oracle.
    #[arg(long = "estimator")]
    pub estimators: Vec<String>,
    /// 200 replications and the full cross-validation grid.
    #[arg(long)]
    pub full_scale: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to csv for a .csv output path, text otherwise.
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
}

fn load(common: &Common, command: Command) -> anyhow::Result<RunConfig> {
    let mut c = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(a) = common.alpha {
        c.alpha = a;
    }
    if let Some(t) = common.trim {
        c.trim = t;
    }
    if !common.estimands.is_empty() {
        match command {
            Command::Simulate => c.simulation.estimands = common.estimands.clone(),
            _ => c.estimands = common.estimands.iter().map(|e| EstimandRequest::Short(e.clone())).collect(),
        }
    }
    Ok(c)
}

/// Config document with every flag applied; flags win.
pub fn estimate_config(args: &EstimateArgs) -> anyhow::Result<RunConfig> {
    let mut c = load(&args.common, Command::Estimate)?;
    if let Some(d) = &args.data {
        c.data = Some(d.clone());
    }
    if let Some(o) = &args.out {
        c.output.path = Some(o.clone());
    }
    if let Some(f) = args.format {
        c.output.format = Some(f);
    }
    if let Some(e) = args.estimator {
        c.estimator = e;
    }
    if let Some(o) = &args.outcome {
        c.columns.outcome = o.clone();
    }
    if let Some(t) = &args.treatment {
        c.columns.treatment = t.clone();
    }
    if let Some(x) = &args.covariates {
        c.columns.covariates = Some(x.clone());
    }
    if let Some(p) = &args.emit_curves {
        c.emit_curves = Some(p.clone());
    }
    if let Some(k) = args.curve_covariate {
        c.curve_covariate = k;
    }
    c.check(Command::Estimate)?;
    Ok(c)
}

pub fn simulate_config(args: &SimulateArgs) -> anyhow::Result<RunConfig> {
    let mut c = load(&args.common, Command::Simulate)?;
    let s = &mut c.simulation;
    if let Some(n) = args.n {
        s.n = n;
    }
    if let Some(p) = args.p {
        s.p = p;
    }
    if let Some(r) = args.replications {
        s.replications = Some(r);
    }
    if !args.estimators.is_empty() {
        s.estimators = args.estimators.clone();
    }
    if args.full_scale {
        s.full_scale = true;
    }
    c.check(Command::Simulate)?;
    c.sim_config()?;
    Ok(c)
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("config.json")
}

fn run_estimate(args: &EstimateArgs) -> anyhow::Result<ExitCode> {
    let config = estimate_config(args)?;
    let run = cmd_estimate(&config)?;
    let doc = &run.document;
    print!("{}", results_table(doc));
    if let Some(path) = &config.output.path {
        match config.output.resolved_format() {
            Format::Json => write_atomic(path, serde_json::to_string_pretty(doc)?.as_bytes())?,
            Format::Csv => {
                write_atomic(path, results_csv(&doc.results).as_bytes())?;
                write_atomic(&sidecar(path), serde_json::to_string_pretty(&config)?.as_bytes())?;
            }
        }
    }
    if let Some(path) = &config.emit_curves {
        let data = config.data.as_deref().expect("checked by cmd_estimate");
        let sample = ingest_csv(data, &config.columns)?;
        write_atomic(path, curves_csv(&sample, &run.outcome_networks, config.curve_covariate)?.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run_simulate(args: &SimulateArgs) -> anyhow::Result<ExitCode> {
    let config = simulate_config(args)?;
    let report = cmd_simulate(&config, &args.out)?;
    print!("{}", to_table(&report.cells));
    println!("runtime {:.1}s", report.runtime_secs);
    if report.is_valid() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "error: failure fraction {:.3} exceeds the 5% limit in at least one cell",
            report.failure_fraction()
        );
        Ok(ExitCode::from(2))
    }
}

fn run_report(args: &ReportArgs) -> anyhow::Result<ExitCode> {
    let rows = cmd_report(&args.inputs)?;
    let table = report_table(&rows);
    print!("{table}");
    if let Some(path) = &args.out {
        let format = args.format.unwrap_or(match path.extension() {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Text,
        });
        let body = match format {
            ReportFormat::Csv => report_csv(&rows),
            ReportFormat::Text => table,
        };
        write_atomic(path, body.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let k: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|k| *k > 0)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

pub fn dispatch(cli: &Cli) -> anyhow::Result<ExitCode> {
    configure_threads()?;
    match &cli.command {
        Cmd::Estimate(a) => run_estimate(a),
        Cmd::Simulate(a) => run_simulate(a),
        Cmd::Report(a) => run_report(a),
    }
}

/// Parses arguments, runs the command and maps failures to exit codes 1 and 2.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
