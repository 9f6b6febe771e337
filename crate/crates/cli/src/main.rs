use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::{NaiveDate, TimeZone, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use tf_lifeline::corpus::{
    default_jobs, load_project_list, run_entries, run_sensitivity, RunContext,
};
use tf_lifeline::history::{ingest_repository, parse_timestamp, Instant};
use tf_lifeline::identity::{resolve_aliases, RemoteContext};
use tf_lifeline::lifecycle::tf_at;
use tf_lifeline::lookup::{AccountLookup, HttpAccountLookup};
use tf_lifeline::report::{emit_report, sensitivity_csv, to_stable_json, ReportFormat};
use tf_lifeline::{Config, Span};

#[derive(Parser)]
#[command(
    name = "tf-lifeline",
    version,
    about = "Truck factor, TFDD and survival analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline over a project list and write reports.
    Analyze(AnalyzeArgs),
    /// Precision/improvement of abandonment thresholds.
    Sensitivity(SensitivityArgs),
    /// Truck factor of one repository at one instant.
    Tf(TfArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Never contact the account-lookup service.
    #[arg(long)]
    offline: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// File with one repository (git directory or JSON-lines log) per line.
    #[arg(long)]
    projects: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Overrides `abandon.threshold`, e.g. `6m` or `1.5y`.
    #[arg(long)]
    abandon_threshold: Option<Span>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Json, Format::Csv])]
    format: Vec<Format>,
}

#[derive(Args)]
struct SensitivityArgs {
    #[arg(long)]
    projects: PathBuf,
    /// Comma-separated ascending thresholds, e.g. `3m,6m,1y,1.5y,2y`.
    #[arg(long)]
    grid: Option<String>,
    /// Directory for sensitivity.json and sensitivity.csv; stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct TfArgs {
    /// Git repository or JSON-lines log.
    #[arg(long)]
    repo: PathBuf,
    /// `YYYY-MM-DD` (end of day, UTC) or an RFC 3339 timestamp.
    #[arg(long)]
    as_of: Option<String>,
    /// `owner/name` used for account lookups.
    #[arg(long)]
    locator: Option<String>,
    #[command(flatten)]
    common: Common,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn lookup_client(config: &Config, offline: bool) -> Result<Option<HttpAccountLookup>> {
    if offline {
        return Ok(None);
    }
    let client = HttpAccountLookup::from_env(config.paths.lookup_cache.as_deref())?;
    if client.is_none() {
        info!("no lookup endpoint configured; alias resolution uses the mapping file only");
    }
    Ok(client)
}

fn parse_as_of(raw: &str) -> Result<Instant> {
    if let Some(t) = parse_timestamp(raw) {
        return Ok(t);
    }
    let date = NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .with_context(|| format!("invalid --as-of {raw:?}"))?;
    let end = date.and_hms_opt(23, 59, 59).expect("valid time");
    Ok(Utc.from_utc_datetime(&end))
}

fn analyze(args: AnalyzeArgs) -> Result<ExitCode> {
    let mut config = load_config(args.common.config.as_deref())?;
    if let Some(t) = args.abandon_threshold {
        config.abandon.threshold = t;
        config.validate()?;
    }
    let entries = load_project_list(&args.projects)?;
    let mapping = config.alias_mapping()?;
    let client = lookup_client(&config, args.common.offline)?;
    let ctx = RunContext {
        config: &config,
        mapping: mapping.as_ref(),
        lookup: client.as_ref().map(|c| c as &dyn AccountLookup),
    };
    let report = run_entries(&entries, &ctx, args.jobs.unwrap_or_else(default_jobs))?;
    let formats: Vec<ReportFormat> = args
        .format
        .iter()
        .map(|f| match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        })
        .collect();
    emit_report(&report, &formats, &args.out)?;
    let agg = &report.aggregates;
    eprintln!(
        "{} projects: {} analyzed, {} excluded, {} failed; reports in {}",
        agg.projects,
        agg.analyzed,
        agg.excluded,
        agg.failed,
        args.out.display()
    );
    Ok(if agg.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn sensitivity(args: SensitivityArgs) -> Result<ExitCode> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(grid) = &args.grid {
        config.sensitivity.grid = Span::parse_list(grid)?;
        config.validate()?;
    }
    let entries = load_project_list(&args.projects)?;
    let mapping = config.alias_mapping()?;
    let ctx = RunContext {
        config: &config,
        mapping: mapping.as_ref(),
        lookup: None,
    };
    let report = run_sensitivity(&entries, &ctx, args.jobs.unwrap_or_else(default_jobs))?;
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("sensitivity.json"), to_stable_json(&report)?)?;
            std::fs::write(dir.join("sensitivity.csv"), sensitivity_csv(&report)?)?;
        }
        None => print!("{}", String::from_utf8(sensitivity_csv(&report)?)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn tf(args: TfArgs) -> Result<ExitCode> {
    let config = load_config(args.common.config.as_deref())?;
    let repo_id = args.repo.display().to_string();
    let history = ingest_repository(&args.repo, &repo_id)?;
    let as_of = match &args.as_of {
        Some(raw) => parse_as_of(raw)?,
        None => history.head_at(),
    };
    if as_of < history.created_at() {
        bail!("--as-of precedes the first commit");
    }
    let mapping = config.alias_mapping()?;
    let client = lookup_client(&config, args.common.offline)?;
    let remote = match (&client, args.locator.as_deref()) {
        (Some(c), Some(repo_locator)) => Some(RemoteContext {
            client: c,
            repo_locator,
        }),
        _ => None,
    };
    let resolved = resolve_aliases(&history, mapping.as_ref(), remote)?;
    let settings = config.snapshot_settings()?;
    let (_, snapshot) = tf_at(&resolved.history, as_of, &settings)?;
    match snapshot {
        Some(s) => print!("{}", to_stable_json(&s)?),
        None => bail!("truck factor undefined at {as_of}: no file has a main author"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Sensitivity(a) => sensitivity(a),
        Command::Tf(a) => tf(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
