mod commands;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hoopstat::ingest::EntityKind;

/// Seed used when neither `--seed` nor `HOOPSTAT_SEED` is given.
pub const DEFAULT_SEED: u64 = 20_210_072;
pub const SEED_ENV: &str = "HOOPSTAT_SEED";

#[derive(Debug, Parser)]
#[command(name = "hoopstat", version, about = "Shot-profile clustering and expected points for basketball shot data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate shot events or validate aggregate counts into a dataset CSV
    Ingest(IngestArgs),
    /// Fit the mixture model by Gibbs sampling
    Fit(FitArgs),
    /// Export the trace of one scalar across retained draws
    Trace(TraceArgs),
    /// Posterior-predictive expected points per entity
    Ep(EpArgs),
    /// Expected points above the average team for players
    Epaa(EpaaArgs),
    /// Simulate a dataset from known parameters
    Simulate(SimulateArgs),
    /// Correlate EPAA with external metrics
    Report(ReportArgs),
    /// Serve the read-only HTTP API over an artifacts directory
    Serve(ServeArgs),
    /// Re-run a command from its manifest and verify the outputs
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
pub struct Source {
    /// Shot-level CSV: entity_id,season,region,made
    #[arg(long, group = "source")]
    pub events: Option<PathBuf>,
    /// Aggregate CSV: entity_id,season,region,attempts,makes
    #[arg(long, group = "source")]
    pub aggregates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, default_value = "team")]
    pub kind: EntityKind,
    /// Keep only the N entities with the most attempts
    #[arg(long)]
    pub top: Option<usize>,
    /// Restrict to one season (required with --top on multi-season data)
    #[arg(long)]
    pub season: Option<i32>,
    /// Custom region scheme as CODE:POINTS pairs, e.g. A:3,B:2
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Aggregate CSV
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "team")]
    pub kind: EntityKind,
    /// Selection clusters
    #[arg(long = "L", default_value_t = 20)]
    pub l: usize,
    /// Accuracy clusters
    #[arg(long = "J", default_value_t = 20)]
    pub j: usize,
    #[arg(long, default_value_t = 5.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 5.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 5.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[arg(long = "burn-in", default_value_t = 3_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    #[arg(long)]
    pub posterior: PathBuf,
    /// Scalar selector: p[l][k], q[j][k], pi[l], theta[j], w[i], z[i], logpost
    #[arg(long)]
    pub param: String,
    /// Write CSV here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EpArgs {
    #[arg(long)]
    pub posterior: PathBuf,
    #[arg(long = "n-shots", default_value_t = 8_000)]
    pub n_shots: u64,
    /// Games per season for per-game scaling
    #[arg(long, default_value_t = 72.0)]
    pub games: f64,
    /// Entity id, id_season label, comma-separated list, or `all`
    #[arg(long, default_value = "all")]
    pub entity: String,
    #[arg(long = "samples-per-draw", default_value_t = 1)]
    pub samples_per_draw: usize,
    /// Ranking key for the summary: mean or median
    #[arg(long = "rank-by", default_value = "median")]
    pub rank_by: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EpaaArgs {
    #[arg(long = "player-posterior")]
    pub player_posterior: PathBuf,
    #[arg(long = "team-posterior")]
    pub team_posterior: PathBuf,
    /// Shots in the hypothetical season: an integer or `observed`
    #[arg(long = "n-shots", default_value = "observed")]
    pub n_shots: String,
    #[arg(long, default_value_t = 72.0)]
    pub games: f64,
    /// Player id, id_season label, comma-separated list, or `all`
    #[arg(long, default_value = "all")]
    pub players: String,
    #[arg(long = "samples-per-draw", default_value_t = 1)]
    pub samples_per_draw: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON with `state` (p, q, w, z, pi, theta; labels 1-based) and optional `scheme`, `season`
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long = "shots-per-entity")]
    pub shots_per_entity: u64,
    #[arg(long, default_value = "team")]
    pub kind: EntityKind,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of an `epaa` run
    #[arg(long)]
    pub epaa: PathBuf,
    /// External metrics CSV: entity_id,season,metric,value
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub artifacts: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u32,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Allowed CORS origin; any origin when absent
    #[arg(long = "cors-origin")]
    pub cors_origin: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Errors caused by the invocation rather than the data; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn is_usage(err: &anyhow::Error) -> bool {
    use hoopstat::pipeline::PipelineError;
    use hoopstat::predictive::PredictiveError;
    use hoopstat::report::ReportError;
    use hoopstat::sampler::SamplerError;
    err.chain().any(|e| {
        e.is::<UsageError>()
            || matches!(
                e.downcast_ref::<SamplerError>(),
                Some(SamplerError::InvalidPriors(_) | SamplerError::InvalidConfig(_) | SamplerError::UnknownSelector { .. })
            )
            || matches!(e.downcast_ref::<PredictiveError>(), Some(PredictiveError::InvalidConfig(_)))
            || matches!(
                e.downcast_ref::<PipelineError>(),
                Some(PipelineError::UnknownEntity { .. } | PipelineError::Predictive(PredictiveError::InvalidConfig(_)))
            )
            || matches!(e.downcast_ref::<ReportError>(), Some(ReportError::UnknownKey(_)))
    })
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli, argv[1..].to_vec()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_usage(&e) { 2 } else { 1 })
        }
    }
}
