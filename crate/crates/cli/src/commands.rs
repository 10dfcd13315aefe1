use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use hoopstat::artifact::{self, posterior_digest, read_posterior, write_file, write_posterior};
use hoopstat::ingest::{parse_aggregates_with_scheme, parse_shot_events, top_n_shot_takers, Dataset, EntityKind};
use hoopstat::pipeline::{run_ep, run_epaa, select_entities, ShotCount};
use hoopstat::predictive::{simulate_dataset, PredictiveConfig};
use hoopstat::region::RegionScheme;
use hoopstat::report::{correlate, parse_metrics, Correlation, RankBy};
use hoopstat::sampler::{effective_sample_size, init_warnings, run_chain, trace_export, ChainConfig, PosteriorDraws, Priors, Selector};
use serde::Serialize;

use crate::manifest::{read_manifest, ManifestBuilder, MANIFEST_FILE};
use crate::{usage, Cli, Command, DEFAULT_SEED, SEED_ENV};

pub const DATA_FILE: &str = "data.csv";
pub const CORRELATIONS_JSON: &str = "correlations.json";
pub const CORRELATIONS_CSV: &str = "correlations.csv";

/// Flag value, then `HOOPSTAT_SEED`, then the built-in default.
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV}=`{v}` is not a non-negative integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// Arguments with `--seed` made explicit so a replay does not depend on the
/// environment.
fn explicit_seed_args(args: &[String], seed: u64) -> Vec<String> {
    let mut out = args.to_vec();
    if !args.iter().any(|a| a == "--seed" || a.starts_with("--seed=")) {
        out.push("--seed".into());
        out.push(seed.to_string());
    }
    out
}

fn parse_scheme(spec: Option<&str>) -> Result<RegionScheme> {
    let Some(spec) = spec else {
        return Ok(RegionScheme::nba());
    };
    let mut regions = Vec::new();
    for part in spec.split(',') {
        let (code, points) = part
            .split_once(':')
            .ok_or_else(|| usage(format!("scheme entry `{part}` is not CODE:POINTS")))?;
        let points: u32 = points
            .trim()
            .parse()
            .map_err(|_| usage(format!("scheme entry `{part}` has invalid points")))?;
        regions.push((code.trim().to_string(), points));
    }
    RegionScheme::custom(regions).map_err(usage)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn read_aggregates(path: &Path, kind: EntityKind, scheme: RegionScheme) -> Result<Dataset> {
    parse_aggregates_with_scheme(open(path)?, kind, scheme).with_context(|| format!("reading {}", path.display()))
}

fn load_posterior(dir: &Path) -> Result<PosteriorDraws> {
    read_posterior(dir).with_context(|| format!("loading posterior {}", dir.display()))
}

pub fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(a, args),
        Command::Fit(a) => fit(a, args),
        Command::Trace(a) => trace(a),
        Command::Ep(a) => ep(a, args),
        Command::Epaa(a) => epaa(a, args),
        Command::Simulate(a) => simulate(a, args),
        Command::Report(a) => report(a, args),
        Command::Serve(a) => serve(a),
        Command::Replay(a) => replay(a),
    }
}

fn ingest(a: crate::IngestArgs, args: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let scheme = parse_scheme(a.scheme.as_deref())?;
    let (input, mut data) = match (&a.source.events, &a.source.aggregates) {
        (Some(p), _) => {
            if a.scheme.is_some() {
                return Err(usage("--scheme applies to --aggregates only"));
            }
            let d = parse_shot_events(open(p)?, a.kind).with_context(|| format!("reading {}", p.display()))?;
            (p, d)
        }
        (None, Some(p)) => (p, read_aggregates(p, a.kind, scheme)?),
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(n) = a.top {
        let top = top_n_shot_takers(&data, n, a.season)?;
        if top.short {
            eprintln!("warning: only {} entities available, fewer than the {n} requested", top.dataset.len());
        }
        data = top.dataset;
    } else if let Some(season) = a.season {
        data = data.filter(|r| r.key.season == season)?;
    }
    let out = a.out.join(DATA_FILE);
    write_file(&out, &data.to_aggregate_csv())?;
    let mut m = ManifestBuilder::new("ingest", args, None);
    m.input_file(input)?
        .flag("kind", a.kind)
        .flag("top", a.top)
        .flag("season", a.season)
        .flag("fingerprint", data.fingerprint());
    m.write(&a.out, &[out], start.elapsed())?;
    println!("{} entities, {} attempts -> {}", data.len(), data.total_attempts(), a.out.join(DATA_FILE).display());
    Ok(())
}

fn fit(a: crate::FitArgs, args: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let seed = resolve_seed(a.seed)?;
    let priors = Priors::new(a.l, a.j, a.alpha, a.beta, a.gamma);
    priors.validate()?;
    let mut config = ChainConfig::new(a.iters, a.burn_in, a.thin, seed);
    config.chains = a.chains;
    config.validate()?;
    let scheme = parse_scheme(a.scheme.as_deref())?;
    let data = read_aggregates(&a.data, a.kind, scheme)?;
    for w in init_warnings(&data, &priors) {
        eprintln!("warning: {w}");
    }
    let post = run_chain(&data, &priors, &config)?;
    let written = write_posterior(&a.out, &post)?;

    let mut m = ManifestBuilder::new("fit", explicit_seed_args(&args, seed), Some(seed));
    m.input_file(&a.data)?.flag("priors", &priors).flag("config", &config);
    m.write(&a.out, &written, start.elapsed())?;

    println!("{} retained draws over {} chain(s) -> {}", post.len(), config.chains, a.out.display());
    print_ess(&post)?;
    if priors.selection_clusters == 1 && priors.accuracy_clusters == 1 {
        print_conjugate_means(&post);
    }
    Ok(())
}

/// ESS per monitored scalar, summed over chains.
fn print_ess(post: &PosteriorDraws) -> Result<()> {
    println!("{:<12} {:>10}  note", "scalar", "ess");
    let per_chain = post.config.retained_per_chain();
    for sel in Selector::monitored(post) {
        let values: Vec<f64> = trace_export(post, sel).into_iter().map(|r| r.value).collect();
        let mut total = 0.0;
        let mut notes = Vec::new();
        for chunk in values.chunks(per_chain.max(1)) {
            match effective_sample_size(chunk) {
                Ok(e) => {
                    total += e.value;
                    if e.degenerate {
                        notes.push("constant");
                    } else if e.clamped {
                        notes.push("clamped");
                    }
                }
                Err(_) => notes.push("too short"),
            }
        }
        notes.dedup();
        println!("{:<12} {:>10.1}  {}", sel.to_string(), total, notes.join(","));
    }
    Ok(())
}

/// With one cluster per facet the posterior is conjugate; print sampled
/// means next to the closed form.
fn print_conjugate_means(post: &PosteriorDraws) {
    let data = &post.dataset;
    let k = data.regions();
    let s = post.draws.len() as f64;
    let mut attempts = vec![0u64; k];
    let mut makes = vec![0u64; k];
    for row in data.rows() {
        for r in 0..k {
            attempts[r] += row.attempts()[r];
            makes[r] += row.makes()[r];
        }
    }
    let total = attempts.iter().sum::<u64>() as f64;
    let alpha = post.priors.alpha;
    let (a0, b0) = (post.priors.beta_a, post.priors.beta_b);
    println!("{:<8} {:>12} {:>12} {:>12} {:>12}", "region", "p_mean", "p_exact", "q_mean", "q_exact");
    for (r, code) in data.scheme().codes().enumerate() {
        let p_mean = post.draws.iter().map(|d| d.p[0][r]).sum::<f64>() / s;
        let q_mean = post.draws.iter().map(|d| d.q[0][r]).sum::<f64>() / s;
        let p_exact = (alpha + attempts[r] as f64) / (k as f64 * alpha + total);
        let q_exact = (a0 + makes[r] as f64) / (a0 + b0 + attempts[r] as f64);
        println!("{code:<8} {p_mean:>12.6} {p_exact:>12.6} {q_mean:>12.6} {q_exact:>12.6}");
    }
}

fn trace(a: crate::TraceArgs) -> Result<()> {
    let post = load_posterior(&a.posterior)?;
    let sel = Selector::parse(&a.param, &post)?;
    let mut buf = Vec::new();
    writeln!(buf, "chain,iteration,{sel}")?;
    for row in trace_export(&post, sel) {
        writeln!(buf, "{},{},{}", row.chain + 1, row.iteration, row.value)?;
    }
    match &a.out {
        Some(path) => write_file(path, &buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

fn ep(a: crate::EpArgs, args: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let seed = resolve_seed(a.seed)?;
    let rank_by: RankBy = a.rank_by.parse()?;
    let cfg = PredictiveConfig {
        n_shots: a.n_shots,
        games_divisor: a.games,
        samples_per_draw: a.samples_per_draw,
        seed,
        keep_region_detail: false,
    };
    cfg.validate()?;
    let post = load_posterior(&a.posterior)?;
    let entities = select_entities(&post, &a.entity)?;
    let (ranked, written) = run_ep(&post, &entities, &cfg, rank_by, &a.out)?;

    let mut m = ManifestBuilder::new("ep", explicit_seed_args(&args, seed), Some(seed));
    m.input_digest(&a.posterior, posterior_digest(&post)).flag("config", &cfg).flag("rank_by", rank_by);
    m.write(&a.out, &written, start.elapsed())?;

    println!("{:>4}  {:<24} {:>10} {:>10}", "rank", "entity", "mean/g", "median/g");
    for r in &ranked {
        println!("{:>4}  {:<24} {:>10.2} {:>10.2}", r.rank, r.summary.label, r.summary.mean, r.summary.median);
    }
    Ok(())
}

fn parse_shot_count(raw: &str) -> Result<ShotCount> {
    if raw == "observed" {
        return Ok(ShotCount::Observed);
    }
    match raw.parse::<u64>() {
        Ok(n) if n > 0 => Ok(ShotCount::Fixed(n)),
        _ => Err(usage(format!("--n-shots must be a positive integer or `observed`, got `{raw}`"))),
    }
}

fn epaa(a: crate::EpaaArgs, args: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let seed = resolve_seed(a.seed)?;
    let shots = parse_shot_count(&a.n_shots)?;
    let cfg = PredictiveConfig {
        n_shots: match shots {
            ShotCount::Fixed(n) => n,
            ShotCount::Observed => 1,
        },
        games_divisor: a.games,
        samples_per_draw: a.samples_per_draw,
        seed,
        keep_region_detail: false,
    };
    cfg.validate()?;
    let players = load_posterior(&a.player_posterior)?;
    let teams = load_posterior(&a.team_posterior)?;
    if players.regions() != teams.regions() {
        bail!(
            "player posterior has {} regions but team posterior has {}",
            players.regions(),
            teams.regions()
        );
    }
    let keys = select_entities(&players, &a.players)?;
    let run = run_epaa(&players, &teams, &keys, shots, &cfg, &a.out)?;
    for s in &run.skipped {
        eprintln!("warning: {s} has no recorded shots and was skipped");
    }

    let mut m = ManifestBuilder::new("epaa", explicit_seed_args(&args, seed), Some(seed));
    m.input_digest(&a.player_posterior, posterior_digest(&players))
        .input_digest(&a.team_posterior, posterior_digest(&teams))
        .flag("config", &cfg)
        .flag("n_shots", &a.n_shots);
    m.write(&a.out, &run.written, start.elapsed())?;

    println!("{:>6} {:>4}  {:<20} {:>10} {:>8} {:>8}", "season", "rank", "player", "epaa", "mean/g", "sd/g");
    for r in &run.table.rows {
        println!(
            "{:>6} {:>4}  {:<20} {:>10.1} {:>8.3} {:>8.3}",
            r.season, r.rank, r.entity_id, r.epaa_mean, r.mean, r.sd
        );
    }
    Ok(())
}

fn simulate(a: crate::SimulateArgs, args: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let seed = resolve_seed(a.seed)?;
    let bytes = std::fs::read(&a.truth).with_context(|| format!("reading {}", a.truth.display()))?;
    let truth = artifact::decode_truth(&bytes).with_context(|| format!("parsing {}", a.truth.display()))?;
    let shots = vec![a.shots_per_entity; truth.state.w.len()];
    let data = simulate_dataset(&truth.state, &shots, &truth.scheme(), a.kind, truth.season, seed)?;
    let out = a.out.join(DATA_FILE);
    write_file(&out, &data.to_aggregate_csv())?;
    let mut m = ManifestBuilder::new("simulate", explicit_seed_args(&args, seed), Some(seed));
    m.input_file(&a.truth)?.flag("shots_per_entity", a.shots_per_entity).flag("kind", a.kind);
    m.write(&a.out, &[out.clone()], start.elapsed())?;
    println!("{} entities -> {}", data.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct CorrelationRow {
    x: String,
    y: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn report(a: crate::ReportArgs, args: Vec<String>) -> Result<()> {
    let start = Instant::now();
    let table_path = a.epaa.join(artifact::EPAA_TABLE_FILE);
    let table = artifact::decode_epaa_table(&std::fs::read(&table_path).with_context(|| format!("reading {}", table_path.display()))?)?;
    let metrics = parse_metrics(open(&a.metrics)?).with_context(|| format!("reading {}", a.metrics.display()))?;
    let mut series: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    series.insert("EPAA".into(), table.rows.iter().map(|r| (r.label.clone(), r.epaa_mean)).collect());
    for name in metrics.names() {
        series.insert(name.to_string(), metrics.get(name).cloned().unwrap_or_default());
    }
    let mut names: Vec<&String> = series.keys().collect();
    names.sort_by_key(|n| (n.as_str() != "EPAA", n.to_string()));
    let mut rows = Vec::new();
    for (i, x) in names.iter().enumerate() {
        for y in &names[i + 1..] {
            let row = match correlate(&series[*x], &series[*y]) {
                Ok(Correlation { r, n }) => CorrelationRow {
                    x: x.to_string(),
                    y: y.to_string(),
                    r: Some(r),
                    n,
                    error: None,
                },
                Err(e) => CorrelationRow {
                    x: x.to_string(),
                    y: y.to_string(),
                    r: None,
                    n: 0,
                    error: Some(e.to_string()),
                },
            };
            rows.push(row);
        }
    }
    let json_path = a.out.join(CORRELATIONS_JSON);
    write_file(&json_path, &artifact::json_bytes(&rows))?;
    let mut csv = String::from("x,y,r,n,error\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.x,
            r.y,
            r.r.map(|v| v.to_string()).unwrap_or_default(),
            r.n,
            r.error.as_deref().unwrap_or("").replace(',', ";")
        ));
    }
    let csv_path = a.out.join(CORRELATIONS_CSV);
    write_file(&csv_path, csv.as_bytes())?;
    let mut m = ManifestBuilder::new("report", args, None);
    m.input_file(&table_path)?.input_file(&a.metrics)?;
    m.write(&a.out, &[json_path, csv_path], start.elapsed())?;
    for r in &rows {
        match (r.r, &r.error) {
            (Some(v), _) => println!("{:<8} vs {:<8} r = {v:.3} (n = {})", r.x, r.y, r.n),
            (None, Some(e)) => println!("{:<8} vs {:<8} {e}", r.x, r.y),
            _ => {}
        }
    }
    Ok(())
}

fn serve(a: crate::ServeArgs) -> Result<()> {
    if !a.artifacts.is_dir() {
        bail!("artifacts directory {} does not exist", a.artifacts.display());
    }
    let port = u16::try_from(a.port).map_err(|_| anyhow::anyhow!("invalid port {}", a.port))?;
    let origin = a
        .cors_origin
        .as_deref()
        .map(hoopstat_service::HeaderValue::from_str)
        .transpose()
        .map_err(|_| usage("--cors-origin is not a valid header value"))?;
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info,tower_http=debug".into()))
        .with_writer(std::io::stderr)
        .init();
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), port))
            .await
            .with_context(|| format!("binding {}:{port}", a.host))?;
        println!("listening on http://{}", listener.local_addr()?);
        use std::io::Write as _;
        std::io::stdout().flush()?;
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        hoopstat_service::serve(listener, a.artifacts.clone(), origin, shutdown).await?;
        Ok(())
    })
}

fn replace_out(args: &[String], out: &Path) -> Vec<String> {
    let mut result = Vec::with_capacity(args.len());
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        if arg == "--out" {
            iter.next();
            result.push("--out".into());
            result.push(out.display().to_string());
        } else if arg.starts_with("--out=") {
            result.push(format!("--out={}", out.display()));
        } else {
            result.push(arg.clone());
        }
    }
    result
}

fn replay(a: crate::ReplayArgs) -> Result<()> {
    use clap::Parser;
    let recorded = read_manifest(&a.manifest)?;
    let out: PathBuf = match &a.out {
        Some(o) => o.clone(),
        None => a.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let args = replace_out(&recorded.args, &out);
    if args.first().map(String::as_str) == Some("replay") {
        return Err(usage("a replay manifest cannot replay itself"));
    }
    let cli = Cli::try_parse_from(std::iter::once("hoopstat".to_string()).chain(args.iter().cloned()))
        .map_err(|e| usage(format!("recorded arguments no longer parse: {e}")))?;
    run(cli, args)?;
    let fresh = read_manifest(&out.join(MANIFEST_FILE))?;
    let mut mismatches = Vec::new();
    for (path, hash) in &recorded.outputs {
        match fresh.outputs.get(path) {
            Some(h) if h == hash => {}
            Some(_) => mismatches.push(format!("{path}: content differs")),
            None => mismatches.push(format!("{path}: not produced")),
        }
    }
    if !mismatches.is_empty() {
        bail!("replay diverged from the manifest:\n  {}", mismatches.join("\n  "));
    }
    println!("replay reproduced {} output(s) bit-exactly", recorded.outputs.len());
    Ok(())
}
