//! Summaries, rankings and correlations with external metrics.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::EntityKey;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot summarise an empty sample")]
    Empty,
    #[error("sample contains non-finite values")]
    NonFinite,
    #[error("correlation needs at least 3 shared labels, found {0}")]
    TooFewShared(usize),
    #[error("correlation is undefined: {0} is constant over the shared labels")]
    Constant(&'static str),
    #[error("unknown ranking key `{0}` (expected mean or median)")]
    UnknownKey(String),
    #[error("metrics line {line}: {message}")]
    Metrics { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Posterior summary of one label's sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub mean: f64,
    pub median: f64,
    pub ci80: (f64, f64),
    pub ci95: (f64, f64),
    pub sd: f64,
    pub n: usize,
}

/// Quantile of sorted data by linear interpolation between order
/// statistics: position `(n - 1) * prob`.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Mean, median, 80% and 95% central intervals and sample standard
/// deviation (divisor `n - 1`, zero for a single value).
pub fn summarize(label: impl Into<String>, values: &[f64]) -> Result<SummaryRow, ReportError> {
    if values.is_empty() {
        return Err(ReportError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ReportError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let q = |p| quantile_sorted(&sorted, p);
    Ok(SummaryRow {
        label: label.into(),
        mean,
        median: q(0.5),
        ci80: (q(0.1), q(0.9)),
        ci95: (q(0.025), q(0.975)),
        sd,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankBy {
    Mean,
    Median,
}

impl FromStr for RankBy {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(RankBy::Mean),
            "median" => Ok(RankBy::Median),
            other => Err(ReportError::UnknownKey(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub rank: usize,
    #[serde(flatten)]
    pub summary: SummaryRow,
}

/// Sorts by the key, greatest first. Equal keys share the smaller rank
/// (1, 1, 3) and are ordered by label.
pub fn rank_entities(rows: Vec<SummaryRow>, by: RankBy) -> Vec<RankedRow> {
    let key = |r: &SummaryRow| match by {
        RankBy::Mean => r.mean,
        RankBy::Median => r.median,
    };
    let mut rows = rows;
    rows.sort_by(|a, b| key(b).total_cmp(&key(a)).then_with(|| a.label.cmp(&b.label)));
    let mut out: Vec<RankedRow> = Vec::with_capacity(rows.len());
    for (pos, summary) in rows.into_iter().enumerate() {
        let rank = match out.last() {
            Some(prev) if key(&prev.summary) == key(&summary) => prev.rank,
            _ => pos + 1,
        };
        out.push(RankedRow { rank, summary });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub n: usize,
}

/// Pearson correlation over the labels present in both maps.
pub fn correlate(x: &BTreeMap<String, f64>, y: &BTreeMap<String, f64>) -> Result<Correlation, ReportError> {
    let pairs: Vec<(f64, f64)> = x.iter().filter_map(|(k, &a)| y.get(k).map(|&b| (a, b))).collect();
    let n = pairs.len();
    if n < 3 {
        return Err(ReportError::TooFewShared(n));
    }
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(ReportError::NonFinite);
    }
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    if sxx == 0.0 {
        return Err(ReportError::Constant("x"));
    }
    if syy == 0.0 {
        return Err(ReportError::Constant("y"));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    Ok(Correlation { r, n })
}

/// External metrics keyed by metric name, then by entity label
/// (`{entity_id}_{season}`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub metrics: BTreeMap<String, BTreeMap<String, f64>>,
}

impl MetricsTable {
    pub fn get(&self, metric: &str) -> Option<&BTreeMap<String, f64>> {
        self.metrics.get(metric)
    }

    pub fn names(&self) -> Vec<&str> {
        self.metrics.keys().map(String::as_str).collect()
    }
}

/// Parses `entity_id,season,metric,value`. Duplicate (entity, season,
/// metric) triples are rejected.
pub fn parse_metrics<R: Read>(input: R) -> Result<MetricsTable, ReportError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != ["entity_id", "season", "metric", "value"] {
        return Err(ReportError::Metrics {
            line: 1,
            message: format!("expected header entity_id,season,metric,value, found {}", header.join(",")),
        });
    }
    let mut table = MetricsTable::default();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let err = |message: String| ReportError::Metrics { line, message };
        if record.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", record.len())));
        }
        let id = &record[0];
        if id.is_empty() {
            return Err(err("empty entity_id".into()));
        }
        let season: i32 = record[1].parse().map_err(|_| err(format!("invalid season `{}`", &record[1])))?;
        let metric = &record[2];
        if metric.is_empty() {
            return Err(err("empty metric name".into()));
        }
        let value: f64 = record[3].parse().map_err(|_| err(format!("invalid value `{}`", &record[3])))?;
        if !value.is_finite() {
            return Err(err(format!("non-finite value `{}`", &record[3])));
        }
        let label = EntityKey::new(id, season).label();
        let slot = table.metrics.entry(metric.to_string()).or_default();
        if slot.insert(label.clone(), value).is_some() {
            return Err(err(format!("duplicate {metric} for {label}")));
        }
    }
    Ok(table)
}

/// Writes ranked rows as CSV.
pub fn write_ranked_csv<W: Write>(rows: &[RankedRow], writer: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "label", "mean", "median", "sd", "ci80_lo", "ci80_hi", "ci95_lo", "ci95_hi", "n"])?;
    for row in rows {
        let s = &row.summary;
        w.write_record([
            row.rank.to_string(),
            s.label.clone(),
            s.mean.to_string(),
            s.median.to_string(),
            s.sd.to_string(),
            s.ci80.0.to_string(),
            s.ci80.1.to_string(),
            s.ci95.0.to_string(),
            s.ci95.1.to_string(),
            s.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("report types always serialise");
    out.push(b'\n');
    out
}

/// One row of a per-season EPAA table. Summary statistics are per game;
/// `epaa_mean` is the season-total mean difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpaaRow {
    pub rank: usize,
    pub entity_id: String,
    pub season: i32,
    pub label: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub ci80: (f64, f64),
    pub ci95: (f64, f64),
    pub epaa_mean: f64,
    pub n_shots: u64,
    pub draws: usize,
}

/// Input to [`epaa_table`] for one player-season.
#[derive(Debug, Clone)]
pub struct EpaaEntry {
    pub key: EntityKey,
    pub per_game: Vec<f64>,
    pub epaa_mean: f64,
    pub n_shots: u64,
}

/// Summarises and ranks players by mean within each season. Rows are
/// ordered by season, then rank.
pub fn epaa_table(entries: &[EpaaEntry]) -> Result<Vec<EpaaRow>, ReportError> {
    let mut by_season: BTreeMap<i32, Vec<(SummaryRow, &EpaaEntry)>> = BTreeMap::new();
    for e in entries {
        let summary = summarize(e.key.label(), &e.per_game)?;
        by_season.entry(e.key.season).or_default().push((summary, e));
    }
    let mut out = Vec::with_capacity(entries.len());
    for (_, group) in by_season {
        let lookup: BTreeMap<String, &EpaaEntry> = group.iter().map(|(s, e)| (s.label.clone(), *e)).collect();
        let ranked = rank_entities(group.into_iter().map(|(s, _)| s).collect(), RankBy::Mean);
        for r in ranked {
            let e = lookup[&r.summary.label];
            out.push(EpaaRow {
                rank: r.rank,
                entity_id: e.key.entity_id.clone(),
                season: e.key.season,
                label: r.summary.label,
                mean: r.summary.mean,
                median: r.summary.median,
                sd: r.summary.sd,
                ci80: r.summary.ci80,
                ci95: r.summary.ci95,
                epaa_mean: e.epaa_mean,
                n_shots: e.n_shots,
                draws: r.summary.n,
            });
        }
    }
    Ok(out)
}

/// Writes an EPAA table as CSV.
pub fn write_epaa_csv<W: Write>(rows: &[EpaaRow], writer: W) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "rank", "entity_id", "season", "mean", "median", "sd", "ci80_lo", "ci80_hi", "ci95_lo", "ci95_hi", "epaa_mean", "n_shots", "draws",
    ])?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.entity_id.clone(),
            r.season.to_string(),
            r.mean.to_string(),
            r.median.to_string(),
            r.sd.to_string(),
            r.ci80.0.to_string(),
            r.ci80.1.to_string(),
            r.ci95.0.to_string(),
            r.ci95.1.to_string(),
            r.epaa_mean.to_string(),
            r.n_shots.to_string(),
            r.draws.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
