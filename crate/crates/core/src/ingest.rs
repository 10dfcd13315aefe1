//! CSV ingestion into per-entity region count tables.
//!
//! Two input layouts are accepted:
//!
//! * event level: `entity_id,season,region,made` with `made` in `{0,1}`
//! * pre-aggregated: `entity_id,season,region,attempts,makes`
//!
//! Both produce a [`Dataset`] whose rows are sorted by `(entity_id, season)`.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::region::RegionScheme;

pub const EVENT_HEADER: [&str; 4] = ["entity_id", "season", "region", "made"];
pub const AGGREGATE_HEADER: [&str; 5] = ["entity_id", "season", "region", "attempts", "makes"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input is empty")]
    Empty,
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: unknown region code `{code}`")]
    UnknownRegion { line: u64, code: String },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: makes exceed attempts ({makes} > {attempts}) for {entity} {season} {region}")]
    MakesExceedAttempts {
        line: u64,
        entity: String,
        season: i32,
        region: String,
        attempts: i64,
        makes: i64,
    },
    #[error("line {line}: negative count in `{field}`")]
    NegativeCount { line: u64, field: &'static str },
    #[error("line {line}: duplicate row for {entity} {season} {region}")]
    DuplicateRegion {
        line: u64,
        entity: String,
        season: i32,
        region: String,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("dataset spans seasons {0:?}; pass a season to filter on")]
    MultipleSeasons(Vec<i32>),
    #[error("no rows for season {0}")]
    NoSuchSeason(i32),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Team,
    Player,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Team => "team",
            EntityKind::Player => "player",
        })
    }
}

impl std::str::FromStr for EntityKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "team" => Ok(EntityKind::Team),
            "player" => Ok(EntityKind::Player),
            other => Err(format!("unknown entity kind `{other}` (expected team or player)")),
        }
    }
}

/// Identity of one row: an entity in one season.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityKey {
    pub entity_id: String,
    pub season: i32,
}

impl EntityKey {
    pub fn new(entity_id: impl Into<String>, season: i32) -> Self {
        EntityKey {
            entity_id: entity_id.into(),
            season,
        }
    }

    /// Join key used by reports and external metrics: `{entity_id}_{season}`.
    pub fn label(&self) -> String {
        format!("{}_{}", self.entity_id, self.season)
    }
}

impl fmt::Display for EntityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.entity_id, self.season)
    }
}

/// Attempts and makes per region for one entity-season.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionCounts {
    pub key: EntityKey,
    attempts: Vec<u64>,
    makes: Vec<u64>,
}

impl RegionCounts {
    pub fn new(key: EntityKey, attempts: Vec<u64>, makes: Vec<u64>) -> Result<Self, IngestError> {
        if attempts.len() != makes.len() {
            return Err(IngestError::Invalid(format!(
                "{key}: attempts has {} regions but makes has {}",
                attempts.len(),
                makes.len()
            )));
        }
        if let Some(k) = (0..attempts.len()).find(|&k| makes[k] > attempts[k]) {
            return Err(IngestError::Invalid(format!(
                "{key}: makes exceed attempts in region {k} ({} > {})",
                makes[k], attempts[k]
            )));
        }
        Ok(RegionCounts { key, attempts, makes })
    }

    pub fn zeros(key: EntityKey, regions: usize) -> Self {
        RegionCounts {
            key,
            attempts: vec![0; regions],
            makes: vec![0; regions],
        }
    }

    pub fn attempts(&self) -> &[u64] {
        &self.attempts
    }

    pub fn makes(&self) -> &[u64] {
        &self.makes
    }

    pub fn regions(&self) -> usize {
        self.attempts.len()
    }

    pub fn total_attempts(&self) -> u64 {
        self.attempts.iter().sum()
    }

    pub fn total_makes(&self) -> u64 {
        self.makes.iter().sum()
    }

    fn add_attempt(&mut self, k: usize, made: bool) {
        self.attempts[k] += 1;
        if made {
            self.makes[k] += 1;
        }
    }
}

/// Validated collection of region counts for a single kind of entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    kind: EntityKind,
    scheme: RegionScheme,
    rows: Vec<RegionCounts>,
}

impl Dataset {
    /// Sorts rows by key and checks uniqueness, nonemptiness and dimensions.
    pub fn new(kind: EntityKind, scheme: RegionScheme, mut rows: Vec<RegionCounts>) -> Result<Self, IngestError> {
        if rows.is_empty() {
            return Err(IngestError::Invalid("dataset has no rows".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.regions() != scheme.len()) {
            return Err(IngestError::Invalid(format!(
                "{} has {} regions, scheme has {}",
                bad.key,
                bad.regions(),
                scheme.len()
            )));
        }
        rows.sort_by(|a, b| a.key.cmp(&b.key));
        if let Some(w) = rows.windows(2).find(|w| w[0].key == w[1].key) {
            return Err(IngestError::Invalid(format!("duplicate row for {}", w[0].key)));
        }
        Ok(Dataset { kind, scheme, rows })
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn scheme(&self) -> &RegionScheme {
        &self.scheme
    }

    pub fn rows(&self) -> &[RegionCounts] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn regions(&self) -> usize {
        self.scheme.len()
    }

    pub fn keys(&self) -> Vec<EntityKey> {
        self.rows.iter().map(|r| r.key.clone()).collect()
    }

    pub fn get(&self, key: &EntityKey) -> Option<&RegionCounts> {
        self.rows
            .binary_search_by(|r| r.key.cmp(key))
            .ok()
            .map(|i| &self.rows[i])
    }

    /// Distinct seasons, ascending.
    pub fn seasons(&self) -> Vec<i32> {
        let mut s: Vec<i32> = self.rows.iter().map(|r| r.key.season).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn total_attempts(&self) -> u64 {
        self.rows.iter().map(RegionCounts::total_attempts).sum()
    }

    /// Writes the aggregate CSV layout, one line per (row, region), all regions included.
    pub fn write_aggregates<W: Write>(&self, writer: W) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(AGGREGATE_HEADER)?;
        for row in &self.rows {
            for (k, code) in self.scheme.codes().enumerate() {
                w.write_record([
                    row.key.entity_id.as_str(),
                    &row.key.season.to_string(),
                    code,
                    &row.attempts[k].to_string(),
                    &row.makes[k].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_aggregate_csv(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_aggregates(&mut buf)
            .expect("writing CSV into memory cannot fail");
        buf
    }

    /// SHA-256 over kind, region scheme and canonical aggregate CSV.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.kind.to_string().as_bytes());
        h.update(b"\n");
        for k in 0..self.scheme.len() {
            let spec = self.scheme.spec(k);
            h.update(format!("{}:{}\n", spec.code, spec.points).as_bytes());
        }
        h.update(self.to_aggregate_csv());
        hex::encode(h.finalize())
    }

    /// Keeps only the rows whose key satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(&RegionCounts) -> bool) -> Result<Dataset, IngestError> {
        let rows = self.rows.iter().filter(|r| keep(r)).cloned().collect();
        Dataset::new(self.kind, self.scheme.clone(), rows)
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    let found_v: Vec<&str> = found.iter().map(str::trim).collect();
    if found_v != expected {
        return Err(IngestError::Header {
            expected: expected.join(","),
            found: found_v.join(","),
        });
    }
    Ok(())
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, name: &str, line: u64) -> Result<&'a str, IngestError> {
    match rec.get(i) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(IngestError::Malformed {
            line,
            message: format!("missing `{name}`"),
        }),
    }
}

fn parse_season(raw: &str, line: u64) -> Result<i32, IngestError> {
    match raw.parse::<i32>() {
        Ok(y) if (1000..=9999).contains(&y) => Ok(y),
        _ => Err(IngestError::Malformed {
            line,
            message: format!("season `{raw}` is not a 4-digit year"),
        }),
    }
}

fn parse_count(raw: &str, name: &'static str, line: u64) -> Result<u64, IngestError> {
    let v: i64 = raw.parse().map_err(|_| IngestError::Malformed {
        line,
        message: format!("`{name}` value `{raw}` is not an integer"),
    })?;
    if v < 0 {
        return Err(IngestError::NegativeCount { line, field: name });
    }
    Ok(v as u64)
}

fn check_width(rec: &csv::StringRecord, width: usize, line: u64) -> Result<(), IngestError> {
    if rec.len() != width {
        return Err(IngestError::Malformed {
            line,
            message: format!("expected {width} fields, found {}", rec.len()),
        });
    }
    Ok(())
}

/// Parses shot-level events (`entity_id,season,region,made`) and accumulates counts.
pub fn parse_shot_events<R: Read>(input: R, kind: EntityKind) -> Result<Dataset, IngestError> {
    let scheme = RegionScheme::nba();
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(IngestError::Empty);
    }
    check_header(&header, &EVENT_HEADER)?;

    let mut acc: BTreeMap<EntityKey, RegionCounts> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        check_width(&rec, EVENT_HEADER.len(), line)?;
        let id = field(&rec, 0, "entity_id", line)?;
        let season = parse_season(field(&rec, 1, "season", line)?, line)?;
        let code = field(&rec, 2, "region", line)?;
        let k = scheme.index_of(code).ok_or_else(|| IngestError::UnknownRegion {
            line,
            code: code.to_string(),
        })?;
        let made = match field(&rec, 3, "made", line)? {
            "0" => false,
            "1" => true,
            other => {
                return Err(IngestError::Malformed {
                    line,
                    message: format!("`made` must be 0 or 1, found `{other}`"),
                })
            }
        };
        let key = EntityKey::new(id, season);
        acc.entry(key.clone())
            .or_insert_with(|| RegionCounts::zeros(key, scheme.len()))
            .add_attempt(k, made);
    }
    if acc.is_empty() {
        return Err(IngestError::Empty);
    }
    Dataset::new(kind, scheme, acc.into_values().collect())
}

/// Parses pre-aggregated counts using the standard seven-region scheme.
pub fn parse_aggregates<R: Read>(input: R, kind: EntityKind) -> Result<Dataset, IngestError> {
    parse_aggregates_with_scheme(input, kind, RegionScheme::nba())
}

/// Parses pre-aggregated counts against an arbitrary region scheme.
/// Regions absent for an entity default to zero attempts and makes.
pub fn parse_aggregates_with_scheme<R: Read>(
    input: R,
    kind: EntityKind,
    scheme: RegionScheme,
) -> Result<Dataset, IngestError> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(IngestError::Empty);
    }
    check_header(&header, &AGGREGATE_HEADER)?;

    let mut acc: BTreeMap<EntityKey, (RegionCounts, Vec<bool>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        check_width(&rec, AGGREGATE_HEADER.len(), line)?;
        let id = field(&rec, 0, "entity_id", line)?;
        let season = parse_season(field(&rec, 1, "season", line)?, line)?;
        let code = field(&rec, 2, "region", line)?;
        let k = scheme.index_of(code).ok_or_else(|| IngestError::UnknownRegion {
            line,
            code: code.to_string(),
        })?;
        let attempts = parse_count(field(&rec, 3, "attempts", line)?, "attempts", line)?;
        let makes = parse_count(field(&rec, 4, "makes", line)?, "makes", line)?;
        if makes > attempts {
            return Err(IngestError::MakesExceedAttempts {
                line,
                entity: id.to_string(),
                season,
                region: code.to_string(),
                attempts: attempts as i64,
                makes: makes as i64,
            });
        }
        let key = EntityKey::new(id, season);
        let (counts, seen) = match acc.entry(key.clone()) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert((RegionCounts::zeros(key, scheme.len()), vec![false; scheme.len()])),
        };
        if seen[k] {
            return Err(IngestError::DuplicateRegion {
                line,
                entity: id.to_string(),
                season,
                region: code.to_string(),
            });
        }
        seen[k] = true;
        counts.attempts[k] = attempts;
        counts.makes[k] = makes;
    }
    if acc.is_empty() {
        return Err(IngestError::Empty);
    }
    Dataset::new(kind, scheme, acc.into_values().map(|(c, _)| c).collect())
}

/// Result of [`top_n_shot_takers`]. `short` is set when fewer than `n` rows
/// were available, in which case every row of the season was returned.
#[derive(Debug, Clone)]
pub struct TopN {
    pub dataset: Dataset,
    pub short: bool,
}

/// Keeps the `n` rows with the most total attempts (all regions, free throws
/// included) within one season. Ties go to the lexicographically smaller id.
pub fn top_n_shot_takers(dataset: &Dataset, n: usize, season: Option<i32>) -> Result<TopN, IngestError> {
    if n == 0 {
        return Err(IngestError::Invalid("n must be at least 1".into()));
    }
    let season = match season {
        Some(s) => s,
        None => {
            let seasons = dataset.seasons();
            if seasons.len() > 1 {
                return Err(IngestError::MultipleSeasons(seasons));
            }
            seasons[0]
        }
    };
    let mut rows: Vec<&RegionCounts> = dataset.rows.iter().filter(|r| r.key.season == season).collect();
    if rows.is_empty() {
        return Err(IngestError::NoSuchSeason(season));
    }
    rows.sort_by(|a, b| {
        b.total_attempts()
            .cmp(&a.total_attempts())
            .then_with(|| a.key.entity_id.cmp(&b.key.entity_id))
    });
    let short = rows.len() < n;
    rows.truncate(n);
    let dataset = Dataset::new(dataset.kind, dataset.scheme.clone(), rows.into_iter().cloned().collect())?;
    Ok(TopN { dataset, short })
}
