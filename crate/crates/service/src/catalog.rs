use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use hoopstat::artifact::{
    self, decode_epaa_table, entity_dir_name, ArtifactError, PointsMeta, PosteriorMeta, DATASET_FILE, EPAA_TABLE_FILE, META_FILE,
    PLAYERS_DIR, POINTS_FILE, POSTERIOR_TAG,
};
use hoopstat::ingest::{parse_aggregates_with_scheme, EntityKind};
use hoopstat::report::{rank_entities, EpaaRow, RankBy, SummaryRow};
use serde::Serialize;
use thiserror::Error;
use walkdir::WalkDir;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("artifacts directory {0} does not exist")]
    Missing(PathBuf),
    #[error("no artifacts found under {0}")]
    Empty(PathBuf),
    #[error("{path}: {message}")]
    Walk { path: PathBuf, message: String },
    #[error("{path}: content hash {actual} does not match recorded {expected}")]
    Fingerprint { path: PathBuf, expected: String, actual: String },
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

/// One player's entry in a season, with the file backing its draws.
#[derive(Debug, Clone)]
pub struct PlayerEntry {
    pub row: EpaaRow,
    pub points_path: PathBuf,
    pub points_sha256: String,
    pub games_divisor: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Season {
    /// Keyed by entity id; rows carry ranks within the season.
    pub players: BTreeMap<String, PlayerEntry>,
    pub teams: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendRow {
    pub team: String,
    pub season: i32,
    pub region: String,
    pub attempts: u64,
    pub makes: u64,
    pub attempt_share: f64,
    /// Absent when the team took no shots in the region.
    pub make_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub artifact: String,
    pub sha256: String,
}

/// Immutable index over an artifacts directory.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub root: PathBuf,
    pub seasons: BTreeMap<i32, Season>,
    pub trends: Vec<TrendRow>,
    pub artifacts: Vec<ArtifactEntry>,
}

fn relative(root: &Path, path: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

/// Walks `root` for EPAA tables and team posteriors. Paths are visited in
/// sorted order; when two tables cover the same player-season the first one
/// wins. Ranks are recomputed per season over the merged rows.
pub fn load_catalog(root: &Path) -> Result<Catalog, CatalogError> {
    if !root.is_dir() {
        return Err(CatalogError::Missing(root.to_path_buf()));
    }
    let mut catalog = Catalog {
        root: root.to_path_buf(),
        ..Catalog::default()
    };
    let mut seen_team_seasons = BTreeSet::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CatalogError::Walk {
            path: e.path().unwrap_or(root).to_path_buf(),
            message: e.to_string(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let name = entry.file_name().to_string_lossy();
        if name == EPAA_TABLE_FILE {
            load_table(&mut catalog, path)?;
        } else if name == META_FILE && artifact::artifact_tag(path).ok().as_deref() == Some(POSTERIOR_TAG) {
            load_team_posterior(&mut catalog, path, &mut seen_team_seasons)?;
        }
    }
    if catalog.artifacts.is_empty() {
        return Err(CatalogError::Empty(root.to_path_buf()));
    }
    for season in catalog.seasons.values_mut() {
        rerank(season);
    }
    Ok(catalog)
}

fn load_table(catalog: &mut Catalog, path: &Path) -> Result<(), CatalogError> {
    let bytes = fs::read(path).map_err(|e| CatalogError::Walk {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let table = decode_epaa_table(&bytes)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    for row in table.rows {
        let player_dir = dir.join(PLAYERS_DIR).join(entity_dir_name(&row.label));
        let meta: PointsMeta = artifact::read_points_meta(&player_dir)?;
        let points_path = player_dir.join(POINTS_FILE);
        let actual = artifact::sha256_file(&points_path)?;
        if actual != meta.points_sha256 {
            return Err(CatalogError::Fingerprint {
                path: points_path,
                expected: meta.points_sha256,
                actual,
            });
        }
        let season = catalog.seasons.entry(row.season).or_default();
        if season.players.contains_key(&row.entity_id) {
            tracing::warn!(player = %row.entity_id, season = row.season, table = %path.display(), "duplicate player-season ignored");
            continue;
        }
        season.players.insert(
            row.entity_id.clone(),
            PlayerEntry {
                row,
                points_path,
                points_sha256: actual,
                games_divisor: table.config.games_divisor,
            },
        );
    }
    catalog.artifacts.push(ArtifactEntry {
        path: relative(&catalog.root, path),
        artifact: table.artifact,
        sha256: artifact::sha256_hex(&bytes),
    });
    Ok(())
}

fn load_team_posterior(catalog: &mut Catalog, meta_path: &Path, seen: &mut BTreeSet<(String, i32)>) -> Result<(), CatalogError> {
    let meta: PosteriorMeta = artifact::read_json(meta_path)?;
    if meta.kind != EntityKind::Team {
        return Ok(());
    }
    let dir = meta_path.parent().unwrap_or(Path::new("."));
    let data_path = dir.join(DATASET_FILE);
    let file = fs::File::open(&data_path).map_err(|e| CatalogError::Walk {
        path: data_path.clone(),
        message: e.to_string(),
    })?;
    let data = parse_aggregates_with_scheme(BufReader::new(file), meta.kind, meta.scheme.clone()).map_err(ArtifactError::from)?;
    if data.fingerprint() != meta.dataset_fingerprint {
        return Err(CatalogError::Fingerprint {
            path: data_path,
            expected: meta.dataset_fingerprint,
            actual: data.fingerprint(),
        });
    }
    let codes: Vec<&str> = data.scheme().codes().collect();
    for row in data.rows() {
        let key = (row.key.entity_id.clone(), row.key.season);
        if !seen.insert(key) {
            continue;
        }
        catalog
            .seasons
            .entry(row.key.season)
            .or_default()
            .teams
            .insert(row.key.entity_id.clone());
        let total = row.total_attempts();
        for (k, code) in codes.iter().enumerate() {
            let (n, m) = (row.attempts()[k], row.makes()[k]);
            catalog.trends.push(TrendRow {
                team: row.key.entity_id.clone(),
                season: row.key.season,
                region: code.to_string(),
                attempts: n,
                makes: m,
                attempt_share: if total > 0 { n as f64 / total as f64 } else { 0.0 },
                make_rate: (n > 0).then(|| m as f64 / n as f64),
            });
        }
    }
    catalog.artifacts.push(ArtifactEntry {
        path: relative(&catalog.root, meta_path),
        artifact: POSTERIOR_TAG.to_string(),
        sha256: artifact::sha256_file(meta_path)?,
    });
    Ok(())
}

fn rerank(season: &mut Season) {
    let summaries = season
        .players
        .values()
        .map(|p| SummaryRow {
            label: p.row.label.clone(),
            mean: p.row.mean,
            median: p.row.median,
            ci80: p.row.ci80,
            ci95: p.row.ci95,
            sd: p.row.sd,
            n: p.row.draws,
        })
        .collect();
    let ranks: BTreeMap<String, usize> = rank_entities(summaries, RankBy::Mean)
        .into_iter()
        .map(|r| (r.summary.label, r.rank))
        .collect();
    for p in season.players.values_mut() {
        p.row.rank = ranks[&p.row.label];
    }
}

impl Catalog {
    /// Rows of a season ordered by rank, then label.
    pub fn table(&self, season: i32) -> Option<Vec<&EpaaRow>> {
        let s = self.seasons.get(&season)?;
        let mut rows: Vec<&EpaaRow> = s.players.values().map(|p| &p.row).collect();
        rows.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.label.cmp(&b.label)));
        Some(rows)
    }

    pub fn player(&self, season: i32, id: &str) -> Option<&PlayerEntry> {
        self.seasons.get(&season)?.players.get(id)
    }

    pub fn knows_player(&self, id: &str) -> bool {
        self.seasons.values().any(|s| s.players.contains_key(id))
    }
}
