//! Expected-points and EPAA runs written as artifact directories.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::artifact::{
    self, entity_dir_name, epaa_lines, json_bytes, point_lines, posterior_digest, write_file, write_points, ArtifactError, EpaaTable, PointsMeta,
    ENTITIES_DIR, EPAA_CSV_FILE, EPAA_TABLE_FILE, EPAA_TABLE_TAG, EPAA_TAG, PLAYERS_DIR, POINTS_TAG,
};
use crate::ingest::{EntityKey, RegionCounts};
use crate::predictive::{self, PredictiveConfig, PredictiveError};
use crate::report::{self, epaa_table, rank_entities, EpaaEntry, RankBy, RankedRow, ReportError};
use crate::sampler::PosteriorDraws;

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown entity `{given}`; valid ids: {valid}")]
    UnknownEntity { given: String, valid: String },
    #[error("{0} has no recorded shots, so its observed shot count is zero")]
    NoShots(String),
    #[error(transparent)]
    Predictive(#[from] PredictiveError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

/// Resolves `id`, `id_season` or `all` against a posterior's entities.
pub fn select_entities(post: &PosteriorDraws, selector: &str) -> Result<Vec<EntityKey>, PipelineError> {
    let keys = post.entity_index();
    if selector == "all" {
        return Ok(keys);
    }
    let mut out = Vec::new();
    for part in selector.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let hits: Vec<EntityKey> = keys.iter().filter(|k| k.entity_id == part || k.label() == part).cloned().collect();
        if hits.is_empty() {
            let mut valid: Vec<String> = keys.iter().map(|k| k.entity_id.clone()).collect();
            valid.dedup();
            return Err(PipelineError::UnknownEntity {
                given: part.to_string(),
                valid: valid.join(", "),
            });
        }
        for h in hits {
            if !out.contains(&h) {
                out.push(h);
            }
        }
    }
    if out.is_empty() {
        return Err(PipelineError::UnknownEntity {
            given: selector.to_string(),
            valid: "all, or a comma-separated list of entity ids".into(),
        });
    }
    Ok(out)
}

fn counts_of<'a>(post: &'a PosteriorDraws, key: &EntityKey) -> &'a RegionCounts {
    post.dataset.get(key).expect("selected keys come from the posterior")
}

/// Expected points for each entity, written under `out/entities/`, plus a
/// ranked summary of per-game points. Returns the ranked rows and the files
/// written.
pub fn run_ep(
    post: &PosteriorDraws,
    entities: &[EntityKey],
    cfg: &PredictiveConfig,
    rank_by: RankBy,
    out: &Path,
) -> Result<(Vec<RankedRow>, Vec<PathBuf>), PipelineError> {
    let digest = posterior_digest(post);
    let mut summaries = Vec::with_capacity(entities.len());
    let mut written = Vec::new();
    for key in entities {
        let draws = predictive::expected_points(counts_of(post, key), post, cfg)?;
        let summary = report::summarize(key.label(), &draws.per_game)?;
        let dir = out.join(ENTITIES_DIR).join(entity_dir_name(&key.label()));
        write_points(
            &dir,
            &point_lines(&draws),
            PointsMeta {
                artifact: POINTS_TAG.into(),
                label: key.label(),
                entity_id: Some(key.entity_id.clone()),
                season: Some(key.season),
                config: cfg.clone(),
                posterior_fingerprints: vec![digest.clone()],
                samples: 0,
                summary: summary.clone(),
                epaa_mean: None,
                points_sha256: String::new(),
            },
        )?;
        written.push(dir.join(artifact::POINTS_FILE));
        written.push(dir.join(artifact::META_FILE));
        summaries.push(summary);
    }
    let ranked = rank_entities(summaries, rank_by);
    let mut csv = Vec::new();
    report::write_ranked_csv(&ranked, &mut csv)?;
    write_file(&out.join(SUMMARY_CSV), &csv)?;
    write_file(&out.join(SUMMARY_JSON), &json_bytes(&ranked))?;
    written.push(out.join(SUMMARY_CSV));
    written.push(out.join(SUMMARY_JSON));
    Ok((ranked, written))
}

/// Shot count used for each player's hypothetical season.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShotCount {
    Fixed(u64),
    /// The player's own observed total attempts.
    Observed,
}

/// Outcome of [`run_epaa`].
#[derive(Debug, Clone)]
pub struct EpaaRun {
    pub table: EpaaTable,
    /// Players left out because their observed shot count was zero.
    pub skipped: Vec<String>,
    pub written: Vec<PathBuf>,
}

/// EPAA for each player against the average team, written under
/// `out/players/`, plus the per-season table as JSON and CSV.
pub fn run_epaa(
    post_player: &PosteriorDraws,
    post_team: &PosteriorDraws,
    players: &[EntityKey],
    shots: ShotCount,
    cfg: &PredictiveConfig,
    out: &Path,
) -> Result<EpaaRun, PipelineError> {
    let (player_digest, team_digest) = (posterior_digest(post_player), posterior_digest(post_team));
    let mut entries = Vec::with_capacity(players.len());
    let mut skipped = Vec::new();
    let mut written = Vec::new();
    for key in players {
        let counts = counts_of(post_player, key);
        let n_shots = match shots {
            ShotCount::Fixed(n) => n,
            ShotCount::Observed => counts.total_attempts(),
        };
        if n_shots == 0 {
            skipped.push(key.label());
            continue;
        }
        let player_cfg = PredictiveConfig { n_shots, ..cfg.clone() };
        let draws = predictive::epaa(counts, post_player, post_team, &player_cfg)?;
        let summary = report::summarize(key.label(), &draws.per_game)?;
        let dir = out.join(PLAYERS_DIR).join(entity_dir_name(&key.label()));
        write_points(
            &dir,
            &epaa_lines(&draws),
            PointsMeta {
                artifact: EPAA_TAG.into(),
                label: key.label(),
                entity_id: Some(key.entity_id.clone()),
                season: Some(key.season),
                config: player_cfg,
                posterior_fingerprints: vec![player_digest.clone(), team_digest.clone()],
                samples: 0,
                summary,
                epaa_mean: Some(draws.epaa_mean),
                points_sha256: String::new(),
            },
        )?;
        written.push(dir.join(artifact::POINTS_FILE));
        written.push(dir.join(artifact::META_FILE));
        entries.push(EpaaEntry {
            key: key.clone(),
            per_game: draws.per_game,
            epaa_mean: draws.epaa_mean,
            n_shots,
        });
    }
    if entries.is_empty() {
        return Err(PipelineError::NoShots(skipped.join(", ")));
    }
    let table = EpaaTable {
        artifact: EPAA_TABLE_TAG.into(),
        player_posterior_digest: player_digest,
        team_posterior_digest: team_digest,
        config: cfg.clone(),
        rows: epaa_table(&entries)?,
    };
    let mut csv = Vec::new();
    report::write_epaa_csv(&table.rows, &mut csv)?;
    write_file(&out.join(EPAA_CSV_FILE), &csv)?;
    write_file(&out.join(EPAA_TABLE_FILE), &json_bytes(&table))?;
    written.push(out.join(EPAA_CSV_FILE));
    written.push(out.join(EPAA_TABLE_FILE));
    Ok(EpaaRun { table, skipped, written })
}
