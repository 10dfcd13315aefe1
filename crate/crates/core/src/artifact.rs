//! On-disk artifact formats.
//!
//! A posterior directory holds `meta.json`, `draws.jsonl` (one draw per
//! line, labels 1-based) and `dataset.csv` (the aggregate counts it was fit
//! on). A points directory holds `points.jsonl` (one sample per line:
//! `draw_index`, `total`, `per_game`) and a `meta.json` sidecar. EPAA runs
//! write `epaa.json` / `epaa.csv` plus one points directory per player
//! under `players/`.
//!
//! All writers are deterministic: identical inputs give identical bytes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{parse_aggregates_with_scheme, EntityKind, IngestError};
use crate::predictive::{EpaaDraws, PointsDraws, PredictiveConfig};
use crate::region::RegionScheme;
use crate::report::{EpaaRow, SummaryRow};
use crate::sampler::{ChainConfig, ModelState, PosteriorDraws, Priors, SamplerError};

pub const META_FILE: &str = "meta.json";
pub const DRAWS_FILE: &str = "draws.jsonl";
pub const DATASET_FILE: &str = "dataset.csv";
pub const POINTS_FILE: &str = "points.jsonl";
pub const EPAA_TABLE_FILE: &str = "epaa.json";
pub const EPAA_CSV_FILE: &str = "epaa.csv";
pub const PLAYERS_DIR: &str = "players";
pub const ENTITIES_DIR: &str = "entities";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{context}: {message}")]
    Decode { context: String, message: String },
    #[error("{path}: expected a {expected} artifact, found {found}")]
    WrongKind {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn decode_err(context: impl Into<String>) -> impl FnOnce(serde_json::Error) -> ArtifactError {
    let context = context.into();
    move |e| ArtifactError::Decode {
        context,
        message: e.to_string(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, ArtifactError> {
    Ok(sha256_hex(&fs::read(path).map_err(io_err(path))?))
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("artifact types always serialise");
    out.push(b'\n');
    out
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(decode_err(path.display().to_string()))
}

/// Reads just the `artifact` tag of a meta file.
pub fn artifact_tag(meta_path: &Path) -> Result<String, ArtifactError> {
    #[derive(Deserialize)]
    struct Tag {
        artifact: String,
    }
    Ok(read_json::<Tag>(meta_path)?.artifact)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PosteriorMeta {
    pub artifact: String,
    pub kind: EntityKind,
    pub scheme: RegionScheme,
    pub priors: Priors,
    pub config: ChainConfig,
    pub dataset_fingerprint: String,
    /// Row `i` of every draw refers to `entity_index[i]` (`{id}_{season}`).
    pub entity_index: Vec<String>,
    pub draws: usize,
    pub draws_sha256: String,
}

pub const POSTERIOR_TAG: &str = "posterior";

/// Serialises draws as JSON lines.
pub fn encode_draws(draws: &[ModelState]) -> Vec<u8> {
    let mut out = Vec::new();
    for d in draws {
        serde_json::to_writer(&mut out, d).expect("draws always serialise");
        out.push(b'\n');
    }
    out
}

/// Parses JSON-lines draws. Blank lines are rejected.
pub fn decode_draws(bytes: &[u8]) -> Result<Vec<ModelState>, ArtifactError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ArtifactError::Decode {
        context: DRAWS_FILE.into(),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .map(|(i, line)| serde_json::from_str(line).map_err(decode_err(format!("{DRAWS_FILE} line {}", i + 1))))
        .collect()
}

/// Writes a posterior directory and returns the paths written.
pub fn write_posterior(dir: &Path, post: &PosteriorDraws) -> Result<Vec<PathBuf>, ArtifactError> {
    let draws = encode_draws(&post.draws);
    let meta = PosteriorMeta {
        artifact: POSTERIOR_TAG.into(),
        kind: post.dataset.kind(),
        scheme: post.dataset.scheme().clone(),
        priors: post.priors.clone(),
        config: post.config.clone(),
        dataset_fingerprint: post.dataset_fingerprint.clone(),
        entity_index: post.entity_index().iter().map(|k| k.label()).collect(),
        draws: post.draws.len(),
        draws_sha256: sha256_hex(&draws),
    };
    let paths = [dir.join(META_FILE), dir.join(DRAWS_FILE), dir.join(DATASET_FILE)];
    write_file(&paths[0], &json_bytes(&meta))?;
    write_file(&paths[1], &draws)?;
    write_file(&paths[2], &post.dataset.to_aggregate_csv())?;
    Ok(paths.to_vec())
}

/// Loads and fully validates a posterior directory.
pub fn read_posterior(dir: &Path) -> Result<PosteriorDraws, ArtifactError> {
    let meta_path = dir.join(META_FILE);
    let tag = artifact_tag(&meta_path)?;
    if tag != POSTERIOR_TAG {
        return Err(ArtifactError::WrongKind {
            path: meta_path,
            expected: POSTERIOR_TAG,
            found: tag,
        });
    }
    let meta: PosteriorMeta = read_json(&meta_path)?;
    let draws_path = dir.join(DRAWS_FILE);
    let bytes = fs::read(&draws_path).map_err(io_err(&draws_path))?;
    if sha256_hex(&bytes) != meta.draws_sha256 {
        return Err(ArtifactError::Mismatch(format!("{}: content hash differs from meta.json", draws_path.display())));
    }
    let draws = decode_draws(&bytes)?;
    let data_path = dir.join(DATASET_FILE);
    let file = fs::File::open(&data_path).map_err(io_err(&data_path))?;
    let dataset = parse_aggregates_with_scheme(io::BufReader::new(file), meta.kind, meta.scheme.clone())?;
    let index: Vec<String> = dataset.keys().iter().map(|k| k.label()).collect();
    if index != meta.entity_index {
        return Err(ArtifactError::Mismatch("entity index in meta.json does not match dataset.csv".into()));
    }
    if draws.len() != meta.draws {
        return Err(ArtifactError::Mismatch(format!("meta.json lists {} draws, found {}", meta.draws, draws.len())));
    }
    let post = PosteriorDraws {
        draws,
        priors: meta.priors,
        config: meta.config,
        dataset,
        dataset_fingerprint: meta.dataset_fingerprint,
    };
    post.validate()?;
    Ok(post)
}

/// One line of `points.jsonl`. For EPAA, `total` is the paired difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointLine {
    pub draw_index: usize,
    pub total: i64,
    pub per_game: f64,
}

pub fn encode_points(lines: impl IntoIterator<Item = PointLine>) -> Vec<u8> {
    let mut out = Vec::new();
    for line in lines {
        serde_json::to_writer(&mut out, &line).expect("point lines always serialise");
        out.push(b'\n');
    }
    out
}

pub fn decode_points(bytes: &[u8]) -> Result<Vec<PointLine>, ArtifactError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ArtifactError::Decode {
        context: POINTS_FILE.into(),
        message: e.to_string(),
    })?;
    text.lines()
        .enumerate()
        .map(|(i, line)| serde_json::from_str(line).map_err(decode_err(format!("{POINTS_FILE} line {}", i + 1))))
        .collect()
}

pub fn point_lines(draws: &PointsDraws) -> Vec<PointLine> {
    draws
        .draw_index
        .iter()
        .zip(&draws.totals)
        .zip(&draws.per_game)
        .map(|((&d, &t), &g)| PointLine {
            draw_index: d,
            total: t as i64,
            per_game: g,
        })
        .collect()
}

pub fn epaa_lines(draws: &EpaaDraws) -> Vec<PointLine> {
    draws
        .draw_index
        .iter()
        .zip(&draws.diffs)
        .zip(&draws.per_game)
        .map(|((&d, &t), &g)| PointLine {
            draw_index: d,
            total: t,
            per_game: g,
        })
        .collect()
}

pub const POINTS_TAG: &str = "points";
pub const EPAA_TAG: &str = "epaa";

/// Sidecar for a points directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsMeta {
    pub artifact: String,
    pub label: String,
    pub entity_id: Option<String>,
    pub season: Option<i32>,
    pub config: PredictiveConfig,
    /// Fingerprints of the posterior(s) sampled from: one for expected
    /// points, player then team for EPAA.
    pub posterior_fingerprints: Vec<String>,
    pub samples: usize,
    pub summary: SummaryRow,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub epaa_mean: Option<f64>,
    pub points_sha256: String,
}

/// Writes `points.jsonl` and its sidecar. `meta.points_sha256` is filled in
/// here.
pub fn write_points(dir: &Path, lines: &[PointLine], mut meta: PointsMeta) -> Result<PointsMeta, ArtifactError> {
    let bytes = encode_points(lines.iter().copied());
    meta.points_sha256 = sha256_hex(&bytes);
    meta.samples = lines.len();
    write_file(&dir.join(POINTS_FILE), &bytes)?;
    write_file(&dir.join(META_FILE), &json_bytes(&meta))?;
    Ok(meta)
}

pub fn read_points_meta(dir: &Path) -> Result<PointsMeta, ArtifactError> {
    read_json(&dir.join(META_FILE))
}

/// Table written by an EPAA run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpaaTable {
    pub artifact: String,
    pub player_posterior_digest: String,
    pub team_posterior_digest: String,
    pub config: PredictiveConfig,
    pub rows: Vec<EpaaRow>,
}

pub const EPAA_TABLE_TAG: &str = "epaa-table";

pub fn decode_epaa_table(bytes: &[u8]) -> Result<EpaaTable, ArtifactError> {
    let table: EpaaTable = serde_json::from_slice(bytes).map_err(decode_err(EPAA_TABLE_FILE))?;
    if table.artifact != EPAA_TABLE_TAG {
        return Err(ArtifactError::Decode {
            context: EPAA_TABLE_FILE.into(),
            message: format!("artifact tag `{}` is not `{EPAA_TABLE_TAG}`", table.artifact),
        });
    }
    Ok(table)
}

/// Directory name for one entity's points under an EP or EPAA output.
pub fn entity_dir_name(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_') { c } else { '_' })
        .collect()
}

/// Known parameters for forward simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    /// Region scheme; the standard seven regions when absent.
    #[serde(default)]
    pub scheme: Option<RegionScheme>,
    #[serde(default = "default_season")]
    pub season: i32,
    pub state: ModelState,
}

fn default_season() -> i32 {
    2021
}

impl Truth {
    pub fn scheme(&self) -> RegionScheme {
        self.scheme.clone().unwrap_or_else(RegionScheme::nba)
    }
}

/// Parses and validates a truth file.
pub fn decode_truth(bytes: &[u8]) -> Result<Truth, ArtifactError> {
    let truth: Truth = serde_json::from_slice(bytes).map_err(decode_err("truth"))?;
    let scheme = truth.scheme();
    let st = &truth.state;
    st.check(st.p.len(), st.q.len(), st.w.len(), scheme.len())
        .map_err(|message| ArtifactError::Decode {
            context: "truth".into(),
            message,
        })?;
    if st.p.is_empty() || st.q.is_empty() {
        return Err(ArtifactError::Decode {
            context: "truth".into(),
            message: "at least one selection and one accuracy cluster required".into(),
        });
    }
    Ok(truth)
}

/// Digest identifying a posterior: its dataset fingerprint and the hash of
/// its encoded draws. Independent of where the posterior is stored.
pub fn posterior_digest(post: &PosteriorDraws) -> String {
    let draws = sha256_hex(&encode_draws(&post.draws));
    sha256_hex(format!("{}\n{draws}\n", post.dataset_fingerprint).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_aggregates;
    use crate::sampler::run_chain;

    fn posterior() -> PosteriorDraws {
        let csv = "entity_id,season,region,attempts,makes\nA,2021,ATB,30,12\nA,2021,RA,20,13\nB,2021,MID,25,10\nB,2021,FT,10,8\n";
        let data = parse_aggregates(csv.as_bytes(), EntityKind::Team).unwrap();
        run_chain(&data, &Priors::new(2, 2, 5.0, 5.0, 5.0), &ChainConfig::new(30, 10, 1, 4)).unwrap()
    }

    #[test]
    fn posterior_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let post = posterior();
        write_posterior(dir.path(), &post).unwrap();
        let back = read_posterior(dir.path()).unwrap();
        assert_eq!(back.draws, post.draws);
        for (a, b) in back.draws.iter().zip(&post.draws) {
            for (x, y) in a.p.iter().flatten().zip(b.p.iter().flatten()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(back.dataset, post.dataset);
        let first = fs::read(dir.path().join(DRAWS_FILE)).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_posterior(dir2.path(), &back).unwrap();
        assert_eq!(fs::read(dir2.path().join(DRAWS_FILE)).unwrap(), first);
        assert_eq!(fs::read(dir2.path().join(META_FILE)).unwrap(), fs::read(dir.path().join(META_FILE)).unwrap());
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        write_posterior(dir.path(), &posterior()).unwrap();
        let path = dir.path().join(DRAWS_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.extend_from_slice(b"\n");
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_posterior(dir.path()), Err(ArtifactError::Mismatch(_))));
    }

    #[test]
    fn points_round_trip() {
        let lines = vec![
            PointLine { draw_index: 0, total: -12, per_game: -12.0 / 72.0 },
            PointLine { draw_index: 1, total: 300, per_game: 300.0 / 72.0 },
        ];
        let bytes = encode_points(lines.clone());
        assert_eq!(decode_points(&bytes).unwrap(), lines);
        assert!(String::from_utf8(bytes).unwrap().starts_with("{\"draw_index\":0,\"total\":-12,\"per_game\":"));
        assert!(decode_points(b"{\"draw_index\":0}").is_err());
    }

    #[test]
    fn truth_validation() {
        let ok = r#"{"state":{"p":[[0.5,0.5]],"q":[[0.2,0.9]],"w":[1,1],"z":[1,1],"pi":[1.0],"theta":[1.0]},
                    "scheme":{"regions":[{"code":"A","points":3},{"code":"B","points":2}]}}"#;
        let t = decode_truth(ok.as_bytes()).unwrap();
        assert_eq!(t.scheme().len(), 2);
        assert_eq!(t.season, 2021);
        let bad = ok.replace("[0.5,0.5]", "[0.5,0.6]");
        assert!(decode_truth(bad.as_bytes()).is_err());
        let wrong_k = r#"{"state":{"p":[[0.5,0.5]],"q":[[0.2,0.9]],"w":[1],"z":[1],"pi":[1.0],"theta":[1.0]}}"#;
        assert!(decode_truth(wrong_k.as_bytes()).is_err());
    }

    #[test]
    fn entity_dir_names_are_safe() {
        assert_eq!(entity_dir_name("curry_2021"), "curry_2021");
        assert_eq!(entity_dir_name("../x y"), "___x_y");
    }
}
