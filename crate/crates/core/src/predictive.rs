//! Posterior-predictive point totals and expected points above average.
//!
//! For every retained draw, cluster memberships for the entity are
//! re-weighted by Bayes' theorem under that draw's parameters, a selection
//! and an accuracy cluster are sampled, and a season of `n_shots` shots is
//! simulated: attempts per region from the selection profile, makes per
//! region from the accuracy profile. The season total is the point-weighted
//! sum of makes.
//!
//! Every draw index owns its own random substream, so results do not depend
//! on how the work is split across threads. Binomial variates use inverse
//! transform sampling with one uniform each, which makes simulations under
//! different parameters share the same randomness.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

use crate::ingest::{Dataset, EntityKey, EntityKind, RegionCounts};
use crate::region::RegionScheme;
use crate::rng::{derive_seed, domain, substream, StreamRng};
use crate::sampler::{ModelState, PosteriorDraws, SamplerError};

#[derive(Debug, Error)]
pub enum PredictiveError {
    #[error("posterior has no draws")]
    EmptyPosterior,
    #[error("region mismatch: {0}")]
    RegionMismatch(String),
    #[error("draw {draw}: every {facet} cluster has zero likelihood (cluster {cluster}, region {region} conflicts with the data)")]
    ZeroWeights {
        draw: usize,
        facet: &'static str,
        cluster: usize,
        region: usize,
    },
    #[error("invalid predictive configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid simulation input: {0}")]
    InvalidTruth(String),
    #[error("exact pmf needs at most {limit} shot allocations, got {size}")]
    TooLarge { size: f64, limit: f64 },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveConfig {
    /// Hypothetical number of shots in the simulated season.
    pub n_shots: u64,
    /// Games per season used for per-game scaling.
    pub games_divisor: f64,
    pub samples_per_draw: usize,
    pub seed: u64,
    /// Keep the simulated attempts and makes per region for every sample.
    #[serde(default)]
    pub keep_region_detail: bool,
}

impl Default for PredictiveConfig {
    fn default() -> Self {
        PredictiveConfig {
            n_shots: 8000,
            games_divisor: 72.0,
            samples_per_draw: 1,
            seed: 0,
            keep_region_detail: false,
        }
    }
}

impl PredictiveConfig {
    pub fn validate(&self) -> Result<(), PredictiveError> {
        if self.n_shots == 0 {
            return Err(PredictiveError::InvalidConfig("n_shots must be at least 1".into()));
        }
        if !(self.games_divisor.is_finite() && self.games_divisor > 0.0) {
            return Err(PredictiveError::InvalidConfig("games divisor must be positive".into()));
        }
        if self.samples_per_draw == 0 {
            return Err(PredictiveError::InvalidConfig("samples per draw must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSample {
    pub attempts: Vec<u64>,
    pub makes: Vec<u64>,
}

/// Simulated season totals, one per (draw, sample) in draw-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointsDraws {
    pub label: String,
    pub n_shots: u64,
    pub draw_index: Vec<usize>,
    pub totals: Vec<u64>,
    pub per_game: Vec<f64>,
    pub region_detail: Option<Vec<RegionSample>>,
}

impl PointsDraws {
    pub fn mean_total(&self) -> f64 {
        self.totals.iter().map(|&t| t as f64).sum::<f64>() / self.totals.len() as f64
    }

    pub fn mean_per_game(&self) -> f64 {
        self.per_game.iter().sum::<f64>() / self.per_game.len() as f64
    }
}

/// Paired differences between a player's and the average team's totals.
#[derive(Debug, Clone, PartialEq)]
pub struct EpaaDraws {
    pub label: String,
    pub n_shots: u64,
    pub draw_index: Vec<usize>,
    pub player_totals: Vec<u64>,
    pub team_totals: Vec<u64>,
    pub diffs: Vec<i64>,
    pub per_game: Vec<f64>,
    pub epaa_mean: f64,
}

/// Smallest `k` with `P(Binomial(n, p) <= k) >= u`.
///
/// Starts at the mode with the exact CDF (regularised incomplete beta) and
/// walks with pmf ratios, so cost grows with the standard deviation rather
/// than with `n`.
pub fn binomial_quantile(n: u64, p: f64, u: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let nf = n as f64;
    let mode = (((nf + 1.0) * p).floor() as u64).min(n);
    let mut pmf = (ln_binomial(n, mode) + mode as f64 * p.ln() + (n - mode) as f64 * (-p).ln_1p()).exp();
    let mut cdf = if mode == n {
        1.0
    } else {
        beta_reg((n - mode) as f64, mode as f64 + 1.0, 1.0 - p)
    };
    let odds = p / (1.0 - p);
    let mut k = mode;
    if u <= cdf {
        while k > 0 && pmf > 0.0 {
            let below = cdf - pmf;
            if below < u {
                break;
            }
            pmf *= k as f64 / ((n - k + 1) as f64 * odds);
            cdf = below;
            k -= 1;
        }
    } else {
        while k < n && cdf < u {
            pmf *= (n - k) as f64 / (k + 1) as f64 * odds;
            k += 1;
            cdf += pmf;
            if pmf == 0.0 {
                break;
            }
        }
    }
    k
}

fn sample_binomial(rng: &mut StreamRng, n: u64, p: f64) -> u64 {
    let u: f64 = rng.random();
    binomial_quantile(n, p, u)
}

/// Multinomial via sequential conditional binomials.
fn sample_multinomial(rng: &mut StreamRng, n: u64, probs: &[f64], out: &mut Vec<u64>) {
    out.clear();
    let mut suffix = vec![0.0; probs.len() + 1];
    for k in (0..probs.len()).rev() {
        suffix[k] = suffix[k + 1] + probs[k];
    }
    let mut remaining = n;
    for k in 0..probs.len() {
        let draw = if remaining == 0 {
            0
        } else if k + 1 == probs.len() || suffix[k + 1] <= 0.0 {
            remaining
        } else {
            sample_binomial(rng, remaining, (probs[k] / suffix[k]).clamp(0.0, 1.0))
        };
        out.push(draw);
        remaining -= draw;
    }
}

fn categorical(rng: &mut StreamRng, probs: &[f64]) -> usize {
    let mut u: f64 = rng.random();
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = i;
            if u < p {
                return i;
            }
            u -= p;
        }
    }
    last
}

fn normalise_log(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    out
}

fn conflict_region(row: &[f64], counts: &[u64]) -> usize {
    row.iter().zip(counts).position(|(p, &n)| *p <= 0.0 && n > 0).unwrap_or(0)
}

/// Posterior membership probabilities of an entity under one draw.
///
/// Returns `(selection, accuracy)`, each summing to one.
pub fn membership_probs(counts: &RegionCounts, draw: &ModelState) -> Result<(Vec<f64>, Vec<f64>), PredictiveError> {
    membership_probs_at(counts, draw, 0)
}

fn membership_probs_at(counts: &RegionCounts, draw: &ModelState, index: usize) -> Result<(Vec<f64>, Vec<f64>), PredictiveError> {
    let k_count = counts.regions();
    if draw.regions() != k_count {
        return Err(PredictiveError::RegionMismatch(format!(
            "entity has {k_count} regions, draw has {}",
            draw.regions()
        )));
    }
    let (attempts, makes) = (counts.attempts(), counts.makes());
    let sel_logs: Vec<f64> = draw
        .p
        .iter()
        .zip(&draw.pi)
        .map(|(row, pi)| {
            let mut acc = pi.ln();
            for k in 0..k_count {
                if attempts[k] > 0 {
                    acc += attempts[k] as f64 * row[k].ln();
                }
            }
            acc
        })
        .collect();
    if !sel_logs.iter().any(|x| x.is_finite()) {
        let cluster = draw.pi.iter().position(|&w| w > 0.0).unwrap_or(0);
        return Err(PredictiveError::ZeroWeights {
            draw: index,
            facet: "selection",
            cluster: cluster + 1,
            region: conflict_region(&draw.p[cluster], attempts) + 1,
        });
    }
    let acc_logs: Vec<f64> = draw
        .q
        .iter()
        .zip(&draw.theta)
        .map(|(row, theta)| {
            let mut acc = theta.ln();
            for k in 0..k_count {
                let (n, m) = (attempts[k], makes[k]);
                if m > 0 {
                    acc += m as f64 * row[k].ln();
                }
                if n > m {
                    acc += (n - m) as f64 * (-row[k]).ln_1p();
                }
            }
            acc
        })
        .collect();
    if !acc_logs.iter().any(|x| x.is_finite()) {
        let cluster = draw.theta.iter().position(|&w| w > 0.0).unwrap_or(0);
        let row = &draw.q[cluster];
        let region = (0..k_count)
            .find(|&k| (row[k] <= 0.0 && makes[k] > 0) || (row[k] >= 1.0 && attempts[k] > makes[k]))
            .unwrap_or(0);
        return Err(PredictiveError::ZeroWeights {
            draw: index,
            facet: "accuracy",
            cluster: cluster + 1,
            region: region + 1,
        });
    }
    Ok((normalise_log(&sel_logs), normalise_log(&acc_logs)))
}

/// Simulates one season of `n_shots` shots from fixed cluster profiles.
fn simulate_season(
    rng: &mut StreamRng,
    p_row: &[f64],
    q_row: &[f64],
    points: &[u32],
    n_shots: u64,
    attempts: &mut Vec<u64>,
    makes: &mut Vec<u64>,
) -> u64 {
    sample_multinomial(rng, n_shots, p_row, attempts);
    makes.clear();
    let mut total = 0;
    for k in 0..p_row.len() {
        let m = sample_binomial(rng, attempts[k], q_row[k]);
        makes.push(m);
        total += points[k] as u64 * m;
    }
    total
}

struct Sample {
    draw: usize,
    total: u64,
    detail: Option<RegionSample>,
}

/// Core simulation. `pick` chooses which entity's counts to condition on for
/// sample `r` of paired index `s`; `draw_of` maps `s` to a posterior draw.
fn simulate(
    post: &PosteriorDraws,
    cfg: &PredictiveConfig,
    seed: u64,
    paired: usize,
    draw_of: impl Fn(usize) -> usize + Sync,
    pick: impl Fn(usize, usize) -> usize + Sync,
    candidates: &[&RegionCounts],
) -> Result<Vec<Sample>, PredictiveError> {
    let points = post.dataset.scheme().points();
    let per_index: Vec<Vec<Sample>> = (0..paired)
        .into_par_iter()
        .map(|s| {
            let d = draw_of(s);
            let draw = &post.draws[d];
            let mut rng = substream(seed, domain::PREDICT, s as u64);
            let mut cache: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; candidates.len()];
            let mut out = Vec::with_capacity(cfg.samples_per_draw);
            let (mut attempts, mut makes) = (Vec::new(), Vec::new());
            for r in 0..cfg.samples_per_draw {
                let c = pick(s, r);
                if cache[c].is_none() {
                    cache[c] = Some(membership_probs_at(candidates[c], draw, d + 1)?);
                }
                let (sel, acc) = cache[c].as_ref().expect("filled above");
                let w = categorical(&mut rng, sel);
                let z = categorical(&mut rng, acc);
                let total = simulate_season(&mut rng, &draw.p[w], &draw.q[z], &points, cfg.n_shots, &mut attempts, &mut makes);
                out.push(Sample {
                    draw: d,
                    total,
                    detail: cfg.keep_region_detail.then(|| RegionSample {
                        attempts: attempts.clone(),
                        makes: makes.clone(),
                    }),
                });
            }
            Ok(out)
        })
        .collect::<Result<_, PredictiveError>>()?;
    Ok(per_index.into_iter().flatten().collect())
}

fn into_points(label: String, cfg: &PredictiveConfig, samples: Vec<Sample>) -> PointsDraws {
    let mut out = PointsDraws {
        label,
        n_shots: cfg.n_shots,
        draw_index: Vec::with_capacity(samples.len()),
        totals: Vec::with_capacity(samples.len()),
        per_game: Vec::with_capacity(samples.len()),
        region_detail: cfg.keep_region_detail.then(Vec::new),
    };
    for s in samples {
        out.draw_index.push(s.draw);
        out.totals.push(s.total);
        out.per_game.push(s.total as f64 / cfg.games_divisor);
        if let (Some(all), Some(d)) = (out.region_detail.as_mut(), s.detail) {
            all.push(d);
        }
    }
    out
}

fn check_regions(counts: &RegionCounts, post: &PosteriorDraws) -> Result<(), PredictiveError> {
    if counts.regions() != post.regions() {
        return Err(PredictiveError::RegionMismatch(format!(
            "{} has {} regions, posterior has {}",
            counts.key,
            counts.regions(),
            post.regions()
        )));
    }
    Ok(())
}

fn expected_points_seeded(counts: &RegionCounts, post: &PosteriorDraws, cfg: &PredictiveConfig, seed: u64, paired: usize) -> Result<PointsDraws, PredictiveError> {
    let n = post.draws.len();
    let samples = simulate(post, cfg, seed, paired, |s| s % n, |_, _| 0, &[counts])?;
    Ok(into_points(counts.key.label(), cfg, samples))
}

/// Posterior-predictive season totals for one entity.
pub fn expected_points(counts: &RegionCounts, post: &PosteriorDraws, cfg: &PredictiveConfig) -> Result<PointsDraws, PredictiveError> {
    cfg.validate()?;
    if post.is_empty() {
        return Err(PredictiveError::EmptyPosterior);
    }
    check_regions(counts, post)?;
    expected_points_seeded(counts, post, cfg, cfg.seed, post.draws.len())
}

pub const AVERAGE_TEAM_LABEL: &str = "average-team";

fn average_team_seeded(post: &PosteriorDraws, cfg: &PredictiveConfig, seed: u64, paired: usize) -> Result<PointsDraws, PredictiveError> {
    let teams: Vec<&RegionCounts> = post.dataset.rows().iter().collect();
    let n_draws = post.draws.len();
    let n_teams = teams.len();
    let picks: Vec<Vec<usize>> = (0..paired)
        .map(|s| {
            let mut rng = substream(seed, domain::TEAM_PICK, s as u64);
            (0..cfg.samples_per_draw).map(|_| rng.random_range(0..n_teams)).collect()
        })
        .collect();
    let samples = simulate(post, cfg, seed, paired, |s| s % n_draws, |s, r| picks[s][r], &teams)?;
    Ok(into_points(AVERAGE_TEAM_LABEL.to_string(), cfg, samples))
}

/// Totals for the "average team": each sample conditions on a team chosen
/// uniformly from the posterior's entities.
pub fn average_team_points(post_team: &PosteriorDraws, cfg: &PredictiveConfig) -> Result<PointsDraws, PredictiveError> {
    cfg.validate()?;
    if post_team.is_empty() {
        return Err(PredictiveError::EmptyPosterior);
    }
    average_team_seeded(post_team, cfg, cfg.seed, post_team.draws.len())
}

/// Expected points above average for one player.
///
/// Paired index `s` uses player draw `s` and team draw `s mod T`, where `T`
/// is the number of team draws; there is one paired index per player draw.
pub fn epaa(
    player_counts: &RegionCounts,
    post_player: &PosteriorDraws,
    post_team: &PosteriorDraws,
    cfg: &PredictiveConfig,
) -> Result<EpaaDraws, PredictiveError> {
    cfg.validate()?;
    if post_player.is_empty() || post_team.is_empty() {
        return Err(PredictiveError::EmptyPosterior);
    }
    if post_player.dataset.scheme() != post_team.dataset.scheme() {
        return Err(PredictiveError::RegionMismatch(format!(
            "player posterior has {} regions, team posterior has {} (or point values differ)",
            post_player.regions(),
            post_team.regions()
        )));
    }
    check_regions(player_counts, post_player)?;
    let paired = post_player.draws.len();
    let player = expected_points_seeded(player_counts, post_player, cfg, derive_seed(cfg.seed, domain::EPAA_PLAYER), paired)?;
    let team = average_team_seeded(post_team, cfg, derive_seed(cfg.seed, domain::EPAA_TEAM), paired)?;
    let diffs: Vec<i64> = player
        .totals
        .iter()
        .zip(&team.totals)
        .map(|(&a, &b)| a as i64 - b as i64)
        .collect();
    let epaa_mean = diffs.iter().map(|&d| d as f64).sum::<f64>() / diffs.len() as f64;
    Ok(EpaaDraws {
        label: player_counts.key.label(),
        n_shots: cfg.n_shots,
        draw_index: player.draw_index,
        per_game: diffs.iter().map(|&d| d as f64 / cfg.games_divisor).collect(),
        player_totals: player.totals,
        team_totals: team.totals,
        diffs,
        epaa_mean,
    })
}

/// Forward-simulates a dataset from known parameters: entity `i` shoots
/// `shots_per_entity[i]` times with profile `p[w_i]` and accuracy `q[z_i]`.
/// Entities are named `E001`, `E002`, ... in `season`.
pub fn simulate_dataset(
    truth: &ModelState,
    shots_per_entity: &[u64],
    scheme: &RegionScheme,
    kind: EntityKind,
    season: i32,
    seed: u64,
) -> Result<Dataset, PredictiveError> {
    let (l, j, i, k) = (truth.p.len(), truth.q.len(), truth.w.len(), scheme.len());
    truth.check(l, j, i, k).map_err(PredictiveError::InvalidTruth)?;
    if shots_per_entity.len() != i {
        return Err(PredictiveError::InvalidTruth(format!(
            "{} shot counts for {i} entities",
            shots_per_entity.len()
        )));
    }
    let width = (i.max(1) as f64).log10().floor() as usize + 1;
    let width = width.max(3);
    let rows = (0..i)
        .map(|e| {
            let mut rng = substream(seed, domain::SIMULATE, e as u64);
            let mut attempts = Vec::new();
            sample_multinomial(&mut rng, shots_per_entity[e], &truth.p[truth.w[e]], &mut attempts);
            let makes = attempts
                .iter()
                .zip(&truth.q[truth.z[e]])
                .map(|(&n, &q)| sample_binomial(&mut rng, n, q))
                .collect();
            RegionCounts::new(EntityKey::new(format!("E{:0width$}", e + 1), season), attempts, makes)
                .expect("simulated makes never exceed attempts")
        })
        .collect();
    Dataset::new(kind, scheme.clone(), rows).map_err(|e| PredictiveError::InvalidTruth(e.to_string()))
}

pub const EXACT_PMF_LIMIT: f64 = 1e5;

fn binomial_pmf(n: u64, q: f64) -> Vec<f64> {
    (0..=n)
        .map(|m| {
            if q <= 0.0 {
                (m == 0) as u8 as f64
            } else if q >= 1.0 {
                (m == n) as u8 as f64
            } else {
                (ln_binomial(n, m) + m as f64 * q.ln() + (n - m) as f64 * (-q).ln_1p()).exp()
            }
        })
        .collect()
}

fn compositions(n: u64, parts: usize, f: &mut impl FnMut(&[u64])) {
    fn rec(n: u64, parts: usize, prefix: &mut Vec<u64>, f: &mut impl FnMut(&[u64])) {
        if parts == 1 {
            prefix.push(n);
            f(prefix);
            prefix.pop();
            return;
        }
        for x in 0..=n {
            prefix.push(x);
            rec(n - x, parts - 1, prefix, f);
            prefix.pop();
        }
    }
    rec(n, parts, &mut Vec::new(), f);
}

fn ln_multinomial_pmf(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let mut acc = statrs::function::factorial::ln_factorial(n);
    for (&c, &p) in counts.iter().zip(probs) {
        acc -= statrs::function::factorial::ln_factorial(c);
        if c > 0 {
            acc += c as f64 * p.ln();
        }
    }
    acc
}

/// Exact posterior-predictive pmf of the season total, averaged uniformly
/// over `draws`, by enumerating every allocation of `n_shots` to regions.
/// Index `t` of the result is `P(total = t)`.
pub fn exact_points_pmf(counts: &RegionCounts, draws: &[ModelState], points: &[u32], n_shots: u64) -> Result<Vec<f64>, PredictiveError> {
    let k = points.len();
    let allocations = (1..k).fold(1.0, |acc, i| acc * (n_shots as f64 + i as f64) / i as f64);
    if allocations > EXACT_PMF_LIMIT {
        return Err(PredictiveError::TooLarge {
            size: allocations,
            limit: EXACT_PMF_LIMIT,
        });
    }
    if draws.is_empty() {
        return Err(PredictiveError::EmptyPosterior);
    }
    let max_total = n_shots as usize * points.iter().copied().max().unwrap_or(0) as usize;
    let mut pmf = vec![0.0; max_total + 1];
    let weight = 1.0 / draws.len() as f64;
    for (d, draw) in draws.iter().enumerate() {
        let (sel, acc) = membership_probs_at(counts, draw, d + 1)?;
        for (w, &pw) in sel.iter().enumerate() {
            if pw == 0.0 {
                continue;
            }
            for (z, &pz) in acc.iter().enumerate() {
                if pz == 0.0 {
                    continue;
                }
                let scale = weight * pw * pz;
                compositions(n_shots, k, &mut |alloc: &[u64]| {
                    let lm = ln_multinomial_pmf(alloc, &draw.p[w]);
                    if lm == f64::NEG_INFINITY {
                        return;
                    }
                    let mut dist = vec![1.0];
                    for r in 0..k {
                        let bin = binomial_pmf(alloc[r], draw.q[z][r]);
                        let step = points[r] as usize;
                        let mut next = vec![0.0; dist.len() + step * alloc[r] as usize];
                        for (t, &pt) in dist.iter().enumerate() {
                            if pt == 0.0 {
                                continue;
                            }
                            for (m, &pm) in bin.iter().enumerate() {
                                next[t + step * m] += pt * pm;
                            }
                        }
                        dist = next;
                    }
                    let factor = scale * lm.exp();
                    for (t, &pt) in dist.iter().enumerate() {
                        pmf[t] += factor * pt;
                    }
                });
            }
        }
    }
    Ok(pmf)
}
