use rand::Rng;
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use super::dist::{sample_beta, sample_categorical_log, sample_dirichlet};
use super::init::kmeans_init;
use super::{ChainConfig, ModelState, PosteriorDraws, Priors, SamplerError};
use crate::ingest::Dataset;
use crate::rng::{domain, substream};

/// Counts cached as flat `I x K` arrays for repeated sweeps.
pub struct Sweeper<'a> {
    priors: &'a Priors,
    entities: usize,
    regions: usize,
    attempts: Vec<f64>,
    makes: Vec<f64>,
    misses: Vec<f64>,
    // scratch
    log_p: Vec<f64>,
    log_q: Vec<f64>,
    log_1mq: Vec<f64>,
    weights: Vec<f64>,
}

impl<'a> Sweeper<'a> {
    pub fn new(data: &Dataset, priors: &'a Priors) -> Self {
        let entities = data.len();
        let regions = data.regions();
        let mut attempts = Vec::with_capacity(entities * regions);
        let mut makes = Vec::with_capacity(entities * regions);
        for row in data.rows() {
            attempts.extend(row.attempts().iter().map(|&x| x as f64));
            makes.extend(row.makes().iter().map(|&x| x as f64));
        }
        let misses = attempts.iter().zip(&makes).map(|(n, m)| n - m).collect();
        Sweeper {
            priors,
            entities,
            regions,
            attempts,
            makes,
            misses,
            log_p: Vec::new(),
            log_q: Vec::new(),
            log_1mq: Vec::new(),
            weights: Vec::new(),
        }
    }

    fn check_dims(&self, state: &ModelState) -> Result<(), SamplerError> {
        state
            .check(
                self.priors.selection_clusters,
                self.priors.accuracy_clusters,
                self.entities,
                self.regions,
            )
            .map_err(SamplerError::Dimension)
    }

    /// One full sweep over the six blocks, in order: w, z, p, q, pi, theta.
    pub fn sweep<R: Rng + ?Sized>(&mut self, state: &mut ModelState, rng: &mut R) -> Result<(), SamplerError> {
        self.sample_selection_labels(state, rng)?;
        self.sample_accuracy_labels(state, rng)?;
        self.sample_selection_profiles(state, rng);
        self.sample_accuracy_profiles(state, rng);
        state.pi = sample_weights(rng, &state.w, state.pi.len(), self.priors.beta);
        state.theta = sample_weights(rng, &state.z, state.theta.len(), self.priors.gamma);
        Ok(())
    }

    fn sample_selection_labels<R: Rng + ?Sized>(&mut self, state: &mut ModelState, rng: &mut R) -> Result<(), SamplerError> {
        let (l_count, k_count) = (state.p.len(), self.regions);
        self.log_p.clear();
        self.log_p.extend(state.p.iter().flatten().map(|x| x.ln()));
        let log_pi: Vec<f64> = state.pi.iter().map(|x| x.ln()).collect();
        for i in 0..self.entities {
            let counts = &self.attempts[i * k_count..(i + 1) * k_count];
            self.weights.clear();
            for l in 0..l_count {
                let lp = &self.log_p[l * k_count..(l + 1) * k_count];
                let mut acc = log_pi[l];
                for k in 0..k_count {
                    if counts[k] > 0.0 {
                        acc += counts[k] * lp[k];
                    }
                }
                self.weights.push(acc);
            }
            state.w[i] = sample_categorical_log(rng, &self.weights).ok_or_else(|| SamplerError::NonFinite {
                block: "w",
                index: i,
                dump: dump(state, &self.weights, counts),
            })?;
        }
        Ok(())
    }

    fn sample_accuracy_labels<R: Rng + ?Sized>(&mut self, state: &mut ModelState, rng: &mut R) -> Result<(), SamplerError> {
        let (j_count, k_count) = (state.q.len(), self.regions);
        self.log_q.clear();
        self.log_1mq.clear();
        for row in &state.q {
            for &x in row {
                self.log_q.push(x.ln());
                self.log_1mq.push((-x).ln_1p());
            }
        }
        let log_theta: Vec<f64> = state.theta.iter().map(|x| x.ln()).collect();
        for i in 0..self.entities {
            let made = &self.makes[i * k_count..(i + 1) * k_count];
            let missed = &self.misses[i * k_count..(i + 1) * k_count];
            self.weights.clear();
            for j in 0..j_count {
                let off = j * k_count;
                let mut acc = log_theta[j];
                for k in 0..k_count {
                    if made[k] > 0.0 {
                        acc += made[k] * self.log_q[off + k];
                    }
                    if missed[k] > 0.0 {
                        acc += missed[k] * self.log_1mq[off + k];
                    }
                }
                self.weights.push(acc);
            }
            state.z[i] = sample_categorical_log(rng, &self.weights).ok_or_else(|| SamplerError::NonFinite {
                block: "z",
                index: i,
                dump: dump(state, &self.weights, made),
            })?;
        }
        Ok(())
    }

    fn sample_selection_profiles<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) {
        let k_count = self.regions;
        let mut totals = vec![vec![self.priors.alpha; k_count]; state.p.len()];
        for (i, &l) in state.w.iter().enumerate() {
            for (t, n) in totals[l].iter_mut().zip(&self.attempts[i * k_count..(i + 1) * k_count]) {
                *t += n;
            }
        }
        for (row, shapes) in state.p.iter_mut().zip(&totals) {
            *row = sample_dirichlet(rng, shapes);
        }
    }

    fn sample_accuracy_profiles<R: Rng + ?Sized>(&self, state: &mut ModelState, rng: &mut R) {
        let k_count = self.regions;
        let j_count = state.q.len();
        let mut made = vec![0.0; j_count * k_count];
        let mut missed = vec![0.0; j_count * k_count];
        for (i, &j) in state.z.iter().enumerate() {
            for k in 0..k_count {
                made[j * k_count + k] += self.makes[i * k_count + k];
                missed[j * k_count + k] += self.misses[i * k_count + k];
            }
        }
        for j in 0..j_count {
            for k in 0..k_count {
                state.q[j][k] = sample_beta(
                    rng,
                    self.priors.beta_a + made[j * k_count + k],
                    self.priors.beta_b + missed[j * k_count + k],
                );
            }
        }
    }
}

pub(crate) fn sample_weights<R: Rng + ?Sized>(rng: &mut R, labels: &[usize], clusters: usize, concentration: f64) -> Vec<f64> {
    let mut shapes = vec![concentration; clusters];
    for &x in labels {
        shapes[x] += 1.0;
    }
    sample_dirichlet(rng, &shapes)
}

fn dump(state: &ModelState, weights: &[f64], counts: &[f64]) -> String {
    format!(
        "log weights: {weights:?}\ncounts: {counts:?}\npi: {:?}\ntheta: {:?}\np: {:?}\nq: {:?}",
        state.pi, state.theta, state.p, state.q
    )
}

/// One Gibbs sweep of `state` against `data`.
pub fn gibbs_sweep<R: Rng + ?Sized>(state: &mut ModelState, data: &Dataset, priors: &Priors, rng: &mut R) -> Result<(), SamplerError> {
    priors.validate()?;
    let mut sweeper = Sweeper::new(data, priors);
    sweeper.check_dims(state)?;
    sweeper.sweep(state, rng)
}

fn run_single_chain(data: &Dataset, priors: &Priors, config: &ChainConfig, chain: usize) -> Result<Vec<ModelState>, SamplerError> {
    let init_seed = crate::rng::derive_seed(config.seed, chain as u64);
    let mut state = kmeans_init(data, priors, init_seed)?;
    let mut sweeper = Sweeper::new(data, priors);
    sweeper.check_dims(&state)?;
    let mut rng = substream(config.seed, domain::CHAIN, chain as u64);
    let mut kept = Vec::with_capacity(config.retained_per_chain());
    for t in 1..=config.iterations {
        sweeper.sweep(&mut state, &mut rng)?;
        if t > config.burn_in && (t - config.burn_in) % config.thin == 0 {
            kept.push(state.clone());
        }
    }
    Ok(kept)
}

/// k-means initialisation followed by `iterations` sweeps per chain.
/// Output depends only on `(data, priors, config)`.
pub fn run_chain(data: &Dataset, priors: &Priors, config: &ChainConfig) -> Result<PosteriorDraws, SamplerError> {
    priors.validate()?;
    config.validate()?;
    let chains: Vec<Vec<ModelState>> = if config.chains == 1 {
        vec![run_single_chain(data, priors, config, 0)?]
    } else {
        (0..config.chains)
            .into_par_iter()
            .map(|c| run_single_chain(data, priors, config, c))
            .collect::<Result<_, _>>()?
    };
    Ok(PosteriorDraws {
        draws: chains.into_iter().flatten().collect(),
        priors: priors.clone(),
        config: config.clone(),
        dataset: data.clone(),
        dataset_fingerprint: data.fingerprint(),
    })
}

fn ln_factorial(n: f64) -> f64 {
    ln_gamma(n + 1.0)
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn ln_dirichlet_density(x: &[f64], concentration: f64) -> f64 {
    let k = x.len() as f64;
    ln_gamma(k * concentration) - k * ln_gamma(concentration) + x.iter().map(|&v| xlogy(concentration - 1.0, v)).sum::<f64>()
}

/// Log joint density `log p(attempts, makes, w, z, p, q, pi, theta)`,
/// including multinomial and binomial coefficients.
pub fn log_joint(state: &ModelState, data: &Dataset, priors: &Priors) -> f64 {
    let mut total = 0.0;
    for (i, row) in data.rows().iter().enumerate() {
        let (w, z) = (state.w[i], state.z[i]);
        let n_total = row.total_attempts() as f64;
        total += ln_factorial(n_total);
        for k in 0..row.regions() {
            let n = row.attempts()[k] as f64;
            let m = row.makes()[k] as f64;
            total -= ln_factorial(n);
            total += xlogy(n, state.p[w][k]);
            total += ln_factorial(n) - ln_factorial(m) - ln_factorial(n - m);
            total += xlogy(m, state.q[z][k]) + if n - m > 0.0 { (n - m) * (-state.q[z][k]).ln_1p() } else { 0.0 };
        }
        total += state.pi[w].ln() + state.theta[z].ln();
    }
    for row in &state.p {
        total += ln_dirichlet_density(row, priors.alpha);
    }
    let ln_beta_norm = ln_gamma(priors.beta_a + priors.beta_b) - ln_gamma(priors.beta_a) - ln_gamma(priors.beta_b);
    for &q in state.q.iter().flatten() {
        total += ln_beta_norm + xlogy(priors.beta_a - 1.0, q) + if priors.beta_b != 1.0 { (priors.beta_b - 1.0) * (-q).ln_1p() } else { 0.0 };
    }
    total += ln_dirichlet_density(&state.pi, priors.beta);
    total += ln_dirichlet_density(&state.theta, priors.gamma);
    total
}
