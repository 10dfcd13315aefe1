//! Two-facet finite mixture over shot counts, fitted by Gibbs sampling.
//!
//! Each entity `i` has a shot-selection label `w_i` in `0..L` and an accuracy
//! label `z_i` in `0..J`. Given the labels:
//!
//! ```text
//! attempts_i | w_i      ~ Multinomial(N_i, p[w_i])
//! makes_ik   | z_i      ~ Binomial(attempts_ik, q[z_i][k])
//! p[l]                  ~ Dirichlet(alpha, ..., alpha)
//! q[j][k]               ~ Beta(beta_a, beta_b)
//! w_i ~ Categorical(pi),  pi    ~ Dirichlet(beta, ..., beta)
//! z_i ~ Categorical(theta), theta ~ Dirichlet(gamma, ..., gamma)
//! ```
//!
//! Labels are stored 0-based in memory and 1-based on disk.

mod dist;
mod ess;
mod exact;
mod gibbs;
mod init;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Dataset, EntityKey};

pub use dist::{sample_beta, sample_categorical_log, sample_dirichlet};
pub use ess::{effective_sample_size, Ess};
pub use exact::{exact_posterior_tiny, ExactPosterior, EXACT_ENUMERATION_LIMIT};
pub use gibbs::{gibbs_sweep, log_joint, run_chain, Sweeper};
pub use init::{init_warnings, kmeans_init};
pub use trace::{trace_export, Selector, TraceRow};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid priors: {0}")]
    InvalidPriors(String),
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite log probability while sampling {block} for entity {index}\n{dump}")]
    NonFinite {
        block: &'static str,
        index: usize,
        dump: String,
    },
    #[error("instance too large for enumeration: {size} assignments exceeds the limit of {limit}")]
    TooLarge { size: f64, limit: f64 },
    #[error("unknown trace selector `{given}`; valid selectors: {valid}")]
    UnknownSelector { given: String, valid: String },
    #[error("series too short for ESS: {0} values (need at least 10)")]
    SeriesTooShort(usize),
    #[error("series contains non-finite values")]
    NonFiniteSeries,
}

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Number of shot-selection clusters (L).
    pub selection_clusters: usize,
    /// Number of shot-accuracy clusters (J).
    pub accuracy_clusters: usize,
    /// Dirichlet concentration for each selection profile.
    pub alpha: f64,
    /// Dirichlet concentration for selection-cluster weights.
    pub beta: f64,
    /// Dirichlet concentration for accuracy-cluster weights.
    pub gamma: f64,
    /// Beta prior on each make probability.
    pub beta_a: f64,
    pub beta_b: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            selection_clusters: 20,
            accuracy_clusters: 20,
            alpha: 5.0,
            beta: 5.0,
            gamma: 5.0,
            beta_a: 1.0,
            beta_b: 1.0,
        }
    }
}

impl Priors {
    pub fn new(selection_clusters: usize, accuracy_clusters: usize, alpha: f64, beta: f64, gamma: f64) -> Self {
        Priors {
            selection_clusters,
            accuracy_clusters,
            alpha,
            beta,
            gamma,
            ..Priors::default()
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.selection_clusters == 0 || self.accuracy_clusters == 0 {
            return Err(SamplerError::InvalidPriors("L and J must be at least 1".into()));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("beta_a", self.beta_a),
            ("beta_b", self.beta_b),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SamplerError::InvalidPriors(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Independent chains; retained draws are concatenated in chain order.
    #[serde(default = "one")]
    pub chains: usize,
}

fn one() -> usize {
    1
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 10_000,
            burn_in: 3_000,
            thin: 1,
            seed: 0,
            chains: 1,
        }
    }
}

impl ChainConfig {
    pub fn new(iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        ChainConfig {
            iterations,
            burn_in,
            thin,
            seed,
            chains: 1,
        }
    }

    /// Retained draws per chain.
    pub fn retained_per_chain(&self) -> usize {
        if self.thin == 0 || self.burn_in >= self.iterations {
            return 0;
        }
        (self.iterations - self.burn_in) / self.thin
    }

    pub fn retained(&self) -> usize {
        self.retained_per_chain() * self.chains
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.iterations == 0 {
            return Err(SamplerError::InvalidConfig("iterations must be positive".into()));
        }
        if self.thin == 0 {
            return Err(SamplerError::InvalidConfig("thin must be positive".into()));
        }
        if self.chains == 0 {
            return Err(SamplerError::InvalidConfig("chains must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(SamplerError::InvalidConfig(format!(
                "burn-in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if self.retained_per_chain() == 0 {
            return Err(SamplerError::InvalidConfig(format!(
                "no draws retained: ({} - {}) / {} < 1",
                self.iterations, self.burn_in, self.thin
            )));
        }
        Ok(())
    }

    /// Sweep number (1-based, within its chain) of retained draw `s`.
    pub fn iteration_of(&self, s: usize) -> (usize, usize) {
        let per = self.retained_per_chain().max(1);
        let chain = s / per;
        let within = s % per;
        (chain, self.burn_in + (within + 1) * self.thin)
    }
}

/// One complete parameter draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DrawRecord", try_from = "DrawRecord")]
pub struct ModelState {
    /// Selection profiles, `L x K`, rows on the simplex.
    pub p: Vec<Vec<f64>>,
    /// Make probabilities, `J x K`.
    pub q: Vec<Vec<f64>>,
    /// Selection label per entity, `0..L`.
    pub w: Vec<usize>,
    /// Accuracy label per entity, `0..J`.
    pub z: Vec<usize>,
    pub pi: Vec<f64>,
    pub theta: Vec<f64>,
}

const SIMPLEX_TOL: f64 = 1e-12;

impl ModelState {
    pub fn selection_clusters(&self) -> usize {
        self.p.len()
    }

    pub fn accuracy_clusters(&self) -> usize {
        self.q.len()
    }

    pub fn regions(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    pub fn entities(&self) -> usize {
        self.w.len()
    }

    /// Checks shapes, label ranges, simplex sums and probability ranges.
    pub fn check(&self, l: usize, j: usize, i: usize, k: usize) -> Result<(), String> {
        if self.p.len() != l || self.pi.len() != l {
            return Err(format!("expected {l} selection clusters, p has {} rows and pi {}", self.p.len(), self.pi.len()));
        }
        if self.q.len() != j || self.theta.len() != j {
            return Err(format!("expected {j} accuracy clusters, q has {} rows and theta {}", self.q.len(), self.theta.len()));
        }
        if self.w.len() != i || self.z.len() != i {
            return Err(format!("expected {i} entities, w has {} and z {}", self.w.len(), self.z.len()));
        }
        if self.p.iter().chain(&self.q).any(|row| row.len() != k) {
            return Err(format!("profile rows must have {k} regions"));
        }
        if let Some(x) = self.w.iter().find(|&&x| x >= l) {
            return Err(format!("selection label {} out of range 1..={l}", x + 1));
        }
        if let Some(x) = self.z.iter().find(|&&x| x >= j) {
            return Err(format!("accuracy label {} out of range 1..={j}", x + 1));
        }
        let on_simplex = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL;
        if let Some(r) = self.p.iter().position(|row| !on_simplex(row)) {
            return Err(format!("p row {} is not on the simplex", r + 1));
        }
        if !on_simplex(&self.pi) {
            return Err("pi is not on the simplex".into());
        }
        if !on_simplex(&self.theta) {
            return Err("theta is not on the simplex".into());
        }
        if self.q.iter().flatten().any(|x| !(0.0..=1.0).contains(x)) {
            return Err("q entries must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// On-disk form of [`ModelState`]: labels are 1-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DrawRecord {
    p: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    w: Vec<usize>,
    z: Vec<usize>,
    pi: Vec<f64>,
    theta: Vec<f64>,
}

impl From<ModelState> for DrawRecord {
    fn from(s: ModelState) -> Self {
        DrawRecord {
            p: s.p,
            q: s.q,
            w: s.w.into_iter().map(|x| x + 1).collect(),
            z: s.z.into_iter().map(|x| x + 1).collect(),
            pi: s.pi,
            theta: s.theta,
        }
    }
}

impl TryFrom<DrawRecord> for ModelState {
    type Error = String;

    fn try_from(r: DrawRecord) -> Result<Self, Self::Error> {
        let zero_based = |v: Vec<usize>, name: &str| -> Result<Vec<usize>, String> {
            v.into_iter()
                .map(|x| x.checked_sub(1).ok_or_else(|| format!("{name} labels are 1-based; found 0")))
                .collect()
        };
        Ok(ModelState {
            p: r.p,
            q: r.q,
            w: zero_based(r.w, "w")?,
            z: zero_based(r.z, "z")?,
            pi: r.pi,
            theta: r.theta,
        })
    }
}

/// Retained draws of a chain together with what produced them.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub draws: Vec<ModelState>,
    pub priors: Priors,
    pub config: ChainConfig,
    pub dataset: Dataset,
    pub dataset_fingerprint: String,
}

impl PosteriorDraws {
    /// Row `i` of every draw refers to `entity_index()[i]`.
    pub fn entity_index(&self) -> Vec<EntityKey> {
        self.dataset.keys()
    }

    pub fn regions(&self) -> usize {
        self.dataset.regions()
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Full consistency check, used after loading from disk.
    pub fn validate(&self) -> Result<(), SamplerError> {
        self.priors.validate()?;
        self.config.validate()?;
        if self.draws.len() != self.config.retained() {
            return Err(SamplerError::Dimension(format!(
                "{} draws stored but configuration retains {}",
                self.draws.len(),
                self.config.retained()
            )));
        }
        if self.dataset.fingerprint() != self.dataset_fingerprint {
            return Err(SamplerError::Dimension("dataset fingerprint does not match its contents".into()));
        }
        let (l, j) = (self.priors.selection_clusters, self.priors.accuracy_clusters);
        let (i, k) = (self.dataset.len(), self.dataset.regions());
        for (s, d) in self.draws.iter().enumerate() {
            d.check(l, j, i, k)
                .map_err(|e| SamplerError::Dimension(format!("draw {}: {e}", s + 1)))?;
        }
        Ok(())
    }
}
