//! Exact posterior for very small instances, by enumerating every labelling.
//!
//! With `p`, `q`, `pi` and `theta` integrated out, each labelling has a closed
//! form weight (Dirichlet-multinomial and beta-binomial marginals). The
//! selection and accuracy facets share no parameters, so the joint posterior
//! over `(w, z)` is the product of the two enumerations.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use super::dist::{normalize_log, sample_beta, sample_categorical, sample_dirichlet};
use super::gibbs::sample_weights;
use super::{ModelState, Priors, SamplerError};
use crate::ingest::Dataset;

/// Upper bound on `L^I * J^I`.
pub const EXACT_ENUMERATION_LIMIT: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct ExactPosterior {
    /// `P(w_i = l | data)`, `I x L`.
    pub selection: Vec<Vec<f64>>,
    /// `P(z_i = j | data)`, `I x J`.
    pub accuracy: Vec<Vec<f64>>,
    /// `P(w_a = w_b | data)`.
    pub selection_coclustering: Vec<Vec<f64>>,
    /// `P(z_a = z_b | data)`.
    pub accuracy_coclustering: Vec<Vec<f64>>,
    /// Posterior mean of each selection profile, `L x K`.
    pub p_mean: Vec<Vec<f64>>,
    /// Posterior mean of each make-probability row, `J x K`.
    pub q_mean: Vec<Vec<f64>>,
    selection_configs: Vec<(Vec<usize>, f64)>,
    accuracy_configs: Vec<(Vec<usize>, f64)>,
}

fn ln_dirichlet_multinomial(sums: &[f64], concentration: f64) -> f64 {
    let k = sums.len() as f64;
    let total: f64 = sums.iter().sum();
    ln_gamma(k * concentration) - ln_gamma(k * concentration + total)
        + sums.iter().map(|&s| ln_gamma(concentration + s) - ln_gamma(concentration)).sum::<f64>()
}

fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Iterates over all `clusters^n` labellings in lexicographic order.
fn for_each_labelling(n: usize, clusters: usize, mut f: impl FnMut(&[usize])) {
    let mut labels = vec![0usize; n];
    loop {
        f(&labels);
        let mut pos = n;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < clusters {
                break;
            }
            labels[pos] = 0;
        }
    }
}

fn label_counts(labels: &[usize], clusters: usize) -> Vec<f64> {
    let mut c = vec![0.0; clusters];
    for &l in labels {
        c[l] += 1.0;
    }
    c
}

struct Facet {
    configs: Vec<(Vec<usize>, f64)>,
    marginals: Vec<Vec<f64>>,
    coclustering: Vec<Vec<f64>>,
}

fn enumerate(n: usize, clusters: usize, concentration: f64, mut ln_lik: impl FnMut(&[usize]) -> f64) -> Facet {
    let mut configs = Vec::new();
    let mut logs = Vec::new();
    let ln_prior_norm = ln_gamma(clusters as f64 * concentration) - ln_gamma(clusters as f64 * concentration + n as f64);
    for_each_labelling(n, clusters, |labels| {
        let counts = label_counts(labels, clusters);
        let ln_prior = ln_prior_norm + counts.iter().map(|&c| ln_gamma(concentration + c) - ln_gamma(concentration)).sum::<f64>();
        logs.push(ln_prior + ln_lik(labels));
        configs.push(labels.to_vec());
    });
    let probs = normalize_log(&logs);
    let mut marginals = vec![vec![0.0; clusters]; n];
    let mut coclustering = vec![vec![0.0; n]; n];
    for (labels, &pr) in configs.iter().zip(&probs) {
        for a in 0..n {
            marginals[a][labels[a]] += pr;
            for b in 0..n {
                if labels[a] == labels[b] {
                    coclustering[a][b] += pr;
                }
            }
        }
    }
    Facet {
        configs: configs.into_iter().zip(probs).collect(),
        marginals,
        coclustering,
    }
}

/// Exact membership marginals, co-clustering probabilities and profile means.
pub fn exact_posterior_tiny(data: &Dataset, priors: &Priors) -> Result<ExactPosterior, SamplerError> {
    priors.validate()?;
    let n = data.len();
    let k_count = data.regions();
    let (l_count, j_count) = (priors.selection_clusters, priors.accuracy_clusters);
    let size = (l_count as f64).powi(n as i32) * (j_count as f64).powi(n as i32);
    if size > EXACT_ENUMERATION_LIMIT {
        return Err(SamplerError::TooLarge {
            size,
            limit: EXACT_ENUMERATION_LIMIT,
        });
    }
    let attempts: Vec<Vec<f64>> = data.rows().iter().map(|r| r.attempts().iter().map(|&x| x as f64).collect()).collect();
    let makes: Vec<Vec<f64>> = data.rows().iter().map(|r| r.makes().iter().map(|&x| x as f64).collect()).collect();

    let selection_sums = |labels: &[usize]| -> Vec<Vec<f64>> {
        let mut sums = vec![vec![0.0; k_count]; l_count];
        for (i, &l) in labels.iter().enumerate() {
            for k in 0..k_count {
                sums[l][k] += attempts[i][k];
            }
        }
        sums
    };
    let accuracy_sums = |labels: &[usize]| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut made = vec![vec![0.0; k_count]; j_count];
        let mut missed = vec![vec![0.0; k_count]; j_count];
        for (i, &j) in labels.iter().enumerate() {
            for k in 0..k_count {
                made[j][k] += makes[i][k];
                missed[j][k] += attempts[i][k] - makes[i][k];
            }
        }
        (made, missed)
    };

    let sel = enumerate(n, l_count, priors.beta, |labels| {
        selection_sums(labels).iter().map(|s| ln_dirichlet_multinomial(s, priors.alpha)).sum()
    });
    let ln_b0 = ln_beta_fn(priors.beta_a, priors.beta_b);
    let acc = enumerate(n, j_count, priors.gamma, |labels| {
        let (made, missed) = accuracy_sums(labels);
        let mut total = 0.0;
        for j in 0..j_count {
            for k in 0..k_count {
                total += ln_beta_fn(priors.beta_a + made[j][k], priors.beta_b + missed[j][k]) - ln_b0;
            }
        }
        total
    });

    let mut p_mean = vec![vec![0.0; k_count]; l_count];
    for (labels, pr) in &sel.configs {
        let sums = selection_sums(labels);
        for l in 0..l_count {
            let denom = k_count as f64 * priors.alpha + sums[l].iter().sum::<f64>();
            for k in 0..k_count {
                p_mean[l][k] += pr * (priors.alpha + sums[l][k]) / denom;
            }
        }
    }
    let mut q_mean = vec![vec![0.0; k_count]; j_count];
    for (labels, pr) in &acc.configs {
        let (made, missed) = accuracy_sums(labels);
        for j in 0..j_count {
            for k in 0..k_count {
                let a = priors.beta_a + made[j][k];
                let b = priors.beta_b + missed[j][k];
                q_mean[j][k] += pr * a / (a + b);
            }
        }
    }

    Ok(ExactPosterior {
        selection: sel.marginals,
        accuracy: acc.marginals,
        selection_coclustering: sel.coclustering,
        accuracy_coclustering: acc.coclustering,
        p_mean,
        q_mean,
        selection_configs: sel.configs,
        accuracy_configs: acc.configs,
    })
}

impl ExactPosterior {
    /// Exact draw from the joint posterior: labels from the enumeration, then
    /// profiles and weights from their conjugate conditionals.
    pub fn sample_state<R: Rng + ?Sized>(&self, data: &Dataset, priors: &Priors, rng: &mut R) -> ModelState {
        let pick = |configs: &[(Vec<usize>, f64)], rng: &mut R| -> Vec<usize> {
            let probs: Vec<f64> = configs.iter().map(|c| c.1).collect();
            configs[sample_categorical(rng, &probs)].0.clone()
        };
        let w = pick(&self.selection_configs, rng);
        let z = pick(&self.accuracy_configs, rng);
        let k_count = data.regions();
        let (l_count, j_count) = (priors.selection_clusters, priors.accuracy_clusters);
        let mut shapes = vec![vec![priors.alpha; k_count]; l_count];
        let mut made = vec![vec![priors.beta_a; k_count]; j_count];
        let mut missed = vec![vec![priors.beta_b; k_count]; j_count];
        for (i, row) in data.rows().iter().enumerate() {
            for k in 0..k_count {
                shapes[w[i]][k] += row.attempts()[k] as f64;
                made[z[i]][k] += row.makes()[k] as f64;
                missed[z[i]][k] += (row.attempts()[k] - row.makes()[k]) as f64;
            }
        }
        let p = shapes.iter().map(|s| sample_dirichlet(rng, s)).collect();
        let q = (0..j_count)
            .map(|j| (0..k_count).map(|k| sample_beta(rng, made[j][k], missed[j][k])).collect())
            .collect();
        let pi = sample_weights(rng, &w, l_count, priors.beta);
        let theta = sample_weights(rng, &z, j_count, priors.gamma);
        ModelState { p, q, w, z, pi, theta }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{EntityKey, EntityKind, RegionCounts};
    use crate::region::RegionScheme;

    fn data(rows: &[(Vec<u64>, Vec<u64>)]) -> Dataset {
        let k = rows[0].0.len();
        let scheme = RegionScheme::custom((0..k).map(|i| (format!("R{i}"), 1))).unwrap();
        let rows = rows
            .iter()
            .enumerate()
            .map(|(i, (a, m))| RegionCounts::new(EntityKey::new(format!("e{i}"), 2021), a.clone(), m.clone()).unwrap())
            .collect();
        Dataset::new(EntityKind::Team, scheme, rows).unwrap()
    }

    #[test]
    fn lone_entity_labels_are_exchangeable() {
        let d = data(&[(vec![3, 2], vec![1, 1])]);
        let e = exact_posterior_tiny(&d, &Priors::new(2, 2, 5.0, 5.0, 5.0)).unwrap();
        assert!((e.selection[0][0] - 0.5).abs() < 1e-12);
        assert!((e.selection[0][1] - 0.5).abs() < 1e-12);
        assert!((e.accuracy[0][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_entities_share_marginals() {
        let d = data(&[(vec![3, 2], vec![1, 1]), (vec![3, 2], vec![1, 1])]);
        let e = exact_posterior_tiny(&d, &Priors::new(3, 2, 5.0, 5.0, 5.0)).unwrap();
        for l in 0..3 {
            assert!((e.selection[0][l] - e.selection[1][l]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_cluster_means_are_conjugate() {
        let d = data(&[(vec![10, 0], vec![4, 0])]);
        let e = exact_posterior_tiny(&d, &Priors::new(1, 1, 5.0, 5.0, 5.0)).unwrap();
        assert!((e.p_mean[0][0] - 0.75).abs() < 1e-12);
        // Beta(1 + 4, 1 + 6)
        assert!((e.q_mean[0][0] - 5.0 / 12.0).abs() < 1e-12);
        // untouched region keeps the prior mean
        assert!((e.q_mean[0][1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn refuses_large_instances() {
        let rows: Vec<_> = (0..10).map(|_| (vec![1, 1], vec![0, 0])).collect();
        let d = data(&rows);
        assert!(matches!(
            exact_posterior_tiny(&d, &Priors::new(2, 2, 5.0, 5.0, 5.0)),
            Err(SamplerError::TooLarge { .. })
        ));
    }

    #[test]
    fn probabilities_are_normalised() {
        let d = data(&[(vec![5, 0], vec![0, 0]), (vec![0, 5], vec![0, 0]), (vec![5, 0], vec![0, 0])]);
        let e = exact_posterior_tiny(&d, &Priors::new(2, 2, 5.0, 5.0, 5.0)).unwrap();
        for row in e.selection.iter().chain(&e.accuracy) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // entities 1 and 3 co-cluster more often than 1 and 2
        assert!(e.selection_coclustering[0][2] > e.selection_coclustering[0][1]);
        assert!((e.selection_coclustering[1][1] - 1.0).abs() < 1e-12);
    }
}
