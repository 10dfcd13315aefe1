use super::{ModelState, Priors, SamplerError};
use crate::ingest::Dataset;
use crate::kmeans::kmeans;
use crate::rng::{domain, substream};

fn selection_features(data: &Dataset) -> Vec<Vec<f64>> {
    data.rows()
        .iter()
        .map(|r| {
            let n = r.total_attempts() as f64;
            r.attempts()
                .iter()
                .map(|&a| if n > 0.0 { a as f64 / n } else { 0.0 })
                .collect()
        })
        .collect()
}

fn accuracy_features(data: &Dataset) -> Vec<Vec<f64>> {
    data.rows()
        .iter()
        .map(|r| {
            r.attempts()
                .iter()
                .zip(r.makes())
                .map(|(&a, &m)| if a > 0 { m as f64 / a as f64 } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Cluster weights from label counts; empty clusters get a floor of
/// `1 / (I + clusters)` before renormalising.
fn membership_weights(labels: &[usize], clusters: usize) -> Vec<f64> {
    let n = labels.len() as f64;
    let mut counts = vec![0.0; clusters];
    for &l in labels {
        counts[l] += 1.0;
    }
    let floor = 1.0 / (n + clusters as f64);
    let mut weights: Vec<f64> = if counts.iter().any(|&c| c == 0.0) {
        counts.iter().map(|&c| (c / n).max(floor)).collect()
    } else {
        counts.iter().map(|&c| c / n).collect()
    };
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// Warnings for configurations that leave clusters empty at initialisation.
pub fn init_warnings(data: &Dataset, priors: &Priors) -> Vec<String> {
    let i = data.len();
    let mut out = Vec::new();
    if priors.selection_clusters > i {
        out.push(format!(
            "L = {} exceeds the {i} entities; some selection clusters start empty",
            priors.selection_clusters
        ));
    }
    if priors.accuracy_clusters > i {
        out.push(format!(
            "J = {} exceeds the {i} entities; some accuracy clusters start empty",
            priors.accuracy_clusters
        ));
    }
    out
}

/// Starting state from k-means on attempt shares (for `w`) and per-region
/// make rates (for `z`). Profiles are member averages; empty clusters get
/// uniform shares and make probability one half.
pub fn kmeans_init(data: &Dataset, priors: &Priors, seed: u64) -> Result<ModelState, SamplerError> {
    priors.validate()?;
    let (l_count, j_count) = (priors.selection_clusters, priors.accuracy_clusters);
    let k_count = data.regions();
    let mut rng = substream(seed, domain::KMEANS, 0);

    let sel = selection_features(data);
    let w = kmeans(&sel, l_count, &mut rng).assignments;
    let acc = accuracy_features(data);
    let z = kmeans(&acc, j_count, &mut rng).assignments;

    let mut p = vec![vec![0.0; k_count]; l_count];
    let mut sizes = vec![0usize; l_count];
    for (f, &l) in sel.iter().zip(&w) {
        sizes[l] += 1;
        for (acc, x) in p[l].iter_mut().zip(f) {
            *acc += x;
        }
    }
    for row in &mut p {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            for x in row.iter_mut() {
                *x /= total;
            }
        } else {
            row.fill(1.0 / k_count as f64);
        }
    }

    let mut made = vec![vec![0u64; k_count]; j_count];
    let mut tried = vec![vec![0u64; k_count]; j_count];
    for (row, &j) in data.rows().iter().zip(&z) {
        for k in 0..k_count {
            made[j][k] += row.makes()[k];
            tried[j][k] += row.attempts()[k];
        }
    }
    let q = made
        .iter()
        .zip(&tried)
        .map(|(m, n)| {
            m.iter()
                .zip(n)
                .map(|(&m, &n)| if n > 0 { m as f64 / n as f64 } else { 0.5 })
                .collect()
        })
        .collect();

    let pi = membership_weights(&w, l_count);
    let theta = membership_weights(&z, j_count);
    Ok(ModelState { p, q, w, z, pi, theta })
}
