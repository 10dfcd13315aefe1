use rand::Rng;
use rand_distr::{Distribution, Gamma};

/// Log of a Gamma(shape, 1) variate. Shapes below one use the
/// `Gamma(a) = Gamma(a + 1) * U^(1/a)` identity so tiny shapes do not underflow.
fn log_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
        g.ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        let u: f64 = rng.random::<f64>();
        // random() is in [0, 1); map to (0, 1]
        g.ln() + (1.0 - u).ln() / shape
    }
}

/// Draws from Dirichlet(shapes). Every shape must be positive.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, shapes: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = shapes.iter().map(|&a| log_gamma_variate(rng, a)).collect();
    normalize_log(&logs)
}

/// Exponentiates and normalises log weights with max-subtraction.
pub(crate) fn normalize_log(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Draws from Beta(a, b), kept strictly inside (0, 1).
pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let la = log_gamma_variate(rng, a);
    let lb = log_gamma_variate(rng, b);
    let q = 1.0 / (1.0 + (lb - la).exp());
    q.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Samples an index with probability proportional to `exp(log_weights)`.
/// Returns `None` when no weight is finite.
pub fn sample_categorical_log<R: Rng + ?Sized>(rng: &mut R, log_weights: &[f64]) -> Option<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || log_weights.iter().any(|x| x.is_nan()) {
        return None;
    }
    let total: f64 = log_weights.iter().map(|&x| (x - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &x) in log_weights.iter().enumerate() {
        let w = (x - max).exp();
        if w > 0.0 {
            last = i;
            if u < w {
                return Some(i);
            }
            u -= w;
        }
    }
    Some(last)
}

/// Samples an index from normalised probabilities using one uniform.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let mut u = rng.random::<f64>();
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, substream};

    #[test]
    fn dirichlet_moments() {
        let mut rng = substream(3, domain::CHAIN, 0);
        let shapes = [2.0, 3.0, 5.0];
        let n = 40_000;
        let mut mean = [0.0; 3];
        for _ in 0..n {
            let d = sample_dirichlet(&mut rng, &shapes);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for k in 0..3 {
                mean[k] += d[k] / n as f64;
            }
        }
        for k in 0..3 {
            let expect = shapes[k] / 10.0;
            // sd of the mean is below 0.0025 for these shapes
            assert!((mean[k] - expect).abs() < 0.01, "{k}: {} vs {expect}", mean[k]);
        }
    }

    #[test]
    fn tiny_shapes_stay_on_simplex() {
        let mut rng = substream(4, domain::CHAIN, 0);
        for _ in 0..1000 {
            let d = sample_dirichlet(&mut rng, &[1e-3; 7]);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }

    #[test]
    fn beta_mean_and_range() {
        let mut rng = substream(5, domain::CHAIN, 0);
        let n = 40_000;
        let mut mean = 0.0;
        for _ in 0..n {
            let q = sample_beta(&mut rng, 5.0, 1.0);
            assert!(q > 0.0 && q < 1.0);
            mean += q / n as f64;
        }
        assert!((mean - 5.0 / 6.0).abs() < 0.005, "{mean}");
        let q = sample_beta(&mut rng, 1e-4, 1e6);
        assert!(q > 0.0 && q < 1.0);
    }

    #[test]
    fn categorical_log_handles_extremes() {
        let mut rng = substream(6, domain::CHAIN, 0);
        assert_eq!(sample_categorical_log(&mut rng, &[-1e5, 0.0, -1e5]), Some(1));
        assert_eq!(sample_categorical_log(&mut rng, &[f64::NEG_INFINITY, -3e4]), Some(1));
        assert_eq!(sample_categorical_log(&mut rng, &[f64::NEG_INFINITY; 3]), None);
        assert_eq!(sample_categorical_log(&mut rng, &[0.0, f64::NAN]), None);
        let mut hits = [0usize; 2];
        for _ in 0..20_000 {
            hits[sample_categorical_log(&mut rng, &[(0.25f64).ln(), (0.75f64).ln()]).unwrap()] += 1;
        }
        let frac = hits[1] as f64 / 20_000.0;
        assert!((frac - 0.75).abs() < 0.015, "{frac}");
    }
}
