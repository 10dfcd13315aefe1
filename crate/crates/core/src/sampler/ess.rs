use super::SamplerError;

/// Effective sample size of one series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ess {
    pub value: f64,
    /// The estimate exceeded the series length and was clamped to it.
    pub clamped: bool,
    /// The series is constant; `value` is the length.
    pub degenerate: bool,
}

/// Geyer's initial positive sequence estimator.
///
/// Autocorrelations are summed in adjacent pairs `rho(2m) + rho(2m+1)` until
/// the first non-positive pair. `ESS = n / (-1 + 2 * sum of pairs)`.
pub fn effective_sample_size(series: &[f64]) -> Result<Ess, SamplerError> {
    let n = series.len();
    if n < 10 {
        return Err(SamplerError::SeriesTooShort(n));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(SamplerError::NonFiniteSeries);
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / nf
    };
    let var = autocov(0);
    if var <= (1e-12 * mean.abs().max(1.0)).powi(2) {
        return Ok(Ess {
            value: nf,
            clamped: false,
            degenerate: true,
        });
    }
    let mut pair_sum = 0.0;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = (autocov(2 * m) + autocov(2 * m + 1)) / var;
        if pair <= 0.0 {
            break;
        }
        pair_sum += pair;
        m += 1;
    }
    let tau = -1.0 + 2.0 * pair_sum;
    if tau <= 1.0 {
        return Ok(Ess {
            value: nf,
            clamped: tau < 1.0,
            degenerate: false,
        });
    }
    Ok(Ess {
        value: nf / tau,
        clamped: false,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{domain, substream};
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn independent_draws_have_near_full_ess() {
        let mut rng = substream(1, domain::CHAIN, 0);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let ess = effective_sample_size(&x).unwrap();
        assert!((8_000.0..=10_000.0).contains(&ess.value), "{ess:?}");
    }

    #[test]
    fn alternating_series_is_clamped() {
        let x: Vec<f64> = (0..1_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let ess = effective_sample_size(&x).unwrap();
        assert_eq!(ess.value, 1_000.0);
        assert!(ess.clamped);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let ess = effective_sample_size(&[4.2; 50]).unwrap();
        assert!(ess.degenerate);
        assert_eq!(ess.value, 50.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(effective_sample_size(&[1.0; 9]), Err(SamplerError::SeriesTooShort(9))));
        let mut x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        x[3] = f64::NAN;
        assert!(matches!(effective_sample_size(&x), Err(SamplerError::NonFiniteSeries)));
    }

    #[test]
    fn ar1_matches_closed_form() {
        // integrated autocorrelation time of AR(1) is (1 + rho) / (1 - rho)
        let rho: f64 = 0.5;
        let expected = 10_000.0 * (1.0 - rho) / (1.0 + rho);
        let mut rng = substream(2, domain::CHAIN, 0);
        let innov = (1.0 - rho * rho).sqrt();
        let mut x = Vec::with_capacity(10_000);
        let mut prev: f64 = StandardNormal.sample(&mut rng);
        for _ in 0..10_000 {
            let e: f64 = StandardNormal.sample(&mut rng);
            prev = rho * prev + innov * e;
            x.push(prev);
        }
        let ess = effective_sample_size(&x).unwrap().value;
        assert!((ess - expected).abs() / expected < 0.15, "{ess} vs {expected}");
    }
}
