use std::fmt;

use serde::Serialize;

use super::gibbs::log_joint;
use super::{PosteriorDraws, SamplerError};

/// A scalar that can be traced across retained draws. Indices are 0-based
/// here and 1-based in the textual form (`pi[1]`, `p[2][ATB]`, `q[1][3]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selector {
    P { cluster: usize, region: usize },
    Q { cluster: usize, region: usize },
    Pi(usize),
    Theta(usize),
    W(usize),
    Z(usize),
    LogPost,
}

const VALID: &str = "p[l][k], q[j][k], pi[l], theta[j], w[i], z[i], logpost (1-based; k may be a region code)";

impl Selector {
    /// Parses a selector against the posterior's dimensions.
    pub fn parse(text: &str, post: &PosteriorDraws) -> Result<Selector, SamplerError> {
        let unknown = || SamplerError::UnknownSelector {
            given: text.to_string(),
            valid: VALID.to_string(),
        };
        let t = text.trim();
        if t == "logpost" {
            return Ok(Selector::LogPost);
        }
        let open = t.find('[').ok_or_else(unknown)?;
        let name = &t[..open];
        let rest = &t[open..];
        let mut idx = Vec::new();
        let mut cursor = rest;
        while !cursor.is_empty() {
            if !cursor.starts_with('[') {
                return Err(unknown());
            }
            let close = cursor.find(']').ok_or_else(unknown)?;
            idx.push(&cursor[1..close]);
            cursor = &cursor[close + 1..];
        }
        let (l, j) = (post.priors.selection_clusters, post.priors.accuracy_clusters);
        let (i, k) = (post.dataset.len(), post.dataset.regions());
        let one_based = |raw: &str, bound: usize| -> Result<usize, SamplerError> {
            match raw.trim().parse::<usize>() {
                Ok(v) if v >= 1 && v <= bound => Ok(v - 1),
                _ => Err(unknown()),
            }
        };
        let region = |raw: &str| -> Result<usize, SamplerError> {
            post.dataset
                .scheme()
                .index_of(raw.trim())
                .map(Ok)
                .unwrap_or_else(|| one_based(raw, k))
        };
        match (name, idx.as_slice()) {
            ("p", [c, r]) => Ok(Selector::P {
                cluster: one_based(c, l)?,
                region: region(r)?,
            }),
            ("q", [c, r]) => Ok(Selector::Q {
                cluster: one_based(c, j)?,
                region: region(r)?,
            }),
            ("pi", [c]) => Ok(Selector::Pi(one_based(c, l)?)),
            ("theta", [c]) => Ok(Selector::Theta(one_based(c, j)?)),
            ("w", [e]) => Ok(Selector::W(one_based(e, i)?)),
            ("z", [e]) => Ok(Selector::Z(one_based(e, i)?)),
            _ => Err(unknown()),
        }
    }

    /// Scalars monitored by default after a fit.
    pub fn monitored(post: &PosteriorDraws) -> Vec<Selector> {
        let mut out = vec![Selector::LogPost];
        out.extend((0..post.priors.selection_clusters).map(Selector::Pi));
        out.extend((0..post.priors.accuracy_clusters).map(Selector::Theta));
        out
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Selector::P { cluster, region } => write!(f, "p[{}][{}]", cluster + 1, region + 1),
            Selector::Q { cluster, region } => write!(f, "q[{}][{}]", cluster + 1, region + 1),
            Selector::Pi(c) => write!(f, "pi[{}]", c + 1),
            Selector::Theta(c) => write!(f, "theta[{}]", c + 1),
            Selector::W(e) => write!(f, "w[{}]", e + 1),
            Selector::Z(e) => write!(f, "z[{}]", e + 1),
            Selector::LogPost => f.write_str("logpost"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub chain: usize,
    /// Sweep number within the chain, 1-based.
    pub iteration: usize,
    pub value: f64,
}

/// One row per retained draw for the selected scalar.
pub fn trace_export(post: &PosteriorDraws, selector: Selector) -> Vec<TraceRow> {
    post.draws
        .iter()
        .enumerate()
        .map(|(s, d)| {
            let (chain, iteration) = post.config.iteration_of(s);
            let value = match selector {
                Selector::P { cluster, region } => d.p[cluster][region],
                Selector::Q { cluster, region } => d.q[cluster][region],
                Selector::Pi(c) => d.pi[c],
                Selector::Theta(c) => d.theta[c],
                Selector::W(e) => (d.w[e] + 1) as f64,
                Selector::Z(e) => (d.z[e] + 1) as f64,
                Selector::LogPost => log_joint(d, &post.dataset, &post.priors),
            };
            TraceRow { chain, iteration, value }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{run_chain, ChainConfig, Priors};
    use super::*;
    use crate::ingest::{parse_aggregates, EntityKind};

    fn posterior() -> PosteriorDraws {
        let csv = "entity_id,season,region,attempts,makes\nA,2021,ATB,30,12\nA,2021,RA,20,13\nB,2021,MID,25,10\nB,2021,FT,10,8\nC,2021,ATB,5,1\n";
        let data = parse_aggregates(csv.as_bytes(), EntityKind::Team).unwrap();
        run_chain(&data, &Priors::new(2, 2, 5.0, 5.0, 5.0), &ChainConfig::new(40, 10, 1, 5)).unwrap()
    }

    #[test]
    fn parses_selectors() {
        let post = posterior();
        assert_eq!(Selector::parse("pi[1]", &post).unwrap(), Selector::Pi(0));
        assert_eq!(
            Selector::parse("p[2][ATB]", &post).unwrap(),
            Selector::P { cluster: 1, region: 0 }
        );
        assert_eq!(
            Selector::parse("q[1][7]", &post).unwrap(),
            Selector::Q { cluster: 0, region: 6 }
        );
        assert_eq!(Selector::parse("logpost", &post).unwrap(), Selector::LogPost);
        for bad in ["pi[0]", "pi[3]", "p[1]", "sigma[1]", "q[1][XYZ]", "w[4]", "pi[1", ""] {
            let err = Selector::parse(bad, &post).unwrap_err();
            assert!(err.to_string().contains("valid selectors"), "{bad}: {err}");
        }
        let s = Selector::parse("theta[2]", &post).unwrap();
        assert_eq!(Selector::parse(&s.to_string(), &post).unwrap(), s);
    }

    #[test]
    fn export_shapes_and_finiteness() {
        let post = posterior();
        let rows = trace_export(&post, Selector::Pi(0));
        assert_eq!(rows.len(), 30);
        assert_eq!(rows[0].iteration, 11);
        assert_eq!(rows[29].iteration, 40);
        let lp = trace_export(&post, Selector::LogPost);
        assert!(lp.iter().all(|r| r.value.is_finite()));
        assert_eq!(Selector::monitored(&post).len(), 5);
    }
}
