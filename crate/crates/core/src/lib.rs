//! Bayesian shot-profile clustering for basketball teams and players.
//!
//! Pipeline: [`ingest`] region counts, fit the two-facet mixture with the
//! [`sampler`], simulate posterior-predictive point totals and expected
//! points above average with [`predictive`], and summarise with [`report`].
//! [`artifact`] reads and writes the on-disk formats shared with the CLI and
//! the HTTP service, and [`pipeline`] writes complete expected-points and
//! EPAA runs.

pub mod artifact;
pub mod ingest;
pub mod kmeans;
pub mod pipeline;
pub mod predictive;
pub mod region;
pub mod report;
pub mod rng;
pub mod sampler;

pub use ingest::{Dataset, EntityKey, EntityKind, RegionCounts};
pub use region::{Region, RegionScheme};
pub use sampler::{ChainConfig, ModelState, PosteriorDraws, Priors};
