//! Rank aggregation from noisy pairwise comparisons.
//!
//! [`reweight::pd_rank`] fits scores by iteratively reweighting a smoothed
//! 0-1 loss and solving each weighted subproblem with the primal-dual hybrid
//! gradient method ([`pdhg`]). The final weights double as per-observation
//! confidence. Borda count, Bradley-Terry and exact oracles live in
//! [`baselines`]; [`experiment`] runs seeded Monte Carlo comparisons.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod pdhg;
pub mod prox;
pub mod reweight;
pub mod synthetic;

pub use dataset::{ComparisonDataset, ItemIndex, Label, Observation, RankScores, Ranking};
pub use error::{Error, Result};
pub use reweight::{pd_rank, PDRankConfig, PDRankResult, WeightVector};
