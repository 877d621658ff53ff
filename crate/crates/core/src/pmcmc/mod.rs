//! Particle-marginal Metropolis-Hastings with an adaptive Gaussian
//! random-walk proposal.

mod chain;
mod params;
mod prior;
mod proposal;
mod summary;

pub use chain::{
    run_chain, run_chain_from, Chain, ChainConfig, ChainError, CovarianceSnapshot, Likelihood, ModelTemplate, MAX_INIT_ATTEMPTS,
    SNAPSHOT_EVERY,
};
pub use params::{Param, ParamVector};
pub use prior::{log_prior, Prior, PriorSet};
pub use proposal::{
    adapt_covariance, initial_covariance, propose, psd_sqrt, AdaptiveCovariance, ADAPT_SCALE, JITTER,
    MIN_INITIAL_VARIANCE,
};
pub use summary::{chain_summary, quantile_sorted, ChainSummary, ParameterSummary};
