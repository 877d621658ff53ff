//! Particle-marginal Metropolis-Hastings over the static parameters.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::{Param, ParamVector};
use super::prior::{log_prior, PriorSet};
use super::proposal::{initial_covariance, propose, AdaptiveCovariance};
use crate::filter::{run_filter, FilterConfig, FilterError, InitialStatePrior, Record, StateSpaceModel};
use crate::model::{BkParams, DriverKind, ModelError, SihrParams};
use crate::observation::ObservationModel;
use crate::rng::{derive_seed, label, StreamKey};

/// Attempts at drawing a starting point with a finite likelihood.
pub const MAX_INIT_ATTEMPTS: usize = 100;
/// Proposal covariance is recorded every this many iterations.
pub const SNAPSHOT_EVERY: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("invalid chain configuration: {0}")]
    Config(String),
    #[error(
        "no finite-likelihood starting point in {attempts} prior draws; check the prior for {prior} ({reason})"
    )]
    Initialization {
        attempts: usize,
        prior: String,
        reason: String,
    },
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// Observation family; the negative binomial takes its dispersion from `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    Poisson,
    NegativeBinomial,
}

/// The parts of the state-space model not sampled by the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelTemplate {
    pub n: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub likelihood: Likelihood,
    pub initial: InitialStatePrior<f64>,
}

impl ModelTemplate {
    /// The full model at `theta`.
    pub fn model_for(&self, theta: &ParamVector) -> Result<StateSpaceModel<f64>, FilterError> {
        let observation = match (self.likelihood, theta.phi) {
            (Likelihood::Poisson, _) => ObservationModel::Poisson,
            (Likelihood::NegativeBinomial, Some(phi)) => {
                if !(phi > 0.0 && phi.is_finite()) {
                    return Err(ModelError::InvalidParameter { name: "phi", value: phi, constraint: "phi > 0" }.into());
                }
                ObservationModel::negative_binomial_phi(phi)
            }
            (Likelihood::NegativeBinomial, None) => {
                return Err(ModelError::InvalidParameter {
                    name: "phi",
                    value: f64::NAN,
                    constraint: "required by the negative-binomial likelihood",
                }
                .into())
            }
        };
        let model = StateSpaceModel {
            sihr: SihrParams { n: self.n, alpha: self.alpha, gamma: self.gamma, eta: theta.eta },
            driver: DriverKind::BlackKarasinski(BkParams { lambda: theta.lambda, mu: theta.mu, sigma: theta.sigma }),
            observation,
            initial: self.initial,
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Total iterations `M`.
    pub iterations: usize,
    /// Iterations `M_b` with the fixed diagonal proposal.
    pub burn_in: usize,
    pub filter: FilterConfig<f64>,
}

/// Proposal covariance in force at `iteration`, over `Chain::free`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSnapshot {
    pub iteration: usize,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Coordinates moved by the sampler, in proposal order.
    pub free: Vec<Param>,
    pub initial: ParamVector,
    pub initial_log_post: f64,
    /// `theta^(1..=M)`.
    pub draws: Vec<ParamVector>,
    /// Estimated log-likelihood plus log-prior of each draw.
    pub log_posts: Vec<f64>,
    pub log_likelihoods: Vec<f64>,
    pub accepted: Vec<bool>,
    pub proposal_cov_history: Vec<CovarianceSnapshot>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    /// Coordinate-wise mean of the draws after discarding `burn_in`.
    pub fn posterior_mean(&self, burn_in: usize) -> ParamVector {
        let kept = &self.draws[burn_in.min(self.draws.len())..];
        let mut mean = self.initial;
        if kept.is_empty() {
            return mean;
        }
        for p in Param::ALL {
            if mean.get(p).is_some() {
                let m = kept.iter().filter_map(|d| d.get(p)).sum::<f64>() / kept.len() as f64;
                mean.set(p, m);
            }
        }
        mean
    }
}

fn snapshot(iteration: usize, cov: &DMatrix<f64>) -> CovarianceSnapshot {
    CovarianceSnapshot {
        iteration,
        matrix: cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
    }
}

fn param_for(name: &str) -> Option<Param> {
    match name {
        "r" => Some(Param::Phi),
        _ => Param::ALL.into_iter().find(|p| p.name() == name),
    }
}

/// Estimated log-likelihood and log-prior at `theta`. Out-of-support points
/// return `-inf` without running the filter.
fn evaluate(
    theta: &ParamVector,
    observations: &[u64],
    priors: &PriorSet,
    template: &ModelTemplate,
    filter: &FilterConfig<f64>,
    seed: u64,
) -> Result<(f64, f64), FilterError> {
    let lp = log_prior(theta, priors);
    if lp == f64::NEG_INFINITY {
        return Ok((f64::NEG_INFINITY, lp));
    }
    let model = match template.model_for(theta) {
        Ok(m) => m,
        Err(FilterError::Model(_)) => return Ok((f64::NEG_INFINITY, lp)),
        Err(e) => return Err(e),
    };
    let ll = run_filter(observations, &model, filter, seed)?.log_likelihood;
    Ok((ll, lp))
}

/// Runs `M` iterations of particle-marginal Metropolis-Hastings.
///
/// The likelihood estimate of the current point is stored and reused; a
/// rejected iteration copies the previous draw and its log-posterior.
pub fn run_chain(
    observations: &[u64],
    priors: &PriorSet,
    template: &ModelTemplate,
    config: &ChainConfig,
    seed: u64,
) -> Result<Chain, ChainError> {
    let (filter, free) = check_inputs(observations, priors, template, config)?;
    // starting point
    let mut start = None;
    let mut last_failure = (free.iter().map(|p| p.name()).collect::<Vec<_>>().join(", "), String::new());
    for attempt in 0..MAX_INIT_ATTEMPTS {
        let mut rng = StreamKey::new(seed, label::INIT, attempt as u64).stream(0);
        let theta = priors.sample(&mut rng);
        if let Err(FilterError::Model(ModelError::InvalidParameter { name, value, constraint })) = template.model_for(&theta) {
            let prior = param_for(name).map_or(name.to_string(), |p| p.name().to_string());
            last_failure = (prior, format!("draw {name} = {value} violates {constraint}"));
            continue;
        }
        let (ll, lp) = evaluate(&theta, observations, priors, template, &filter, derive_seed(seed, &[label::INIT, attempt as u64]))?;
        if (ll + lp).is_finite() {
            start = Some((theta, ll, lp));
            break;
        }
        last_failure.1 = "estimated likelihood was -inf at every draw".into();
    }
    let Some((initial, ll, lp)) = start else {
        return Err(ChainError::Initialization {
            attempts: MAX_INIT_ATTEMPTS,
            prior: last_failure.0,
            reason: last_failure.1,
        });
    };
    iterate(observations, priors, template, config, &filter, free, seed, initial, ll, lp)
}

/// As [`run_chain`], but starting from `start` instead of a prior draw.
/// Fixed coordinates of `start` must match their priors.
pub fn run_chain_from(
    observations: &[u64],
    priors: &PriorSet,
    template: &ModelTemplate,
    config: &ChainConfig,
    seed: u64,
    start: &ParamVector,
) -> Result<Chain, ChainError> {
    let (filter, free) = check_inputs(observations, priors, template, config)?;
    template.model_for(start)?;
    let (ll, lp) = evaluate(start, observations, priors, template, &filter, derive_seed(seed, &[label::INIT, 0]))?;
    if !(ll + lp).is_finite() {
        return Err(ChainError::Config(format!(
            "starting point has log prior {lp} and estimated log likelihood {ll}"
        )));
    }
    iterate(observations, priors, template, config, &filter, free, seed, *start, ll, lp)
}

fn check_inputs(
    observations: &[u64],
    priors: &PriorSet,
    template: &ModelTemplate,
    config: &ChainConfig,
) -> Result<(FilterConfig<f64>, Vec<Param>), ChainError> {
    if config.burn_in < 1 || config.iterations <= config.burn_in {
        return Err(ChainError::Config(format!(
            "need iterations > burn_in >= 1, got iterations = {}, burn_in = {}",
            config.iterations, config.burn_in
        )));
    }
    priors.validate().map_err(ChainError::Config)?;
    match (template.likelihood, priors.phi.is_some()) {
        (Likelihood::NegativeBinomial, false) => {
            return Err(ChainError::Config("negative-binomial likelihood needs a prior for phi".into()))
        }
        (Likelihood::Poisson, true) => {
            return Err(ChainError::Config("Poisson likelihood takes no phi prior".into()))
        }
        _ => {}
    }
    if observations.is_empty() {
        return Err(FilterError::NoObservations.into());
    }
    Ok((FilterConfig { record: Record::LikelihoodOnly, ..config.filter }, priors.free()))
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    observations: &[u64],
    priors: &PriorSet,
    template: &ModelTemplate,
    config: &ChainConfig,
    filter: &FilterConfig<f64>,
    free: Vec<Param>,
    seed: u64,
    initial: ParamVector,
    mut current_ll: f64,
    mut current_lp: f64,
) -> Result<Chain, ChainError> {
    let m_total = config.iterations;
    let mut chain = Chain {
        free: free.clone(),
        initial,
        initial_log_post: current_ll + current_lp,
        draws: Vec::with_capacity(m_total),
        log_posts: Vec::with_capacity(m_total),
        log_likelihoods: Vec::with_capacity(m_total),
        accepted: Vec::with_capacity(m_total),
        proposal_cov_history: Vec::new(),
    };
    let mut adapt = AdaptiveCovariance::new(initial_covariance(priors, &free));
    adapt.push(&initial.project(&free));
    let mut current = initial;
    let mut rng = StreamKey::new(seed, label::CHAIN, 0).stream(0);

    for m in 1..=m_total {
        let cov = adapt.proposal(m, config.burn_in);
        if m == 1 || m == config.burn_in + 1 || m % SNAPSHOT_EVERY == 0 {
            chain.proposal_cov_history.push(snapshot(m, &cov));
        }
        let accept = if free.is_empty() {
            true
        } else {
            let candidate = propose(&current, &free, &cov, &mut rng);
            let u: f64 = rng.random();
            let (ll, lp) = evaluate(&candidate, observations, priors, template, filter, derive_seed(seed, &[label::FILTER, m as u64]))?;
            let log_post = ll + lp;
            // symmetric proposal: the q terms cancel
            let log_ratio = log_post - (current_ll + current_lp);
            let ok = log_post.is_finite() && (log_ratio >= 0.0 || u.ln() < log_ratio);
            if ok {
                current = candidate;
                current_ll = ll;
                current_lp = lp;
            }
            ok
        };
        chain.draws.push(current);
        chain.log_posts.push(current_ll + current_lp);
        chain.log_likelihoods.push(current_ll);
        chain.accepted.push(accept);
        adapt.push(&current.project(&free));
    }
    Ok(chain)
}
