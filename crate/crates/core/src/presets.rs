//! The synthetic benchmark setting: true values, priors and sampler sizes.

use crate::filter::{InitialBeta, InitialCount, InitialStatePrior};
use crate::model::{BkParams, DriverKind, SihrParams, StateVector};
use crate::observation::ObservationModel;
use crate::pmcmc::{Likelihood, ModelTemplate, Prior, PriorSet};

pub const N: f64 = 1_000_000.0;
pub const BETA0: f64 = 0.4;
pub const I0: f64 = 100.0;
pub const GAMMA: f64 = 1.0 / 1000.0;
pub const ETA: f64 = 1.0 / 10.0;
pub const ALPHA: f64 = 1.0 / 7.0;
pub const SIGMA: f64 = 0.4;
pub const LAMBDA: f64 = 1.0 / 35.0;
pub const MU: f64 = -1.3;
pub const R: f64 = 100.0;
/// Days simulated.
pub const T: usize = 250;
pub const ITERATIONS: usize = 100_000;
pub const PARTICLES: usize = 1000;
pub const BURN_IN: usize = 1000;
pub const SUBSTEPS: usize = 10;

pub fn sihr() -> SihrParams<f64> {
    SihrParams { n: N, alpha: ALPHA, gamma: GAMMA, eta: ETA }
}

pub fn bk() -> BkParams<f64> {
    BkParams { lambda: LAMBDA, mu: MU, sigma: SIGMA }
}

pub fn driver() -> DriverKind<f64> {
    DriverKind::BlackKarasinski(bk())
}

pub fn observation() -> ObservationModel<f64> {
    ObservationModel::NegativeBinomial { r: R }
}

pub fn initial_state() -> StateVector<f64> {
    StateVector::with_population(N, I0, 0.0, 0.0, BETA0.ln())
}

/// Particle initialisation: `I_0 ~ U(0, 1000)`, `beta_0 ~ U(0, 1)`.
pub fn initial_prior() -> InitialStatePrior<f64> {
    InitialStatePrior {
        i0: InitialCount::Uniform { lo: 0.0, hi: 1000.0 },
        beta0: InitialBeta::Uniform { lo: 0.0, hi: 1.0 },
        h0: 0.0,
        r0: 0.0,
    }
}

pub fn priors() -> PriorSet {
    PriorSet {
        eta: Prior::Uniform { lo: 0.0, hi: 1.0 },
        lambda: Prior::Beta { a: 3.0, b: 10.0 },
        mu: Prior::Normal { mean: -0.8, sd: 0.4 },
        sigma: Prior::Beta { a: 1.5, b: 10.0 },
        phi: Some(Prior::Uniform { lo: 1.0 / 1000.0, hi: 1.0 / 5.0 }),
    }
}

pub fn template() -> ModelTemplate {
    ModelTemplate {
        n: N,
        alpha: ALPHA,
        gamma: GAMMA,
        likelihood: Likelihood::NegativeBinomial,
        initial: initial_prior(),
    }
}

/// Decorrelation times `1 / lambda` of the sensitivity grid: 1, 7, 14, ..., 98.
pub fn decorrelation_grid() -> Vec<f64> {
    std::iter::once(1.0).chain((1..=14).map(|k| 7.0 * k as f64)).collect()
}
