//! Stochastic SIHR epidemic model whose transmission rate follows a
//! Black-Karasinski process, with a log-domain particle filter and
//! particle-marginal Metropolis-Hastings for the static parameters.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix it to `f64`, which the sampler, experiments and
//! file formats use throughout.

pub mod cli;
pub mod experiments;
pub mod filter;
pub mod io;
pub mod logdomain;
pub mod model;
pub mod observation;
pub mod pmcmc;
pub mod presets;
pub mod rng;
pub mod scalar;

pub type StateVector = model::StateVector<f64>;
pub type SihrParams = model::SihrParams<f64>;
pub type BkParams = model::BkParams<f64>;
pub type DriverKind = model::DriverKind<f64>;
pub type Trajectory = model::Trajectory<f64>;
pub type ObservationModel = observation::ObservationModel<f64>;
pub type StateSpaceModel = filter::StateSpaceModel<f64>;
pub type FilterConfig = filter::FilterConfig<f64>;
pub type FilterResult = filter::FilterResult<f64>;
pub type InitialStatePrior = filter::InitialStatePrior<f64>;
pub type LogWeights = logdomain::LogWeights<f64>;

pub type StateVectorF32 = model::StateVector<f32>;
pub type StateSpaceModelF32 = filter::StateSpaceModel<f32>;
pub type FilterConfigF32 = filter::FilterConfig<f32>;
pub type FilterResultF32 = filter::FilterResult<f32>;
