//! Bootstrap particle filter over the SIHR / transmission-rate state space,
//! with all weight arithmetic in the log domain.
//!
//! Every step propagates each particle through the forward model, weights
//! it by the observation density, normalises, and (by default) applies
//! systematic resampling. The sum of per-step log normalisers is the
//! marginal log-likelihood estimate.
//!
//! Randomness is drawn from per-particle counter streams, so a run is a
//! pure function of its seed whether or not propagation is parallel.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logdomain::{self, LogDomainError, LogWeights};
use crate::model::{self, check, DriverKind, ModelError, SihrParams, StateVector};
use crate::observation::ObservationModel;
use crate::rng::{label, StreamKey};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("observation sequence is empty")]
    NoObservations,
    #[error("at least 2 particles are required, got {0}")]
    TooFewParticles(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("initial-state prior: {0}")]
    InitialPrior(String),
    #[error("mask selects no time points")]
    EmptyMask,
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
}

/// Distribution of the initial infected count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCount<T> {
    Uniform { lo: T, hi: T },
    Fixed { value: T },
}

/// Distribution of the initial transmission rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialBeta<T> {
    /// `beta_0 ~ U(lo, hi)`.
    Uniform { lo: T, hi: T },
    Fixed { value: T },
    /// `ln beta_0 ~ N(mu, sigma^2)`, the stationary law of the BK driver.
    StationaryBk,
}

/// Per-particle prior over the initial state. `S_0 = N - I_0 - H_0 - R_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + num_traits::Zero"))]
pub struct InitialStatePrior<T> {
    pub i0: InitialCount<T>,
    pub beta0: InitialBeta<T>,
    #[serde(default = "num_traits::Zero::zero")]
    pub h0: T,
    #[serde(default = "num_traits::Zero::zero")]
    pub r0: T,
}

impl<T: Real> InitialStatePrior<T> {
    /// Point mass at the given initial infected count and transmission rate.
    pub fn point(i0: T, beta0: T) -> Self {
        Self {
            i0: InitialCount::Fixed { value: i0 },
            beta0: InitialBeta::Fixed { value: beta0 },
            h0: T::zero(),
            r0: T::zero(),
        }
    }

    pub fn validate(&self, n: T, driver: &DriverKind<T>) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::InitialPrior(m.to_string()));
        let i_max = match self.i0 {
            InitialCount::Uniform { lo, hi } => {
                if !(lo >= T::zero() && hi > lo && hi.is_finite()) {
                    return bad("i0 uniform bounds must satisfy 0 <= lo < hi");
                }
                hi
            }
            InitialCount::Fixed { value } => {
                if !(value >= T::zero() && value.is_finite()) {
                    return bad("i0 must be a non-negative count");
                }
                value
            }
        };
        if !(self.h0 >= T::zero() && self.r0 >= T::zero()) {
            return bad("h0 and r0 must be non-negative");
        }
        if i_max + self.h0 + self.r0 > n {
            return bad("initial I + H + R exceeds the population");
        }
        match self.beta0 {
            InitialBeta::Uniform { lo, hi } if !(lo >= T::zero() && hi > lo && hi.is_finite()) => {
                bad("beta0 uniform bounds must satisfy 0 <= lo < hi")
            }
            InitialBeta::Fixed { value } if !(value > T::zero() && value.is_finite()) => {
                bad("beta0 must be positive")
            }
            InitialBeta::StationaryBk if !matches!(driver, DriverKind::BlackKarasinski(_)) => {
                bad("stationary initialisation requires the Black-Karasinski driver")
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: T, driver: &DriverKind<T>, rng: &mut R) -> StateVector<T> {
        let i0 = match self.i0 {
            InitialCount::Uniform { lo, hi } => lo + (hi - lo) * T::open01(rng),
            InitialCount::Fixed { value } => value,
        };
        let log_beta = match self.beta0 {
            InitialBeta::Uniform { lo, hi } => (lo + (hi - lo) * T::open01(rng)).ln(),
            InitialBeta::Fixed { value } => value.ln(),
            InitialBeta::StationaryBk => match driver {
                DriverKind::BlackKarasinski(bk) => bk.mu + bk.sigma * T::standard_normal(rng),
                _ => unreachable!("validated"),
            },
        };
        StateVector::with_population(n, i0, self.h0, self.r0, log_beta)
    }
}

/// Everything the filter needs to know about the model at fixed parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + num_traits::Zero"))]
pub struct StateSpaceModel<T> {
    pub sihr: SihrParams<T>,
    pub driver: DriverKind<T>,
    pub observation: ObservationModel<T>,
    pub initial: InitialStatePrior<T>,
}

impl<T: Real> StateSpaceModel<T> {
    pub fn validate(&self) -> Result<(), FilterError> {
        self.sihr.validate()?;
        self.driver.validate()?;
        self.observation.validate()?;
        self.initial.validate(self.sihr.n, &self.driver)
    }
}

/// When to resample after weighting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Resampling<T> {
    Always,
    /// Resample only when ESS falls below `fraction * N`.
    EssBelow { fraction: T },
}

/// What the filter keeps besides the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Record {
    LikelihoodOnly,
    Bands,
    /// Bands plus every per-step ensemble.
    Paths,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig<T> {
    pub particles: usize,
    pub dt: T,
    pub substeps: usize,
    pub resampling: Resampling<T>,
    pub record: Record,
    pub parallel: bool,
}

impl<T: Real> Default for FilterConfig<T> {
    fn default() -> Self {
        Self {
            particles: 1000,
            dt: T::one(),
            substeps: 10,
            resampling: Resampling::Always,
            record: Record::Bands,
            parallel: true,
        }
    }
}

/// Reported state coordinates, in band order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coordinate {
    S,
    I,
    H,
    R,
    Beta,
}

impl Coordinate {
    pub const ALL: [Coordinate; 5] = [Coordinate::S, Coordinate::I, Coordinate::H, Coordinate::R, Coordinate::Beta];

    pub fn name(self) -> &'static str {
        match self {
            Coordinate::S => "S",
            Coordinate::I => "I",
            Coordinate::H => "H",
            Coordinate::R => "R",
            Coordinate::Beta => "beta",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// 5% / 50% / 95% marginal quantiles of the ensemble at one time point,
/// indexed by [`Coordinate::index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band<T> {
    pub q05: [T; 5],
    pub q50: [T; 5],
    pub q95: [T; 5],
}

/// An ensemble: particles, their normalised log-weights, and the time index.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble<T> {
    pub particles: Vec<StateVector<T>>,
    pub log_weights: LogWeights<T>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult<T> {
    /// `ln p_hat(y_{1:T} | theta)`; `-inf` when the filter degenerated.
    pub log_likelihood: T,
    /// First step at which every particle had zero weight.
    pub degenerate_at: Option<usize>,
    /// Per-step log-likelihood increments, one per processed step `t >= 1`.
    pub increments: Vec<T>,
    /// Effective sample size after weighting, one per processed step.
    pub ess: Vec<T>,
    /// Per-time bands, `t = 0..=T` (empty for [`Record::LikelihoodOnly`]).
    pub bands: Vec<Band<T>>,
    /// Per-time ensembles after resampling (only for [`Record::Paths`]).
    pub paths: Vec<ParticleEnsemble<T>>,
}

impl<T: Real> FilterResult<T> {
    /// Filtered median transmission rate per time point.
    pub fn median_beta(&self) -> Vec<T> {
        self.bands.iter().map(|b| b.q50[Coordinate::Beta.index()]).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate_at.is_some()
    }
}

/// Weighted lower quantile: smallest value whose cumulative weight reaches `q`.
fn weighted_quantiles<T: Real>(pairs: &mut [(T, T)], qs: &[T]) -> Vec<T> {
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let total: T = pairs.iter().map(|p| p.1).sum();
    let mut out = Vec::with_capacity(qs.len());
    let mut acc = T::zero();
    let mut k = 0;
    for &q in qs {
        let target = q * total;
        while k + 1 < pairs.len() && acc + pairs[k].1 < target * (T::one() - T::epsilon() * T::lit(16.0)) {
            acc = acc + pairs[k].1;
            k += 1;
        }
        out.push(pairs[k].0);
    }
    out
}

fn band_of<T: Real>(particles: &[StateVector<T>], log_w: &[T]) -> Band<T> {
    let qs = [T::lit(0.05), T::lit(0.5), T::lit(0.95)];
    let weights: Vec<T> = log_w.iter().map(|w| w.exp()).collect();
    let mut band = Band {
        q05: [T::zero(); 5],
        q50: [T::zero(); 5],
        q95: [T::zero(); 5],
    };
    let mut pairs = Vec::with_capacity(particles.len());
    for c in Coordinate::ALL {
        pairs.clear();
        pairs.extend(
            particles
                .iter()
                .zip(&weights)
                .map(|(p, &w)| (p.coordinates()[c.index()], w)),
        );
        let q = weighted_quantiles(&mut pairs, &qs);
        band.q05[c.index()] = q[0];
        band.q50[c.index()] = q[1];
        band.q95[c.index()] = q[2];
    }
    band
}

/// Particle filter bound to a model and configuration.
#[derive(Debug, Clone)]
pub struct ParticleFilter<T> {
    pub model: StateSpaceModel<T>,
    pub config: FilterConfig<T>,
}

impl<T: Real> ParticleFilter<T> {
    pub fn new(model: StateSpaceModel<T>, config: FilterConfig<T>) -> Result<Self, FilterError> {
        model.validate()?;
        if config.particles < 2 {
            return Err(FilterError::TooFewParticles(config.particles));
        }
        check("dt", config.dt, config.dt > T::zero(), "dt > 0")?;
        if config.substeps == 0 {
            return Err(ModelError::InvalidParameter {
                name: "substeps",
                value: 0.0,
                constraint: "substeps >= 1",
            }
            .into());
        }
        Ok(Self { model, config })
    }

    fn initial_ensemble(&self, seed: u64) -> Vec<StateVector<T>> {
        let key = StreamKey::new(seed, label::INIT, 0);
        let m = &self.model;
        let draw = |i: usize| m.initial.sample(m.sihr.n, &m.driver, &mut key.stream(i as u64));
        if self.config.parallel {
            (0..self.config.particles).into_par_iter().map(draw).collect()
        } else {
            (0..self.config.particles).map(draw).collect()
        }
    }

    /// Propagates every particle one interval and returns its observation
    /// log-density for `y`.
    fn advance(&self, particles: &mut [StateVector<T>], loglik: &mut [T], y: u64, seed: u64, t: usize) {
        let key = StreamKey::new(seed, label::PROPAGATE, t as u64);
        let m = &self.model;
        let (dt, substeps) = (self.config.dt, self.config.substeps);
        let step = |(i, (x, w)): (usize, (&mut StateVector<T>, &mut T))| {
            let eps = T::standard_normal(&mut key.stream(i as u64));
            *w = match model::propagate(x, &m.sihr, &m.driver, dt, substeps, eps) {
                Ok(next) => {
                    *x = next;
                    let ll = m.observation.log_density(y, next.h);
                    if ll.is_nan() { T::neg_infinity() } else { ll }
                }
                Err(_) => T::neg_infinity(),
            };
        };
        if self.config.parallel {
            particles.par_iter_mut().zip(loglik.par_iter_mut()).enumerate().for_each(step);
        } else {
            particles.iter_mut().zip(loglik.iter_mut()).enumerate().for_each(step);
        }
    }

    /// Runs the filter over `y_0..y_T`. `y_0` anchors the initial time
    /// point; likelihood terms are accumulated for `t = 1..=T`.
    pub fn run(&self, observations: &[u64], seed: u64) -> Result<FilterResult<T>, FilterError> {
        if observations.is_empty() {
            return Err(FilterError::NoObservations);
        }
        let n = self.config.particles;
        let mut particles = self.initial_ensemble(seed);
        let mut log_w = LogWeights::<T>::uniform(n);
        let mut loglik = vec![T::zero(); n];
        let mut result = FilterResult {
            log_likelihood: T::zero(),
            degenerate_at: None,
            increments: Vec::with_capacity(observations.len().saturating_sub(1)),
            ess: Vec::with_capacity(observations.len().saturating_sub(1)),
            bands: Vec::new(),
            paths: Vec::new(),
        };
        self.snapshot(&mut result, &particles, &log_w, 0);

        for (t, &y) in observations.iter().enumerate().skip(1) {
            self.advance(&mut particles, &mut loglik, y, seed, t);
            let combined: Vec<T> = log_w.0.iter().zip(&loglik).map(|(&a, &b)| a + b).collect();
            let (normalized, total) = match logdomain::normalize_log_weights(&combined) {
                Ok(ok) => ok,
                Err(LogDomainError::Degenerate) => {
                    result.log_likelihood = T::neg_infinity();
                    result.degenerate_at = Some(t);
                    return Ok(result);
                }
                Err(e) => unreachable!("log-weights are never NaN or +inf: {e}"),
            };
            // log_w is normalised, so `total` is the log predictive likelihood
            // (with uniform weights it equals LogSumExp(loglik) - ln N).
            result.log_likelihood = result.log_likelihood + total;
            result.increments.push(total);
            let ess = logdomain::effective_sample_size(normalized.as_slice()).unwrap_or(T::zero());
            result.ess.push(ess);

            let resample = match self.config.resampling {
                Resampling::Always => true,
                Resampling::EssBelow { fraction } => ess < fraction * T::from_index(n),
            };
            if resample {
                let mut rng = StreamKey::new(seed, label::RESAMPLE, t as u64).stream(0);
                let ancestors = logdomain::systematic_resample_log(normalized.as_slice(), &mut rng)
                    .expect("normalised weights carry mass");
                particles = ancestors.iter().map(|&a| particles[a]).collect();
                log_w = LogWeights::uniform(n);
            } else {
                log_w = normalized;
            }
            self.snapshot(&mut result, &particles, &log_w, t);
        }
        Ok(result)
    }

    fn snapshot(&self, result: &mut FilterResult<T>, particles: &[StateVector<T>], log_w: &LogWeights<T>, t: usize) {
        match self.config.record {
            Record::LikelihoodOnly => {}
            Record::Bands => result.bands.push(band_of(particles, log_w.as_slice())),
            Record::Paths => {
                result.bands.push(band_of(particles, log_w.as_slice()));
                result.paths.push(ParticleEnsemble {
                    particles: particles.to_vec(),
                    log_weights: log_w.clone(),
                    t,
                });
            }
        }
    }
}

/// One-shot convenience around [`ParticleFilter`].
pub fn run_filter<T: Real>(
    observations: &[u64],
    model: &StateSpaceModel<T>,
    config: &FilterConfig<T>,
    seed: u64,
) -> Result<FilterResult<T>, FilterError> {
    ParticleFilter::new(*model, *config)?.run(observations, seed)
}

/// Root-mean-square error between the filtered median transmission rate and
/// `truth`, over the time points where `mask` is true.
pub fn rmse_beta<T: Real>(result: &FilterResult<T>, truth: &[T], mask: &[bool]) -> Result<T, FilterError> {
    let median = result.median_beta();
    if median.len() != truth.len() {
        return Err(FilterError::LengthMismatch { what: "truth", got: truth.len(), expected: median.len() });
    }
    if mask.len() != truth.len() {
        return Err(FilterError::LengthMismatch { what: "mask", got: mask.len(), expected: truth.len() });
    }
    let (sum, count) = median
        .iter()
        .zip(truth)
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((T::zero(), 0usize), |(s, c), ((&a, &b), _)| (s + (a - b).powi(2), c + 1));
    if count == 0 {
        return Err(FilterError::EmptyMask);
    }
    Ok((sum / T::from_index(count)).sqrt())
}

/// Mask selecting time points with at least `threshold` observed cases.
pub fn case_mask(observations: &[u64], threshold: u64) -> Vec<bool> {
    observations.iter().map(|&y| y >= threshold).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BkParams;

    fn toy_model(sigma: f64) -> StateSpaceModel<f64> {
        StateSpaceModel {
            sihr: SihrParams { n: 1e5, alpha: 1.0 / 7.0, gamma: 0.05, eta: 0.1 },
            driver: DriverKind::BlackKarasinski(BkParams { lambda: 1.0 / 35.0, mu: -1.3, sigma }),
            observation: ObservationModel::NegativeBinomial { r: 100.0 },
            initial: InitialStatePrior::point(100.0, 0.4),
        }
    }

    fn config(particles: usize, record: Record, parallel: bool) -> FilterConfig<f64> {
        FilterConfig { particles, record, parallel, ..FilterConfig::default() }
    }

    const Y: [u64; 8] = [0, 1, 2, 4, 3, 6, 7, 9];

    #[test]
    fn rejects_bad_configuration() {
        let m = toy_model(0.4);
        assert_eq!(run_filter(&[], &m, &config(10, Record::Bands, false), 0), Err(FilterError::NoObservations));
        assert_eq!(
            run_filter(&Y, &m, &config(1, Record::Bands, false), 0),
            Err(FilterError::TooFewParticles(1))
        );
        let mut bad = m;
        bad.initial.i0 = InitialCount::Fixed { value: 2e5 };
        assert!(matches!(run_filter(&Y, &bad, &config(10, Record::Bands, false), 0), Err(FilterError::InitialPrior(_))));
    }

    #[test]
    fn parallel_and_serial_agree_bitwise() {
        let mut m = toy_model(0.4);
        m.initial = InitialStatePrior {
            i0: InitialCount::Uniform { lo: 0.0, hi: 1000.0 },
            beta0: InitialBeta::Uniform { lo: 0.0, hi: 1.0 },
            h0: 0.0,
            r0: 0.0,
        };
        let a = run_filter(&Y, &m, &config(257, Record::Paths, false), 99).unwrap();
        let b = run_filter(&Y, &m, &config(257, Record::Paths, true), 99).unwrap();
        assert_eq!(a, b);
        let c = run_filter(&Y, &m, &config(257, Record::Paths, true), 100).unwrap();
        assert_ne!(a.log_likelihood, c.log_likelihood);
    }

    #[test]
    fn bands_are_monotone_and_paths_sized() {
        let mut m = toy_model(0.4);
        m.initial.beta0 = InitialBeta::StationaryBk;
        let r = run_filter(&Y, &m, &config(300, Record::Paths, true), 5).unwrap();
        assert_eq!(r.bands.len(), Y.len());
        assert_eq!(r.paths.len(), Y.len());
        assert_eq!(r.increments.len(), Y.len() - 1);
        for (t, e) in r.paths.iter().enumerate() {
            assert_eq!(e.t, t);
            assert_eq!(e.particles.len(), 300);
        }
        for b in &r.bands {
            for k in 0..5 {
                assert!(b.q05[k] <= b.q50[k] && b.q50[k] <= b.q95[k]);
            }
        }
    }

    #[test]
    fn impossible_observation_degenerates() {
        let mut m = toy_model(0.4);
        m.initial = InitialStatePrior::point(0.0, 0.4);
        // no infection ever, so a positive count has probability zero
        let r = run_filter(&[0, 0, 3, 0], &m, &config(50, Record::Bands, false), 1).unwrap();
        assert_eq!(r.degenerate_at, Some(2));
        assert_eq!(r.log_likelihood, f64::NEG_INFINITY);
    }

    #[test]
    fn disease_free_data_gives_zero_hospital_band() {
        let mut m = toy_model(0.4);
        m.initial.i0 = InitialCount::Fixed { value: 0.0 };
        let y = [0u64; 30];
        let r = run_filter(&y, &m, &config(100, Record::Bands, false), 3).unwrap();
        assert!(r.log_likelihood.abs() < 1e-10);
        assert!(r.bands.iter().all(|b| b.q50[Coordinate::H.index()] == 0.0));
    }

    #[test]
    fn ess_threshold_skips_resampling_when_weights_even() {
        let m = toy_model(0.0);
        let cfg = FilterConfig { resampling: Resampling::EssBelow { fraction: 0.5 }, ..config(20, Record::Paths, false) };
        let r = run_filter(&Y, &m, &cfg, 2).unwrap();
        // identical particles keep identical weights: never resampled, ESS = N
        assert!(r.ess.iter().all(|&e| (e - 20.0).abs() < 1e-9));
        let always = run_filter(&Y, &m, &config(20, Record::Paths, false), 2).unwrap();
        assert!((r.log_likelihood - always.log_likelihood).abs() < 1e-9);
    }

    #[test]
    fn rmse_cases() {
        let m = toy_model(0.2);
        let r = run_filter(&Y, &m, &config(64, Record::Bands, false), 8).unwrap();
        let median = r.median_beta();
        let all = vec![true; Y.len()];
        assert_eq!(rmse_beta(&r, &median, &all).unwrap(), 0.0);
        let shifted: Vec<f64> = median.iter().map(|b| b + 0.125).collect();
        assert!((rmse_beta(&r, &shifted, &all).unwrap() - 0.125).abs() < 1e-12);
        assert_eq!(rmse_beta(&r, &median, &vec![false; Y.len()]), Err(FilterError::EmptyMask));
        assert!(matches!(rmse_beta(&r, &median[1..], &all[1..]), Err(FilterError::LengthMismatch { .. })));
    }

    #[test]
    fn weighted_quantile_picks_lower_value() {
        let mut pairs = vec![(3.0, 0.25), (1.0, 0.25), (4.0, 0.25), (2.0, 0.25)];
        assert_eq!(weighted_quantiles(&mut pairs, &[0.05, 0.5, 0.95]), vec![1.0, 2.0, 4.0]);
    }
}
