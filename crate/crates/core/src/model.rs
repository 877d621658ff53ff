//! SIHR compartments driven by a stochastic transmission rate.
//!
//! The compartments advance by forward Euler with a configurable number of
//! substeps per interval; the log transmission rate advances once per
//! interval through the driver's transition.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{label, StreamKey};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: must satisfy {constraint}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("transmission rate became non-positive at step {step}")]
    DegenerateBeta { step: usize },
}

pub(crate) fn check<T: Real>(
    name: &'static str,
    value: T,
    ok: bool,
    constraint: &'static str,
) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            value: value.to_f64_lossy(),
            constraint,
        })
    }
}

/// One particle's latent state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector<T> {
    pub s: T,
    pub i: T,
    pub h: T,
    pub r: T,
    /// Natural log of the transmission rate (per day).
    pub log_beta: T,
}

impl<T: Real> StateVector<T> {
    pub fn new(s: T, i: T, h: T, r: T, log_beta: T) -> Self {
        Self { s, i, h, r, log_beta }
    }

    /// State with `S = N - I - H - R`.
    pub fn with_population(n: T, i: T, h: T, r: T, log_beta: T) -> Self {
        Self::new(n - i - h - r, i, h, r, log_beta)
    }

    #[inline]
    pub fn beta(&self) -> T {
        self.log_beta.exp()
    }

    #[inline]
    pub fn total(&self) -> T {
        self.s + self.i + self.h + self.r
    }

    /// Coordinates in reporting order: S, I, H, R, beta.
    pub fn coordinates(&self) -> [T; 5] {
        [self.s, self.i, self.h, self.r, self.beta()]
    }
}

/// Static rate constants of the compartmental model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SihrParams<T> {
    /// Total population.
    pub n: T,
    /// Exit rate from I (per day).
    pub alpha: T,
    /// Fraction of I exits that are hospitalised.
    pub gamma: T,
    /// Hospital recovery rate (per day).
    pub eta: T,
}

impl<T: Real> SihrParams<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        check("n", self.n, self.n > T::zero(), "n > 0")?;
        check("alpha", self.alpha, self.alpha > T::zero(), "alpha > 0")?;
        check(
            "gamma",
            self.gamma,
            self.gamma >= T::zero() && self.gamma <= T::one(),
            "0 <= gamma <= 1",
        )?;
        check("eta", self.eta, self.eta > T::zero(), "eta > 0")
    }
}

/// Black-Karasinski constants: `d ln b = lambda (mu - ln b) dt + sigma sqrt(2 lambda) dB`.
///
/// `sigma` is the stationary standard deviation of `ln b`, so the stationary
/// law is `N(mu, sigma^2)` for every `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BkParams<T> {
    pub lambda: T,
    pub mu: T,
    pub sigma: T,
}

impl<T: Real> BkParams<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        check("lambda", self.lambda, self.lambda > T::zero(), "lambda > 0")?;
        check("mu", self.mu, true, "finite")?;
        // sigma = 0 is admitted: it gives the deterministic mean-reverting path.
        check("sigma", self.sigma, self.sigma >= T::zero(), "sigma >= 0")
    }

    /// Diffusion coefficient `sigma * sqrt(2 lambda)`.
    pub fn diffusion(&self) -> T {
        self.sigma * (T::lit(2.0) * self.lambda).sqrt()
    }
}

/// Ornstein-Uhlenbeck constants acting on the transmission rate itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuParams<T> {
    pub lambda: T,
    pub mu: T,
    pub sigma: T,
}

/// Brownian drift and volatility, used on `b` (BM) or on `ln b` (GBM).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmParams<T> {
    pub drift: T,
    pub volatility: T,
}

/// The stochastic process driving the transmission rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriverKind<T> {
    BlackKarasinski(BkParams<T>),
    OrnsteinUhlenbeck(OuParams<T>),
    BrownianMotion(BmParams<T>),
    GeometricBrownianMotion(BmParams<T>),
}

impl<T: Real> DriverKind<T> {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            DriverKind::BlackKarasinski(bk) => bk.validate(),
            DriverKind::OrnsteinUhlenbeck(ou) => {
                check("lambda", ou.lambda, ou.lambda > T::zero(), "lambda > 0")?;
                check("mu", ou.mu, true, "finite")?;
                check("sigma", ou.sigma, ou.sigma >= T::zero(), "sigma >= 0")
            }
            DriverKind::BrownianMotion(bm) | DriverKind::GeometricBrownianMotion(bm) => {
                check("drift", bm.drift, true, "finite")?;
                check(
                    "volatility",
                    bm.volatility,
                    bm.volatility >= T::zero(),
                    "volatility >= 0",
                )
            }
        }
    }

    /// Whether the driver can push the transmission rate to zero or below.
    pub fn can_degenerate(&self) -> bool {
        matches!(
            self,
            DriverKind::OrnsteinUhlenbeck(_) | DriverKind::BrownianMotion(_)
        )
    }
}

/// Right-hand side of the compartmental ODE, per day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivatives<T> {
    pub ds: T,
    pub di: T,
    pub dh: T,
    pub dr: T,
}

/// Rates of change of S, I, H, R at the given state, using `exp(log_beta)`.
///
/// Computed from the four flows (infection, exit from I, hospitalisation,
/// hospital discharge) so the four components cancel to rounding.
pub fn sihr_derivatives<T: Real>(state: &StateVector<T>, params: &SihrParams<T>) -> Derivatives<T> {
    derivatives_at(state, state.beta(), params)
}

#[inline]
fn derivatives_at<T: Real>(state: &StateVector<T>, beta: T, params: &SihrParams<T>) -> Derivatives<T> {
    let infection = beta * state.s * state.i / params.n;
    let exit = params.alpha * state.i;
    let admitted = exit * params.gamma;
    let discharged = params.eta * state.h;
    Derivatives {
        ds: -infection,
        di: infection - exit,
        dh: admitted - discharged,
        dr: (exit - admitted) + discharged,
    }
}

/// Advances S, I, H, R by `substeps` forward-Euler increments of `dt / substeps`.
/// `log_beta` is left unchanged.
pub fn euler_step<T: Real>(
    state: &StateVector<T>,
    params: &SihrParams<T>,
    dt: T,
    substeps: usize,
) -> StateVector<T> {
    debug_assert!(dt > T::zero() && substeps >= 1);
    let h = dt / T::from_index(substeps.max(1));
    let mut x = *state;
    let beta = state.beta();
    for _ in 0..substeps.max(1) {
        let d = derivatives_at(&x, beta, params);
        x.s = x.s + h * d.ds;
        x.i = x.i + h * d.di;
        x.h = x.h + h * d.dh;
        x.r = x.r + h * d.dr;
        clamp_nonnegative(&mut x);
    }
    x
}

/// Sets negative compartments to zero and removes the same amount from
/// the largest compartment, keeping the total fixed.
fn clamp_nonnegative<T: Real>(x: &mut StateVector<T>) {
    let mut comps = [x.s, x.i, x.h, x.r];
    let mut deficit = T::zero();
    for c in comps.iter_mut() {
        if *c < T::zero() {
            deficit = deficit - *c;
            *c = T::zero();
        }
    }
    if deficit > T::zero() {
        let largest = (0..4)
            .max_by(|&a, &b| comps[a].partial_cmp(&comps[b]).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
        comps[largest] = comps[largest] - deficit;
    }
    [x.s, x.i, x.h, x.r] = comps;
}

/// Exact Black-Karasinski transition of `ln b` over `dt` given a standard
/// normal draw.
pub fn bk_exact_step<T: Real>(log_beta: T, bk: &BkParams<T>, dt: T, epsilon: T) -> T {
    let decay = (-bk.lambda * dt).exp();
    // 1 - exp(-2 lambda dt), accurate for small lambda dt
    let var = -(T::lit(-2.0) * bk.lambda * dt).exp_m1();
    decay * log_beta + bk.mu * (T::one() - decay) + bk.sigma * var.max(T::zero()).sqrt() * epsilon
}

/// The transmission rate left the positive half-line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("transmission rate is non-positive")]
pub struct DegenerateBeta;

/// Advances `ln b` by one interval of the chosen driver.
///
/// OU and BM act on `b` directly and may leave it non-positive; that is
/// reported as [`DegenerateBeta`] rather than producing a NaN log.
pub fn driver_step<T: Real>(
    log_beta: T,
    driver: &DriverKind<T>,
    dt: T,
    epsilon: T,
) -> Result<T, DegenerateBeta> {
    let next = match driver {
        DriverKind::BlackKarasinski(bk) => return Ok(bk_exact_step(log_beta, bk, dt, epsilon)),
        DriverKind::GeometricBrownianMotion(bm) => {
            return Ok(log_beta + bm.drift * dt + bm.volatility * dt.sqrt() * epsilon)
        }
        DriverKind::OrnsteinUhlenbeck(ou) => {
            let decay = (-ou.lambda * dt).exp();
            let var = -(T::lit(-2.0) * ou.lambda * dt).exp_m1();
            decay * log_beta.exp()
                + ou.mu * (T::one() - decay)
                + ou.sigma * var.max(T::zero()).sqrt() * epsilon
        }
        DriverKind::BrownianMotion(bm) => {
            log_beta.exp() + bm.drift * dt + bm.volatility * dt.sqrt() * epsilon
        }
    };
    if next > T::zero() && next.is_finite() {
        Ok(next.ln())
    } else {
        Err(DegenerateBeta)
    }
}

/// One interval of the forward model: driver step, then Euler on the
/// compartments using the updated transmission rate.
pub fn propagate<T: Real>(
    state: &StateVector<T>,
    sihr: &SihrParams<T>,
    driver: &DriverKind<T>,
    dt: T,
    substeps: usize,
    epsilon: T,
) -> Result<StateVector<T>, DegenerateBeta> {
    let log_beta = driver_step(state.log_beta, driver, dt, epsilon)?;
    let moved = StateVector { log_beta, ..*state };
    Ok(euler_step(&moved, sihr, dt, substeps))
}

/// A simulated path sampled at `t = k * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub dt: T,
    pub states: Vec<StateVector<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.states.len()).map(|k| T::from_index(k) * self.dt)
    }

    pub fn betas(&self) -> Vec<T> {
        self.states.iter().map(|s| s.beta()).collect()
    }

    pub fn hospitalised(&self) -> Vec<T> {
        self.states.iter().map(|s| s.h).collect()
    }
}

/// Simulates the coupled system from `initial` for `floor(t_end / dt)` intervals.
pub fn simulate_trajectory<T: Real>(
    initial: &StateVector<T>,
    sihr: &SihrParams<T>,
    driver: &DriverKind<T>,
    t_end: T,
    dt: T,
    substeps: usize,
    seed: u64,
) -> Result<Trajectory<T>, ModelError> {
    sihr.validate()?;
    driver.validate()?;
    check("dt", dt, dt > T::zero(), "dt > 0")?;
    check("t_end", t_end, t_end >= dt, "t_end >= dt")?;
    let steps = (t_end / dt).floor().to_usize().unwrap_or(0);
    let mut rng = StreamKey::new(seed, label::TRAJECTORY, 0).stream(0);
    simulate_with(initial, sihr, driver, steps, dt, substeps, &mut rng)
}

/// Same as [`simulate_trajectory`] with a caller-owned generator and an
/// explicit step count.
pub fn simulate_with<T: Real, R: Rng + ?Sized>(
    initial: &StateVector<T>,
    sihr: &SihrParams<T>,
    driver: &DriverKind<T>,
    steps: usize,
    dt: T,
    substeps: usize,
    rng: &mut R,
) -> Result<Trajectory<T>, ModelError> {
    let mut states = Vec::with_capacity(steps + 1);
    states.push(*initial);
    let mut x = *initial;
    for step in 1..=steps {
        let eps = T::standard_normal(rng);
        x = propagate(&x, sihr, driver, dt, substeps, eps)
            .map_err(|_| ModelError::DegenerateBeta { step })?;
        states.push(x);
    }
    Ok(Trajectory { dt, states })
}
