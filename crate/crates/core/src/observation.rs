//! Count likelihoods linking the hospitalised compartment to reported
//! daily admissions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{check, ModelError};
use crate::scalar::Real;

/// Observation density for `y_t` given the latent mean `H_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationModel<T> {
    /// Negative binomial with mean `H` and dispersion `r` (variance `H + H^2 / r`).
    NegativeBinomial { r: T },
    Poisson,
}

impl<T: Real> ObservationModel<T> {
    /// Negative binomial parameterised by `phi = 1 / r`.
    pub fn negative_binomial_phi(phi: T) -> Self {
        ObservationModel::NegativeBinomial { r: phi.recip() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            ObservationModel::NegativeBinomial { r } => check("r", r, r > T::zero(), "r > 0"),
            ObservationModel::Poisson => Ok(()),
        }
    }

    pub fn log_density(&self, y: u64, h: T) -> T {
        log_observation_density(y, h, self)
    }

    pub fn sample<R: Rng + ?Sized>(&self, h: T, rng: &mut R) -> u64 {
        sample_observation(h, self, rng)
    }

    /// Mean of the distribution at latent mean `h`.
    pub fn mean(&self, h: T) -> T {
        h
    }

    pub fn variance(&self, h: T) -> T {
        match *self {
            ObservationModel::NegativeBinomial { r } => h + h * h / r,
            ObservationModel::Poisson => h,
        }
    }
}

/// `ln Gamma(y + r) - ln Gamma(r)`, summed directly for small counts where
/// the difference of two large log-gammas would lose digits.
fn ln_rising_factorial<T: Real>(r: T, y: u64) -> T {
    if y <= 24 {
        (0..y).map(|k| (r + T::from_count(k)).ln()).sum()
    } else {
        (r + T::from_count(y)).lgamma() - r.lgamma()
    }
}

#[inline]
fn ln_factorial<T: Real>(y: u64) -> T {
    (T::from_count(y) + T::one()).lgamma()
}

/// Log-probability of observing `y` when the latent mean is `h`.
///
/// A zero mean is a point mass at zero under both models. Impossible
/// observations return negative infinity.
pub fn log_observation_density<T: Real>(y: u64, h: T, model: &ObservationModel<T>) -> T {
    if !(h > T::zero()) {
        return if y == 0 && h == T::zero() { T::zero() } else { T::neg_infinity() };
    }
    if !h.is_finite() {
        return T::neg_infinity();
    }
    let yf = T::from_count(y);
    match *model {
        ObservationModel::Poisson => {
            let tail = if y == 0 { T::zero() } else { yf * h.ln() };
            tail - h - ln_factorial::<T>(y)
        }
        ObservationModel::NegativeBinomial { r } => {
            // p = r / (r + h); mean r (1 - p) / p = h
            let denom = (r + h).ln();
            let success = r * (r.ln() - denom);
            let failure = if y == 0 { T::zero() } else { yf * (h.ln() - denom) };
            ln_rising_factorial(r, y) - ln_factorial::<T>(y) + success + failure
        }
    }
}

/// Draws a count with mean `h`. The negative binomial is drawn as a
/// gamma-Poisson mixture.
pub fn sample_observation<T: Real, R: Rng + ?Sized>(
    h: T,
    model: &ObservationModel<T>,
    rng: &mut R,
) -> u64 {
    if !(h > T::zero()) {
        return 0;
    }
    match *model {
        ObservationModel::Poisson => T::poisson(h, rng),
        ObservationModel::NegativeBinomial { r } => {
            let rate = T::gamma(r, h / r, rng);
            T::poisson(rate, rng)
        }
    }
}
