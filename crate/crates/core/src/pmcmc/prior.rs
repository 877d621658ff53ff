use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::{Param, ParamVector};

/// Prior on one coordinate of the parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Prior {
    Uniform { lo: f64, hi: f64 },
    Beta { a: f64, b: f64 },
    /// Normal with standard deviation `sd`.
    Normal { mean: f64, sd: f64 },
    Fixed { value: f64 },
}

impl Prior {
    pub fn is_fixed(&self) -> bool {
        matches!(self, Prior::Fixed { .. })
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Prior::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && hi > lo,
            Prior::Beta { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Prior::Fixed { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("degenerate or non-finite prior {self:?}"))
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Prior::Uniform { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Beta { a, b } => {
                if x <= 0.0 || x >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                let ln_beta = libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b);
                (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta
            }
            Prior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            Prior::Fixed { value } => {
                if x == value {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Prior::Beta { a, b } => Beta::new(a, b).expect("validated").sample(rng),
            Prior::Normal { mean, sd } => Normal::new(mean, sd).expect("validated").sample(rng),
            Prior::Fixed { value } => value,
        }
    }

    /// Width used to scale the burn-in proposal: support length for
    /// Uniform and Beta, four standard deviations for Normal.
    pub fn width(&self) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => hi - lo,
            Prior::Beta { .. } => 1.0,
            Prior::Normal { sd, .. } => 4.0 * sd,
            Prior::Fixed { .. } => 0.0,
        }
    }
}

/// Priors for every coordinate. `phi` is `None` when the likelihood has no
/// dispersion parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSet {
    pub eta: Prior,
    pub lambda: Prior,
    pub mu: Prior,
    pub sigma: Prior,
    pub phi: Option<Prior>,
}

impl PriorSet {
    pub fn get(&self, p: Param) -> Option<&Prior> {
        match p {
            Param::Eta => Some(&self.eta),
            Param::Lambda => Some(&self.lambda),
            Param::Mu => Some(&self.mu),
            Param::Sigma => Some(&self.sigma),
            Param::Phi => self.phi.as_ref(),
        }
    }

    /// Coordinates present in this set, in canonical order.
    pub fn present(&self) -> Vec<Param> {
        Param::ALL.into_iter().filter(|&p| self.get(p).is_some()).collect()
    }

    /// Coordinates the sampler moves.
    pub fn free(&self) -> Vec<Param> {
        Param::ALL
            .into_iter()
            .filter(|&p| self.get(p).is_some_and(|pr| !pr.is_fixed()))
            .collect()
    }

    pub fn validate(&self) -> Result<(), String> {
        for p in self.present() {
            self.get(p)
                .expect("present")
                .validate()
                .map_err(|e| format!("prior for {}: {e}", p.name()))?;
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        ParamVector {
            eta: self.eta.sample(rng),
            lambda: self.lambda.sample(rng),
            mu: self.mu.sample(rng),
            sigma: self.sigma.sample(rng),
            phi: self.phi.map(|p| p.sample(rng)),
        }
    }
}

/// Sum of coordinate log-densities; `-inf` outside the support.
pub fn log_prior(theta: &ParamVector, priors: &PriorSet) -> f64 {
    let mut total = 0.0;
    for p in Param::ALL {
        let lp = match (priors.get(p), theta.get(p)) {
            (Some(prior), Some(x)) => prior.log_density(x),
            (None, None) => 0.0,
            _ => f64::NEG_INFINITY,
        };
        total += lp;
        if total == f64::NEG_INFINITY {
            break;
        }
    }
    total
}
