use serde::{Deserialize, Serialize};

/// Names of the sampled static parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Eta,
    Lambda,
    Mu,
    Sigma,
    /// Negative-binomial dispersion `1 / r`.
    Phi,
}

impl Param {
    pub const ALL: [Param; 5] = [Param::Eta, Param::Lambda, Param::Mu, Param::Sigma, Param::Phi];

    pub fn name(self) -> &'static str {
        match self {
            Param::Eta => "eta",
            Param::Lambda => "lambda",
            Param::Mu => "mu",
            Param::Sigma => "sigma",
            Param::Phi => "phi",
        }
    }
}

/// Static parameters `[eta, lambda, mu, sigma, phi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    /// Hospital recovery rate (per day).
    pub eta: f64,
    /// BK mean-reversion rate (per day).
    pub lambda: f64,
    /// BK long-term mean of `ln beta`.
    pub mu: f64,
    /// BK stationary standard deviation of `ln beta`.
    pub sigma: f64,
    /// Dispersion `1 / r`; `None` under a Poisson likelihood.
    pub phi: Option<f64>,
}

impl ParamVector {
    pub fn get(&self, p: Param) -> Option<f64> {
        match p {
            Param::Eta => Some(self.eta),
            Param::Lambda => Some(self.lambda),
            Param::Mu => Some(self.mu),
            Param::Sigma => Some(self.sigma),
            Param::Phi => self.phi,
        }
    }

    pub fn set(&mut self, p: Param, value: f64) {
        match p {
            Param::Eta => self.eta = value,
            Param::Lambda => self.lambda = value,
            Param::Mu => self.mu = value,
            Param::Sigma => self.sigma = value,
            Param::Phi => self.phi = Some(value),
        }
    }

    /// Values of `coords`, in order. Absent coordinates read as NaN.
    pub fn project(&self, coords: &[Param]) -> Vec<f64> {
        coords.iter().map(|&p| self.get(p).unwrap_or(f64::NAN)).collect()
    }
}
