use serde::{Deserialize, Serialize};

use super::chain::Chain;
use super::params::Param;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    /// Sample standard deviation (denominator `n - 1`; 0 for one draw).
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub iterations: usize,
    pub discarded: usize,
    /// Fraction of retained iterations that accepted their proposal.
    pub acceptance_rate: f64,
    pub parameters: Vec<ParameterSummary>,
}

/// Linearly interpolated quantile of sorted data (the `(n - 1) p` rule).
/// NaN for empty input.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-parameter moments and quantiles over the draws after `burn_in_discard`.
pub fn chain_summary(chain: &Chain, burn_in_discard: usize) -> Result<ChainSummary, String> {
    if burn_in_discard >= chain.len() {
        return Err(format!(
            "cannot discard {burn_in_discard} of {} draws",
            chain.len()
        ));
    }
    let kept = &chain.draws[burn_in_discard..];
    let accepted = &chain.accepted[burn_in_discard..];
    let n = kept.len() as f64;
    let mut parameters = Vec::new();
    for p in Param::ALL {
        let mut xs: Vec<f64> = kept.iter().filter_map(|d| d.get(p)).collect();
        if xs.len() != kept.len() {
            continue;
        }
        // deviations from the first draw keep a constant chain exact
        let pivot = xs[0];
        let shift = xs.iter().map(|x| x - pivot).sum::<f64>() / n;
        let mean = pivot + shift;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - pivot - shift).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        xs.sort_by(f64::total_cmp);
        parameters.push(ParameterSummary {
            name: p.name().to_string(),
            mean,
            sd,
            q05: quantile_sorted(&xs, 0.05),
            q50: quantile_sorted(&xs, 0.5),
            q95: quantile_sorted(&xs, 0.95),
        });
    }
    Ok(ChainSummary {
        iterations: chain.len(),
        discarded: burn_in_discard,
        acceptance_rate: accepted.iter().filter(|&&a| a).count() as f64 / n,
        parameters,
    })
}
