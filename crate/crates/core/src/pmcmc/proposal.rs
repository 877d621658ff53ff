//! Gaussian random-walk proposal with a covariance that is fixed diagonal
//! during burn-in and adapted from the chain history afterwards.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::params::{Param, ParamVector};
use super::prior::PriorSet;

/// Scale of the adapted covariance is `ADAPT_SCALE^2 / d`.
pub const ADAPT_SCALE: f64 = 2.38;
/// Added to the adapted covariance diagonal.
pub const JITTER: f64 = 1e-10;
/// Floor on the burn-in per-coordinate variance.
pub const MIN_INITIAL_VARIANCE: f64 = 1e-8;

/// Burn-in covariance: diagonal with `(prior width / 100)^2` per free coordinate.
pub fn initial_covariance(priors: &PriorSet, free: &[Param]) -> DMatrix<f64> {
    let diag: Vec<f64> = free
        .iter()
        .map(|&p| {
            let w = priors.get(p).map_or(0.0, |pr| pr.width()) / 100.0;
            (w * w).max(MIN_INITIAL_VARIANCE)
        })
        .collect();
    DMatrix::from_diagonal(&DVector::from_vec(diag))
}

/// Draws `theta* ~ N(current, cov)` on the `free` coordinates; the others
/// are copied unchanged.
pub fn propose<R: Rng + ?Sized>(
    current: &ParamVector,
    free: &[Param],
    cov: &DMatrix<f64>,
    rng: &mut R,
) -> ParamVector {
    let mut next = *current;
    if free.is_empty() {
        return next;
    }
    let root = psd_sqrt(cov);
    let z = DVector::from_iterator(free.len(), (0..free.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let step = root * z;
    for (k, &p) in free.iter().enumerate() {
        if let Some(x) = current.get(p) {
            next.set(p, x + step[k]);
        }
    }
    next
}

/// A matrix `L` with `L L^T = cov` for symmetric positive semi-definite input.
/// Negative eigenvalues from rounding are treated as zero.
pub fn psd_sqrt(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(cov.clone());
    let scales = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&scales)
}

/// Running mean and covariance of the chain history (Welford updates).
#[derive(Debug, Clone)]
pub struct AdaptiveCovariance {
    initial: DMatrix<f64>,
    count: usize,
    mean: DVector<f64>,
    /// Sum of outer products of deviations.
    scatter: DMatrix<f64>,
}

impl AdaptiveCovariance {
    pub fn new(initial: DMatrix<f64>) -> Self {
        let d = initial.nrows();
        Self {
            initial,
            count: 0,
            mean: DVector::zeros(d),
            scatter: DMatrix::zeros(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        let x = DVector::from_column_slice(x);
        self.count += 1;
        let delta = &x - &self.mean;
        self.mean += &delta / self.count as f64;
        let delta2 = &x - &self.mean;
        self.scatter += &delta * delta2.transpose();
    }

    /// Sample covariance (denominator `n - 1`) of everything pushed so far.
    pub fn empirical(&self) -> DMatrix<f64> {
        if self.count < 2 {
            return DMatrix::zeros(self.dim(), self.dim());
        }
        let mut c = &self.scatter / (self.count - 1) as f64;
        // symmetrise the rounding
        c = (&c + c.transpose()) * 0.5;
        c
    }

    /// Proposal covariance for iteration `m` (1-based).
    pub fn proposal(&self, m: usize, burn_in: usize) -> DMatrix<f64> {
        if m <= burn_in {
            return self.initial.clone();
        }
        let d = self.dim().max(1) as f64;
        self.empirical() * (ADAPT_SCALE * ADAPT_SCALE / d)
            + DMatrix::identity(self.dim(), self.dim()) * JITTER
    }
}

/// Proposal covariance for iteration `m` computed from the full history
/// (not recursively). Matches [`AdaptiveCovariance::proposal`].
pub fn adapt_covariance(
    history: &[ParamVector],
    free: &[Param],
    m: usize,
    burn_in: usize,
    initial: &DMatrix<f64>,
) -> DMatrix<f64> {
    let d = free.len();
    if m <= burn_in {
        return initial.clone();
    }
    let rows: Vec<Vec<f64>> = history.iter().map(|t| t.project(free)).collect();
    let n = rows.len();
    let mut cov = DMatrix::zeros(d, d);
    if n >= 2 {
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1) as f64;
            }
        }
    }
    cov * (ADAPT_SCALE * ADAPT_SCALE / d.max(1) as f64) + DMatrix::identity(d, d) * JITTER
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmcmc::prior::Prior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn theta() -> ParamVector {
        ParamVector { eta: 0.1, lambda: 1.0 / 35.0, mu: -1.3, sigma: 0.4, phi: Some(0.01) }
    }

    const FREE: [Param; 4] = [Param::Eta, Param::Mu, Param::Sigma, Param::Phi];

    #[test]
    fn zero_covariance_returns_current() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cov = DMatrix::zeros(4, 4);
        assert_eq!(propose(&theta(), &FREE, &cov, &mut rng), theta());
    }

    #[test]
    fn fixed_coordinates_never_move() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cov = DMatrix::identity(4, 4) * 0.3;
        for _ in 0..1000 {
            let p = propose(&theta(), &FREE, &cov, &mut rng);
            assert_eq!(p.lambda, theta().lambda);
        }
    }

    #[test]
    fn diagonal_variances_are_reproduced() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let diag = [0.01, 0.25, 4.0, 1e-4];
        let cov = DMatrix::from_diagonal(&DVector::from_column_slice(&diag));
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| propose(&theta(), &FREE, &cov, &mut rng).project(&FREE)).collect();
        let centre = theta().project(&FREE);
        for (k, &v) in diag.iter().enumerate() {
            let var = draws.iter().map(|d| (d[k] - centre[k]).powi(2)).sum::<f64>() / n as f64;
            // Var of a chi-square-based variance estimate: 2 v^2 / n
            let se = (2.0 * v * v / n as f64).sqrt();
            assert!((var - v).abs() < 3.0 * se, "coord {k}: {var} vs {v}");
        }
    }

    #[test]
    fn burn_in_covariance_is_unchanged() {
        let priors = PriorSet {
            eta: Prior::Uniform { lo: 0.0, hi: 1.0 },
            lambda: Prior::Fixed { value: 0.1 },
            mu: Prior::Normal { mean: -0.8, sd: 0.4 },
            sigma: Prior::Beta { a: 1.5, b: 10.0 },
            phi: Some(Prior::Uniform { lo: 1e-3, hi: 0.2 }),
        };
        let free = priors.free();
        let init = initial_covariance(&priors, &free);
        assert_eq!(init[(0, 0)], 1e-4);
        assert!((init[(1, 1)] - 0.016f64.powi(2)).abs() < 1e-18);
        assert_eq!(init[(2, 2)], 1e-4);
        let mut ad = AdaptiveCovariance::new(init.clone());
        ad.push(&[0.5, -1.0, 0.3, 0.1]);
        ad.push(&[0.4, -1.1, 0.2, 0.05]);
        assert_eq!(ad.proposal(1, 10), init);
        assert_eq!(ad.proposal(10, 10), init);
        assert_ne!(ad.proposal(11, 10), init);
    }

    #[test]
    fn constant_history_gives_jitter() {
        let mut ad = AdaptiveCovariance::new(DMatrix::identity(4, 4));
        for _ in 0..50 {
            ad.push(&theta().project(&FREE));
        }
        let c = ad.proposal(51, 10);
        let expect = DMatrix::identity(4, 4) * JITTER;
        assert!((c - expect).abs().max() < 1e-20);
    }

    #[test]
    fn recursive_and_batch_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cov = DMatrix::identity(4, 4) * 0.05;
        let mut hist = vec![theta()];
        for _ in 0..300 {
            let last = *hist.last().unwrap();
            hist.push(propose(&last, &FREE, &cov, &mut rng));
        }
        let mut ad = AdaptiveCovariance::new(cov.clone());
        for h in &hist {
            ad.push(&h.project(&FREE));
        }
        let a = ad.proposal(400, 100);
        let b = adapt_covariance(&hist, &FREE, 400, 100, &cov);
        assert!((a - b).abs().max() < 1e-12);
    }

    #[test]
    fn adapted_covariance_scales_known_gaussian() {
        let truth = DMatrix::from_row_slice(3, 3, &[
            0.04, 0.012, -0.006,
            0.012, 0.09, 0.0,
            -0.006, 0.0, 0.01,
        ]);
        let root = psd_sqrt(&truth);
        assert!((&root * root.transpose() - &truth).abs().max() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let free = [Param::Eta, Param::Mu, Param::Sigma];
        let mut ad = AdaptiveCovariance::new(DMatrix::identity(3, 3));
        for _ in 0..10_000 {
            let z = DVector::from_iterator(3, (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let x = &root * z;
            ad.push(x.as_slice());
        }
        let got = ad.proposal(10_001, 1000);
        let expect = &truth * (ADAPT_SCALE * ADAPT_SCALE / free.len() as f64);
        for i in 0..3 {
            for j in 0..3 {
                // 10% of the entry's natural scale sqrt(S_ii S_jj)
                let scale = (expect[(i, i)] * expect[(j, j)]).sqrt();
                assert!((got[(i, j)] - expect[(i, j)]).abs() < 0.1 * scale, "({i},{j})");
            }
        }
    }
}
