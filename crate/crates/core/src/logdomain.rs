//! Log-domain weight arithmetic: running LogSumExp by the iterative
//! Jacobian logarithm, normalisation, and systematic resampling against the
//! log CDF. Raw weights are never exponentiated.

use rand::Rng;
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LogDomainError {
    #[error("empty weight vector")]
    Empty,
    #[error("all log-weights are -inf (total particle degeneracy)")]
    Degenerate,
    #[error("log-weight {index} is NaN or +inf")]
    Invalid { index: usize },
}

/// A vector of log-weights. Entries may be `-inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogWeights<T>(pub Vec<T>);

impl<T: Real> LogWeights<T> {
    /// Equal weights `-ln n`.
    pub fn uniform(n: usize) -> Self {
        LogWeights(vec![-T::from_index(n).ln(); n])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T> From<Vec<T>> for LogWeights<T> {
    fn from(v: Vec<T>) -> Self {
        LogWeights(v)
    }
}

/// `ln(e^a + e^b)` as `max(a, b) + ln(1 + e^{-|a - b|})`.
#[inline]
pub fn jacobian_log<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

fn validate<T: Real>(w: &[T]) -> Result<(), LogDomainError> {
    if w.is_empty() {
        return Err(LogDomainError::Empty);
    }
    if let Some(index) = w.iter().position(|x| x.is_nan() || *x == T::infinity()) {
        return Err(LogDomainError::Invalid { index });
    }
    Ok(())
}

/// Running log-sums `C[i] = ln sum_{k <= i} exp(w[k])`.
pub fn log_sum_exp_scan<T: Real>(w: &[T]) -> Result<Vec<T>, LogDomainError> {
    validate(w)?;
    let mut out = Vec::with_capacity(w.len());
    let mut acc = w[0];
    out.push(acc);
    for &x in &w[1..] {
        acc = jacobian_log(acc, x);
        out.push(acc);
    }
    if acc == T::neg_infinity() {
        return Err(LogDomainError::Degenerate);
    }
    Ok(out)
}

/// Final element of [`log_sum_exp_scan`] without keeping the prefix.
pub fn log_sum_exp<T: Real>(w: &[T]) -> Result<T, LogDomainError> {
    validate(w)?;
    let total = w[1..].iter().fold(w[0], |acc, &x| jacobian_log(acc, x));
    if total == T::neg_infinity() {
        Err(LogDomainError::Degenerate)
    } else {
        Ok(total)
    }
}

/// Subtracts the log total from every entry. Returns the normalised weights
/// and the log total.
pub fn normalize_log_weights<T: Real>(w: &[T]) -> Result<(LogWeights<T>, T), LogDomainError> {
    let total = log_sum_exp(w)?;
    Ok((LogWeights(w.iter().map(|&x| x - total).collect()), total))
}

/// Effective sample size `1 / sum w_i^2` of normalised log-weights.
pub fn effective_sample_size<T: Real>(normalized: &[T]) -> Result<T, LogDomainError> {
    let doubled: Vec<T> = normalized.iter().map(|&x| x + x).collect();
    Ok((-log_sum_exp(&doubled)?).exp())
}

/// Systematic resampling with an explicit offset `s` in `[0, 1/N)`.
///
/// Threshold `i` (zero-based) is `ln(s + i / N)`; each is matched against
/// the running log CDF. Indices are zero-based and never point at a
/// particle with weight `-inf`.
pub fn systematic_resample_log_with<T: Real>(
    normalized: &[T],
    s: T,
) -> Result<Vec<usize>, LogDomainError> {
    let cdf = log_sum_exp_scan(normalized)?;
    let n = normalized.len();
    let nf = T::from_index(n);
    // Rounding can leave the last CDF entry a hair below zero; never step
    // past the last particle that carries weight.
    let last = normalized
        .iter()
        .rposition(|&x| x > T::neg_infinity())
        .ok_or(LogDomainError::Degenerate)?;
    let mut k = 0usize;
    let mut ancestors = Vec::with_capacity(n);
    for i in 0..n {
        let threshold = (s + T::from_index(i) / nf).ln();
        while k < last && threshold > cdf[k] {
            k += 1;
        }
        ancestors.push(k);
    }
    Ok(ancestors)
}

/// Systematic resampling with a fresh offset `s ~ U(0, 1/N)`.
pub fn systematic_resample_log<T: Real, R: Rng + ?Sized>(
    normalized: &[T],
    rng: &mut R,
) -> Result<Vec<usize>, LogDomainError> {
    let s = T::open01(rng) / T::from_index(normalized.len().max(1));
    systematic_resample_log_with(normalized, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scan_small_cases() {
        assert_eq!(log_sum_exp_scan(&[1.5_f64]).unwrap(), vec![1.5]);
        let c = log_sum_exp_scan(&[0.0_f64, 0.0]).unwrap();
        assert_eq!(c[0], 0.0);
        assert!((c[1] - 2.0_f64.ln()).abs() < 1e-15);
        let c = log_sum_exp_scan(&[1000.0_f64; 3]).unwrap();
        assert!((c[2] - (1000.0 + 3.0_f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn scan_errors() {
        assert_eq!(log_sum_exp_scan::<f64>(&[]), Err(LogDomainError::Empty));
        assert_eq!(
            log_sum_exp_scan(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            Err(LogDomainError::Degenerate)
        );
        assert_eq!(log_sum_exp_scan(&[0.0, f64::NAN]), Err(LogDomainError::Invalid { index: 1 }));
    }

    #[test]
    fn leading_neg_infinity() {
        let c = log_sum_exp_scan(&[f64::NEG_INFINITY, 2.0, f64::NEG_INFINITY]).unwrap();
        assert_eq!(c, vec![f64::NEG_INFINITY, 2.0, 2.0]);
    }

    #[test]
    fn normalisation_cases() {
        let (w, total) = normalize_log_weights(&[-3.0_f64, -3.0]).unwrap();
        assert!((total - (-3.0 + 2.0_f64.ln())).abs() < 1e-15);
        assert!(w.0.iter().all(|&x| (x + 2.0_f64.ln()).abs() < 1e-15));

        let (w, total) = normalize_log_weights(&[0.0_f64, f64::NEG_INFINITY]).unwrap();
        assert_eq!(total, 0.0);
        assert_eq!(w.0, vec![0.0, f64::NEG_INFINITY]);

        let (_, total) = normalize_log_weights(&[3.0_f64, 4.0, 5.0]).unwrap();
        let direct = (3.0_f64.exp() + 4.0_f64.exp() + 5.0_f64.exp()).ln();
        assert!((total - direct).abs() < 1e-13);
        assert!((total - 5.407606).abs() < 1e-6);
    }

    #[test]
    fn single_support_point_takes_everything() {
        let mut w = vec![f64::NEG_INFINITY; 6];
        w[4] = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            assert_eq!(systematic_resample_log(&w, &mut rng).unwrap(), vec![4; 6]);
        }
        // support guard at the top end of the offset range
        assert_eq!(systematic_resample_log_with(&w, 1.0 / 6.0 - 1e-17).unwrap(), vec![4; 6]);
    }

    #[test]
    fn uniform_weights_keep_every_particle() {
        for n in [2usize, 5, 64, 1000] {
            let w = LogWeights::<f64>::uniform(n);
            for s in [1e-12, 0.3 / n as f64, 0.999_999 / n as f64] {
                let idx = systematic_resample_log_with(w.as_slice(), s).unwrap();
                assert_eq!(idx, (0..n).collect::<Vec<_>>(), "n={n} s={s}");
            }
        }
    }

    fn copy_counts(idx: &[usize], n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        for &i in idx {
            c[i] += 1;
        }
        c
    }

    #[test]
    fn brute_force_offset_grid() {
        let probs = [0.7_f64, 0.1, 0.1, 0.1];
        let w: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        let mut seen = std::collections::BTreeSet::new();
        for k in 1..2500 {
            let s = k as f64 * 1e-4;
            let c = copy_counts(&systematic_resample_log_with(&w, s).unwrap(), 4);
            assert_eq!(c.iter().sum::<usize>(), 4);
            for (ci, p) in c.iter().zip(probs) {
                let e = 4.0 * p;
                assert!(*ci == e.floor() as usize || *ci == e.ceil() as usize, "s={s} {c:?}");
            }
            seen.insert(c);
        }
        // CDF steps at 0.7, 0.8, 0.9 partition the offset range into four outcomes.
        assert_eq!(
            seen.into_iter().collect::<Vec<_>>(),
            vec![vec![2, 1, 0, 1], vec![3, 0, 0, 1], vec![3, 0, 1, 0], vec![3, 1, 0, 0]]
        );
    }

    #[test]
    fn ess_bounds() {
        let w = LogWeights::<f64>::uniform(10);
        assert!((effective_sample_size(w.as_slice()).unwrap() - 10.0).abs() < 1e-9);
        assert!((effective_sample_size(&[0.0, f64::NEG_INFINITY]).unwrap() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn scan_matches_direct_sum(w in prop::collection::vec(-500.0..500.0f64, 1..200)) {
            let scan = log_sum_exp_scan(&w).unwrap();
            for i in 0..w.len() {
                let prefix = &w[..=i];
                let m = prefix.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let direct = m + prefix.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                prop_assert!((scan[i] - direct).abs() <= 1e-10 * direct.abs().max(1.0));
                if i > 0 { prop_assert!(scan[i] >= scan[i - 1]); }
            }
        }

        #[test]
        fn total_is_permutation_invariant(
            w in prop::collection::vec(-50.0..50.0f64, 2..64), seed in any::<u64>()
        ) {
            use rand::seq::SliceRandom;
            let mut shuffled = w.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = log_sum_exp(&w).unwrap();
            let b = log_sum_exp(&shuffled).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn normalised_weights_sum_to_one(w in prop::collection::vec(-300.0..300.0f64, 1..100)) {
            let (norm, _) = normalize_log_weights(&w).unwrap();
            let s: f64 = norm.0.iter().map(|x| x.exp()).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn resampling_is_stratified(
            raw in prop::collection::vec(prop_oneof![Just(f64::NEG_INFINITY), -10.0..3.0f64], 2..40),
            u in 0.0..1.0f64,
        ) {
            prop_assume!(raw.iter().any(|x| x.is_finite()));
            let (norm, _) = normalize_log_weights(&raw).unwrap();
            let n = raw.len();
            let idx = systematic_resample_log_with(norm.as_slice(), u / n as f64).unwrap();
            prop_assert_eq!(idx.len(), n);
            let c = copy_counts(&idx, n);
            for (k, &ck) in c.iter().enumerate() {
                let e = n as f64 * norm.0[k].exp();
                prop_assert!(ck as f64 >= e.floor() - 1e-9 && ck as f64 <= e.ceil() + 1e-9,
                    "k={} count={} expected={}", k, ck, e);
                if norm.0[k] == f64::NEG_INFINITY { prop_assert_eq!(ck, 0); }
            }
        }
    }
}
