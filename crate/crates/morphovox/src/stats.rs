//! Statistics for comparing recovery strategies: percentile-bootstrap
//! confidence intervals of the mean, the two-sided Wilcoxon/Mann-Whitney
//! rank-sum test (exact for small samples, normal-approximated with tie and
//! continuity corrections otherwise), and Bonferroni adjustment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    Empty,
    #[error("sample contains a non-finite value ({0})")]
    NonFinite(f64),
    #[error("confidence level must be in (0, 1), got {0}")]
    BadConfidence(f64),
    #[error("resample count must be positive")]
    NoResamples,
    #[error("p-value must be in [0, 1], got {0}")]
    BadPValue(f64),
    #[error("comparison count must be >= 1")]
    NoComparisons,
}

/// Total sample size at or below which the rank-sum test enumerates the full
/// permutation distribution instead of using the normal approximation.
pub const EXACT_ENUMERATION_LIMIT: usize = 12;

fn check_sample(s: &[f64]) -> Result<(), StatsError> {
    if s.is_empty() {
        return Err(StatsError::Empty);
    }
    if let Some(&v) = s.iter().find(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(v));
    }
    Ok(())
}

/// Percentile bootstrap confidence interval for the mean: draw
/// `resamples` resamples (with replacement, sized like the input), take each
/// mean, and report the symmetric percentile interval at `confidence`
/// (e.g. 0.99 gives the 0.5% and 99.5% quantiles). Deterministic in `seed`.
pub fn bootstrap_mean_ci(
    samples: &[f64],
    confidence: f64,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64), StatsError> {
    check_sample(samples)?;
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::BadConfidence(confidence));
    }
    if resamples == 0 {
        return Err(StatsError::NoResamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut sum = 0.0;
        for _ in 0..n {
            sum += samples[rng.random_range(0..n)];
        }
        means.push(sum / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let alpha = (1.0 - confidence) / 2.0;
    Ok((quantile(&means, alpha), quantile(&means, 1.0 - alpha)))
}

/// Linear-interpolated quantile of an ascending-sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    /// Full enumeration of the group-assignment permutation distribution.
    Exact,
    /// Normal approximation with tie correction and 0.5 continuity
    /// correction.
    NormalApproximation,
}

#[derive(Debug, Clone, Copy)]
pub struct RankSumTest {
    /// Mann-Whitney U statistic for the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: TestMethod,
}

/// Two-sided rank-sum test of `x` against `y`.
///
/// U is counted for `x`: the number of (x, y) pairs with x above y, ties
/// counting one half. Equivalently, with midranks over the pooled sample,
/// U = R_x - n_x (n_x + 1) / 2.
pub fn rank_sum_test(x: &[f64], y: &[f64]) -> Result<RankSumTest, StatsError> {
    check_sample(x)?;
    check_sample(y)?;
    let n1 = x.len();
    let n2 = y.len();
    let u = u_statistic(x, y);
    if n1 + n2 <= EXACT_ENUMERATION_LIMIT {
        Ok(RankSumTest {
            u,
            p_value: exact_two_sided_p(x, y, u),
            method: TestMethod::Exact,
        })
    } else {
        Ok(RankSumTest {
            u,
            p_value: normal_two_sided_p(x, y, u),
            method: TestMethod::NormalApproximation,
        })
    }
}

/// Pair-count form of U for `x`: ties count 0.5.
fn u_statistic(x: &[f64], y: &[f64]) -> f64 {
    let mut u = 0.0;
    for &a in x {
        for &b in y {
            if a > b {
                u += 1.0;
            } else if a == b {
                u += 0.5;
            }
        }
    }
    u
}

/// Exact two-sided p: enumerate every way of labelling the pooled sample,
/// exploiting that the permutation distribution of U is symmetric about
/// n1 n2 / 2 under exchangeability.
fn exact_two_sided_p(x: &[f64], y: &[f64], u_observed: f64) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
    let n = pooled.len();
    let n1 = x.len();
    let lo = u_observed.min(n1 as f64 * y.len() as f64 - u_observed);
    let hi = n1 as f64 * y.len() as f64 - lo;
    let mut total = 0u64;
    let mut extreme = 0u64;
    let mut indices: Vec<usize> = (0..n1).collect();
    loop {
        total += 1;
        let mut in_x = vec![false; n];
        for &i in &indices {
            in_x[i] = true;
        }
        let mut u = 0.0;
        for i in 0..n {
            if !in_x[i] {
                continue;
            }
            for j in 0..n {
                if in_x[j] {
                    continue;
                }
                if pooled[i] > pooled[j] {
                    u += 1.0;
                } else if pooled[i] == pooled[j] {
                    u += 0.5;
                }
            }
        }
        // Count both tails; a value sitting exactly on a cutoff belongs to it.
        if u <= lo + 1e-9 || u >= hi - 1e-9 {
            extreme += 1;
        }
        if !next_combination(&mut indices, n) {
            break;
        }
    }
    (extreme as f64 / total as f64).min(1.0)
}

/// Advance `indices` to the next lexicographic n-choose-k combination of
/// 0..n; false when exhausted.
fn next_combination(indices: &mut [usize], n: usize) -> bool {
    let k = indices.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if indices[i] < n - k + i {
            indices[i] += 1;
            for j in i + 1..k {
                indices[j] = indices[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn normal_two_sided_p(x: &[f64], y: &[f64], u: f64) -> f64 {
    let n1 = x.len() as f64;
    let n2 = y.len() as f64;
    let n = n1 + n2;
    // Tie correction needs the multiplicity of every tied value in the pooled
    // sample.
    let mut pooled: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i + 1;
        while j < pooled.len() && pooled[j] == pooled[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let mean = n1 * n2 / 2.0;
    let variance = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if variance <= 0.0 {
        // Every pooled value identical: no evidence either way.
        return 1.0;
    }
    // Continuity correction shrinks |U - mean| by one half.
    let z = (u - mean).abs() - 0.5;
    let z = z.max(0.0) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

/// Bonferroni adjustment for `comparisons` simultaneous tests:
/// min(1, comparisons · p).
pub fn bonferroni(p: f64, comparisons: usize) -> Result<f64, StatsError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(StatsError::BadPValue(p));
    }
    if comparisons == 0 {
        return Err(StatsError::NoComparisons);
    }
    Ok((p * comparisons as f64).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn u_for_fully_separated_samples() {
        let r = rank_sum_test(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_relative_eq!(r.u, 0.0);
        // Of the C(4,2) = 6 labellings, U = 0 and U = 4 are each hit once.
        assert_relative_eq!(r.p_value, 2.0 / 6.0, max_relative = 1e-12);
        assert_eq!(r.method, TestMethod::Exact);

        // Direction does not change the two-sided p.
        let rev = rank_sum_test(&[3.0, 4.0], &[1.0, 2.0]).unwrap();
        assert_relative_eq!(rev.u, 4.0);
        assert_relative_eq!(rev.p_value, r.p_value);
    }

    #[test]
    fn midrank_identity_holds() {
        // U from pair counting equals R1 - n1(n1+1)/2 with midranks.
        let x = [3.0, 1.0, 4.0, 1.0];
        let y = [5.0, 9.0, 2.0, 6.0, 5.0];
        let r = rank_sum_test(&x, &y).unwrap();

        let mut pooled: Vec<(f64, usize)> = x
            .iter()
            .map(|&v| (v, 0))
            .chain(y.iter().map(|&v| (v, 1)))
            .collect();
        pooled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut ranks = vec![0.0; pooled.len()];
        let mut i = 0;
        while i < pooled.len() {
            let mut j = i + 1;
            while j < pooled.len() && pooled[j].0 == pooled[i].0 {
                j += 1;
            }
            let midrank = (i + 1 + j) as f64 / 2.0;
            for r in ranks.iter_mut().take(j).skip(i) {
                *r = midrank;
            }
            i = j;
        }
        let r1: f64 = pooled
            .iter()
            .zip(&ranks)
            .filter(|((_, g), _)| *g == 0)
            .map(|(_, &r)| r)
            .sum();
        let expected_u = r1 - (x.len() * (x.len() + 1)) as f64 / 2.0;
        assert_relative_eq!(r.u, expected_u, max_relative = 1e-12);
    }

    #[test]
    fn exact_p_matches_brute_force_oracle() {
        // Independent oracle: directly enumerate labellings with a bitmask.
        let x = [1.2, 3.4, 5.6];
        let y = [2.3, 4.5, 5.6, 0.9];
        let r = rank_sum_test(&x, &y).unwrap();
        assert_eq!(r.method, TestMethod::Exact);

        let pooled: Vec<f64> = x.iter().chain(y.iter()).copied().collect();
        let n = pooled.len();
        let k = x.len();
        let u_of = |mask: u32| -> f64 {
            let mut u = 0.0;
            for i in 0..n {
                if mask & (1 << i) == 0 {
                    continue;
                }
                for j in 0..n {
                    if mask & (1 << j) != 0 {
                        continue;
                    }
                    if pooled[i] > pooled[j] {
                        u += 1.0;
                    } else if pooled[i] == pooled[j] {
                        u += 0.5;
                    }
                }
            }
            u
        };
        let max_u = (x.len() * y.len()) as f64;
        let lo = r.u.min(max_u - r.u);
        let hi = max_u - lo;
        let mut total = 0u32;
        let mut extreme = 0u32;
        for mask in 0..(1u32 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            total += 1;
            let u = u_of(mask);
            if u <= lo + 1e-9 || u >= hi - 1e-9 {
                extreme += 1;
            }
        }
        assert_relative_eq!(r.p_value, extreme as f64 / total as f64, max_relative = 1e-12);
    }

    #[test]
    fn normal_branch_matches_pinned_value() {
        // x = 1..10, y = 11..20: U = 0, mean 50, variance 10*10*21/12 = 175,
        // z = (50 - 0.5) / sqrt(175) = 3.74183, p = erfc(z / sqrt 2) = 1.824e-4.
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = (11..=20).map(f64::from).collect();
        let r = rank_sum_test(&x, &y).unwrap();
        assert_eq!(r.method, TestMethod::NormalApproximation);
        assert_relative_eq!(r.u, 0.0);
        assert_relative_eq!(r.p_value, 1.824e-4, max_relative = 5e-3);
    }

    #[test]
    fn identical_samples_are_not_significant() {
        let x = [2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0];
        let y = [2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0];
        let r = rank_sum_test(&x, &y).unwrap();
        assert_relative_eq!(r.p_value, 1.0);

        let x: Vec<f64> = (0..30).map(|i| (i % 5) as f64).collect();
        let r = rank_sum_test(&x, &x.clone()).unwrap();
        assert!(r.p_value > 0.9, "p = {}", r.p_value);
    }

    #[test]
    fn bootstrap_brackets_the_mean_and_shrinks_with_confidence() {
        let samples = [12.0, 15.0, 9.0, 14.0, 11.0, 13.0, 10.0, 16.0];
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let (lo99, hi99) = bootstrap_mean_ci(&samples, 0.99, 5000, 7).unwrap();
        let (lo50, hi50) = bootstrap_mean_ci(&samples, 0.50, 5000, 7).unwrap();
        assert!(lo99 <= mean && mean <= hi99);
        assert!(lo50 <= mean && mean <= hi50);
        assert!(hi50 - lo50 < hi99 - lo99);
        assert!(lo99 >= 9.0 && hi99 <= 16.0, "CI within sample range");
    }

    #[test]
    fn bootstrap_of_constant_data_is_degenerate() {
        let (lo, hi) = bootstrap_mean_ci(&[5.0; 6], 0.99, 1000, 1).unwrap();
        assert_relative_eq!(lo, 5.0);
        assert_relative_eq!(hi, 5.0);
    }

    #[test]
    fn bootstrap_is_deterministic_in_seed() {
        let samples = [1.0, 4.0, 2.0, 8.0, 5.0, 7.0];
        let a = bootstrap_mean_ci(&samples, 0.99, 2000, 123).unwrap();
        let b = bootstrap_mean_ci(&samples, 0.99, 2000, 123).unwrap();
        let c = bootstrap_mean_ci(&samples, 0.99, 2000, 124).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bonferroni_scales_and_caps() {
        assert_relative_eq!(bonferroni(0.01, 9).unwrap(), 0.09);
        assert_relative_eq!(bonferroni(0.2, 9).unwrap(), 1.0);
        assert_relative_eq!(bonferroni(0.0, 9).unwrap(), 0.0);
        // One comparison is the identity.
        assert_relative_eq!(bonferroni(0.5, 1).unwrap(), 0.5);
        assert!(matches!(
            bonferroni(1.5, 9),
            Err(StatsError::BadPValue(_))
        ));
        assert!(matches!(
            bonferroni(-0.1, 9),
            Err(StatsError::BadPValue(_))
        ));
        assert!(matches!(bonferroni(0.5, 0), Err(StatsError::NoComparisons)));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(matches!(
            bootstrap_mean_ci(&[], 0.99, 100, 0),
            Err(StatsError::Empty)
        ));
        assert!(matches!(
            bootstrap_mean_ci(&[1.0], 1.5, 100, 0),
            Err(StatsError::BadConfidence(_))
        ));
        assert!(matches!(
            bootstrap_mean_ci(&[1.0], 0.99, 0, 0),
            Err(StatsError::NoResamples)
        ));
        assert!(matches!(
            rank_sum_test(&[f64::NAN], &[1.0]),
            Err(StatsError::NonFinite(_))
        ));
        assert!(rank_sum_test(&[], &[1.0]).is_err());
    }
}
