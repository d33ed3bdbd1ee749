//! Correlation and t-tests. Two-sample comparisons use the Welch
//! (unequal-variance) form with Welch-Satterthwaite degrees of freedom;
//! the one-sample test doubles as a paired test on differences.

use super::special::student_t_two_sided_p;
use super::StatsError;
use serde::Serialize;

/// Outcome of a hypothesis test: the statistic, its (possibly fractional)
/// degrees of freedom, the two-sided p-value, and the underlying estimate
/// (a mean difference or a correlation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
    pub estimate: f64,
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance (n-1 denominator).
pub(crate) fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Pearson product-moment correlation with the exact t-transform p-value:
/// `t = r sqrt((n-2)/(1-r^2))` against Student-t(n-2), two-sided.
pub fn pearson_test(x: &[f64], y: &[f64]) -> Result<TestResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::InvalidArgument(format!(
            "need at least 3 pairs, got {n}"
        )));
    }
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateInput(
            "an input series has zero variance".into(),
        ));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let one_minus_r2 = (1.0 - r * r).max(0.0);
    let (statistic, p_value) = if one_minus_r2 == 0.0 {
        (f64::INFINITY.copysign(r), 0.0)
    } else {
        let t = r * (df / one_minus_r2).sqrt();
        (t, student_t_two_sided_p(t, df))
    };
    Ok(TestResult {
        statistic,
        df,
        p_value,
        estimate: r,
    })
}

/// Welch two-sample t-test (null: equal means). Estimate is `mean(a) -
/// mean(b)`.
pub fn t_test_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::InvalidArgument(format!(
            "each group needs at least 2 values, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (variance(a), variance(b));
    let diff = ma - mb;
    let sea = va / na;
    let seb = vb / nb;
    let se2 = sea + seb;
    if se2 == 0.0 {
        if diff == 0.0 {
            return Ok(TestResult {
                statistic: 0.0,
                df: na + nb - 2.0,
                p_value: 1.0,
                estimate: 0.0,
            });
        }
        return Err(StatsError::DegenerateInput(
            "both groups have zero variance but different means".into(),
        ));
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
    Ok(TestResult {
        statistic: t,
        df,
        p_value: student_t_two_sided_p(t, df),
        estimate: diff,
    })
}

/// One-sample t-test of `d` against `mu0` (df = n-1). Serves paired
/// comparisons when `d` holds pairwise differences.
pub fn t_test_one_sample(d: &[f64], mu0: f64) -> Result<TestResult, StatsError> {
    if d.len() < 2 {
        return Err(StatsError::InvalidArgument(format!(
            "need at least 2 values, got {}",
            d.len()
        )));
    }
    let n = d.len() as f64;
    let m = mean(d);
    let var = variance(d);
    if var == 0.0 {
        return Err(StatsError::DegenerateInput(
            "sample has zero variance".into(),
        ));
    }
    let t = (m - mu0) / (var.sqrt() / n.sqrt());
    let df = n - 1.0;
    Ok(TestResult {
        statistic: t,
        df,
        p_value: student_t_two_sided_p(t, df),
        estimate: m - mu0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pearson_exact_linear() {
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = pearson_test(&x, &y).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-12);
        assert!(r.p_value < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let rn = pearson_test(&x, &neg).unwrap();
        assert!((rn.estimate + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_hand_case() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        let r = pearson_test(&x, &y).unwrap();
        assert!((r.estimate - 0.8).abs() < 1e-12);
        // p from t(2) closed form: t = 0.8 sqrt(2/0.36)
        let t = 0.8 * (2.0f64 / 0.36).sqrt();
        let expect = 1.0 - t / (t * t + 2.0).sqrt();
        assert!((r.p_value - expect).abs() < 1e-12);
        assert!((r.p_value - 0.2).abs() < 0.001);
    }

    #[test]
    fn pearson_rejects_degenerate() {
        assert!(pearson_test(&[1.0, 2.0], &[1.0, 2.0]).is_err()); // too short
        assert!(pearson_test(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err()); // zero var
    }

    #[test]
    fn pearson_affine_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..40).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| v * 0.7 + rng.random_range(-1.0..1.0))
            .collect();
        let base = pearson_test(&x, &y).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| 4.2 * v + 17.0).collect();
        let same = pearson_test(&scaled, &y).unwrap();
        assert!((base.estimate - same.estimate).abs() < 1e-12);
        let negated: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
        let flipped = pearson_test(&negated, &y).unwrap();
        assert!((base.estimate + flipped.estimate).abs() < 1e-12);
    }

    #[test]
    fn welch_identical_groups() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = t_test_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn welch_separated_groups() {
        let a = [1.0, 2.0, 3.0];
        let b = [1001.0, 1002.0, 1003.0];
        let r = t_test_two_sample(&a, &b).unwrap();
        assert!(r.p_value < 1e-6, "p = {}", r.p_value);
        assert!((r.estimate + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn welch_constant_identical_groups_is_p_one() {
        let r = t_test_two_sample(&[5.0, 5.0], &[5.0, 5.0]).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(t_test_two_sample(&[5.0, 5.0], &[6.0, 6.0]).is_err());
    }

    #[test]
    fn one_sample_zero_variance_is_degenerate() {
        assert!(matches!(
            t_test_one_sample(&[0.0, 0.0, 0.0], 0.0),
            Err(StatsError::DegenerateInput(_))
        ));
    }

    #[test]
    fn one_sample_symmetric_sample() {
        let r = t_test_one_sample(&[-1.0, 0.0, 1.0], 0.0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn one_sample_hand_case() {
        let r = t_test_one_sample(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.0).unwrap();
        let expect_t = 3.0 * 5.0f64.sqrt() / 2.5f64.sqrt();
        assert!((r.statistic - expect_t).abs() < 1e-12);
        assert!((r.statistic - 4.2426).abs() < 1e-4);
        assert!((r.p_value - 0.0132).abs() < 3e-4, "p = {}", r.p_value);
        assert_eq!(r.df, 4.0);
    }

    #[test]
    fn one_sample_matches_enumerated_sign_flip_loosely() {
        // the fully enumerated sign-flip null conditions on the observed
        // magnitudes; at n=12 it can sit a few hundredths away from the
        // t reference even for normal data, so the tolerance here is wider
        // than for the sampled large-n comparison
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let n = 12usize;
        for _ in 0..5 {
            let d: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng) + 0.2).collect();
            let got = t_test_one_sample(&d, 0.0).unwrap();
            let mut extreme = 0usize;
            let mut flipped = vec![0.0f64; n];
            for mask in 0..(1usize << n) {
                for (i, v) in d.iter().enumerate() {
                    flipped[i] = if mask & (1 << i) != 0 { -v } else { *v };
                }
                let m = mean(&flipped);
                let var = variance(&flipped);
                if var == 0.0 {
                    extreme += 1;
                    continue;
                }
                let t = m / (var / n as f64).sqrt();
                if t.abs() >= got.statistic.abs() - 1e-12 {
                    extreme += 1;
                }
            }
            let flip_p = extreme as f64 / (1usize << n) as f64;
            assert!(
                (flip_p - got.p_value).abs() < 0.06,
                "enumerated sign-flip {flip_p} vs t {}",
                got.p_value
            );
        }
    }

    #[test]
    fn welch_matches_permutation_oracle_on_normal_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..15).map(|_| normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..12).map(|_| normal.sample(&mut rng) + 0.6).collect();
        let r = t_test_two_sample(&a, &b).unwrap();

        // permutation oracle: reshuffle the group assignment
        let pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        let mut extreme = 0usize;
        let reps = 20_000;
        let mut perm_rng = ChaCha8Rng::seed_from_u64(7);
        let mut idx: Vec<usize> = (0..pooled.len()).collect();
        for _ in 0..reps {
            idx.shuffle(&mut perm_rng);
            let pa: Vec<f64> = idx[..a.len()].iter().map(|&i| pooled[i]).collect();
            let pb: Vec<f64> = idx[a.len()..].iter().map(|&i| pooled[i]).collect();
            let t = t_test_two_sample(&pa, &pb).unwrap().statistic;
            if t.abs() >= r.statistic.abs() {
                extreme += 1;
            }
        }
        let perm_p = extreme as f64 / reps as f64;
        assert!(
            (perm_p - r.p_value).abs() < 0.02,
            "perm {perm_p} vs welch {}",
            r.p_value
        );
    }
}
