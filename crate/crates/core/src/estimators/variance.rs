use crate::error::{Error, Result};
use crate::scm::Coupling;

use super::PairedSampleSet;

/// Variance of the score difference under both regimes and the covariance
/// linking them: `var_independent = var_coupled + 2 cov` in expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceReport {
    pub var_diff_coupled: f64,
    pub var_diff_independent: f64,
    /// Sample covariance of the two models' scores in the coupled set.
    pub covariance: f64,
    /// `var_diff_independent - var_diff_coupled - 2 covariance`.
    pub identity_residual: f64,
    /// Delete-one jackknife standard error of `identity_residual`.
    pub residual_se: f64,
    pub n_coupled: usize,
    pub n_independent: usize,
}

/// Unbiased sample variance (denominator `n - 1`).
pub fn sample_variance(xs: &[f64]) -> f64 {
    sample_covariance(xs, xs)
}

/// Unbiased sample covariance (denominator `n - 1`).
pub fn sample_covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n - 1) as f64
}

/// `sqrt((n-1)/n * sum (theta_i - mean)^2)` over leave-one-out estimates.
pub fn jackknife_standard_error(leave_one_out: &[f64]) -> f64 {
    let n = leave_one_out.len();
    if n < 2 {
        return 0.0;
    }
    let mean = leave_one_out.iter().sum::<f64>() / n as f64;
    let ss: f64 = leave_one_out.iter().map(|t| (t - mean).powi(2)).sum();
    ((n - 1) as f64 / n as f64 * ss).sqrt()
}

/// Leave-one-out sample variances in O(n), computed on centered data.
struct LooVariance {
    mean: f64,
    sum: f64,
    sum_sq: f64,
    n: usize,
}

impl LooVariance {
    fn new(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let (sum, sum_sq) = xs.iter().fold((0.0, 0.0), |(s, q), x| {
            let y = x - mean;
            (s + y, q + y * y)
        });
        Self { mean, sum, sum_sq, n }
    }

    fn without(&self, x: f64) -> f64 {
        let y = x - self.mean;
        let m = (self.n - 1) as f64;
        let s = self.sum - y;
        let q = self.sum_sq - y * y;
        (q - s * s / m) / (m - 1.0)
    }
}

fn check_set(set: &PairedSampleSet, expected: Coupling, what: &str) -> Result<(usize, usize)> {
    if set.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{what} set has {} records, need at least 3",
            set.len()
        )));
    }
    let (a, b, coupling) = set.pair()?;
    if coupling != expected {
        return Err(Error::Config(format!("{what} set holds {coupling} records")));
    }
    Ok((a, b))
}

/// Sample moments of both regimes plus the jackknife error of the identity residual.
///
/// The residual has expectation zero when every replicate uses the same
/// prompt. Under random prompts its expectation is `-2` times the covariance
/// of the two models' scores in the independent set, which comes from the
/// shared prompt alone.
///
/// When both sets carry the same `(prompt, replicate)` sequence they are
/// treated as jointly sampled and the jackknife deletes one replicate from
/// both; otherwise the two sets are treated as independent samples.
pub fn variance_decomposition(
    coupled: &PairedSampleSet,
    independent: &PairedSampleSet,
) -> Result<VarianceReport> {
    let pair_c = check_set(coupled, Coupling::Coupled, "coupled")?;
    let pair_i = check_set(independent, Coupling::Independent, "independent")?;
    if pair_c != pair_i {
        return Err(Error::Config(format!(
            "coupled set compares {pair_c:?} but independent set compares {pair_i:?}"
        )));
    }

    let a = coupled.scores_a();
    let b = coupled.scores_b();
    let d_c = coupled.differences();
    let d_i = independent.differences();

    let var_diff_coupled = sample_variance(&d_c);
    let var_diff_independent = sample_variance(&d_i);
    let covariance = sample_covariance(&a, &b);
    let identity_residual = var_diff_independent - var_diff_coupled - 2.0 * covariance;

    // Residual == var_i(d) - var_c(a) - var_c(b) exactly, which has O(1) leave-one-out updates.
    let loo_i = LooVariance::new(&d_i);
    let loo_a = LooVariance::new(&a);
    let loo_b = LooVariance::new(&b);
    let residual_se = if coupled.keys_align_with(independent) {
        let thetas: Vec<f64> = (0..d_i.len())
            .map(|k| loo_i.without(d_i[k]) - loo_a.without(a[k]) - loo_b.without(b[k]))
            .collect();
        jackknife_standard_error(&thetas)
    } else {
        let se_i = jackknife_standard_error(
            &d_i.iter().map(|&x| loo_i.without(x)).collect::<Vec<_>>(),
        );
        let se_c = jackknife_standard_error(
            &a.iter()
                .zip(&b)
                .map(|(&x, &y)| loo_a.without(x) + loo_b.without(y))
                .collect::<Vec<_>>(),
        );
        se_i.hypot(se_c)
    };

    Ok(VarianceReport {
        var_diff_coupled,
        var_diff_independent,
        covariance,
        identity_residual,
        residual_se,
        n_coupled: coupled.len(),
        n_independent: independent.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn equal_deterministic_scores_give_zeros() {
        let c = PairedSampleSet::from_pairs(&[(1.0, 1.0); 5], Coupling::Coupled);
        let i = PairedSampleSet::from_pairs(&[(1.0, 1.0); 5], Coupling::Independent);
        let r = variance_decomposition(&c, &i).unwrap();
        assert_eq!(r.var_diff_coupled, 0.0);
        assert_eq!(r.var_diff_independent, 0.0);
        assert_eq!(r.covariance, 0.0);
        assert_eq!(r.identity_residual, 0.0);
        assert_eq!(r.residual_se, 0.0);
    }

    #[test]
    fn exact_two_token_population() {
        // Population with the exact coupled and product joints of p = 0.6, p' = 0.7,
        // scaled to 100 replicates. Population variances (denominator n) are
        // 0.09 / 0.45 / 0.18; sample versions carry the factor n / (n - 1).
        let mut coupled = vec![(1.0, 1.0); 60];
        coupled.extend(vec![(0.0, 1.0); 10]);
        coupled.extend(vec![(0.0, 0.0); 30]);
        let mut indep = vec![(1.0, 1.0); 42];
        indep.extend(vec![(1.0, 0.0); 18]);
        indep.extend(vec![(0.0, 1.0); 28]);
        indep.extend(vec![(0.0, 0.0); 12]);
        let c = PairedSampleSet::from_pairs(&coupled, Coupling::Coupled);
        let i = PairedSampleSet::from_pairs(&indep, Coupling::Independent);
        let r = variance_decomposition(&c, &i).unwrap();
        let f = 100.0 / 99.0;
        assert_abs_diff_eq!(r.var_diff_coupled, 0.09 * f, epsilon = 1e-12);
        assert_abs_diff_eq!(r.var_diff_independent, 0.45 * f, epsilon = 1e-12);
        assert_abs_diff_eq!(r.covariance, 0.18 * f, epsilon = 1e-12);
        assert_abs_diff_eq!(r.identity_residual, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mismatched_pairs_rejected() {
        let c = PairedSampleSet::from_pairs(&[(1.0, 0.0); 4], Coupling::Coupled);
        let mut recs = PairedSampleSet::from_pairs(&[(1.0, 0.0); 4], Coupling::Independent)
            .records()
            .to_vec();
        recs.iter_mut().for_each(|r| r.model_b = 2);
        let i = PairedSampleSet::new(recs).unwrap();
        assert!(matches!(variance_decomposition(&c, &i), Err(Error::Config(_))));
        // Swapped roles.
        assert!(matches!(variance_decomposition(&c, &c), Err(Error::Config(_))));
    }

    fn brute_force_jackknife(xs: &[(f64, f64)], ds: &[f64]) -> f64 {
        let thetas: Vec<f64> = (0..xs.len())
            .map(|k| {
                let a: Vec<f64> = xs.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, p)| p.0).collect();
                let b: Vec<f64> = xs.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, p)| p.1).collect();
                let d: Vec<f64> = ds.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, x)| *x).collect();
                let dc: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                sample_variance(&d) - sample_variance(&dc) - 2.0 * sample_covariance(&a, &b)
            })
            .collect();
        jackknife_standard_error(&thetas)
    }

    proptest! {
        #[test]
        fn fast_jackknife_matches_brute_force(
            pairs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0), 4..40)
        ) {
            let xs: Vec<(f64, f64)> = pairs.iter().map(|p| (p.0, p.1)).collect();
            let ds: Vec<f64> = pairs.iter().map(|p| p.2).collect();
            let c = PairedSampleSet::from_pairs(&xs, Coupling::Coupled);
            let i = PairedSampleSet::from_pairs(
                &ds.iter().map(|d| (*d, 0.0)).collect::<Vec<_>>(),
                Coupling::Independent,
            );
            let r = variance_decomposition(&c, &i).unwrap();
            let expected = brute_force_jackknife(&xs, &ds);
            prop_assert!((r.residual_se - expected).abs() < 1e-9 * (1.0 + expected));
            prop_assert!(r.var_diff_coupled >= 0.0 && r.var_diff_independent >= 0.0);
        }
    }
}
