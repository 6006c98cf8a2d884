use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Two-sided standard-normal critical value: `Phi^-1((1 + level) / 2)`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("confidence level {level} outside (0, 1)")));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(0.5 + level / 2.0))
}

/// Wald interval `p +- z sqrt(p (1 - p) / n)`, clamped to `[0, 1]`.
pub fn wald_ci(p: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("proportion {p} outside [0, 1]")));
    }
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    let half = normal_quantile(level)? * (p * (1.0 - p) / n as f64).sqrt();
    Ok(((p - half).max(0.0), (p + half).min(1.0)))
}

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::InsufficientData("no values".into()));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, se, n })
    }

    /// Proportion estimate with the binomial standard error.
    pub fn proportion(p: f64, n: usize) -> Self {
        Self {
            mean: p,
            se: (p * (1.0 - p) / n.max(1) as f64).sqrt(),
            n,
        }
    }

    /// Whether `truth` lies within `k` standard errors.
    pub fn covers(&self, truth: f64, k: f64) -> bool {
        (self.mean - truth).abs() <= k * self.se
    }
}

/// Normal-approximation interval `mean +- z se`.
pub fn normal_ci(estimate: &MeanEstimate, level: f64) -> Result<(f64, f64)> {
    let half = normal_quantile(level)? * estimate.se;
    Ok((estimate.mean - half, estimate.mean + half))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZTest {
    pub z: f64,
    pub p_value: f64,
}

/// Pooled two-proportion z-test with a two-tailed p-value.
pub fn two_proportion_z_test(p1: f64, n1: usize, p2: f64, n2: usize) -> Result<ZTest> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Domain("sample sizes must be at least 1".into()));
    }
    for p in [p1, p2] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("proportion {p} outside [0, 1]")));
        }
    }
    if p1 == p2 {
        return Ok(ZTest { z: 0.0, p_value: 1.0 });
    }
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let pooled = (p1 * n1f + p2 * n2f) / (n1f + n2f);
    let se = (pooled * (1.0 - pooled) * (1.0 / n1f + 1.0 / n2f)).sqrt();
    if se.is_nan() || se <= 0.0 {
        return Err(Error::DegenerateData(
            "pooled variance is zero but proportions differ".into(),
        ));
    }
    let z = (p1 - p2) / se;
    // 2 (1 - Phi(|z|)) = erfc(|z| / sqrt 2), which keeps precision in the tail.
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    Ok(ZTest { z, p_value })
}
