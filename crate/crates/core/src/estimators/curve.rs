use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{Namespace, NoiseKey, NoiseSource, Stream};
use crate::scm::PromptId;

use super::{mean_score_difference, PairedSampleSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorPoint {
    pub size: usize,
    pub mean_abs_error: f64,
    /// 2.5th percentile of the absolute errors.
    pub ci_low: f64,
    /// 97.5th percentile of the absolute errors.
    pub ci_high: f64,
}

/// Absolute estimation error of the mean score difference against sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub ground_truth: f64,
    pub n_subsamples: usize,
    pub points: Vec<ErrorPoint>,
}

impl ErrorCurve {
    pub fn sizes(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.size).collect()
    }
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

/// Sub-samples the pool without replacement at each size and records the
/// absolute error of the sub-sample mean difference against the full-pool mean.
///
/// Every sub-sample draws from its own keyed generator, so the curve does not
/// depend on thread scheduling.
pub fn error_curve(
    pool: &PairedSampleSet,
    sizes: &[usize],
    n_subsamples: usize,
    seed: u64,
) -> Result<ErrorCurve> {
    let ground_truth = mean_score_difference(pool)?;
    if n_subsamples == 0 {
        return Err(Error::Domain("need at least one sub-sample".into()));
    }
    if sizes.is_empty() {
        return Err(Error::Domain("size grid is empty".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(Error::Domain("sizes must be positive and strictly increasing".into()));
    }
    let len = pool.len();
    if let Some(s) = sizes.iter().find(|&&s| s > len) {
        return Err(Error::Domain(format!("size {s} exceeds pool of {len}")));
    }
    let diffs = pool.differences();
    let noise = NoiseSource::with_namespace(seed, Namespace::Subsample);

    let points = sizes
        .iter()
        .map(|&size| {
            let mut errors: Vec<f64> = (0..n_subsamples)
                .into_par_iter()
                .map(|s| {
                    let mut rng = noise.rng(NoiseKey::new(PromptId(0), size as u64, Stream::Shared, s as u32));
                    let sum: f64 = index::sample(&mut rng, len, size).iter().map(|i| diffs[i]).sum();
                    (sum / size as f64 - ground_truth).abs()
                })
                .collect();
            let mean_abs_error = errors.iter().sum::<f64>() / n_subsamples as f64;
            errors.sort_by(f64::total_cmp);
            ErrorPoint {
                size,
                mean_abs_error,
                ci_low: percentile(&errors, 0.025),
                ci_high: percentile(&errors, 0.975),
            }
        })
        .collect();

    Ok(ErrorCurve {
        ground_truth,
        n_subsamples,
        points,
    })
}

/// Smallest (interpolated) size at which the mean error reaches `target`.
fn size_at_error(curve: &ErrorCurve, target: f64) -> Result<f64> {
    let pts = &curve.points;
    let i = pts
        .iter()
        .position(|p| p.mean_abs_error <= target)
        .ok_or(Error::UnreachableTarget { target })?;
    if i == 0 {
        return Ok(pts[0].size as f64);
    }
    let (a, b) = (&pts[i - 1], &pts[i]);
    let frac = (a.mean_abs_error - target) / (a.mean_abs_error - b.mean_abs_error);
    Ok(a.size as f64 + frac * (b.size - a.size) as f64)
}

/// `1 - n_coupled / n_independent` at matched mean error `target`.
pub fn sample_savings(
    curve_coupled: &ErrorCurve,
    curve_independent: &ErrorCurve,
    target_error: f64,
) -> Result<f64> {
    if curve_coupled.sizes() != curve_independent.sizes() {
        return Err(Error::Config("curves use different size grids".into()));
    }
    let n_c = size_at_error(curve_coupled, target_error)?;
    let n_i = size_at_error(curve_independent, target_error)?;
    Ok(1.0 - n_c / n_i)
}
