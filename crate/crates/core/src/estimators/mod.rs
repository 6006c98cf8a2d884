//! Empirical statistics over paired score samples.

mod curve;
mod inference;
mod ranking;
mod variance;
mod winrate;

use std::collections::HashSet;

pub use curve::{error_curve, percentile, sample_savings, ErrorCurve, ErrorPoint};
pub use inference::{
    normal_ci, normal_quantile, two_proportion_z_test, wald_ci, MeanEstimate, ZTest,
};
pub use ranking::{rank_from_cis, RankEntry, RankTable, RankedRow};
pub use variance::{
    jackknife_standard_error, sample_covariance, sample_variance, variance_decomposition,
    VarianceReport,
};
pub use winrate::{average_win_rate, win_tie_rates, WinRateReport};

use crate::error::{Error, Result};
use crate::scm::{Coupling, PromptId};

/// One realized score pair for models `model_a` and `model_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedRecord {
    pub prompt: PromptId,
    pub replicate: u64,
    pub model_a: usize,
    pub model_b: usize,
    pub score_a: f64,
    pub score_b: f64,
    pub coupling: Coupling,
}

impl PairedRecord {
    pub fn difference(&self) -> f64 {
        self.score_a - self.score_b
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairedSampleSet {
    records: Vec<PairedRecord>,
}

impl PairedSampleSet {
    /// Rejects duplicate `(prompt, replicate, pair, coupling)` keys.
    pub fn new(records: Vec<PairedRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert((r.prompt, r.replicate, r.model_a, r.model_b, r.coupling)) {
                return Err(Error::Config(format!(
                    "duplicate record for prompt {}, replicate {}, pair ({}, {}), {}",
                    r.prompt, r.replicate, r.model_a, r.model_b, r.coupling
                )));
            }
        }
        Ok(Self { records })
    }

    /// Builds a set from plain score pairs, numbering replicates from 0.
    pub fn from_pairs(pairs: &[(f64, f64)], coupling: Coupling) -> Self {
        Self {
            records: pairs
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| PairedRecord {
                    prompt: PromptId(0),
                    replicate: i as u64,
                    model_a: 0,
                    model_b: 1,
                    score_a: a,
                    score_b: b,
                    coupling,
                })
                .collect(),
        }
    }

    pub fn records(&self) -> &[PairedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn differences(&self) -> Vec<f64> {
        self.records.iter().map(PairedRecord::difference).collect()
    }

    pub fn scores_a(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score_a).collect()
    }

    pub fn scores_b(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score_b).collect()
    }

    /// The single `(model_a, model_b, coupling)` every record shares.
    pub fn pair(&self) -> Result<(usize, usize, Coupling)> {
        let first = self
            .records
            .first()
            .ok_or_else(|| Error::InsufficientData("empty sample set".into()))?;
        let key = (first.model_a, first.model_b, first.coupling);
        if self
            .records
            .iter()
            .any(|r| (r.model_a, r.model_b, r.coupling) != key)
        {
            return Err(Error::Config("sample set mixes model pairs or couplings".into()));
        }
        Ok(key)
    }

    fn keys_align_with(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| a.prompt == b.prompt && a.replicate == b.replicate)
    }
}

/// Mean of `score_a - score_b`.
pub fn mean_score_difference(samples: &PairedSampleSet) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no paired samples".into()));
    }
    Ok(samples.records.iter().map(PairedRecord::difference).sum::<f64>() / samples.len() as f64)
}
