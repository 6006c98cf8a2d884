//! Replicate-level driver: draws a prompt per replicate, generates every
//! model's output under the chosen coupling regime and scores it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{MeanEstimate, PairedRecord, PairedSampleSet, WinRateReport, win_tie_rates};
use crate::models::{ModelSpec, PromptSet};
use crate::noise::NoiseSource;
use crate::scm::{generate_joint, Coupling, GenerationConfig, PromptId, TokenSequence};
use crate::scoring::{compare, PairwiseOutcome, ScoreKey, Scorer};

/// Everything needed to run replicates, minus the coupling regime.
#[derive(Debug, Clone, Copy)]
pub struct Experiment<'a> {
    pub models: &'a [ModelSpec],
    pub scorer: &'a Scorer,
    pub prompts: &'a PromptSet,
    pub cfg: GenerationConfig,
    pub noise: NoiseSource,
}

impl<'a> Experiment<'a> {
    pub fn new(
        models: &'a [ModelSpec],
        scorer: &'a Scorer,
        prompts: &'a PromptSet,
        cfg: GenerationConfig,
        noise: NoiseSource,
    ) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::Config(format!("need at least 2 models, got {}", models.len())));
        }
        for m in models {
            if let Some(p) = prompts.ids().iter().find(|p| !m.prompts().contains(p)) {
                return Err(Error::Config(format!("model '{}' has no entry for prompt {p}", m.name())));
            }
        }
        Ok(Self {
            models,
            scorer,
            prompts,
            cfg,
            noise,
        })
    }

    /// Runs replicates `0..n` in parallel and maps each to a value.
    ///
    /// Results come back in replicate order whatever the thread count.
    pub fn map_replicates<T, F>(&self, coupling: Coupling, n: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(PromptId, u64, &[TokenSequence]) -> T + Sync,
    {
        (0..n)
            .into_par_iter()
            .map(|r| {
                let prompt = self.prompts.draw(&self.noise, r);
                let outputs = generate_joint(self.models, prompt, r, &self.noise, &self.cfg, coupling)?;
                Ok(f(prompt, r, &outputs))
            })
            .collect()
    }

    /// Scores of every model on replicates `0..n`.
    ///
    /// Coupled runs share the scorer key across models; independent runs
    /// key the scorer by model stream.
    pub fn score_matrix(&self, coupling: Coupling, n: u64) -> Result<ScoreMatrix> {
        let rows = self.map_replicates(coupling, n, |prompt, r, outputs| {
            let scores: Vec<f64> = outputs
                .iter()
                .enumerate()
                .map(|(j, seq)| self.scorer.score(prompt, seq, ScoreKey::new(r, coupling.stream(j))))
                .collect();
            (prompt, scores)
        })?;
        let n_models = self.models.len();
        let mut prompts = Vec::with_capacity(rows.len());
        let mut scores = Vec::with_capacity(rows.len() * n_models);
        for (p, s) in rows {
            prompts.push(p);
            scores.extend(s);
        }
        Ok(ScoreMatrix {
            coupling,
            n_models,
            prompts,
            scores,
        })
    }
}

/// Per-replicate scores for every model under one coupling regime.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub coupling: Coupling,
    pub n_models: usize,
    /// Prompt drawn for each replicate; replicate ids are the row indices.
    pub prompts: Vec<PromptId>,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn n_replicates(&self) -> usize {
        self.prompts.len()
    }

    pub fn score(&self, replicate: usize, model: usize) -> f64 {
        self.scores[replicate * self.n_models + model]
    }

    pub fn model_scores(&self, model: usize) -> Vec<f64> {
        (0..self.n_replicates()).map(|r| self.score(r, model)).collect()
    }

    pub fn pair_set(&self, a: usize, b: usize) -> PairedSampleSet {
        let records = (0..self.n_replicates())
            .map(|r| PairedRecord {
                prompt: self.prompts[r],
                replicate: r as u64,
                model_a: a,
                model_b: b,
                score_a: self.score(r, a),
                score_b: self.score(r, b),
                coupling: self.coupling,
            })
            .collect();
        PairedSampleSet::new(records).expect("replicate ids are unique")
    }

    pub fn win_rates(&self, a: usize, b: usize, tol: f64) -> Result<WinRateReport> {
        win_tie_rates(&self.pair_set(a, b), tol)
    }

    /// Average win rate of `model` over all opponents, with the standard
    /// error of the per-replicate averages.
    pub fn average_win_rate(&self, model: usize, tol: f64) -> Result<MeanEstimate> {
        if self.n_models < 2 {
            return Err(Error::Config("need at least 2 models".into()));
        }
        let per_replicate: Vec<f64> = (0..self.n_replicates())
            .map(|r| {
                let own = self.score(r, model);
                let wins = (0..self.n_models)
                    .filter(|&j| j != model)
                    .filter(|&j| compare(own, self.score(r, j), tol) == PairwiseOutcome::Win)
                    .count();
                wins as f64 / (self.n_models - 1) as f64
            })
            .collect();
        MeanEstimate::from_values(&per_replicate)
    }
}
