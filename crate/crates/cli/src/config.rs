//! TOML experiment configuration, validated into library types before any run.
//!
//! ```toml
//! [generation]
//! vocab_size = 3          # eos defaults to the last token
//! sampler = "gumbel-max"  # or "inverse-transform"
//! temperature = 1.0
//! max_steps = 1
//!
//! [run]
//! seed = 7
//! replicates = 10000
//!
//! [[prompts]]
//! id = 0
//!
//! [[models]]
//! kind = "categorical"
//! name = "a"
//! rows = [{ prompt = 0, probs = [0.6, 0.4, 0.0] }]
//!
//! [scorer]
//! kind = "correctness"
//! accept = [{ prompt = 0, sequence = [0] }]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use coupled_core::{
    perturb, Coupling, GenerationConfig, ModelSpec, NextTokenDistribution, PromptId, PromptSet,
    Sampler, Scorer, TokenId, Vocabulary,
};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generation: GenerationSection,
    #[serde(default)]
    pub run: RunSection,
    pub prompts: Vec<PromptDef>,
    pub models: Vec<ModelDef>,
    pub scorer: ScorerDef,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    pub vocab_size: u32,
    pub eos: Option<u32>,
    #[serde(default)]
    pub sampler: SamplerName,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
}

fn one() -> f64 {
    1.0
}

fn default_max_steps() -> u32 {
    16
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerName {
    #[default]
    GumbelMax,
    InverseTransform,
}

impl From<SamplerName> for Sampler {
    fn from(s: SamplerName) -> Self {
        match s {
            SamplerName::GumbelMax => Sampler::GumbelMax,
            SamplerName::InverseTransform => Sampler::InverseTransform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Coupled,
    Independent,
}

impl From<Regime> for Coupling {
    fn from(r: Regime) -> Self {
        match r {
            Regime::Coupled => Coupling::Coupled,
            Regime::Independent => Coupling::Independent,
        }
    }
}

pub const DEFAULT_SEED: u64 = 2024;
pub const DEFAULT_SUBSAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Total replicates; each draws its own prompt.
    pub replicates: u64,
    pub regimes: Vec<Regime>,
    pub level: f64,
    pub subsamples: usize,
    pub sizes: Option<Vec<usize>>,
    pub target_error: f64,
    /// Model names compared by `error-curve`; defaults to the first two.
    pub pair: Option<[String; 2]>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            replicates: 10_000,
            regimes: vec![Regime::Coupled, Regime::Independent],
            level: DEFAULT_LEVEL,
            subsamples: DEFAULT_SUBSAMPLES,
            sizes: None,
            target_error: 0.02,
            pair: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptDef {
    pub id: u32,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbRow {
    pub prompt: u32,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenRow {
    pub prompt: u32,
    pub token: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionRow {
    pub after: u32,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextRow {
    pub prompt: u32,
    #[serde(default)]
    pub context: Vec<u32>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelDef {
    PointMass {
        name: String,
        rows: Vec<TokenRow>,
    },
    Categorical {
        name: String,
        rows: Vec<ProbRow>,
    },
    Markov {
        name: String,
        initial: Vec<ProbRow>,
        transitions: Vec<TransitionRow>,
    },
    SequenceTable {
        name: String,
        rows: Vec<ContextRow>,
    },
    /// An earlier model mixed toward a seeded random direction.
    Perturbed {
        name: String,
        base: String,
        epsilon: f64,
        direction_seed: u64,
    },
}

impl ModelDef {
    pub fn name(&self) -> &str {
        match self {
            ModelDef::PointMass { name, .. }
            | ModelDef::Categorical { name, .. }
            | ModelDef::Markov { name, .. }
            | ModelDef::SequenceTable { name, .. }
            | ModelDef::Perturbed { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptRow {
    pub prompt: u32,
    pub sequence: Vec<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardRow {
    pub prompt: u32,
    pub sequence: Vec<u32>,
    pub reward: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScorerDef {
    Correctness {
        accept: Vec<AcceptRow>,
        #[serde(default)]
        noise_scale: f64,
        #[serde(default)]
        noise_seed: u64,
    },
    Reward {
        rewards: Vec<RewardRow>,
        #[serde(default)]
        noise_scale: f64,
        #[serde(default)]
        noise_seed: u64,
    },
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub vocab: Vocabulary,
    pub prompts: PromptSet,
    pub models: Vec<ModelSpec>,
    pub scorer: Scorer,
    pub generation: GenerationConfig,
    pub run: RunSection,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: ExperimentConfig = toml::from_str(text)?;
        raw.validate()
    }

    pub fn model_index(&self, name: &str) -> Result<usize> {
        self.models
            .iter()
            .position(|m| m.name() == name)
            .with_context(|| format!("no model named '{name}'"))
    }

    pub fn regimes(&self) -> Vec<Coupling> {
        self.run.regimes.iter().map(|&r| r.into()).collect()
    }
}

fn tokens(raw: &[u32]) -> Vec<TokenId> {
    raw.iter().map(|&t| TokenId(t)).collect()
}

fn dist(probs: &[f64]) -> Result<NextTokenDistribution> {
    Ok(NextTokenDistribution::new(probs.to_vec())?)
}

impl ExperimentConfig {
    pub fn validate(self) -> Result<Experiment> {
        let g = &self.generation;
        let vocab = match g.eos {
            Some(eos) => Vocabulary::new(g.vocab_size, TokenId(eos))?,
            None => Vocabulary::with_trailing_eos(g.vocab_size)?,
        };
        let generation = GenerationConfig::new(g.max_steps, g.temperature, g.sampler.into())?;

        ensure!(!self.prompts.is_empty(), "at least one prompt is required");
        let prompts = if self.prompts.iter().all(|p| p.weight.is_none()) {
            PromptSet::uniform(self.prompts.iter().map(|p| PromptId(p.id)))?
        } else {
            ensure!(
                self.prompts.iter().all(|p| p.weight.is_some()),
                "either all prompts carry a weight or none do"
            );
            PromptSet::new(
                self.prompts
                    .iter()
                    .map(|p| (PromptId(p.id), p.weight.unwrap_or_default()))
                    .collect(),
            )?
        };

        let mut models: Vec<ModelSpec> = Vec::with_capacity(self.models.len());
        let mut by_name: BTreeMap<String, usize> = BTreeMap::new();
        for def in &self.models {
            let model = build_model(def, vocab, &models, &by_name)?;
            if by_name.insert(def.name().to_string(), models.len()).is_some() {
                bail!("duplicate model name '{}'", def.name());
            }
            models.push(model);
        }
        for m in &models {
            if let Some(p) = prompts.ids().iter().find(|p| !m.prompts().contains(p)) {
                bail!("model '{}' has no entry for prompt {p}", m.name());
            }
        }

        let scorer = build_scorer(&self.scorer)?;

        let run = &self.run;
        ensure!(run.replicates >= 1, "replicates must be at least 1");
        ensure!(!run.regimes.is_empty(), "at least one regime is required");
        ensure!(run.level > 0.0 && run.level < 1.0, "level must lie in (0, 1)");
        ensure!(run.subsamples >= 1, "subsamples must be at least 1");
        ensure!(run.target_error > 0.0, "target_error must be positive");
        if let Some(pair) = &run.pair {
            for name in pair {
                ensure!(by_name.contains_key(name), "pair references unknown model '{name}'");
            }
            ensure!(pair[0] != pair[1], "pair must name two different models");
        }

        Ok(Experiment {
            vocab,
            prompts,
            models,
            scorer,
            generation,
            run: self.run,
        })
    }
}

fn build_model(
    def: &ModelDef,
    vocab: Vocabulary,
    built: &[ModelSpec],
    by_name: &BTreeMap<String, usize>,
) -> Result<ModelSpec> {
    let model = match def {
        ModelDef::PointMass { name, rows } => {
            let rows: Vec<_> = rows.iter().map(|r| (PromptId(r.prompt), TokenId(r.token))).collect();
            ModelSpec::point_mass(name.clone(), vocab, &rows)?
        }
        ModelDef::Categorical { name, rows } => {
            let rows = rows
                .iter()
                .map(|r| Ok((PromptId(r.prompt), dist(&r.probs)?)))
                .collect::<Result<Vec<_>>>()?;
            ModelSpec::categorical(name.clone(), vocab, rows)?
        }
        ModelDef::Markov {
            name,
            initial,
            transitions,
        } => {
            let initial = initial
                .iter()
                .map(|r| Ok((PromptId(r.prompt), dist(&r.probs)?)))
                .collect::<Result<Vec<_>>>()?;
            let transitions = transitions
                .iter()
                .map(|r| Ok((TokenId(r.after), dist(&r.probs)?)))
                .collect::<Result<Vec<_>>>()?;
            ModelSpec::markov(name.clone(), vocab, initial, transitions)?
        }
        ModelDef::SequenceTable { name, rows } => {
            let rows = rows
                .iter()
                .map(|r| Ok((PromptId(r.prompt), tokens(&r.context), dist(&r.probs)?)))
                .collect::<Result<Vec<_>>>()?;
            ModelSpec::sequence_table(name.clone(), vocab, rows)?
        }
        ModelDef::Perturbed {
            name,
            base,
            epsilon,
            direction_seed,
        } => {
            let idx = by_name
                .get(base)
                .with_context(|| format!("model '{name}' perturbs '{base}', which is not defined before it"))?;
            perturb(&built[*idx], *epsilon, *direction_seed)?.with_name(name.clone())
        }
    };
    Ok(model)
}

fn build_scorer(def: &ScorerDef) -> Result<Scorer> {
    let (base, scale, seed) = match def {
        ScorerDef::Correctness {
            accept,
            noise_scale,
            noise_seed,
        } => {
            let mut grouped: BTreeMap<u32, Vec<Vec<TokenId>>> = BTreeMap::new();
            for row in accept {
                grouped.entry(row.prompt).or_default().push(tokens(&row.sequence));
            }
            let scorer = Scorer::correctness(grouped.into_iter().map(|(p, s)| (PromptId(p), s)).collect())?;
            (scorer, *noise_scale, *noise_seed)
        }
        ScorerDef::Reward {
            rewards,
            noise_scale,
            noise_seed,
        } => {
            let scorer = Scorer::reward_table(
                rewards
                    .iter()
                    .map(|r| (PromptId(r.prompt), tokens(&r.sequence), r.reward))
                    .collect(),
            )?;
            (scorer, *noise_scale, *noise_seed)
        }
    };
    if scale > 0.0 {
        Ok(Scorer::noisy(base, scale, seed)?)
    } else {
        ensure!(scale == 0.0, "noise_scale must be non-negative");
        Ok(base)
    }
}
