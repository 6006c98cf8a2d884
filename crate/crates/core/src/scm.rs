//! The generative process: next-token distributions, the two sampling
//! mechanisms, and autoregressive generation driven by keyed noise.

use std::fmt;

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::noise::{NoiseBlock, NoiseKey, NoiseSource, Stream};

/// Absolute slack on the probability sum that is accepted as-is.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Drift up to this much is renormalized away; anything larger is rejected.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PromptId(pub u32);

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Token set `0..size` with a designated end-of-sequence token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Vocabulary {
    size: u32,
    eos: TokenId,
}

impl Vocabulary {
    pub fn new(size: u32, eos: TokenId) -> Result<Self> {
        if size < 2 {
            return Err(Error::Config(format!("vocabulary size {size} < 2")));
        }
        if eos.0 >= size {
            return Err(Error::Config(format!(
                "eos token {eos} outside vocabulary of size {size}"
            )));
        }
        Ok(Self { size, eos })
    }

    /// Vocabulary whose last token is end-of-sequence.
    pub fn with_trailing_eos(size: u32) -> Result<Self> {
        Self::new(size, TokenId(size.saturating_sub(1)))
    }

    pub fn size(&self) -> usize {
        self.size as usize
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn contains(&self, token: TokenId) -> bool {
        token.0 < self.size
    }

    pub fn content_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.size).map(TokenId).filter(move |t| *t != self.eos)
    }
}

/// A generated sequence. End-of-sequence, when present, is the last token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSequence {
    tokens: Vec<TokenId>,
    terminated: bool,
}

impl TokenSequence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a sequence from raw tokens, validating end-of-sequence placement.
    pub fn from_tokens(tokens: Vec<TokenId>, vocab: &Vocabulary) -> Result<Self> {
        let eos = vocab.eos();
        if let Some(bad) = tokens.iter().find(|t| !vocab.contains(**t)) {
            return Err(Error::Domain(format!("token {bad} outside vocabulary")));
        }
        let eos_count = tokens.iter().filter(|t| **t == eos).count();
        let terminated = tokens.last() == Some(&eos);
        if eos_count > 1 || (eos_count == 1 && !terminated) {
            return Err(Error::Domain(
                "end-of-sequence may only appear once, as the last token".into(),
            ));
        }
        Ok(Self { tokens, terminated })
    }

    pub fn push(&mut self, token: TokenId, eos: TokenId) {
        debug_assert!(!self.terminated, "push after end-of-sequence");
        self.tokens.push(token);
        self.terminated = token == eos;
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    /// Tokens with a trailing end-of-sequence stripped.
    pub fn content(&self) -> &[TokenId] {
        if self.terminated {
            &self.tokens[..self.tokens.len() - 1]
        } else {
            &self.tokens
        }
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn last(&self) -> Option<TokenId> {
        self.tokens.last().copied()
    }
}

/// A probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    probs: Vec<f64>,
}

impl NextTokenDistribution {
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "entry {p} is negative or not finite"
            )));
        }
        let sum: f64 = probs.iter().sum();
        let drift = (sum - 1.0).abs();
        if drift > RENORMALIZE_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}"
            )));
        }
        if drift > SUM_TOLERANCE {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self { probs })
    }

    pub fn point_mass(size: usize, token: TokenId) -> Result<Self> {
        if token.index() >= size {
            return Err(Error::Domain(format!(
                "token {token} outside vocabulary of size {size}"
            )));
        }
        let mut probs = vec![0.0; size];
        probs[token.index()] = 1.0;
        Ok(Self { probs })
    }

    pub fn uniform_over(size: usize, support: &[TokenId]) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let mut probs = vec![0.0; size];
        let w = 1.0 / support.len() as f64;
        for t in support {
            *probs
                .get_mut(t.index())
                .ok_or_else(|| Error::Domain(format!("token {t} outside vocabulary")))? = w;
        }
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs.get(token.index()).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn support(&self) -> Vec<TokenId> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(t, _)| TokenId(t as u32))
            .collect()
    }

    /// The token carrying all the mass, if there is one.
    pub fn as_point_mass(&self) -> Option<TokenId> {
        let mut support = self.probs.iter().enumerate().filter(|(_, p)| **p > 0.0);
        match (support.next(), support.next()) {
            (Some((t, _)), None) => Some(TokenId(t as u32)),
            _ => None,
        }
    }

    /// Largest absolute entrywise difference.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Sampler {
    #[default]
    GumbelMax,
    InverseTransform,
}

impl Sampler {
    pub fn sample(self, d: &NextTokenDistribution, noise: &NoiseBlock) -> Result<TokenId> {
        match self {
            Sampler::GumbelMax => gumbel_max_sample(d, noise),
            Sampler::InverseTransform => inverse_transform_sample(d, noise.uniform),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coupling {
    Coupled,
    Independent,
}

impl Coupling {
    /// Noise stream read by the model at `model_index`.
    pub fn stream(self, model_index: usize) -> Stream {
        match self {
            Coupling::Coupled => Stream::Shared,
            Coupling::Independent => {
                Stream::Model(u32::try_from(model_index).expect("model index fits in u32"))
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Coupling::Coupled => "coupled",
            Coupling::Independent => "independent",
        }
    }
}

impl fmt::Display for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationConfig {
    /// Context length `K`: the maximum number of generated tokens.
    pub max_steps: u32,
    pub temperature: f64,
    pub sampler: Sampler,
}

impl GenerationConfig {
    pub fn new(max_steps: u32, temperature: f64, sampler: Sampler) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        Ok(Self {
            max_steps,
            temperature,
            sampler,
        })
    }
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_steps: 16,
            temperature: 1.0,
            sampler: Sampler::GumbelMax,
        }
    }
}

/// `argmax_t { log d_t + g_t }` over tokens with positive probability.
///
/// Ties go to the lowest token index.
pub fn gumbel_max_sample(d: &NextTokenDistribution, noise: &NoiseBlock) -> Result<TokenId> {
    gumbel_argmax(d.probs(), &noise.gumbels)
}

fn gumbel_argmax(probs: &[f64], gumbels: &[f64]) -> Result<TokenId> {
    if gumbels.len() < probs.len() {
        return Err(Error::Domain(format!(
            "noise block has {} Gumbels for {} tokens",
            gumbels.len(),
            probs.len()
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for (t, (&p, &g)) in probs.iter().zip(gumbels).enumerate() {
        if p <= 0.0 {
            continue;
        }
        let score = p.ln() + g;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((t, score));
        }
    }
    best.map(|(t, _)| TokenId(t as u32))
        .ok_or_else(|| Error::InvalidDistribution("no token has positive probability".into()))
}

/// Smallest token whose cumulative probability (ascending index) reaches `u`.
pub fn inverse_transform_sample(d: &NextTokenDistribution, u: f64) -> Result<TokenId> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(format!("uniform {u} outside (0, 1)")));
    }
    let mut cumulative = 0.0;
    let mut last_positive = None;
    for (t, &p) in d.probs().iter().enumerate() {
        if p > 0.0 {
            last_positive = Some(t);
        }
        cumulative += p;
        if p > 0.0 && cumulative >= u {
            return Ok(TokenId(t as u32));
        }
    }
    // Only reachable when rounding leaves the total just below `u`.
    last_positive
        .map(|t| TokenId(t as u32))
        .ok_or_else(|| Error::InvalidDistribution("no token has positive probability".into()))
}

/// Power-renormalization `d_t^(1/tau) / Z`. Zero entries stay zero.
pub fn temperature_scale(d: &NextTokenDistribution, temperature: f64) -> Result<NextTokenDistribution> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Domain(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if temperature == 1.0 {
        return Ok(d.clone());
    }
    let max = d.probs().iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::InvalidDistribution("no token has positive probability".into()));
    }
    let inv = temperature.recip();
    let weights: Vec<f64> = d
        .probs()
        .iter()
        .map(|&p| if p > 0.0 { (p / max).powf(inv) } else { 0.0 })
        .collect();
    let z: f64 = weights.iter().sum();
    NextTokenDistribution::new(weights.into_iter().map(|w| w / z).collect())
}

/// Generates one sequence for `model`, reading the shared noise stream.
pub fn generate(
    model: &ModelSpec,
    prompt: PromptId,
    replicate: u64,
    noise: &NoiseSource,
    cfg: &GenerationConfig,
) -> Result<TokenSequence> {
    generate_on_stream(model, prompt, replicate, Stream::Shared, noise, cfg)
}

/// Generates one sequence reading noise from `stream`.
///
/// Step `i` (1-based) always consumes the block keyed
/// `(prompt, replicate, stream, i)`, independent of the partial sequence.
pub fn generate_on_stream(
    model: &ModelSpec,
    prompt: PromptId,
    replicate: u64,
    stream: Stream,
    noise: &NoiseSource,
    cfg: &GenerationConfig,
) -> Result<TokenSequence> {
    let vocab = model.vocabulary();
    let eos = vocab.eos();
    let mut seq = TokenSequence::new();
    for step in 1..=cfg.max_steps {
        let row = model.next_token_distribution(prompt, &seq)?;
        let d = temperature_scale(&row, cfg.temperature)?;
        // A point mass is sampled identically under any noise.
        let token = match d.as_point_mass() {
            Some(t) => t,
            None => {
                let block = noise.block(NoiseKey::new(prompt, replicate, stream, step), vocab.size());
                cfg.sampler.sample(&d, &block)?
            }
        };
        seq.push(token, eos);
        if token == eos {
            break;
        }
    }
    Ok(seq)
}

fn check_shared_vocabulary(models: &[ModelSpec]) -> Result<()> {
    if models.len() < 2 {
        return Err(Error::Config(format!(
            "joint generation needs at least 2 models, got {}",
            models.len()
        )));
    }
    let vocab = models[0].vocabulary();
    if let Some(m) = models.iter().find(|m| m.vocabulary() != vocab) {
        return Err(Error::Config(format!(
            "model '{}' does not share the vocabulary of '{}'",
            m.name(),
            models[0].name()
        )));
    }
    Ok(())
}

/// Runs every model on the same noise values (the `do(M = m)` interventions
/// with prompt and noise held fixed).
pub fn generate_coupled(
    models: &[ModelSpec],
    prompt: PromptId,
    replicate: u64,
    noise: &NoiseSource,
    cfg: &GenerationConfig,
) -> Result<Vec<TokenSequence>> {
    generate_joint(models, prompt, replicate, noise, cfg, Coupling::Coupled)
}

/// Runs model `j` on its own stream `Model(j)`.
pub fn generate_independent(
    models: &[ModelSpec],
    prompt: PromptId,
    replicate: u64,
    noise: &NoiseSource,
    cfg: &GenerationConfig,
) -> Result<Vec<TokenSequence>> {
    generate_joint(models, prompt, replicate, noise, cfg, Coupling::Independent)
}

pub fn generate_joint(
    models: &[ModelSpec],
    prompt: PromptId,
    replicate: u64,
    noise: &NoiseSource,
    cfg: &GenerationConfig,
    coupling: Coupling,
) -> Result<Vec<TokenSequence>> {
    check_shared_vocabulary(models)?;
    models
        .iter()
        .enumerate()
        .map(|(j, m)| generate_on_stream(m, prompt, replicate, coupling.stream(j), noise, cfg))
        .collect()
}
