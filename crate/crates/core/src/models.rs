//! Synthetic next-token models, prompt sets, perturbation and distance.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::noise::{Namespace, NoiseKey, NoiseSource, Stream};
use crate::scm::{NextTokenDistribution, PromptId, TokenId, TokenSequence, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// The same token with probability 1 at every step.
    PointMass { tokens: BTreeMap<PromptId, TokenId> },
    /// One content token drawn from the prompt's row, then end-of-sequence.
    Categorical {
        rows: BTreeMap<PromptId, NextTokenDistribution>,
    },
    /// First token from the prompt's row, later tokens conditioned on the last one.
    MarkovTable {
        initial: BTreeMap<PromptId, NextTokenDistribution>,
        transitions: BTreeMap<TokenId, NextTokenDistribution>,
    },
    /// Rows keyed by the full partial sequence; unlisted contexts use `fallback`.
    SequenceTable {
        rows: BTreeMap<PromptId, BTreeMap<Vec<TokenId>, NextTokenDistribution>>,
        fallback: NextTokenDistribution,
    },
}

/// A token-level model: maps (prompt, partial sequence) to a next-token distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    name: String,
    vocab: Vocabulary,
    kind: ModelKind,
}

fn check_row(vocab: &Vocabulary, row: &NextTokenDistribution, what: &str) -> Result<()> {
    if row.len() != vocab.size() {
        return Err(Error::Config(format!(
            "{what}: row has {} entries for a vocabulary of {}",
            row.len(),
            vocab.size()
        )));
    }
    Ok(())
}

fn unique_map<K: Ord + Copy + std::fmt::Display, V>(
    entries: Vec<(K, V)>,
    what: &str,
) -> Result<BTreeMap<K, V>> {
    let mut map = BTreeMap::new();
    for (k, v) in entries {
        if map.insert(k, v).is_some() {
            return Err(Error::Config(format!("{what}: duplicate entry for {k}")));
        }
    }
    Ok(map)
}

impl ModelSpec {
    pub fn point_mass(
        name: impl Into<String>,
        vocab: Vocabulary,
        tokens: &[(PromptId, TokenId)],
    ) -> Result<Self> {
        let name = name.into();
        if let Some((_, t)) = tokens.iter().find(|(_, t)| !vocab.contains(*t)) {
            return Err(Error::Config(format!("{name}: token {t} outside vocabulary")));
        }
        let tokens = unique_map(tokens.to_vec(), &name)?;
        Ok(Self {
            name,
            vocab,
            kind: ModelKind::PointMass { tokens },
        })
    }

    /// Single-step model whose rows are given per prompt.
    ///
    /// Content rows must put zero mass on end-of-sequence: the response is
    /// always exactly one content token.
    pub fn categorical(
        name: impl Into<String>,
        vocab: Vocabulary,
        rows: Vec<(PromptId, NextTokenDistribution)>,
    ) -> Result<Self> {
        let name = name.into();
        for (p, row) in &rows {
            check_row(&vocab, row, &name)?;
            if row.prob(vocab.eos()) != 0.0 {
                return Err(Error::Config(format!(
                    "{name}: categorical row for prompt {p} gives end-of-sequence positive mass"
                )));
            }
        }
        let rows = unique_map(rows, &name)?;
        Ok(Self {
            name,
            vocab,
            kind: ModelKind::Categorical { rows },
        })
    }

    /// Single-step model that answers each prompt with a fixed content token.
    pub fn point_mass_categorical(
        name: impl Into<String>,
        vocab: Vocabulary,
        tokens: &[(PromptId, TokenId)],
    ) -> Result<Self> {
        let rows = tokens
            .iter()
            .map(|&(p, t)| Ok((p, NextTokenDistribution::point_mass(vocab.size(), t)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::categorical(name, vocab, rows)
    }

    /// Markov model. Every token reachable from the initial rows must have a
    /// transition row.
    pub fn markov(
        name: impl Into<String>,
        vocab: Vocabulary,
        initial: Vec<(PromptId, NextTokenDistribution)>,
        transitions: Vec<(TokenId, NextTokenDistribution)>,
    ) -> Result<Self> {
        let name = name.into();
        for (_, row) in initial.iter() {
            check_row(&vocab, row, &name)?;
        }
        for (t, row) in transitions.iter() {
            check_row(&vocab, row, &name)?;
            if !vocab.contains(*t) {
                return Err(Error::Config(format!("{name}: transition from token {t} outside vocabulary")));
            }
        }
        let initial = unique_map(initial, &name)?;
        let transitions = unique_map(transitions, &name)?;
        let model = Self {
            name,
            vocab,
            kind: ModelKind::MarkovTable {
                initial,
                transitions,
            },
        };
        if let ModelKind::MarkovTable { transitions, .. } = &model.kind {
            if let Some(t) = model.reachable_tokens().into_iter().find(|t| !transitions.contains_key(t)) {
                return Err(Error::Config(format!(
                    "{}: token {t} is reachable but has no transition row",
                    model.name
                )));
            }
        }
        Ok(model)
    }

    /// Sequence-keyed model with a uniform fallback over content tokens.
    pub fn sequence_table(
        name: impl Into<String>,
        vocab: Vocabulary,
        rows: Vec<(PromptId, Vec<TokenId>, NextTokenDistribution)>,
    ) -> Result<Self> {
        let name = name.into();
        let content: Vec<TokenId> = vocab.content_tokens().collect();
        let fallback = NextTokenDistribution::uniform_over(vocab.size(), &content)?;
        let mut table: BTreeMap<PromptId, BTreeMap<Vec<TokenId>, NextTokenDistribution>> =
            BTreeMap::new();
        for (p, ctx, row) in rows {
            check_row(&vocab, &row, &name)?;
            TokenSequence::from_tokens(ctx.clone(), &vocab)?;
            if ctx.last() == Some(&vocab.eos()) {
                return Err(Error::Config(format!("{name}: context ends with end-of-sequence")));
            }
            if table.entry(p).or_default().insert(ctx.clone(), row).is_some() {
                return Err(Error::Config(format!("{name}: duplicate row for prompt {p}, context {ctx:?}")));
            }
        }
        Ok(Self {
            name,
            vocab,
            kind: ModelKind::SequenceTable {
                rows: table,
                fallback,
            },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn vocabulary(&self) -> Vocabulary {
        self.vocab
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn prompts(&self) -> BTreeSet<PromptId> {
        match &self.kind {
            ModelKind::PointMass { tokens } => tokens.keys().copied().collect(),
            ModelKind::Categorical { rows } => rows.keys().copied().collect(),
            ModelKind::MarkovTable { initial, .. } => initial.keys().copied().collect(),
            ModelKind::SequenceTable { rows, .. } => rows.keys().copied().collect(),
        }
    }

    fn unknown_prompt(&self, prompt: PromptId) -> Error {
        Error::Lookup(format!("model '{}' has no entry for prompt {prompt}", self.name))
    }

    /// Next-token distribution after `partial` for `prompt`.
    pub fn next_token_distribution(
        &self,
        prompt: PromptId,
        partial: &TokenSequence,
    ) -> Result<Cow<'_, NextTokenDistribution>> {
        if partial.is_terminated() {
            return Err(Error::Domain("partial sequence already ended".into()));
        }
        let size = self.vocab.size();
        match &self.kind {
            ModelKind::PointMass { tokens } => {
                let t = tokens.get(&prompt).ok_or_else(|| self.unknown_prompt(prompt))?;
                Ok(Cow::Owned(NextTokenDistribution::point_mass(size, *t)?))
            }
            ModelKind::Categorical { rows } => {
                let row = rows.get(&prompt).ok_or_else(|| self.unknown_prompt(prompt))?;
                if partial.is_empty() {
                    Ok(Cow::Borrowed(row))
                } else {
                    Ok(Cow::Owned(NextTokenDistribution::point_mass(size, self.vocab.eos())?))
                }
            }
            ModelKind::MarkovTable {
                initial,
                transitions,
            } => {
                let first = initial.get(&prompt).ok_or_else(|| self.unknown_prompt(prompt))?;
                match partial.last() {
                    None => Ok(Cow::Borrowed(first)),
                    Some(last) => transitions.get(&last).map(Cow::Borrowed).ok_or_else(|| {
                        Error::Lookup(format!(
                            "model '{}' has no transition row after token {last}",
                            self.name
                        ))
                    }),
                }
            }
            ModelKind::SequenceTable { rows, fallback } => {
                let table = rows.get(&prompt).ok_or_else(|| self.unknown_prompt(prompt))?;
                Ok(Cow::Borrowed(table.get(partial.tokens()).unwrap_or(fallback)))
            }
        }
    }

    /// Content tokens a Markov model can emit from any prompt.
    fn reachable_tokens(&self) -> BTreeSet<TokenId> {
        let eos = self.vocab.eos();
        let ModelKind::MarkovTable {
            initial,
            transitions,
        } = &self.kind
        else {
            return BTreeSet::new();
        };
        let mut seen = BTreeSet::new();
        let mut frontier: Vec<TokenId> = initial
            .values()
            .flat_map(|d| d.support())
            .filter(|t| *t != eos)
            .collect();
        while let Some(t) = frontier.pop() {
            if !seen.insert(t) {
                continue;
            }
            if let Some(row) = transitions.get(&t) {
                frontier.extend(row.support().into_iter().filter(|u| *u != eos && !seen.contains(u)));
            }
        }
        seen
    }

    /// Representative partial sequences whose rows the model can produce for `prompt`.
    fn contexts(&self, prompt: PromptId) -> Vec<Vec<TokenId>> {
        let eos = self.vocab.eos();
        match &self.kind {
            ModelKind::PointMass { tokens } => match tokens.get(&prompt) {
                Some(&t) if t != eos => vec![vec![], vec![t]],
                Some(_) => vec![vec![]],
                None => vec![],
            },
            ModelKind::Categorical { rows } => match rows.get(&prompt) {
                Some(row) => std::iter::once(vec![])
                    .chain(row.support().into_iter().map(|t| vec![t]))
                    .collect(),
                None => vec![],
            },
            ModelKind::MarkovTable { initial, .. } => {
                if !initial.contains_key(&prompt) {
                    return vec![];
                }
                std::iter::once(vec![])
                    .chain(self.reachable_tokens().into_iter().map(|t| vec![t]))
                    .collect()
            }
            ModelKind::SequenceTable { rows, .. } => rows
                .get(&prompt)
                .map(|t| t.keys().cloned().collect())
                .unwrap_or_default(),
        }
    }

    fn map_rows<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&NextTokenDistribution) -> Result<NextTokenDistribution>,
    {
        let kind = match &self.kind {
            ModelKind::PointMass { tokens } => ModelKind::PointMass {
                tokens: tokens.clone(),
            },
            ModelKind::Categorical { rows } => ModelKind::Categorical {
                rows: rows
                    .iter()
                    .map(|(p, d)| Ok((*p, f(d)?)))
                    .collect::<Result<_>>()?,
            },
            ModelKind::MarkovTable {
                initial,
                transitions,
            } => ModelKind::MarkovTable {
                initial: initial
                    .iter()
                    .map(|(p, d)| Ok((*p, f(d)?)))
                    .collect::<Result<_>>()?,
                transitions: transitions
                    .iter()
                    .map(|(t, d)| Ok((*t, f(d)?)))
                    .collect::<Result<_>>()?,
            },
            ModelKind::SequenceTable { rows, fallback } => ModelKind::SequenceTable {
                rows: rows
                    .iter()
                    .map(|(p, table)| {
                        let table = table
                            .iter()
                            .map(|(ctx, d)| Ok((ctx.clone(), f(d)?)))
                            .collect::<Result<_>>()?;
                        Ok((*p, table))
                    })
                    .collect::<Result<_>>()?,
                fallback: fallback.clone(),
            },
        };
        Ok(Self {
            name: self.name.clone(),
            vocab: self.vocab,
            kind,
        })
    }
}

/// Mixes every stored row toward a seeded random distribution on its own
/// support: `d -> (1 - eps) d + eps r`.
///
/// The sup-norm change of each row is `eps * |r - d| <= eps`, and the
/// support is unchanged. Point-mass rows and the sequence-table fallback
/// are left as they are.
pub fn perturb(model: &ModelSpec, epsilon: f64, direction_seed: u64) -> Result<ModelSpec> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let mut rng = NoiseSource::with_namespace(direction_seed, Namespace::Instance)
        .rng(NoiseKey::new(PromptId(0), 0, Stream::Shared, 0));
    model.map_rows(|d| {
        let support = d.support();
        let r = random_distribution(&mut rng, d.len(), &support)?;
        mix(d, &r, epsilon)
    })
}

/// `(1 - eps) d + eps r`, renormalized.
pub fn mix(d: &NextTokenDistribution, r: &NextTokenDistribution, epsilon: f64) -> Result<NextTokenDistribution> {
    let probs: Vec<f64> = d
        .probs()
        .iter()
        .zip(r.probs())
        .map(|(a, b)| (1.0 - epsilon) * a + epsilon * b)
        .collect();
    let z: f64 = probs.iter().sum();
    NextTokenDistribution::new(probs.into_iter().map(|p| p / z).collect())
}

/// Largest entrywise difference between the two models' rows, over every
/// prompt in `prompts` and every context either model can reach.
///
/// Contexts one model has no row for (unreachable under it) are skipped.
pub fn model_distance(m: &ModelSpec, other: &ModelSpec, prompts: &PromptSet) -> Result<f64> {
    if m.vocabulary() != other.vocabulary() {
        return Err(Error::Config(format!(
            "models '{}' and '{}' use different vocabularies",
            m.name(),
            other.name()
        )));
    }
    let vocab = m.vocabulary();
    let mut sup = 0.0f64;
    for &prompt in prompts.ids() {
        let contexts: BTreeSet<Vec<TokenId>> = m
            .contexts(prompt)
            .into_iter()
            .chain(other.contexts(prompt))
            .collect();
        if contexts.is_empty() {
            return Err(Error::Lookup(format!("neither model knows prompt {prompt}")));
        }
        for ctx in contexts {
            let seq = TokenSequence::from_tokens(ctx, &vocab)?;
            if seq.is_terminated() {
                continue;
            }
            let (Ok(a), Ok(b)) = (
                m.next_token_distribution(prompt, &seq),
                other.next_token_distribution(prompt, &seq),
            ) else {
                continue;
            };
            sup = sup.max(a.sup_distance(&b));
        }
    }
    Ok(sup)
}

/// Prompts with sampling weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    ids: Vec<PromptId>,
    weights: Vec<f64>,
}

impl PromptSet {
    pub fn new(entries: Vec<(PromptId, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("prompt set is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for (p, w) in &entries {
            if !seen.insert(*p) {
                return Err(Error::Config(format!("duplicate prompt {p}")));
            }
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Config(format!("prompt {p} has invalid weight {w}")));
            }
        }
        let total: f64 = entries.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("prompt weights sum to {total}, not 1")));
        }
        let (ids, weights) = entries.into_iter().map(|(p, w)| (p, w / total)).unzip();
        Ok(Self { ids, weights })
    }

    pub fn uniform(ids: impl IntoIterator<Item = PromptId>) -> Result<Self> {
        let ids: Vec<PromptId> = ids.into_iter().collect();
        let w = 1.0 / ids.len().max(1) as f64;
        Self::new(ids.into_iter().map(|p| (p, w)).collect())
    }

    pub fn single(id: PromptId) -> Self {
        Self {
            ids: vec![id],
            weights: vec![1.0],
        }
    }

    pub fn ids(&self) -> &[PromptId] {
        &self.ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// The prompt for `replicate`, drawn from the weights with keyed noise.
    pub fn draw(&self, noise: &NoiseSource, replicate: u64) -> PromptId {
        if self.ids.len() == 1 {
            return self.ids[0];
        }
        let u = noise
            .scoped(Namespace::Prompt)
            .uniform(NoiseKey::new(PromptId(0), replicate, Stream::Shared, 0));
        let mut cumulative = 0.0;
        for (p, w) in self.ids.iter().zip(&self.weights) {
            cumulative += w;
            if *w > 0.0 && u <= cumulative {
                return *p;
            }
        }
        *self
            .ids
            .iter()
            .zip(&self.weights)
            .rev()
            .find(|(_, w)| **w > 0.0)
            .map(|(p, _)| p)
            .unwrap_or(&self.ids[0])
    }
}

/// Flat-Dirichlet draw over `support`, zero elsewhere.
pub fn random_distribution<R: Rng + ?Sized>(
    rng: &mut R,
    size: usize,
    support: &[TokenId],
) -> Result<NextTokenDistribution> {
    if support.is_empty() {
        return Err(Error::InvalidDistribution("empty support".into()));
    }
    let mut probs = vec![0.0; size];
    for t in support {
        let e: f64 = rng.sample(Exp1);
        *probs
            .get_mut(t.index())
            .ok_or_else(|| Error::Domain(format!("token {t} outside vocabulary")))? = e.max(f64::MIN_POSITIVE);
    }
    let z: f64 = probs.iter().sum();
    NextTokenDistribution::new(probs.into_iter().map(|p| p / z).collect())
}

/// Categorical model with a random full-support row (over content tokens) per prompt.
pub fn random_categorical<R: Rng + ?Sized>(
    rng: &mut R,
    name: &str,
    vocab: Vocabulary,
    prompts: &[PromptId],
) -> Result<ModelSpec> {
    let content: Vec<TokenId> = vocab.content_tokens().collect();
    let rows = prompts
        .iter()
        .map(|&p| Ok((p, random_distribution(rng, vocab.size(), &content)?)))
        .collect::<Result<Vec<_>>>()?;
    ModelSpec::categorical(name, vocab, rows)
}

/// Markov model with random full-support rows. Initial rows exclude
/// end-of-sequence; transition rows include it.
pub fn random_markov<R: Rng + ?Sized>(
    rng: &mut R,
    name: &str,
    vocab: Vocabulary,
    prompts: &[PromptId],
) -> Result<ModelSpec> {
    let content: Vec<TokenId> = vocab.content_tokens().collect();
    let all: Vec<TokenId> = (0..vocab.size() as u32).map(TokenId).collect();
    let initial = prompts
        .iter()
        .map(|&p| Ok((p, random_distribution(rng, vocab.size(), &content)?)))
        .collect::<Result<Vec<_>>>()?;
    let transitions = content
        .iter()
        .map(|&t| Ok((t, random_distribution(rng, vocab.size(), &all)?)))
        .collect::<Result<Vec<_>>>()?;
    ModelSpec::markov(name, vocab, initial, transitions)
}
