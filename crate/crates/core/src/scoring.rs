//! Scores over generated sequences and pairwise outcomes.

use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::noise::{Namespace, NoiseKey, NoiseSource, Stream};
use crate::scm::{PromptId, TokenId, TokenSequence};

/// Default comparison tolerance for real-valued scores.
pub const REAL_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    /// 1 if the content tokens are one of the accepted sequences for the prompt, else 0.
    Correctness {
        accepted: BTreeMap<PromptId, BTreeSet<Vec<TokenId>>>,
    },
    /// Stored reward per content sequence; unlisted sequences score 0.
    RewardTable {
        rewards: BTreeMap<PromptId, BTreeMap<Vec<TokenId>, f64>>,
    },
    /// Base score plus Gaussian noise `N(0, scale^2)` keyed by prompt and score key.
    Noisy {
        base: Box<Scorer>,
        scale: f64,
        seed: u64,
    },
}

/// Identifies one scoring event; the noisy scorer draws the same value for equal keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScoreKey {
    pub replicate: u64,
    pub stream: Stream,
}

impl ScoreKey {
    pub fn new(replicate: u64, stream: Stream) -> Self {
        Self { replicate, stream }
    }
}

impl Scorer {
    pub fn correctness(accepted: Vec<(PromptId, Vec<Vec<TokenId>>)>) -> Result<Self> {
        let mut map: BTreeMap<PromptId, BTreeSet<Vec<TokenId>>> = BTreeMap::new();
        for (p, seqs) in accepted {
            map.entry(p).or_default().extend(seqs);
        }
        if let Some((p, _)) = map.iter().find(|(_, s)| s.is_empty()) {
            return Err(Error::Config(format!("prompt {p} has no accepted sequence")));
        }
        if map.is_empty() {
            return Err(Error::Config("correctness scorer accepts nothing".into()));
        }
        Ok(Scorer::Correctness { accepted: map })
    }

    pub fn reward_table(rewards: Vec<(PromptId, Vec<TokenId>, f64)>) -> Result<Self> {
        let mut map: BTreeMap<PromptId, BTreeMap<Vec<TokenId>, f64>> = BTreeMap::new();
        for (p, seq, r) in rewards {
            if !r.is_finite() {
                return Err(Error::Config(format!("reward {r} for prompt {p} is not finite")));
            }
            if map.entry(p).or_default().insert(seq.clone(), r).is_some() {
                return Err(Error::Config(format!("duplicate reward for prompt {p}, sequence {seq:?}")));
            }
        }
        Ok(Scorer::RewardTable { rewards: map })
    }

    pub fn noisy(base: Scorer, scale: f64, seed: u64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::Config(format!("noise scale {scale} must be non-negative")));
        }
        Ok(Scorer::Noisy {
            base: Box::new(base),
            scale,
            seed,
        })
    }

    /// Whether the scorer only produces 0/1 values.
    pub fn is_binary(&self) -> bool {
        match self {
            Scorer::Correctness { .. } => true,
            Scorer::RewardTable { .. } => false,
            Scorer::Noisy { base, scale, .. } => *scale == 0.0 && base.is_binary(),
        }
    }

    /// Tolerance `compare` should use for this scorer's values.
    pub fn default_tolerance(&self) -> f64 {
        if self.is_binary() {
            0.0
        } else {
            REAL_TOLERANCE
        }
    }

    pub fn score(&self, prompt: PromptId, seq: &TokenSequence, key: ScoreKey) -> f64 {
        match self {
            Scorer::Correctness { accepted } => accepted
                .get(&prompt)
                .is_some_and(|set| set.contains(seq.content())) as u8 as f64,
            Scorer::RewardTable { rewards } => rewards
                .get(&prompt)
                .and_then(|t| t.get(seq.content()))
                .copied()
                .unwrap_or(0.0),
            Scorer::Noisy { base, scale, seed } => {
                let base = base.score(prompt, seq, key);
                if *scale == 0.0 {
                    return base;
                }
                let mut rng = NoiseSource::with_namespace(*seed, Namespace::Score)
                    .rng(NoiseKey::new(prompt, key.replicate, key.stream, 0));
                let z: f64 = StandardNormal.sample(&mut rng);
                base + scale * z
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairwiseOutcome {
    Win,
    Loss,
    Tie,
}

impl PairwiseOutcome {
    pub fn reversed(self) -> Self {
        match self {
            PairwiseOutcome::Win => PairwiseOutcome::Loss,
            PairwiseOutcome::Loss => PairwiseOutcome::Win,
            PairwiseOutcome::Tie => PairwiseOutcome::Tie,
        }
    }
}

/// Win iff `a - b > tol`, Loss iff `b - a > tol`, otherwise Tie.
pub fn compare(a: f64, b: f64, tol: f64) -> PairwiseOutcome {
    if a - b > tol {
        PairwiseOutcome::Win
    } else if b - a > tol {
        PairwiseOutcome::Loss
    } else {
        PairwiseOutcome::Tie
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::Vocabulary;
    use proptest::prelude::*;

    const Q: PromptId = PromptId(0);

    fn seq(tokens: &[u32]) -> TokenSequence {
        let v = Vocabulary::with_trailing_eos(3).unwrap();
        TokenSequence::from_tokens(tokens.iter().map(|t| TokenId(*t)).collect(), &v).unwrap()
    }

    #[test]
    fn correctness_strips_eos() {
        let s = Scorer::correctness(vec![(Q, vec![vec![TokenId(0)]])]).unwrap();
        let key = ScoreKey::new(0, Stream::Shared);
        assert_eq!(s.score(Q, &seq(&[0, 2]), key), 1.0);
        assert_eq!(s.score(Q, &seq(&[1, 2]), key), 0.0);
        assert_eq!(s.score(Q, &seq(&[0]), key), 1.0);
        assert_eq!(s.score(PromptId(5), &seq(&[0, 2]), key), 0.0);
        assert!(s.is_binary());
    }

    #[test]
    fn correctness_rejects_empty_sets() {
        assert!(Scorer::correctness(vec![(Q, vec![])]).is_err());
    }

    #[test]
    fn reward_table_defaults_to_zero() {
        let s = Scorer::reward_table(vec![(Q, vec![TokenId(1)], 0.75)]).unwrap();
        let key = ScoreKey::new(0, Stream::Shared);
        assert_eq!(s.score(Q, &seq(&[1, 2]), key), 0.75);
        assert_eq!(s.score(Q, &seq(&[0, 2]), key), 0.0);
        assert!(!s.is_binary());
    }

    #[test]
    fn noisy_zero_scale_is_base() {
        let base = Scorer::reward_table(vec![(Q, vec![TokenId(1)], 0.75)]).unwrap();
        let noisy = Scorer::noisy(base.clone(), 0.0, 9).unwrap();
        for r in 0..10 {
            let key = ScoreKey::new(r, Stream::Model(1));
            assert_eq!(noisy.score(Q, &seq(&[1, 2]), key), base.score(Q, &seq(&[1, 2]), key));
        }
    }

    #[test]
    fn noisy_shares_draws_for_equal_keys() {
        let base = Scorer::reward_table(vec![(Q, vec![TokenId(1)], 1.0)]).unwrap();
        let noisy = Scorer::noisy(base, 0.3, 9).unwrap();
        let shared = ScoreKey::new(4, Stream::Shared);
        let a = noisy.score(Q, &seq(&[1, 2]), shared) - 1.0;
        let b = noisy.score(Q, &seq(&[0, 2]), shared);
        assert!((a - b).abs() < 1e-12);
        assert_ne!(a, 0.0);
        let c = noisy.score(Q, &seq(&[0, 2]), ScoreKey::new(4, Stream::Model(0)));
        assert_ne!(b, c);
    }

    #[test]
    fn compare_examples() {
        assert_eq!(compare(1.0, 0.0, 0.0), PairwiseOutcome::Win);
        assert_eq!(compare(0.5, 0.5, 0.0), PairwiseOutcome::Tie);
        assert_eq!(compare(0.5 + 5e-13, 0.5, REAL_TOLERANCE), PairwiseOutcome::Tie);
        assert_eq!(compare(0.0, 1.0, 0.0), PairwiseOutcome::Loss);
    }

    proptest! {
        #[test]
        fn compare_is_antisymmetric(a in -10.0f64..10.0, b in -10.0f64..10.0, tol in 0.0f64..1.0) {
            prop_assert_eq!(compare(a, b, tol), compare(b, a, tol).reversed());
        }
    }
}
