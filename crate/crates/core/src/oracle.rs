//! Ground truth that does not go through the generation pipeline: closed-form
//! win rates and moments for two-token models, the exact coupled joint from
//! the logistic law of Gumbel differences, the three-model ranking example,
//! plus a Monte Carlo reference on a seed lineage disjoint from experiments
//! and a brute-force search for counterfactual-stability violations.

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{sample_variance, MeanEstimate, PairedSampleSet};
use crate::models::{random_distribution, ModelSpec, PromptSet};
use crate::noise::{Namespace, NoiseBlock, NoiseKey, NoiseSource, Stream};
use crate::runner::Experiment;
use crate::scm::{Coupling, GenerationConfig, NextTokenDistribution, PromptId, Sampler, TokenId, Vocabulary};
use crate::scoring::{compare, PairwiseOutcome, Scorer};

/// Two models that each answer with the favored token (index 0) or the other
/// one (index 1), with probabilities `p_m` and `p_m_prime` on the favored one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTokenInstance {
    pub p_m: f64,
    pub p_m_prime: f64,
    pub favored_reward: f64,
    pub other_reward: f64,
}

impl TwoTokenInstance {
    /// Binary-correctness instance (rewards 1 and 0).
    pub fn new(p_m: f64, p_m_prime: f64) -> Result<Self> {
        Self::with_rewards(p_m, p_m_prime, 1.0, 0.0)
    }

    /// Probabilities may sit on the closed interval; the endpoints are the
    /// limits of the interior formulas.
    pub fn with_rewards(p_m: f64, p_m_prime: f64, favored_reward: f64, other_reward: f64) -> Result<Self> {
        for p in [p_m, p_m_prime] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
            }
        }
        if favored_reward.is_nan() || other_reward.is_nan() || favored_reward <= other_reward {
            return Err(Error::Domain("favored reward must exceed the other reward".into()));
        }
        Ok(Self {
            p_m,
            p_m_prime,
            favored_reward,
            other_reward,
        })
    }

    /// Categorical models over `{favored, other, eos}` and a matching scorer.
    pub fn setup(&self, prompt: PromptId) -> Result<(Vec<ModelSpec>, Scorer)> {
        let vocab = Vocabulary::with_trailing_eos(3)?;
        let model = |name: &str, p: f64| {
            ModelSpec::categorical(name, vocab, vec![(prompt, NextTokenDistribution::new(vec![p, 1.0 - p, 0.0])?)])
        };
        let scorer = if self.favored_reward == 1.0 && self.other_reward == 0.0 {
            Scorer::correctness(vec![(prompt, vec![vec![TokenId(0)]])])?
        } else {
            Scorer::reward_table(vec![
                (prompt, vec![TokenId(0)], self.favored_reward),
                (prompt, vec![TokenId(1)], self.other_reward),
            ])?
        };
        Ok((vec![model("m", self.p_m)?, model("m_prime", self.p_m_prime)?], scorer))
    }
}

/// `(win rate of m, win rate of m')` under each regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormWinRates {
    pub coupled: (f64, f64),
    pub independent: (f64, f64),
}

/// Coupled: `((p - p')^+, (p' - p)^+)`. Independent: `(p (1 - p'), p' (1 - p))`.
pub fn closed_form_win_rates(inst: &TwoTokenInstance) -> ClosedFormWinRates {
    let (p, q) = (inst.p_m, inst.p_m_prime);
    ClosedFormWinRates {
        coupled: ((p - q).max(0.0), (q - p).max(0.0)),
        independent: (p * (1.0 - q), q * (1.0 - p)),
    }
}

pub fn logistic_cdf(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `joint[i][j]`: probability that `m` emits token `i` and `m'` token `j`
/// (index 0 = favored) when both share Gumbel noise.
///
/// With `X = g_0 - g_1 ~ Logistic(0,1)`, a model with favored probability
/// `p` emits the favored token iff `X >= log((1 - p) / p)`.
pub fn two_token_coupled_joint(p: f64, p_prime: f64) -> [[f64; 2]; 2] {
    let a = ((1.0 - p) / p).ln();
    let a_prime = ((1.0 - p_prime) / p_prime).ln();
    let both_favored = 1.0 - logistic_cdf(a.max(a_prime));
    let both_other = logistic_cdf(a.min(a_prime));
    let split = (logistic_cdf(a) - logistic_cdf(a_prime)).abs();
    let mut joint = [[0.0; 2]; 2];
    joint[0][0] = both_favored;
    joint[1][1] = both_other;
    if a_prime < a {
        // m' has the lower threshold: it alone emits the favored token.
        joint[1][0] = split;
    } else {
        joint[0][1] = split;
    }
    joint
}

/// Joint of two independent draws.
pub fn two_token_product_joint(p: f64, p_prime: f64) -> [[f64; 2]; 2] {
    [
        [p * p_prime, p * (1.0 - p_prime)],
        [(1.0 - p) * p_prime, (1.0 - p) * (1.0 - p_prime)],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormVariances {
    pub var_coupled: f64,
    pub var_independent: f64,
    /// `Cov[R_m, R_m']` under the coupled joint.
    pub covariance: f64,
}

fn moments(joint: &[[f64; 2]; 2], rewards: [f64; 2]) -> (f64, f64) {
    let mut mean_d = 0.0;
    let mut mean_d2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let d = rewards[i] - rewards[j];
            mean_d += joint[i][j] * d;
            mean_d2 += joint[i][j] * d * d;
        }
    }
    (mean_d, mean_d2 - mean_d * mean_d)
}

/// Exact moments of `R_m - R_m'` by enumerating both joints.
pub fn closed_form_variances(inst: &TwoTokenInstance) -> ClosedFormVariances {
    let rewards = [inst.favored_reward, inst.other_reward];
    let coupled = two_token_coupled_joint(inst.p_m, inst.p_m_prime);
    let product = two_token_product_joint(inst.p_m, inst.p_m_prime);
    let (_, var_coupled) = moments(&coupled, rewards);
    let (_, var_independent) = moments(&product, rewards);
    let mut e_ab = 0.0;
    let (mut e_a, mut e_b) = (0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            e_ab += coupled[i][j] * rewards[i] * rewards[j];
            e_a += coupled[i][j] * rewards[i];
            e_b += coupled[i][j] * rewards[j];
        }
    }
    ClosedFormVariances {
        var_coupled,
        var_independent,
        covariance: e_ab - e_a * e_b,
    }
}

/// Three models, two equally likely prompts, each answered correctly with
/// the probabilities in `probs[prompt][model]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleTable {
    pub probs: [[f64; 3]; 2],
    pub independent: [f64; 3],
    pub coupled: [f64; 3],
}

/// Model indices ordered by decreasing value (stable on ties).
pub fn ranking(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

impl ExampleTable {
    pub fn independent_ranking(&self) -> Vec<usize> {
        ranking(&self.independent)
    }

    pub fn coupled_ranking(&self) -> Vec<usize> {
        ranking(&self.coupled)
    }

    pub fn rank_flip(&self) -> bool {
        self.independent_ranking() != self.coupled_ranking()
    }

    /// Models, correctness scorer and uniform prompt set realizing the table.
    pub fn setup(&self) -> Result<(Vec<ModelSpec>, Scorer, PromptSet)> {
        let vocab = Vocabulary::with_trailing_eos(3)?;
        let prompts = [PromptId(0), PromptId(1)];
        let models = (0..3)
            .map(|k| {
                let rows = prompts
                    .iter()
                    .enumerate()
                    .map(|(q, &id)| {
                        let p = self.probs[q][k];
                        Ok((id, NextTokenDistribution::new(vec![p, 1.0 - p, 0.0])?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                ModelSpec::categorical(format!("m{}", k + 1), vocab, rows)
            })
            .collect::<Result<Vec<_>>>()?;
        let scorer = Scorer::correctness(prompts.iter().map(|&p| (p, vec![vec![TokenId(0)]])).collect())?;
        Ok((models, scorer, PromptSet::uniform(prompts)?))
    }
}

pub const APPENDIX_PROBS: [[f64; 3]; 2] = [[0.4, 0.48, 0.5], [1.0, 0.9, 0.89]];

/// Average win rates of the three-model example, from the closed forms.
pub fn appendix_example() -> ExampleTable {
    example_table(APPENDIX_PROBS)
}

pub fn example_table(probs: [[f64; 3]; 2]) -> ExampleTable {
    let mut independent = [0.0; 3];
    let mut coupled = [0.0; 3];
    for k in 0..3 {
        for j in (0..3).filter(|&j| j != k) {
            for row in &probs {
                let inst = TwoTokenInstance {
                    p_m: row[k],
                    p_m_prime: row[j],
                    favored_reward: 1.0,
                    other_reward: 0.0,
                };
                let rates = closed_form_win_rates(&inst);
                // Mean over 2 opponents and 2 equally likely prompts.
                independent[k] += rates.independent.0 / 4.0;
                coupled[k] += rates.coupled.0 / 4.0;
            }
        }
    }
    ExampleTable {
        probs,
        independent,
        coupled,
    }
}

/// Monte Carlo estimates with standard errors for one model pair.
#[derive(Debug, Clone, PartialEq)]
pub struct McReference {
    pub n: usize,
    pub coupling: Coupling,
    pub mean_diff: MeanEstimate,
    pub win: MeanEstimate,
    pub loss: MeanEstimate,
    pub tie: MeanEstimate,
    /// Sample variance of the difference; `se` from the fourth central moment.
    pub var_diff: MeanEstimate,
    /// Frequencies of each distinct `(score_a, score_b)` cell, when there are at most 64.
    pub joint: Vec<((f64, f64), MeanEstimate)>,
}

pub const MC_MIN_REPLICATES: u64 = 10_000;

/// Runs `n` replicates of the first two `models` on the oracle seed lineage.
pub fn mc_reference(
    models: &[ModelSpec],
    scorer: &Scorer,
    prompts: &PromptSet,
    cfg: GenerationConfig,
    coupling: Coupling,
    n: u64,
    seed: u64,
) -> Result<McReference> {
    if n < MC_MIN_REPLICATES {
        return Err(Error::Domain(format!("need at least {MC_MIN_REPLICATES} replicates, got {n}")));
    }
    if models.len() != 2 {
        return Err(Error::Config(format!("reference compares exactly 2 models, got {}", models.len())));
    }
    let noise = NoiseSource::with_namespace(seed, Namespace::Oracle);
    let exp = Experiment::new(models, scorer, prompts, cfg, noise)?;
    let set = exp.score_matrix(coupling, n)?.pair_set(0, 1);
    Ok(summarize(&set, coupling, scorer.default_tolerance()))
}

fn summarize(set: &PairedSampleSet, coupling: Coupling, tol: f64) -> McReference {
    let n = set.len();
    let diffs = set.differences();
    let mean_diff = MeanEstimate::from_values(&diffs).expect("non-empty");
    let (mut wins, mut losses, mut ties) = (0usize, 0usize, 0usize);
    for r in set.records() {
        match compare(r.score_a, r.score_b, tol) {
            PairwiseOutcome::Win => wins += 1,
            PairwiseOutcome::Loss => losses += 1,
            PairwiseOutcome::Tie => ties += 1,
        }
    }
    let rate = |k: usize| MeanEstimate::proportion(k as f64 / n as f64, n);

    let var = sample_variance(&diffs);
    let m4 = diffs
        .iter()
        .map(|d| (d - mean_diff.mean).powi(4))
        .sum::<f64>()
        / n as f64;
    let var_diff = MeanEstimate {
        mean: var,
        se: ((m4 - var * var).max(0.0) / n as f64).sqrt(),
        n,
    };

    let mut cells: Vec<(f64, f64)> = set.records().iter().map(|r| (r.score_a, r.score_b)).collect();
    cells.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let mut joint: Vec<((f64, f64), usize)> = Vec::new();
    for c in cells {
        match joint.last_mut() {
            Some((prev, count)) if prev.0 == c.0 && prev.1 == c.1 => *count += 1,
            _ => {
                if joint.len() == 64 {
                    joint.clear();
                    break;
                }
                joint.push((c, 1));
            }
        }
    }
    McReference {
        n,
        coupling,
        mean_diff,
        win: rate(wins),
        loss: rate(losses),
        tie: rate(ties),
        var_diff,
        joint: joint.into_iter().map(|(c, k)| (c, rate(k))).collect(),
    }
}

impl McReference {
    /// Frequency estimate of a `(score_a, score_b)` cell (zero when never seen).
    pub fn cell(&self, a: f64, b: f64) -> MeanEstimate {
        self.joint
            .iter()
            .find(|((x, y), _)| *x == a && *y == b)
            .map(|(_, e)| *e)
            .unwrap_or(MeanEstimate::proportion(0.0, self.n))
    }
}

/// A noise value under which the stability implication fails: `m` samples
/// `sampled_by_m`, `m'` samples `sampled_by_m_prime`, yet the odds ratio of
/// the former is at least that of the latter.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityViolation {
    pub d: NextTokenDistribution,
    pub d_prime: NextTokenDistribution,
    pub noise: NoiseBlock,
    pub sampled_by_m: TokenId,
    pub sampled_by_m_prime: TokenId,
}

/// Checks the stability implication for one noise value.
pub fn check_stability(
    sampler: Sampler,
    d: &NextTokenDistribution,
    d_prime: &NextTokenDistribution,
    noise: &NoiseBlock,
) -> Result<Option<StabilityViolation>> {
    let t1 = sampler.sample(d, noise)?;
    let t2 = sampler.sample(d_prime, noise)?;
    if t1 == t2 || d.prob(t2) == 0.0 {
        // A token m never emits has unbounded odds ratio; the premise fails.
        return Ok(None);
    }
    let ratio = |t: TokenId| d_prime.prob(t) / d.prob(t);
    if ratio(t1) >= ratio(t2) {
        Ok(Some(StabilityViolation {
            d: d.clone(),
            d_prime: d_prime.clone(),
            noise: noise.clone(),
            sampled_by_m: t1,
            sampled_by_m_prime: t2,
        }))
    } else {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySearch {
    pub sampler: Sampler,
    pub checked: usize,
    pub violations: usize,
    pub first: Option<StabilityViolation>,
}

/// Enumerates random full-support distribution pairs over `vocab_size`
/// tokens and, for each, a grid of `grid` uniforms `k / (grid + 1)` paired
/// with keyed Gumbel draws.
pub fn search_stability_violation(
    sampler: Sampler,
    vocab_size: usize,
    n_pairs: u64,
    grid: u32,
    seed: u64,
) -> Result<StabilitySearch> {
    if vocab_size < 2 {
        return Err(Error::Domain("need at least 2 tokens".into()));
    }
    let src = NoiseSource::with_namespace(seed, Namespace::Oracle);
    let support: Vec<TokenId> = (0..vocab_size as u32).map(TokenId).collect();
    let mut out = StabilitySearch {
        sampler,
        checked: 0,
        violations: 0,
        first: None,
    };
    for pair in 0..n_pairs {
        let mut rng = src
            .scoped(Namespace::Instance)
            .rng(NoiseKey::new(PromptId(0), pair, Stream::Shared, 0));
        let d = random_distribution(&mut rng, vocab_size, &support)?;
        let d_prime = random_distribution(&mut rng, vocab_size, &support)?;
        for k in 1..=grid {
            let mut block = src.block(NoiseKey::new(PromptId(0), pair, Stream::Shared, k), vocab_size);
            block.uniform = k as f64 / (grid as f64 + 1.0);
            out.checked += 1;
            if let Some(v) = check_stability(sampler, &d, &d_prime, &block)? {
                out.violations += 1;
                out.first.get_or_insert(v);
            }
        }
    }
    Ok(out)
}

/// Random two-token instance with both probabilities in `[lo, hi]` and `p_m <= p_m'`.
pub fn random_two_token_instance<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> TwoTokenInstance {
    let a = rng.random_range(lo..=hi);
    let b = rng.random_range(lo..=hi);
    TwoTokenInstance {
        p_m: a.min(b),
        p_m_prime: a.max(b),
        favored_reward: 1.0,
        other_reward: 0.0,
    }
}
