//! Property suites run by `coupled verify`. Each returns a report with one
//! entry per instance; the acceptance tests call them directly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use anyhow::{ensure, Result};
use coupled_core::estimators::{error_curve, sample_covariance, sample_savings, variance_decomposition, ErrorCurve, MeanEstimate};
use coupled_core::models::{random_categorical, random_markov};
use coupled_core::noise::Namespace;
use coupled_core::oracle::{
    closed_form_variances, closed_form_win_rates, mc_reference, random_two_token_instance,
    search_stability_violation, StabilitySearch, TwoTokenInstance,
};
use coupled_core::{
    derive_seed, perturb, Coupling, Experiment, GenerationConfig, NextTokenDistribution,
    NoiseKey, NoiseSource, PromptId, PromptSet, Sampler, Scorer, Stream, TokenId, Vocabulary,
};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const DEFAULT_REPLICATES: u64 = 100_000;
pub const CURVE_POOL: u64 = 10_000;
pub const CURVE_SIZES: [usize; 11] = [50, 100, 200, 300, 500, 750, 1000, 1500, 2000, 3000, 5000];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Prop1,
    Prop2,
    Prop4,
    Prop5,
    Stability,
    Marginals,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Prop1,
        Suite::Prop2,
        Suite::Prop4,
        Suite::Prop5,
        Suite::Stability,
        Suite::Marginals,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Prop1 => "prop1",
            Suite::Prop2 => "prop2",
            Suite::Prop4 => "prop4",
            Suite::Prop5 => "prop5",
            Suite::Stability => "stability",
            Suite::Marginals => "marginals",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown suite '{s}' (expected one of prop1, prop2, prop4, prop5, stability, marginals)"))
    }
}

#[derive(Debug, Clone)]
pub struct SuiteParams {
    pub seed: u64,
    /// Monte Carlo replicates per instance and regime. For `prop2` this is the pool size.
    pub replicates: Option<u64>,
    pub subsamples: usize,
    pub sizes: Option<Vec<usize>>,
    pub target_error: f64,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            seed: crate::config::DEFAULT_SEED,
            replicates: None,
            subsamples: crate::config::DEFAULT_SUBSAMPLES,
            sizes: None,
            target_error: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceResult {
    pub id: String,
    pub passed: bool,
    pub stats: BTreeMap<String, f64>,
}

impl InstanceResult {
    fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            passed: true,
            stats: BTreeMap::new(),
        }
    }

    fn stat(&mut self, key: &str, value: f64) -> &mut Self {
        self.stats.insert(key.to_string(), value);
        self
    }

    fn check(&mut self, ok: bool) -> &mut Self {
        self.passed &= ok;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub replicates: u64,
    pub passed: bool,
    pub summary: String,
    pub instances: Vec<InstanceResult>,
}

impl SuiteReport {
    pub fn instances_passed(&self) -> usize {
        self.instances.iter().filter(|i| i.passed).count()
    }

    pub fn instance(&self, id: &str) -> Option<&InstanceResult> {
        self.instances.iter().find(|i| i.id == id)
    }
}

pub fn run(suite: Suite, params: &SuiteParams) -> Result<SuiteReport> {
    match suite {
        Suite::Prop1 => prop1(params),
        Suite::Prop2 => prop2(params),
        Suite::Prop4 => prop4(params),
        Suite::Prop5 => prop5(params),
        Suite::Stability => stability(params),
        Suite::Marginals => marginals(params),
    }
}

fn instance_rng(seed: u64, suite: Suite, i: u64) -> ChaCha8Rng {
    NoiseSource::with_namespace(seed, Namespace::Instance).rng(NoiseKey::new(
        PromptId(suite as u32),
        i,
        Stream::Shared,
        0,
    ))
}

fn single_step() -> GenerationConfig {
    GenerationConfig::new(2, 1.0, Sampler::GumbelMax).expect("valid config")
}

fn report(suite: Suite, params: &SuiteParams, n: u64, instances: Vec<InstanceResult>) -> SuiteReport {
    let passed = instances.iter().all(|i| i.passed);
    let ok = instances.iter().filter(|i| i.passed).count();
    SuiteReport {
        suite: suite.to_string(),
        seed: params.seed,
        replicates: n,
        passed,
        summary: format!("{ok}/{} instances passed", instances.len()),
        instances,
    }
}

/// Monte Carlo win/loss/tie rates of 25 random two-token instances against
/// the closed forms, within 4 standard errors of the closed form.
pub fn prop4(params: &SuiteParams) -> Result<SuiteReport> {
    const INSTANCES: u64 = 25;
    const K: f64 = 4.0;
    let n = params.replicates.unwrap_or(DEFAULT_REPLICATES);
    let prompts = PromptSet::single(PromptId(0));
    let mut out = Vec::new();
    for i in 0..INSTANCES {
        let inst = random_two_token_instance(&mut instance_rng(params.seed, Suite::Prop4, i), 0.05, 0.95);
        let (models, scorer) = inst.setup(PromptId(0))?;
        let closed = closed_form_win_rates(&inst);
        let (p, q) = (inst.p_m, inst.p_m_prime);
        let mut res = InstanceResult::new(format!("instance-{i}"));
        res.stat("p_m", p).stat("p_m_prime", q);
        for (coupling, (win, loss), tie) in [
            (Coupling::Coupled, closed.coupled, 1.0 - (p - q).abs()),
            (Coupling::Independent, closed.independent, p * q + (1.0 - p) * (1.0 - q)),
        ] {
            let mc = mc_reference(&models, &scorer, &prompts, single_step(), coupling, n, derive_seed(params.seed, i))?;
            let tag = coupling.as_str();
            for (name, est, truth) in [("win", mc.win, win), ("loss", mc.loss, loss), ("tie", mc.tie, tie)] {
                let se = MeanEstimate::proportion(truth, mc.n).se;
                let z = if se > 0.0 { (est.mean - truth) / se } else if est.mean == truth { 0.0 } else { f64::INFINITY };
                res.stat(&format!("{tag}_{name}"), est.mean)
                    .stat(&format!("{tag}_{name}_closed_form"), truth)
                    .stat(&format!("{tag}_{name}_z"), z)
                    .check(z.abs() <= K);
            }
        }
        out.push(res);
    }
    Ok(report(Suite::Prop4, params, n, out))
}

/// Exact variance ordering on the 0.6 / 0.7 instance and on 100 random
/// instances, then end-to-end error curves and sample savings.
pub fn prop2(params: &SuiteParams) -> Result<SuiteReport> {
    let mut out = Vec::new();

    let inst = TwoTokenInstance::new(0.6, 0.7)?;
    let v = closed_form_variances(&inst);
    let mut exact = InstanceResult::new("exact-0.6-0.7");
    exact
        .stat("var_coupled", v.var_coupled)
        .stat("var_independent", v.var_independent)
        .stat("covariance", v.covariance)
        .check((v.var_coupled - 0.09).abs() < 1e-12)
        .check((v.var_independent - 0.45).abs() < 1e-12)
        .check((v.covariance - 0.18).abs() < 1e-12)
        .check((v.var_independent - v.var_coupled - 2.0 * v.covariance).abs() < 1e-12);
    out.push(exact);

    let mut ordering = InstanceResult::new("random-orderings");
    let mut held = 0;
    let mut min_gap = f64::INFINITY;
    for i in 0..100 {
        let mut rng = instance_rng(params.seed, Suite::Prop2, i);
        let inst = loop {
            let cand = random_two_token_instance(&mut rng, 0.01, 0.99);
            if cand.p_m != cand.p_m_prime {
                break cand;
            }
        };
        let v = closed_form_variances(&inst);
        min_gap = min_gap.min(v.var_independent - v.var_coupled);
        held += (v.var_coupled < v.var_independent) as u32;
    }
    ordering
        .stat("instances", 100.0)
        .stat("ordered", held as f64)
        .stat("min_gap", min_gap)
        .check(held == 100);
    out.push(ordering);

    let pool = params.replicates.unwrap_or(CURVE_POOL);
    let (coupled, independent) = two_token_curves(&inst, pool, params)?;
    let mut curves = InstanceResult::new("error-curves-0.6-0.7");
    curves
        .stat("pool", pool as f64)
        .stat("ground_truth_coupled", coupled.ground_truth)
        .stat("ground_truth_independent", independent.ground_truth);
    for (c, i) in coupled.points.iter().zip(&independent.points) {
        curves
            .stat(&format!("coupled_error_{}", c.size), c.mean_abs_error)
            .stat(&format!("independent_error_{}", i.size), i.mean_abs_error)
            .check(c.mean_abs_error < i.mean_abs_error);
    }
    match sample_savings(&coupled, &independent, params.target_error) {
        Ok(s) => {
            curves.stat("savings", s).check(s > 0.25);
        }
        Err(_) => {
            curves.stat("savings", f64::NAN).check(false);
        }
    }
    curves.stat("target_error", params.target_error);
    out.push(curves);

    Ok(report(Suite::Prop2, params, pool, out))
}

/// Coupled and independent error curves for a two-token instance.
pub fn two_token_curves(inst: &TwoTokenInstance, pool: u64, params: &SuiteParams) -> Result<(ErrorCurve, ErrorCurve)> {
    let (models, scorer) = inst.setup(PromptId(0))?;
    let prompts = PromptSet::single(PromptId(0));
    let exp = Experiment::new(&models, &scorer, &prompts, single_step(), NoiseSource::new(params.seed))?;
    let sizes: Vec<usize> = match &params.sizes {
        Some(s) => s.clone(),
        None => CURVE_SIZES.iter().copied().filter(|&s| s < pool as usize).collect(),
    };
    ensure!(!sizes.is_empty(), "no curve size fits a pool of {pool}");
    let sub_seed = derive_seed(params.seed, 1);
    let curve = |coupling| -> Result<ErrorCurve> {
        let set = exp.score_matrix(coupling, pool)?.pair_set(0, 1);
        Ok(error_curve(&set, &sizes, params.subsamples, sub_seed)?)
    };
    Ok((curve(Coupling::Coupled)?, curve(Coupling::Independent)?))
}

/// All content sequences of length `1..=k`.
fn content_sequences(content: &[TokenId], k: usize) -> Vec<Vec<TokenId>> {
    let mut all = Vec::new();
    let mut frontier: Vec<Vec<TokenId>> = vec![Vec::new()];
    for _ in 0..k {
        frontier = frontier
            .iter()
            .flat_map(|s| {
                content.iter().map(move |&t| {
                    let mut next = s.clone();
                    next.push(t);
                    next
                })
            })
            .collect();
        all.extend(frontier.iter().cloned());
    }
    all
}

/// Variance identity on random multi-step Markov pairs: the residual
/// `var_I - var_C - 2 cov` within 5 jackknife standard errors.
///
/// Each instance uses one prompt. Across random prompts the residual has
/// expectation `-2 Cov[R_m(U, S), R_m'(U', S)]`, which is reported as
/// `independent_covariance`.
pub fn prop1(params: &SuiteParams) -> Result<SuiteReport> {
    const INSTANCES: u64 = 10;
    const STEPS: u32 = 4;
    let n = params.replicates.unwrap_or(DEFAULT_REPLICATES);
    let ids = [PromptId(0)];
    let prompts = PromptSet::single(ids[0]);
    let cfg = GenerationConfig::new(STEPS, 1.0, Sampler::GumbelMax)?;
    let mut out = Vec::new();
    for i in 0..INSTANCES {
        let mut rng = instance_rng(params.seed, Suite::Prop1, i);
        let size = rng.random_range(3..=4u32);
        let vocab = Vocabulary::with_trailing_eos(size)?;
        let models = vec![
            random_markov(&mut rng, "m", vocab, &ids)?,
            random_markov(&mut rng, "m_prime", vocab, &ids)?,
        ];
        let content: Vec<TokenId> = vocab.content_tokens().collect();
        let rewards = ids
            .iter()
            .flat_map(|&p| content_sequences(&content, STEPS as usize).into_iter().map(move |s| (p, s)))
            .map(|(p, s)| (p, s, rng.random::<f64>()))
            .collect();
        let scorer = Scorer::reward_table(rewards)?;
        let exp = Experiment::new(&models, &scorer, &prompts, cfg, NoiseSource::new(derive_seed(params.seed, i)))?;
        let coupled = exp.score_matrix(Coupling::Coupled, n)?.pair_set(0, 1);
        let independent = exp.score_matrix(Coupling::Independent, n)?.pair_set(0, 1);
        let v = variance_decomposition(&coupled, &independent)?;
        let ratio = v.identity_residual.abs() / v.residual_se;
        let mut res = InstanceResult::new(format!("instance-{i}"));
        res.stat("vocab_size", size as f64)
            .stat("var_coupled", v.var_diff_coupled)
            .stat("var_independent", v.var_diff_independent)
            .stat("covariance", v.covariance)
            .stat("residual", v.identity_residual)
            .stat("residual_se", v.residual_se)
            .stat("residual_over_se", ratio)
            .stat(
                "independent_covariance",
                sample_covariance(&independent.scores_a(), &independent.scores_b()),
            )
            .check(v.residual_se > 0.0 && ratio < 5.0);
        out.push(res);
    }
    Ok(report(Suite::Prop1, params, n, out))
}

/// Tie inflation on epsilon-perturbed single-step pairs with distinct
/// per-token rewards. Passes when at least 18 of 20 instances show a coupled
/// tie rate above the independent one by more than 3 combined standard errors.
pub fn prop5(params: &SuiteParams) -> Result<SuiteReport> {
    const INSTANCES: u64 = 20;
    const REQUIRED: usize = 18;
    let n = params.replicates.unwrap_or(DEFAULT_REPLICATES);
    let prompts = PromptSet::single(PromptId(0));
    let mut out = Vec::new();
    for i in 0..INSTANCES {
        let mut rng = instance_rng(params.seed, Suite::Prop5, i);
        let size = rng.random_range(3..=5u32);
        let eps = rng.random_range(0.01..=0.05);
        let vocab = Vocabulary::with_trailing_eos(size)?;
        let base = random_categorical(&mut rng, "m", vocab, &[PromptId(0)])?;
        let other = perturb(&base, eps, rng.random())?.with_name("m_prime");
        let mut rewards: Vec<f64> = (0..size - 1).map(|k| k as f64).collect();
        rewards.shuffle(&mut rng);
        let scorer = Scorer::reward_table(
            rewards
                .iter()
                .enumerate()
                .map(|(t, &r)| (PromptId(0), vec![TokenId(t as u32)], r))
                .collect(),
        )?;
        let models = vec![base, other];
        let distance = coupled_core::model_distance(&models[0], &models[1], &prompts)?;
        let exp = Experiment::new(&models, &scorer, &prompts, single_step(), NoiseSource::new(derive_seed(params.seed, i)))?;
        let tol = scorer.default_tolerance();
        let c = exp.score_matrix(Coupling::Coupled, n)?;
        let ind = exp.score_matrix(Coupling::Independent, n)?;
        let rc = c.win_rates(0, 1, tol)?;
        let ri = ind.win_rates(0, 1, tol)?;
        let se = (MeanEstimate::proportion(rc.tie_rate, rc.n).se.powi(2)
            + MeanEstimate::proportion(ri.tie_rate, ri.n).se.powi(2))
        .sqrt();
        let gap = rc.tie_rate - ri.tie_rate;
        let v = variance_decomposition(&c.pair_set(0, 1), &ind.pair_set(0, 1))?;
        let mut res = InstanceResult::new(format!("instance-{i}"));
        res.stat("vocab_size", size as f64)
            .stat("epsilon", eps)
            .stat("distance", distance)
            .stat("coupled_tie", rc.tie_rate)
            .stat("independent_tie", ri.tie_rate)
            .stat("combined_se", se)
            .stat("gap_over_se", gap / se)
            .stat("var_coupled", v.var_diff_coupled)
            .stat("var_independent", v.var_diff_independent)
            .check(gap > 3.0 * se);
        out.push(res);
    }
    let mut rep = report(Suite::Prop5, params, n, out);
    rep.passed = rep.instances_passed() >= REQUIRED;
    rep.summary = format!("{} (need {REQUIRED})", rep.summary);
    Ok(rep)
}

/// Shared-noise two-token runs never show the lower-probability model alone
/// emitting the favored token; a stability-violation search finds nothing for
/// Gumbel-Max and at least one case for inverse-transform sampling.
pub fn stability(params: &SuiteParams) -> Result<SuiteReport> {
    const INSTANCES: u64 = 20;
    const SEARCH_PAIRS: u64 = 200;
    const SEARCH_GRID: u32 = 49;
    const SEARCH_VOCAB: usize = 3;
    let n = params.replicates.unwrap_or(DEFAULT_REPLICATES);
    let prompts = PromptSet::single(PromptId(0));
    let mut out = Vec::new();
    for i in 0..INSTANCES {
        let inst = random_two_token_instance(&mut instance_rng(params.seed, Suite::Stability, i), 0.05, 0.95);
        let (models, scorer) = inst.setup(PromptId(0))?;
        let exp = Experiment::new(&models, &scorer, &prompts, single_step(), NoiseSource::new(derive_seed(params.seed, i)))?;
        let m = exp.score_matrix(Coupling::Coupled, n)?;
        // Model 0 has the lower favored probability.
        let events = (0..m.n_replicates()).filter(|&r| m.score(r, 0) == 1.0 && m.score(r, 1) == 0.0).count();
        let mut res = InstanceResult::new(format!("instance-{i}"));
        res.stat("p_m", inst.p_m)
            .stat("p_m_prime", inst.p_m_prime)
            .stat("events", events as f64)
            .check(events == 0);
        out.push(res);
    }

    let search = |sampler| search_stability_violation(sampler, SEARCH_VOCAB, SEARCH_PAIRS, SEARCH_GRID, derive_seed(params.seed, 2));
    let gumbel = search(Sampler::GumbelMax)?;
    let inverse = search(Sampler::InverseTransform)?;
    out.push(search_result("search-gumbel-max", &gumbel, gumbel.violations == 0));
    out.push(search_result("search-inverse-transform", &inverse, inverse.violations >= 1));
    Ok(report(Suite::Stability, params, n, out))
}

fn search_result(id: &str, s: &StabilitySearch, ok: bool) -> InstanceResult {
    let mut res = InstanceResult::new(id);
    res.stat("checked", s.checked as f64)
        .stat("violations", s.violations as f64)
        .check(ok);
    if let Some(v) = &s.first {
        for (k, p) in v.d.probs().iter().enumerate() {
            res.stat(&format!("first_d_{k}"), *p);
        }
        for (k, p) in v.d_prime.probs().iter().enumerate() {
            res.stat(&format!("first_d_prime_{k}"), *p);
        }
        res.stat("first_uniform", v.noise.uniform)
            .stat("first_sampled_by_m", v.sampled_by_m.0 as f64)
            .stat("first_sampled_by_m_prime", v.sampled_by_m_prime.0 as f64);
    }
    res
}

pub const MARGINAL_TV: f64 = 0.02;
/// Content-token counts; with end-of-sequence the largest vocabulary has 8 tokens.
const MARGINAL_VOCABS: [u32; 4] = [2, 3, 5, 7];

/// Total-variation distance between two count vectors of equal total.
fn tv_distance(a: &[u64], b: &[u64], n: u64) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>() / (2.0 * n as f64)
}

/// Per-model output frequencies agree across coupling regimes, and each
/// sampler reproduces its input distribution within 4 standard errors.
pub fn marginals(params: &SuiteParams) -> Result<SuiteReport> {
    let n = params.replicates.unwrap_or(DEFAULT_REPLICATES);
    let prompts = PromptSet::single(PromptId(0));
    let mut out = Vec::new();
    for (i, &size) in MARGINAL_VOCABS.iter().enumerate() {
        let i = i as u64;
        let mut rng = instance_rng(params.seed, Suite::Marginals, i);
        // `size` content tokens plus end-of-sequence.
        let vocab = Vocabulary::with_trailing_eos(size + 1)?;
        let models = vec![
            random_categorical(&mut rng, "m", vocab, &[PromptId(0)])?,
            random_categorical(&mut rng, "m_prime", vocab, &[PromptId(0)])?,
        ];
        let scorer = Scorer::correctness(vec![(PromptId(0), vec![vec![TokenId(0)]])])?;
        let exp = Experiment::new(&models, &scorer, &prompts, single_step(), NoiseSource::new(derive_seed(params.seed, i)))?;
        let counts = |coupling| -> Result<Vec<Vec<u64>>> {
            let firsts = exp.map_replicates(coupling, n, |_, _, outs| {
                outs.iter().map(|s| s.tokens()[0].index()).collect::<Vec<_>>()
            })?;
            let mut c = vec![vec![0u64; size as usize + 1]; models.len()];
            for row in firsts {
                for (j, t) in row.into_iter().enumerate() {
                    c[j][t] += 1;
                }
            }
            Ok(c)
        };
        let coupled = counts(Coupling::Coupled)?;
        let independent = counts(Coupling::Independent)?;
        let mut res = InstanceResult::new(format!("coupling-vocab-{size}"));
        res.stat("content_tokens", size as f64);
        for (j, m) in models.iter().enumerate() {
            let tv = tv_distance(&coupled[j], &independent[j], n);
            res.stat(&format!("tv_{}", m.name()), tv).check(tv <= MARGINAL_TV);
        }
        out.push(res);
    }

    let src = NoiseSource::with_namespace(derive_seed(params.seed, 3), Namespace::Sampling);
    for sampler in [Sampler::GumbelMax, Sampler::InverseTransform] {
        for (i, &size) in MARGINAL_VOCABS.iter().enumerate() {
            let mut rng = instance_rng(params.seed, Suite::Marginals, 100 + i as u64);
            let support: Vec<TokenId> = (0..size).map(TokenId).collect();
            let d = coupled_core::models::random_distribution(&mut rng, size as usize, &support)?;
            let mut counts = vec![0u64; size as usize];
            for r in 0..n {
                let block = src.block(NoiseKey::new(PromptId(i as u32), r, Stream::Shared, 1), size as usize);
                counts[sampler.sample(&d, &block)?.index()] += 1;
            }
            let name = match sampler {
                Sampler::GumbelMax => "gumbel-max",
                Sampler::InverseTransform => "inverse-transform",
            };
            let mut res = InstanceResult::new(format!("sampler-{name}-vocab-{size}"));
            let mut worst: f64 = 0.0;
            for (t, &c) in counts.iter().enumerate() {
                let z = sampler_z(&d, t, c, n);
                worst = worst.max(z.abs());
            }
            res.stat("max_abs_z", worst).check(worst <= 4.0);
            out.push(res);
        }
    }
    Ok(report(Suite::Marginals, params, n, out))
}

fn sampler_z(d: &NextTokenDistribution, t: usize, count: u64, n: u64) -> f64 {
    let p = d.probs()[t];
    let est = MeanEstimate::proportion(p, n as usize);
    (count as f64 / n as f64 - p) / est.se
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(replicates: u64) -> SuiteParams {
        SuiteParams {
            replicates: Some(replicates),
            ..SuiteParams::default()
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("prop3".parse::<Suite>().is_err());
    }

    #[test]
    fn content_sequences_enumerates_all_lengths() {
        let t = [TokenId(0), TokenId(1)];
        let seqs = content_sequences(&t, 3);
        assert_eq!(seqs.len(), 2 + 4 + 8);
        assert_eq!(seqs[0], vec![TokenId(0)]);
    }

    #[test]
    fn tv_of_equal_counts_is_zero() {
        assert_eq!(tv_distance(&[3, 7], &[3, 7], 10), 0.0);
        assert_eq!(tv_distance(&[10, 0], &[0, 10], 10), 1.0);
    }

    #[test]
    fn small_suites_are_deterministic() {
        let a = stability(&quick(2_000)).unwrap();
        let b = stability(&quick(2_000)).unwrap();
        assert_eq!(crate::output::to_json(&a).unwrap(), crate::output::to_json(&b).unwrap());
        assert!(a.passed);
    }

    #[test]
    fn prop4_small_run_reports_all_statistics() {
        let r = prop4(&quick(10_000)).unwrap();
        assert_eq!(r.instances.len(), 25);
        assert!(r.instances[0].stats.contains_key("independent_tie_z"));
    }
}
