use coupled_core::estimators::{sample_variance, MeanEstimate};
use coupled_core::models::{random_categorical, random_distribution, random_markov};
use coupled_core::oracle::{closed_form_variances, two_token_coupled_joint, TwoTokenInstance};
use coupled_core::{
    generate, perturb, temperature_scale, Coupling, Experiment, GenerationConfig, ModelSpec, NextTokenDistribution,
    NoiseSource, PromptId, PromptSet, Sampler, Scorer, TokenId, Vocabulary,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const Q: PromptId = PromptId(0);

fn single_step() -> GenerationConfig {
    GenerationConfig::new(2, 1.0, Sampler::GumbelMax).unwrap()
}

fn first_token_counts(exp: &Experiment, coupling: Coupling, n: u64, size: usize) -> Vec<Vec<u64>> {
    let firsts = exp
        .map_replicates(coupling, n, |_, _, outs| outs.iter().map(|s| s.tokens()[0].index()).collect::<Vec<_>>())
        .unwrap();
    let mut counts = vec![vec![0u64; size]; exp.models.len()];
    for row in firsts {
        for (j, t) in row.into_iter().enumerate() {
            counts[j][t] += 1;
        }
    }
    counts
}

#[test]
fn marginals_do_not_depend_on_coupling() {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for size in [3u32, 6, 8] {
        let vocab = Vocabulary::with_trailing_eos(size).unwrap();
        let models = vec![
            random_categorical(&mut rng, "a", vocab, &[Q]).unwrap(),
            random_categorical(&mut rng, "b", vocab, &[Q]).unwrap(),
        ];
        let scorer = Scorer::correctness(vec![(Q, vec![vec![TokenId(0)]])]).unwrap();
        let prompts = PromptSet::single(Q);
        let cfg = GenerationConfig::new(2, 0.7, Sampler::GumbelMax).unwrap();
        let exp = Experiment::new(&models, &scorer, &prompts, cfg, NoiseSource::new(size as u64)).unwrap();
        let c = first_token_counts(&exp, Coupling::Coupled, n, size as usize);
        let i = first_token_counts(&exp, Coupling::Independent, n, size as usize);
        for j in 0..2 {
            let tv: f64 = c[j].iter().zip(&i[j]).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>()
                / (2.0 * n as f64);
            assert!(tv <= 0.02, "vocab {size} model {j}: tv {tv}");
        }
    }
}

#[test]
fn generated_frequencies_follow_the_tempered_distribution() {
    let n = 100_000u64;
    let vocab = Vocabulary::with_trailing_eos(4).unwrap();
    let d = NextTokenDistribution::new(vec![0.5, 0.3, 0.2, 0.0]).unwrap();
    let model = ModelSpec::categorical("m", vocab, vec![(Q, d.clone())]).unwrap();
    let noise = NoiseSource::new(9);
    for sampler in [Sampler::GumbelMax, Sampler::InverseTransform] {
        let cfg = GenerationConfig::new(3, 0.5, sampler).unwrap();
        let target = temperature_scale(&d, 0.5).unwrap();
        let mut counts = [0u64; 4];
        for r in 0..n {
            let seq = generate(&model, Q, r, &noise, &cfg).unwrap();
            assert!(seq.is_terminated());
            counts[seq.tokens()[0].index()] += 1;
        }
        for (t, &c) in counts.iter().enumerate() {
            let p = target.probs()[t];
            let est = MeanEstimate::proportion(c as f64 / n as f64, n as usize);
            if p == 0.0 {
                assert_eq!(c, 0);
            } else {
                let se = MeanEstimate::proportion(p, n as usize).se;
                assert!((est.mean - p).abs() <= 4.0 * se, "{sampler:?} token {t}: {} vs {p}", est.mean);
            }
        }
    }
}

#[test]
fn identical_models_disagree_half_the_time_when_independent() {
    let n = 100_000u64;
    let vocab = Vocabulary::with_trailing_eos(3).unwrap();
    let d = NextTokenDistribution::new(vec![0.5, 0.5, 0.0]).unwrap();
    let m = ModelSpec::categorical("m", vocab, vec![(Q, d)]).unwrap();
    let models = vec![m.clone(), m.with_name("m2")];
    let scorer = Scorer::correctness(vec![(Q, vec![vec![TokenId(0)]])]).unwrap();
    let prompts = PromptSet::single(Q);
    let exp = Experiment::new(&models, &scorer, &prompts, single_step(), NoiseSource::new(1)).unwrap();
    let disagree = |coupling| {
        exp.map_replicates(coupling, n, |_, _, outs| (outs[0] != outs[1]) as u8 as f64)
            .unwrap()
    };
    let ind = MeanEstimate::from_values(&disagree(Coupling::Independent)).unwrap();
    assert!(ind.covers(0.5, 3.0), "{ind:?}");
    assert!(disagree(Coupling::Coupled).iter().all(|&x| x == 0.0));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let vocab = Vocabulary::with_trailing_eos(4).unwrap();
    let ids = [PromptId(0), PromptId(1)];
    let models = vec![
        random_markov(&mut rng, "a", vocab, &ids).unwrap(),
        random_markov(&mut rng, "b", vocab, &ids).unwrap(),
    ];
    let scorer = Scorer::noisy(
        Scorer::correctness(vec![(ids[0], vec![vec![TokenId(1)]]), (ids[1], vec![vec![TokenId(2)]])]).unwrap(),
        0.3,
        4,
    )
    .unwrap();
    let prompts = PromptSet::uniform(ids).unwrap();
    let cfg = GenerationConfig::new(5, 0.8, Sampler::GumbelMax).unwrap();
    let exp = Experiment::new(&models, &scorer, &prompts, cfg, NoiseSource::new(23)).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            (
                exp.score_matrix(Coupling::Coupled, 5_000).unwrap(),
                exp.score_matrix(Coupling::Independent, 5_000).unwrap(),
            )
        })
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one, many);
}

/// Models close to each other in sup norm: coupled sampling gives a smaller
/// variance of the score difference than independent sampling.
#[test]
fn similar_models_have_lower_coupled_variance() {
    let n = 20_000;
    let ids = [PromptId(0)];
    let prompts = PromptSet::single(ids[0]);
    let cfg = GenerationConfig::new(3, 1.0, Sampler::GumbelMax).unwrap();
    for instance in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let size = rng.random_range(3..=5u32);
        let vocab = Vocabulary::with_trailing_eos(size).unwrap();
        let base = random_markov(&mut rng, "m", vocab, &ids).unwrap();
        for eps in [0.01, 0.05] {
            let other = perturb(&base, eps, instance).unwrap().with_name("m_prime");
            let content: Vec<TokenId> = vocab.content_tokens().collect();
            let sequences = content
                .iter()
                .map(|&t| vec![t])
                .chain(content.iter().flat_map(|&a| content.iter().map(move |&b| vec![a, b])));
            let rewards = sequences.map(|s| (ids[0], s, rng.random::<f64>())).collect();
            let scorer = Scorer::reward_table(rewards).unwrap();
            let models = vec![base.clone(), other];
            let exp = Experiment::new(&models, &scorer, &prompts, cfg, NoiseSource::new(instance)).unwrap();
            let var = |c| sample_variance(&exp.score_matrix(c, n).unwrap().pair_set(0, 1).differences());
            let (vc, vi) = (var(Coupling::Coupled), var(Coupling::Independent));
            assert!(vc < vi, "instance {instance} eps {eps}: coupled {vc} independent {vi}");
        }
    }
}

#[test]
fn random_two_token_pairs_order_variances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let p: f64 = rng.random_range(0.01..0.99);
        let q: f64 = rng.random_range(0.01..0.99);
        if p == q {
            continue;
        }
        let v = closed_form_variances(&TwoTokenInstance::new(p, q).unwrap());
        assert!(v.var_coupled < v.var_independent, "p={p} q={q}");
        assert!((v.var_independent - v.var_coupled - 2.0 * v.covariance).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn tempered_rows_stay_valid(seed in any::<u64>(), size in 2usize..9, tau in 0.05f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(1..=size);
        let support: Vec<TokenId> = (0..k as u32).map(TokenId).collect();
        let d = random_distribution(&mut rng, size, &support).unwrap();
        let t = temperature_scale(&d, tau).unwrap();
        let sum: f64 = t.probs().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        for (a, b) in d.probs().iter().zip(t.probs()) {
            prop_assert!(*b >= 0.0);
            prop_assert_eq!(*a == 0.0, *b == 0.0);
        }
    }

    #[test]
    fn coupled_joint_has_min_diagonal_and_a_zero_cell(p in 0.001f64..0.999, q in 0.001f64..0.999) {
        let j = two_token_coupled_joint(p, q);
        prop_assert!((j[0][0] - p.min(q)).abs() < 1e-12);
        prop_assert!((j[0][0] + j[0][1] - p).abs() < 1e-12);
        prop_assert!((j[0][0] + j[1][0] - q).abs() < 1e-12);
        if p <= q {
            prop_assert_eq!(j[0][1], 0.0);
        } else {
            prop_assert_eq!(j[1][0], 0.0);
        }
    }
}
