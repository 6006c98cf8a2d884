use coupled_core::oracle::{
    closed_form_variances, closed_form_win_rates, mc_reference, two_token_coupled_joint, two_token_product_joint,
    TwoTokenInstance,
};
use coupled_core::estimators::MeanEstimate;
use coupled_core::{Coupling, GenerationConfig, PromptId, PromptSet};

const N: u64 = 1_000_000;

fn cfg() -> GenerationConfig {
    GenerationConfig::default()
}

/// `|est - truth| <= 4 se`, with the standard error taken from the truth so
/// that a zero-probability cell must be observed exactly zero times.
fn within_4se(est: f64, truth: f64, n: usize) -> bool {
    let se = MeanEstimate::proportion(truth, n).se;
    (est - truth).abs() <= 4.0 * se
}

fn check_joint(p: f64, q: f64, coupling: Coupling, seed: u64) {
    let inst = TwoTokenInstance::new(p, q).unwrap();
    let (models, scorer) = inst.setup(PromptId(0)).unwrap();
    let mc = mc_reference(&models, &scorer, &PromptSet::single(PromptId(0)), cfg(), coupling, N, seed).unwrap();
    let joint = match coupling {
        Coupling::Coupled => two_token_coupled_joint(p, q),
        Coupling::Independent => two_token_product_joint(p, q),
    };
    // Token 0 is the favored one and scores 1.
    for (i, a) in [(0, 1.0), (1, 0.0)] {
        for (j, b) in [(0, 1.0), (1, 0.0)] {
            let cell = mc.cell(a, b);
            assert!(
                within_4se(cell.mean, joint[i][j], mc.n),
                "p={p} q={q} {coupling} cell ({i},{j}): mc {} vs {}",
                cell.mean,
                joint[i][j]
            );
        }
    }
}

#[test]
fn coupled_joint_matches_logistic_law() {
    for (k, (p, q)) in [(0.6, 0.7), (0.2, 0.9), (0.85, 0.3)].into_iter().enumerate() {
        check_joint(p, q, Coupling::Coupled, 100 + k as u64);
    }
}

#[test]
fn independent_joint_is_the_product() {
    for (k, (p, q)) in [(0.6, 0.7), (0.45, 0.1)].into_iter().enumerate() {
        check_joint(p, q, Coupling::Independent, 200 + k as u64);
    }
}

#[test]
fn closed_form_win_rates_match_simulation() {
    let inst = TwoTokenInstance::new(0.4, 0.5).unwrap();
    let closed = closed_form_win_rates(&inst);
    assert_eq!(closed.independent, (0.4 * 0.5, 0.5 * 0.6));
    let (models, scorer) = inst.setup(PromptId(0)).unwrap();
    let prompts = PromptSet::single(PromptId(0));
    for (coupling, (win, loss)) in [
        (Coupling::Coupled, closed.coupled),
        (Coupling::Independent, closed.independent),
    ] {
        let mc = mc_reference(&models, &scorer, &prompts, cfg(), coupling, N, 7).unwrap();
        assert!(within_4se(mc.win.mean, win, mc.n), "{coupling} win {} vs {win}", mc.win.mean);
        assert!(within_4se(mc.loss.mean, loss, mc.n), "{coupling} loss {} vs {loss}", mc.loss.mean);
    }
}

#[test]
fn variances_match_simulation() {
    let inst = TwoTokenInstance::new(0.6, 0.7).unwrap();
    let v = closed_form_variances(&inst);
    let (models, scorer) = inst.setup(PromptId(0)).unwrap();
    let prompts = PromptSet::single(PromptId(0));
    let c = mc_reference(&models, &scorer, &prompts, cfg(), Coupling::Coupled, N, 11).unwrap();
    let i = mc_reference(&models, &scorer, &prompts, cfg(), Coupling::Independent, N, 12).unwrap();
    assert!(c.var_diff.covers(v.var_coupled, 4.0), "{:?} vs {}", c.var_diff, v.var_coupled);
    assert!(i.var_diff.covers(v.var_independent, 4.0), "{:?} vs {}", i.var_diff, v.var_independent);
    assert!(c.mean_diff.covers(-0.1, 4.0));
    assert!(i.mean_diff.covers(-0.1, 4.0));
}

#[test]
fn identical_models_always_tie_when_coupled() {
    let inst = TwoTokenInstance::new(0.35, 0.35).unwrap();
    let (models, scorer) = inst.setup(PromptId(0)).unwrap();
    let mc = mc_reference(
        &models,
        &scorer,
        &PromptSet::single(PromptId(0)),
        cfg(),
        Coupling::Coupled,
        20_000,
        3,
    )
    .unwrap();
    assert_eq!(mc.tie.mean, 1.0);
    assert_eq!(mc.tie.se, 0.0);
}

#[test]
fn reference_rejects_small_runs() {
    let inst = TwoTokenInstance::new(0.5, 0.6).unwrap();
    let (models, scorer) = inst.setup(PromptId(0)).unwrap();
    let r = mc_reference(&models, &scorer, &PromptSet::single(PromptId(0)), cfg(), Coupling::Coupled, 9_999, 0);
    assert!(r.is_err());
}
