//! Subcommand implementations. Each writes its files under `out` and returns
//! whether its checks passed.

use std::path::Path;

use anyhow::{bail, ensure, Result};
use coupled_core::estimators::{
    error_curve, normal_ci, rank_from_cis, sample_savings, two_proportion_z_test, wald_ci, ErrorCurve,
    MeanEstimate, RankEntry, WinRateReport,
};
use coupled_core::oracle::appendix_example;
use coupled_core::{derive_seed, Coupling, Experiment as Runner, GenerationConfig, NoiseSource, ScoreMatrix};
use serde::Serialize;

use crate::config::Experiment;
use crate::output::{fmt17, write_json, Csv};
use crate::suites::{self, Suite, SuiteParams, SuiteReport, CURVE_SIZES};

pub fn verify(suite: Suite, params: &SuiteParams, out: &Path) -> Result<SuiteReport> {
    let report = suites::run(suite, params)?;
    write_json(&out.join(format!("verify_{suite}.json")), &report)?;
    Ok(report)
}

pub const APPENDIX_INDEPENDENT: [f64; 3] = [0.1545, 0.15675, 0.16225];
pub const APPENDIX_COUPLED: [f64; 3] = [0.0525, 0.0225, 0.03];
pub const APPENDIX_REPLICATES: u64 = 1_000_000;
const EXACT_TOL: f64 = 1e-12;
const BAND: f64 = 3.0;

#[derive(Debug, Clone, Serialize)]
pub struct McCheck {
    pub model: String,
    pub closed_form: f64,
    pub estimate: f64,
    pub se: f64,
    pub in_band: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AppendixReport {
    pub probs: [[f64; 3]; 2],
    pub independent: [f64; 3],
    pub coupled: [f64; 3],
    pub independent_ranking: Vec<String>,
    pub coupled_ranking: Vec<String>,
    pub rank_flip: bool,
    pub exact_match: bool,
    pub seed: u64,
    pub replicates: u64,
    pub mc_independent: Vec<McCheck>,
    pub mc_coupled: Vec<McCheck>,
    pub passed: bool,
}

fn names(order: &[usize]) -> Vec<String> {
    order.iter().map(|k| format!("m{}", k + 1)).collect()
}

/// Closed-form table of the three-model example plus a Monte Carlo check of
/// every average win rate within 3 standard errors.
pub fn reproduce_appendix(seed: u64, replicates: u64, out: &Path) -> Result<AppendixReport> {
    let table = appendix_example();
    let exact_match = table
        .independent
        .iter()
        .zip(APPENDIX_INDEPENDENT)
        .chain(table.coupled.iter().zip(APPENDIX_COUPLED))
        .all(|(a, b)| (a - b).abs() <= EXACT_TOL);
    let expected_flip = table.independent_ranking() == [2, 1, 0] && table.coupled_ranking() == [0, 2, 1];

    let (models, scorer, prompts) = table.setup()?;
    let cfg = GenerationConfig::default();
    let runner = Runner::new(&models, &scorer, &prompts, cfg, NoiseSource::new(seed))?;
    let check = |coupling, truth: [f64; 3]| -> Result<Vec<McCheck>> {
        let m = runner.score_matrix(coupling, replicates)?;
        (0..3)
            .map(|k| {
                let est = m.average_win_rate(k, scorer.default_tolerance())?;
                Ok(McCheck {
                    model: models[k].name().to_string(),
                    closed_form: truth[k],
                    estimate: est.mean,
                    se: est.se,
                    in_band: est.covers(truth[k], BAND),
                })
            })
            .collect()
    };
    let mc_independent = check(Coupling::Independent, table.independent)?;
    let mc_coupled = check(Coupling::Coupled, table.coupled)?;
    let passed = exact_match
        && table.rank_flip()
        && expected_flip
        && mc_independent.iter().chain(&mc_coupled).all(|c| c.in_band);

    let report = AppendixReport {
        probs: table.probs,
        independent: table.independent,
        coupled: table.coupled,
        independent_ranking: names(&table.independent_ranking()),
        coupled_ranking: names(&table.coupled_ranking()),
        rank_flip: table.rank_flip(),
        exact_match,
        seed,
        replicates,
        mc_independent,
        mc_coupled,
        passed,
    };
    write_json(&out.join("appendix.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveSummary {
    pub regime: String,
    pub ground_truth: f64,
    pub sizes: Vec<usize>,
    pub mean_abs_error: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveReport {
    pub model_a: String,
    pub model_b: String,
    pub seed: u64,
    pub pool: u64,
    pub subsamples: usize,
    pub target_error: f64,
    /// `1 - n_coupled / n_independent`; null when a regime is missing or
    /// either curve never reaches the target.
    pub savings: Option<f64>,
    pub curves: Vec<CurveSummary>,
}

/// Default size grid: the standard sizes that fit in the pool.
pub fn default_sizes(pool: u64) -> Vec<usize> {
    CURVE_SIZES.iter().copied().filter(|&s| s as u64 <= pool).collect()
}

pub fn error_curve_cmd(exp: &Experiment, out: &Path) -> Result<CurveReport> {
    let (a, b) = match &exp.run.pair {
        Some([a, b]) => (exp.model_index(a)?, exp.model_index(b)?),
        None => {
            ensure!(exp.models.len() >= 2, "error-curve needs at least 2 models");
            (0, 1)
        }
    };
    let pool = exp.run.replicates;
    let sizes = exp.run.sizes.clone().unwrap_or_else(|| default_sizes(pool));
    ensure!(!sizes.is_empty(), "no size in the grid fits a pool of {pool}");
    if let Some(s) = sizes.iter().find(|&&s| s as u64 > pool) {
        bail!("size {s} exceeds the pool of {pool} replicates");
    }

    let pair = [exp.models[a].clone(), exp.models[b].clone()];
    let runner = Runner::new(&pair, &exp.scorer, &exp.prompts, exp.generation, NoiseSource::new(exp.run.seed))?;
    let sub_seed = derive_seed(exp.run.seed, 1);
    let mut curves: Vec<(Coupling, ErrorCurve)> = Vec::new();
    for coupling in exp.regimes() {
        let set = runner.score_matrix(coupling, pool)?.pair_set(0, 1);
        curves.push((coupling, error_curve(&set, &sizes, exp.run.subsamples, sub_seed)?));
    }

    let mut csv = Csv::new(&["size", "mean_abs_error", "ci_low", "ci_high", "regime"]);
    for (coupling, curve) in &curves {
        for p in &curve.points {
            csv.row(&[
                p.size.to_string(),
                fmt17(p.mean_abs_error),
                fmt17(p.ci_low),
                fmt17(p.ci_high),
                coupling.to_string(),
            ]);
        }
    }
    csv.write(&out.join("error_curve.csv"))?;

    let find = |c: Coupling| curves.iter().find(|(k, _)| *k == c).map(|(_, v)| v);
    let savings = match (find(Coupling::Coupled), find(Coupling::Independent)) {
        (Some(c), Some(i)) => sample_savings(c, i, exp.run.target_error).ok(),
        _ => None,
    };
    let report = CurveReport {
        model_a: pair[0].name().to_string(),
        model_b: pair[1].name().to_string(),
        seed: exp.run.seed,
        pool,
        subsamples: exp.run.subsamples,
        target_error: exp.run.target_error,
        savings,
        curves: curves
            .iter()
            .map(|(coupling, c)| CurveSummary {
                regime: coupling.to_string(),
                ground_truth: c.ground_truth,
                sizes: c.sizes(),
                mean_abs_error: c.points.iter().map(|p| p.mean_abs_error).collect(),
                ci_low: c.points.iter().map(|p| p.ci_low).collect(),
                ci_high: c.points.iter().map(|p| p.ci_high).collect(),
            })
            .collect(),
    };
    write_json(&out.join("error_curve.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct PairRow {
    pub regime: String,
    pub model_a: String,
    pub model_b: String,
    pub n: usize,
    pub win_rate: f64,
    pub win_ci: (f64, f64),
    pub tie_rate: f64,
    pub tie_ci: (f64, f64),
    pub loss_rate: f64,
    pub loss_ci: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct TestRow {
    pub model_a: String,
    pub model_b: String,
    pub coupled_win: f64,
    pub independent_win: f64,
    pub win_z: f64,
    pub win_p_value: f64,
    pub coupled_tie: f64,
    pub independent_tie: f64,
    pub tie_z: f64,
    pub tie_p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankRow {
    pub regime: String,
    pub model: String,
    pub average_win_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub seed: u64,
    pub replicates: u64,
    pub level: f64,
    pub pairs: Vec<PairRow>,
    pub tests: Vec<TestRow>,
    pub ranks: Vec<RankRow>,
}

impl RankReport {
    pub fn ranks_for(&self, regime: Coupling) -> Vec<usize> {
        self.ranks
            .iter()
            .filter(|r| r.regime == regime.as_str())
            .map(|r| r.rank)
            .collect()
    }
}

/// Pairwise win/tie rates, coupled-vs-independent tests, average win rates and
/// interval-based ranks for every model in the configuration.
pub fn rank_cmd(exp: &Experiment, out: &Path) -> Result<RankReport> {
    ensure!(exp.models.len() >= 2, "rank needs at least 2 models, got {}", exp.models.len());
    let level = exp.run.level;
    let n = exp.run.replicates;
    let tol = exp.scorer.default_tolerance();
    let runner = Runner::new(&exp.models, &exp.scorer, &exp.prompts, exp.generation, NoiseSource::new(exp.run.seed))?;
    let matrices: Vec<ScoreMatrix> = exp
        .regimes()
        .into_iter()
        .map(|c| runner.score_matrix(c, n))
        .collect::<Result<_, _>>()?;
    let name = |k: usize| exp.models[k].name().to_string();
    let k = exp.models.len();
    let ordered: Vec<(usize, usize)> = (0..k).flat_map(|a| (0..k).filter(move |&b| b != a).map(move |b| (a, b))).collect();

    let mut pairs = Vec::new();
    let mut reports: Vec<(Coupling, WinRateReport)> = Vec::new();
    for m in &matrices {
        for &(a, b) in &ordered {
            let r = m.win_rates(a, b, tol)?;
            pairs.push(PairRow {
                regime: m.coupling.to_string(),
                model_a: name(a),
                model_b: name(b),
                n: r.n,
                win_rate: r.win_rate,
                win_ci: wald_ci(r.win_rate, r.n, level)?,
                tie_rate: r.tie_rate,
                tie_ci: wald_ci(r.tie_rate, r.n, level)?,
                loss_rate: r.loss_rate,
                loss_ci: wald_ci(r.loss_rate, r.n, level)?,
            });
            reports.push((m.coupling, r));
        }
    }

    let mut tests = Vec::new();
    let lookup = |c: Coupling, a: usize, b: usize| {
        reports
            .iter()
            .find(|(k, r)| *k == c && r.model_a == a && r.model_b == b)
            .map(|(_, r)| *r)
    };
    for &(a, b) in &ordered {
        if let (Some(c), Some(i)) = (lookup(Coupling::Coupled, a, b), lookup(Coupling::Independent, a, b)) {
            let win = two_proportion_z_test(c.win_rate, c.n, i.win_rate, i.n)?;
            let tie = two_proportion_z_test(c.tie_rate, c.n, i.tie_rate, i.n)?;
            tests.push(TestRow {
                model_a: name(a),
                model_b: name(b),
                coupled_win: c.win_rate,
                independent_win: i.win_rate,
                win_z: win.z,
                win_p_value: win.p_value,
                coupled_tie: c.tie_rate,
                independent_tie: i.tie_rate,
                tie_z: tie.z,
                tie_p_value: tie.p_value,
            });
        }
    }

    let mut ranks = Vec::new();
    for m in &matrices {
        let entries = (0..k)
            .map(|j| {
                let est: MeanEstimate = m.average_win_rate(j, tol)?;
                let (lo, hi) = normal_ci(&est, level)?;
                Ok(RankEntry {
                    label: name(j),
                    average: est.mean,
                    ci_low: lo.max(0.0),
                    ci_high: hi.min(1.0),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for row in rank_from_cis(&entries).rows {
            ranks.push(RankRow {
                regime: m.coupling.to_string(),
                model: row.label,
                average_win_rate: row.average,
                ci_low: row.ci_low,
                ci_high: row.ci_high,
                rank: row.rank,
            });
        }
    }

    let mut csv = Csv::new(&[
        "regime", "model_a", "model_b", "n", "win_rate", "win_ci_low", "win_ci_high", "tie_rate", "tie_ci_low",
        "tie_ci_high", "loss_rate", "loss_ci_low", "loss_ci_high",
    ]);
    for p in &pairs {
        csv.row(&[
            p.regime.clone(),
            p.model_a.clone(),
            p.model_b.clone(),
            p.n.to_string(),
            fmt17(p.win_rate),
            fmt17(p.win_ci.0),
            fmt17(p.win_ci.1),
            fmt17(p.tie_rate),
            fmt17(p.tie_ci.0),
            fmt17(p.tie_ci.1),
            fmt17(p.loss_rate),
            fmt17(p.loss_ci.0),
            fmt17(p.loss_ci.1),
        ]);
    }
    csv.write(&out.join("rank_pairs.csv"))?;

    let mut csv = Csv::new(&[
        "model_a", "model_b", "coupled_win", "independent_win", "win_z", "win_p_value", "coupled_tie",
        "independent_tie", "tie_z", "tie_p_value",
    ]);
    for t in &tests {
        csv.row(&[
            t.model_a.clone(),
            t.model_b.clone(),
            fmt17(t.coupled_win),
            fmt17(t.independent_win),
            fmt17(t.win_z),
            fmt17(t.win_p_value),
            fmt17(t.coupled_tie),
            fmt17(t.independent_tie),
            fmt17(t.tie_z),
            fmt17(t.tie_p_value),
        ]);
    }
    csv.write(&out.join("rank_tests.csv"))?;

    let mut csv = Csv::new(&["regime", "model", "average_win_rate", "ci_low", "ci_high", "rank"]);
    for r in &ranks {
        csv.row(&[
            r.regime.clone(),
            r.model.clone(),
            fmt17(r.average_win_rate),
            fmt17(r.ci_low),
            fmt17(r.ci_high),
            r.rank.to_string(),
        ]);
    }
    csv.write(&out.join("rank_table.csv"))?;

    let report = RankReport {
        seed: exp.run.seed,
        replicates: n,
        level,
        pairs,
        tests,
        ranks,
    };
    write_json(&out.join("rank.json"), &report)?;
    Ok(report)
}
