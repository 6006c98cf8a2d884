//! Acceptance gate: one pass/fail line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use coupled_cli::suites::{self, SuiteParams, SuiteReport, CURVE_POOL, CURVE_SIZES, DEFAULT_REPLICATES};
use coupled_core::estimators::sample_savings;
use coupled_core::oracle::{appendix_example, closed_form_variances, TwoTokenInstance};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> anyhow::Result<Outcome> {
    Ok(Outcome {
        passed,
        detail: detail.into(),
    })
}

fn stat(r: &SuiteReport, id: &str, key: &str) -> f64 {
    r.instance(id)
        .and_then(|i| i.stats.get(key))
        .copied()
        .unwrap_or(f64::NAN)
}

fn params() -> SuiteParams {
    SuiteParams {
        replicates: Some(DEFAULT_REPLICATES),
        ..SuiteParams::default()
    }
}

fn appendix_exact() -> anyhow::Result<Outcome> {
    let t = appendix_example();
    let ind = [0.1545, 0.15675, 0.16225];
    let cou = [0.0525, 0.0225, 0.03];
    let err = t
        .independent
        .iter()
        .zip(ind)
        .chain(t.coupled.iter().zip(cou))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let ranks_ok = t.independent_ranking() == [2, 1, 0] && t.coupled_ranking() == [0, 2, 1];
    outcome(
        err <= 1e-12 && ranks_ok,
        format!("max abs error {err:.2e}, independent m3>m2>m1 and coupled m1>m3>m2: {ranks_ok}"),
    )
}

fn prop4() -> anyhow::Result<Outcome> {
    let r = suites::prop4(&params())?;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for inst in &r.instances {
        for (k, z) in &inst.stats {
            if k.ends_with("_z") {
                worst = worst.max(z.abs());
                checked += 1;
            }
        }
    }
    // 25 instances x 2 regimes x win/loss/tie.
    outcome(
        r.instances.len() == 25 && checked == 150 && worst <= 4.0,
        format!("{} instances, {checked} statistics, max |z| {worst:.3}", r.instances.len()),
    )
}

fn prop2() -> anyhow::Result<Outcome> {
    let inst = TwoTokenInstance::new(0.6, 0.7)?;
    let v = closed_form_variances(&inst);
    let exact = (v.var_coupled - 0.09).abs() < 1e-12
        && (v.var_independent - 0.45).abs() < 1e-12
        && (v.covariance - 0.18).abs() < 1e-12;
    let p = SuiteParams {
        replicates: Some(CURVE_POOL),
        subsamples: 1000,
        sizes: Some(CURVE_SIZES.to_vec()),
        target_error: 0.02,
        ..SuiteParams::default()
    };
    let (c, i) = suites::two_token_curves(&inst, CURVE_POOL, &p)?;
    let below = c
        .points
        .iter()
        .zip(&i.points)
        .filter(|(a, _)| a.size >= 50)
        .all(|(a, b)| a.mean_abs_error < b.mean_abs_error);
    let savings = sample_savings(&c, &i, 0.02).unwrap_or(f64::NAN);
    outcome(
        exact && below && savings > 0.25,
        format!(
            "variances ({:.4}, {:.4}, {:.4}), coupled below at all {} sizes: {below}, savings {savings:.4}",
            v.var_coupled,
            v.var_independent,
            v.covariance,
            c.points.len()
        ),
    )
}

fn prop1() -> anyhow::Result<Outcome> {
    let r = suites::prop1(&params())?;
    let ratios: Vec<f64> = r.instances.iter().map(|i| i.stats["residual_over_se"]).collect();
    let small_vocab = r.instances.iter().all(|i| i.stats["vocab_size"] <= 4.0);
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    outcome(
        ratios.len() == 10 && small_vocab && ratios.iter().all(|&x| x < 5.0),
        format!("{} instances, max |residual| / se {worst:.3}", ratios.len()),
    )
}

fn stability() -> anyhow::Result<Outcome> {
    let r = suites::stability(&params())?;
    let runs: Vec<_> = r.instances.iter().filter(|i| i.id.starts_with("instance-")).collect();
    let events: f64 = runs.iter().map(|i| i.stats["events"]).sum();
    let gumbel = stat(&r, "search-gumbel-max", "violations");
    let inverse = stat(&r, "search-inverse-transform", "violations");
    outcome(
        runs.len() == 20 && events == 0.0 && gumbel == 0.0 && inverse >= 1.0,
        format!(
            "{} instances, {events} events; violations: gumbel-max {gumbel}, inverse-transform {inverse}",
            runs.len()
        ),
    )
}

fn marginals() -> anyhow::Result<Outcome> {
    let r = suites::marginals(&params())?;
    let tvs: Vec<f64> = r
        .instances
        .iter()
        .filter(|i| i.id.starts_with("coupling-"))
        .flat_map(|i| i.stats.iter().filter(|(k, _)| k.starts_with("tv_")).map(|(_, v)| *v))
        .collect();
    let worst = tvs.iter().copied().fold(0.0, f64::max);
    outcome(
        !tvs.is_empty() && worst <= 0.02,
        format!("{} model marginals, max TV {worst:.4}", tvs.len()),
    )
}

fn prop5() -> anyhow::Result<Outcome> {
    let r = suites::prop5(&params())?;
    let in_scope = r
        .instances
        .iter()
        .all(|i| i.stats["epsilon"] <= 0.05 && i.stats["vocab_size"] <= 5.0);
    let inflated = r.instances.iter().filter(|i| i.stats["gap_over_se"] > 3.0).count();
    let weakest = r
        .instances
        .iter()
        .map(|i| i.stats["gap_over_se"])
        .fold(f64::INFINITY, f64::min);
    outcome(
        r.instances.len() == 20 && in_scope && inflated >= 18,
        format!("{inflated}/20 instances above 3 combined SE, smallest gap {weakest:.1} SE"),
    )
}

fn run_all(out: &Path, threads: &str) -> anyhow::Result<Vec<String>> {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let appendix = configs.join("appendix.toml");
    let perturbed = configs.join("perturbed.toml");
    let out = out.to_str().unwrap();
    let mut invocations: Vec<Vec<String>> = Vec::new();
    for suite in ["prop1", "prop2", "prop4", "prop5", "stability", "marginals"] {
        invocations.push(vec!["verify".into(), suite.into(), "--replicates".into(), "10000".into()]);
    }
    invocations.push(vec!["reproduce-appendix".into(), "--replicates".into(), "100000".into()]);
    invocations.push(vec![
        "error-curve".into(),
        "--config".into(),
        perturbed.to_str().unwrap().into(),
    ]);
    invocations.push(vec![
        "rank".into(),
        "--config".into(),
        appendix.to_str().unwrap().into(),
        "--replicates".into(),
        "50000".into(),
    ]);
    let mut stdout = Vec::new();
    for args in invocations {
        let o = Command::new(env!("CARGO_BIN_EXE_coupled"))
            .args(&args)
            .args(["--out", out])
            .env("RAYON_NUM_THREADS", threads)
            .output()?;
        anyhow::ensure!(
            matches!(o.status.code(), Some(0 | 1)),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        stdout.push(String::from_utf8(o.stdout)?.replace(out, "<out>"));
    }
    Ok(stdout)
}

fn read_dir(dir: &Path) -> anyhow::Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    for e in std::fs::read_dir(dir)? {
        let e = e?;
        files.insert(e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path())?);
    }
    Ok(files)
}

fn determinism() -> anyhow::Result<Outcome> {
    let a = tempfile::tempdir()?;
    let b = tempfile::tempdir()?;
    let stdout_a = run_all(a.path(), "1")?;
    let stdout_b = run_all(b.path(), "4")?;
    let fa = read_dir(a.path())?;
    let fb = read_dir(b.path())?;
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    let same = fa.len() == 13 && fa.keys().eq(fb.keys()) && differing.is_empty() && stdout_a == stdout_b;
    outcome(
        same,
        format!("{} output files compared across 1 and 4 threads, {} differ", fa.len(), differing.len()),
    )
}

type Criterion = (&'static str, Option<Duration>, fn() -> anyhow::Result<Outcome>);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 three-model ranking example, exact", Some(Duration::from_secs(1)), appendix_exact),
        ("2 two-token win rates vs closed forms", Some(Duration::from_secs(30)), prop4),
        ("3 variance ordering and sample savings", Some(Duration::from_secs(120)), prop2),
        ("4 variance identity on Markov pairs", Some(Duration::from_secs(120)), prop1),
        ("5 counterfactual stability", Some(Duration::from_secs(60)), stability),
        ("6 marginal preservation", Some(Duration::from_secs(30)), marginals),
        ("7 tie inflation for similar models", Some(Duration::from_secs(120)), prop5),
        ("8 byte-identical reruns across thread counts", None, determinism),
    ];
    let mut failures = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && limit.is_none_or(|l| elapsed <= l), o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        failures += !passed as usize;
        let limit = limit.map_or("no limit".to_string(), |l| format!("limit {}s", l.as_secs()));
        println!(
            "criterion {name}: {} ({detail}; {:.2}s, {limit})",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
        );
    }
    if failures == 0 {
        println!("acceptance: all 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
