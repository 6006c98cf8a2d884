use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use coupled_cli::commands::{self, APPENDIX_REPLICATES};
use coupled_cli::config::{Experiment, DEFAULT_SEED, DEFAULT_SUBSAMPLES};
use coupled_cli::suites::{Suite, SuiteParams};

#[derive(Parser)]
#[command(name = "coupled", version, about = "Coupled autoregressive generation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a property suite and write verify_<suite>.json.
    Verify {
        /// prop1, prop2, prop4, prop5, stability or marginals.
        suite: Suite,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        subsamples: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        target_error: Option<f64>,
    },
    /// Reproduce the three-model ranking example and write appendix.json.
    ReproduceAppendix {
        #[command(flatten)]
        common: Common,
    },
    /// Error curves of the mean score difference under each regime.
    ErrorCurve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        subsamples: Option<usize>,
        /// Comma-separated sub-sample sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        target_error: Option<f64>,
    },
    /// Pairwise win rates, z-tests and interval-based ranks.
    Rank {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        level: Option<f64>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    replicates: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<Option<Experiment>> {
        self.config.as_deref().map(Experiment::load).transpose()
    }

    fn require(&self) -> Result<Experiment> {
        let mut exp = self.load()?.context("this command needs --config")?;
        if let Some(s) = self.seed {
            exp.run.seed = s;
        }
        if let Some(r) = self.replicates {
            anyhow::ensure!(r >= 1, "--replicates must be at least 1");
            exp.run.replicates = r;
        }
        Ok(exp)
    }
}

enum Failure {
    Usage(anyhow::Error),
    Suite,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn status(passed: bool, what: &str, out: &Path) -> Result<(), Failure> {
    println!("{what}: {} (outputs in {})", if passed { "pass" } else { "FAIL" }, out.display());
    if passed {
        Ok(())
    } else {
        Err(Failure::Suite)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Verify {
            suite,
            common,
            subsamples,
            sizes,
            target_error,
        } => {
            let cfg = common.load()?;
            let params = SuiteParams {
                seed: common.seed.or(cfg.as_ref().map(|c| c.run.seed)).unwrap_or(DEFAULT_SEED),
                replicates: common.replicates,
                subsamples: subsamples.unwrap_or(DEFAULT_SUBSAMPLES),
                sizes,
                target_error: target_error.unwrap_or(0.02),
            };
            let report = commands::verify(suite, &params, &common.out)?;
            println!("{suite}: {}", report.summary);
            status(report.passed, &format!("verify {suite}"), &common.out)
        }
        Command::ReproduceAppendix { common } => {
            let cfg = common.load()?;
            let seed = common.seed.or(cfg.as_ref().map(|c| c.run.seed)).unwrap_or(DEFAULT_SEED);
            let replicates = common.replicates.unwrap_or(APPENDIX_REPLICATES);
            let r = commands::reproduce_appendix(seed, replicates, &common.out)?;
            println!("independent: {:?} ranking {}", r.independent, r.independent_ranking.join(" > "));
            println!("coupled:     {:?} ranking {}", r.coupled, r.coupled_ranking.join(" > "));
            println!("rank flip: {}", r.rank_flip);
            status(r.passed, "reproduce-appendix", &common.out)
        }
        Command::ErrorCurve {
            common,
            subsamples,
            sizes,
            target_error,
        } => {
            let mut exp = common.require()?;
            if let Some(s) = subsamples {
                exp.run.subsamples = s;
            }
            if sizes.is_some() {
                exp.run.sizes = sizes;
            }
            if let Some(t) = target_error {
                exp.run.target_error = t;
            }
            let r = commands::error_curve_cmd(&exp, &common.out)?;
            match r.savings {
                Some(s) => println!("sample savings at error {}: {s:.4}", r.target_error),
                None => println!("sample savings at error {}: unavailable", r.target_error),
            }
            status(true, "error-curve", &common.out)
        }
        Command::Rank { common, level } => {
            let mut exp = common.require()?;
            if let Some(l) = level {
                if !(l > 0.0 && l < 1.0) {
                    return Err(Failure::Usage(anyhow::anyhow!("--level must lie in (0, 1)")));
                }
                exp.run.level = l;
            }
            let r = commands::rank_cmd(&exp, &common.out)?;
            for row in &r.ranks {
                println!("{:<12} {:<10} {:.5} rank {}", row.regime, row.model, row.average_win_rate, row.rank);
            }
            status(true, "rank", &common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Suite) => ExitCode::from(1),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
