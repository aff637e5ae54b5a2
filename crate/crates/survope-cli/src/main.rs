mod config;
mod report;
mod runner;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use config::{ExperimentConfig, NuisanceMode};
use survope::core::{load_dataset_csv, save_dataset_csv, TimeGrid};
use survope::estimators::{estimate_rmst, NuisanceBundle, OracleCensoringCurve, OracleSurvivalCurve};
use survope::nuisance::FittedNuisances;
use survope::opl::{evaluate_improvement, train_policy, GradientEstimator, TrainConfig};
use survope::synthenv::{generate_dataset, make_eval_policy, EnvConfig};

/// Censoring-aware off-policy evaluation and learning experiments.
#[derive(Parser)]
#[command(name = "survope", version, about)]
struct Cli {
    /// Experiment configuration (TOML or JSON); defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for trial-parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Full paper protocol (100 trials, 100k-test evaluation) instead of the
    /// desk-scale defaults.
    #[arg(long, global = true)]
    paper_scale: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a logged dataset under the configured environment.
    Generate {
        /// Number of records (default: the config's `n`).
        #[arg(long)]
        n: Option<usize>,
        /// Attach per-action costs (enables constrained learning).
        #[arg(long)]
        with_costs: bool,
    },
    /// Fit propensity, outcome and censoring models on a dataset.
    Fit {
        #[arg(long)]
        data: PathBuf,
    },
    /// Evaluate every configured estimator for RMST on a dataset.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Fitted models from `fit`; falls back to the config's nuisance mode.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Train one policy with a gradient estimator and report its improvement.
    Learn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        /// ips | dr | ipcw_ips | ipcw_dr
        #[arg(long, default_value = "ipcw_dr")]
        estimator: String,
    },
    /// OPE error sweep over the configured axis.
    SweepOpe,
    /// Policy-learning sweep over the configured axis.
    SweepOpl,
    /// Budget-constrained learning comparison.
    Constrained,
    /// Merge sweep outputs into a tidy CSV and a text summary.
    Report,
}

enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

fn load_config(cli: &Cli) -> std::result::Result<ExperimentConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(CliError::Config)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.base_seed = seed;
    }
    Ok(config)
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn load_models(path: &Path) -> Result<FittedNuisances> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid model file {}", path.display()))
}

fn run(cli: &Cli) -> std::result::Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(anyhow!("thread pool: {e}")))?;
    }
    let config = load_config(cli)?;
    ensure_out(&cli.out).map_err(CliError::Runtime)?;
    let rt = CliError::Runtime;

    match &cli.command {
        Command::Generate { n, with_costs } => {
            let env = runner::env_for(
                &config,
                &runner::Factors {
                    n: n.unwrap_or(config.n),
                    rho1: config.env.target_censoring_rate,
                    epsilon: config.epsilon,
                    beta: config.env.beta,
                },
            )
            .map_err(rt)?;
            let costs = if *with_costs {
                Some(
                    config
                        .env
                        .base_costs
                        .clone()
                        .unwrap_or_else(|| EnvConfig::linear_base_costs(config.env.n_actions)),
                )
            } else {
                None
            };
            let dataset =
                generate_dataset(&env, n.unwrap_or(config.n), config.base_seed, costs.as_deref());
            let path = cli.out.join("dataset.csv");
            save_dataset_csv(&dataset, &path)
                .map_err(|e| rt(anyhow!(e)))?;
            println!("wrote {} records to {}", dataset.len(), path.display());
        }
        Command::Fit { data } => {
            let dataset = load_dataset_csv(data).map_err(|e| rt(anyhow!(e)))?;
            let models = runner::fit_nuisances(&dataset).map_err(rt)?;
            let path = cli.out.join("models.json");
            std::fs::write(&path, serde_json::to_string_pretty(&models).map_err(|e| rt(anyhow!(e)))?)
                .with_context(|| format!("cannot write {}", path.display()))
                .map_err(rt)?;
            println!(
                "fitted propensity ({} iters, converged: {}) and {}+{} cox strata; wrote {}",
                models.propensity.iterations,
                models.propensity.converged,
                models.outcome.strata.len(),
                models.censoring.strata.len(),
                path.display()
            );
        }
        Command::Evaluate { data, models } => {
            let dataset = load_dataset_csv(data).map_err(|e| rt(anyhow!(e)))?;
            let env = runner::env_for(
                &config,
                &runner::Factors {
                    n: dataset.len(),
                    rho1: config.env.target_censoring_rate,
                    epsilon: config.epsilon,
                    beta: config.env.beta,
                },
            )
            .map_err(rt)?;
            let grid = TimeGrid::new(config.env.tau, config.grid_points);
            let eval = make_eval_policy(&env, config.epsilon, &grid);
            let logging = env.logging_policy();
            let oracle_s = OracleSurvivalCurve(&env);
            let oracle_g = OracleCensoringCurve(&env);
            let fitted = match models {
                Some(path) => Some(load_models(path).map_err(rt)?),
                None => match config.nuisance {
                    NuisanceMode::Oracle => None,
                    NuisanceMode::Fitted => Some(runner::fit_nuisances(&dataset).map_err(rt)?),
                },
            };
            let bundle = match &fitted {
                None => NuisanceBundle::new(&logging)
                    .with_outcome(&oracle_s)
                    .with_censoring(&oracle_g)
                    .with_weight_floor(0.0),
                Some(m) => NuisanceBundle::new(&m.propensity)
                    .with_outcome(&m.outcome)
                    .with_censoring(&m.censoring)
                    .with_weight_floor(config.weight_floor),
            };
            let mut csv = String::from("estimator,target,value,clamp_count\n");
            let mut reports = Vec::new();
            for &kind in &config.estimators {
                let report =
                    estimate_rmst(kind, &dataset, &eval, &bundle, &grid).map_err(|e| rt(anyhow!(e)))?;
                csv.push_str(&report.csv_row());
                csv.push('\n');
                println!("{}", report.csv_row());
                reports.push(report);
            }
            std::fs::write(cli.out.join("reports.csv"), csv)
                .context("cannot write reports.csv")
                .map_err(rt)?;
            std::fs::write(
                cli.out.join("reports.json"),
                serde_json::to_string(&reports).map_err(|e| rt(anyhow!(e)))?,
            )
            .context("cannot write reports.json")
            .map_err(rt)?;
        }
        Command::Learn { data, models, estimator } => {
            let learner: GradientEstimator =
                estimator.parse().map_err(|e: survope::Error| CliError::Config(anyhow!(e)))?;
            let dataset = load_dataset_csv(data).map_err(|e| rt(anyhow!(e)))?;
            let env = runner::env_for(
                &config,
                &runner::Factors {
                    n: dataset.len(),
                    rho1: config.env.target_censoring_rate,
                    epsilon: config.epsilon,
                    beta: config.env.beta,
                },
            )
            .map_err(rt)?;
            let grid = TimeGrid::new(config.env.tau, config.grid_points);
            let logging = env.logging_policy();
            let oracle_s = OracleSurvivalCurve(&env);
            let oracle_g = OracleCensoringCurve(&env);
            let fitted = match models {
                Some(path) => Some(load_models(path).map_err(rt)?),
                None => match config.nuisance {
                    NuisanceMode::Oracle => None,
                    NuisanceMode::Fitted => Some(runner::fit_nuisances(&dataset).map_err(rt)?),
                },
            };
            let bundle = match &fitted {
                None => NuisanceBundle::new(&logging)
                    .with_outcome(&oracle_s)
                    .with_censoring(&oracle_g)
                    .with_weight_floor(0.0),
                Some(m) => NuisanceBundle::new(&m.propensity)
                    .with_outcome(&m.outcome)
                    .with_censoring(&m.censoring)
                    .with_weight_floor(config.weight_floor),
            };
            let train_config = TrainConfig::new(learner, grid.clone(), config.base_seed);
            let trained = train_policy(&dataset, &bundle, &train_config).map_err(|e| rt(anyhow!(e)))?;
            let ratio = evaluate_improvement(
                &env,
                &trained.policy,
                &grid,
                config.resolve_n_test(cli.paper_scale).min(10_000),
                config.truth_seed(),
            );
            std::fs::write(
                cli.out.join("policy.json"),
                serde_json::to_string(&trained).map_err(|e| rt(anyhow!(e)))?,
            )
            .context("cannot write policy.json")
            .map_err(rt)?;
            println!(
                "trained {learner} for {} epochs (best validation {:.6}); improvement ratio {ratio:.4}",
                trained.epochs_run, trained.best_validation
            );
        }
        Command::SweepOpe => {
            let csv = runner::run_ope_sweep(&config, &cli.out, cli.paper_scale).map_err(rt)?;
            print!("{csv}");
        }
        Command::SweepOpl => {
            let csv = runner::run_opl_sweep(&config, &cli.out, cli.paper_scale).map_err(rt)?;
            print!("{csv}");
        }
        Command::Constrained => {
            let csv = runner::run_constrained(&config, &cli.out, cli.paper_scale).map_err(rt)?;
            print!("{csv}");
        }
        Command::Report => {
            let (tidy, summary) = report::build_report(&cli.out).map_err(rt)?;
            std::fs::write(cli.out.join("tidy.csv"), &tidy)
                .context("cannot write tidy.csv")
                .map_err(rt)?;
            std::fs::write(cli.out.join("summary.txt"), &summary)
                .context("cannot write summary.txt")
                .map_err(rt)?;
            print!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("runtime error: {e:#}");
            ExitCode::from(2)
        }
    }
}
