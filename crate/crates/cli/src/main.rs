use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use convergent_ac::experiments::{
    run_counterexample_comparison, run_gradient_check, run_sweep_with_jobs, CounterexampleOptions,
    ExperimentConfig, GradCheckOptions, Metric,
};
use convergent_ac::mdp::MdpDocument;
use convergent_ac::oracle::{td_fixed_point, ProjectionWeights, TraceKind};

#[derive(Parser)]
#[command(name = "cac", version, about = "Off-policy actor-critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter sweep described by a TOML config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed; overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Oracle values and frozen-critic sign tests on the two-state MDP.
    Counterexample {
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        #[arg(long, default_value_t = 3.0)]
        margin: f64,
        #[arg(long, default_value_t = 100)]
        runs: u64,
        #[arg(long, default_value_t = 10_000)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the TOML report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampled actor directions vs finite-difference gradients.
    Gradcheck {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
        lambdas: Vec<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        steps: u64,
        #[arg(long, default_value_t = 77)]
        seed: u64,
        #[arg(long)]
        no_counterexample: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// TD fixed points of an MDP document for a list of λ.
    Oracle {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
        lambdas: Vec<f64>,
        #[arg(long)]
        emphatic: bool,
    },
}

fn emit(text: String, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sweep {
            config,
            out,
            seed,
            jobs,
            no_plots,
        } => {
            let mut cfg = ExperimentConfig::read(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let dir = match (out, &cfg.output) {
                (Some(dir), _) => dir,
                (None, Some(o)) => o.dir.clone(),
                (None, None) => bail!("no output directory: pass --out or set [output] dir"),
            };
            let plots = !no_plots && cfg.output.as_ref().is_none_or(|o| o.plots);
            let jobs =
                jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let output = run_sweep_with_jobs(&cfg, jobs)?;
            output.write(&dir, plots)?;
            std::fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
            eprintln!(
                "{}: {} grid points × {} runs, {} diverged, results in {}",
                cfg.name,
                output.grid.len(),
                cfg.runs,
                output.diverged_runs(),
                dir.display()
            );
            for metric in &cfg.metrics {
                for row in output.final_rows(*metric) {
                    eprintln!(
                        "  {} λ={} norm={} α₀={} β₀={}: {:.5} ± {:.5}",
                        metric.name(),
                        row.lambda,
                        row.normalize,
                        row.alpha,
                        row.beta,
                        row.mean,
                        row.stderr
                    );
                }
            }
            if cfg.metrics.contains(&Metric::Rms) {
                for &lambda in &cfg.algorithm.lambda {
                    for &normalize in &cfg.algorithm.normalize {
                        if let Some(best) = output.best_over_alpha(Metric::Rms, lambda, normalize) {
                            eprintln!(
                                "  best rms λ={lambda} norm={normalize}: {:.5} at α₀={}",
                                best.mean, best.alpha
                            );
                        }
                    }
                }
            }
        }
        Command::Counterexample {
            gamma,
            margin,
            runs,
            steps,
            seed,
            out,
        } => {
            let options = CounterexampleOptions {
                gamma,
                margin,
                runs,
                steps,
                seed,
                ..Default::default()
            };
            emit(
                run_counterexample_comparison(&options)?.to_toml_string()?,
                out,
            )?;
        }
        Command::Gradcheck {
            seeds,
            lambdas,
            steps,
            seed,
            no_counterexample,
            out,
        } => {
            let options = GradCheckOptions {
                seeds,
                lambdas,
                steps,
                stream_seed: seed,
                include_counterexample: !no_counterexample,
                ..Default::default()
            };
            let report = run_gradient_check(&options)?;
            for case in &report.cases {
                match &case.skipped {
                    Some(why) => eprintln!(
                        "SKIP {} {:?} λ={}: {why}",
                        case.environment, case.actor, case.lambda
                    ),
                    None => eprintln!(
                        "{} {} {:?} λ={}: max rel err {:.4} (exact {:.2e})",
                        if case.passed { "PASS" } else { "FAIL" },
                        case.environment,
                        case.actor,
                        case.lambda,
                        case.max_relative_error,
                        case.exact_relative_error
                    ),
                }
            }
            emit(report.to_toml_string()?, out)?;
        }
        Command::Oracle {
            mdp,
            lambdas,
            emphatic,
        } => {
            let doc =
                MdpDocument::read(&mdp).with_context(|| format!("reading {}", mdp.display()))?;
            let Some(features) = &doc.features else {
                bail!("{} has no features table", mdp.display())
            };
            let target = doc.target.clone().unwrap_or_else(|| doc.behavior.clone());
            let weights = ProjectionWeights::from_behavior(&doc.mdp, &doc.behavior)?;
            let kind = if emphatic {
                TraceKind::Emphatic
            } else {
                TraceKind::Standard
            };
            for lambda in lambdas {
                let report = td_fixed_point(&doc.mdp, features, &target, &weights, lambda, kind)?;
                println!("[lambda_{}]", lambda.to_string().replace('.', "_"));
                println!("lambda = {lambda:?}");
                print!("{}", report.to_toml_string()?);
                println!();
            }
        }
    }
    Ok(())
}
