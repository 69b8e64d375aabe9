use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use surroforge::agents::{train_max_entropy_policy, Policy};
use surroforge::eval::SamplerId;
use surroforge::experiment::{self, build_dataset, mea_config, with_jobs, ExperimentConfig};

/// Surrogate dynamics models from generative and agent-based samplers.
#[derive(Parser)]
#[command(name = "surroforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML). Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment: cartpole, mountaincar or pendulum.
    #[arg(long)]
    env: Option<String>,
    /// Master seed (replaces the configured seed list).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build one dataset and write it as CSV plus a metadata sidecar.
    GenDataset {
        #[command(flatten)]
        common: Common,
        /// Sampler id: lhs, sobol, random, al, ea, ra, mea, ma, mpa or pa.
        #[arg(long)]
        sampler: String,
        /// States per design, or transitions per agent dataset.
        #[arg(long)]
        samples: Option<usize>,
        /// Trained max-entropy policy for mea and ma (trained on the fly
        /// when absent).
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Output CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the maximum-entropy exploration policy and write it as JSON.
    TrainMea {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build every dataset, cross-validate all surrogates and write results.
    RunExperiment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<usize>,
        /// Results directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print ranked averages and group summaries of a finished run.
    Report {
        /// Results directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(conflicts_with = "out")]
        dir: Option<PathBuf>,
    },
}

/// Marks errors caused by bad input (exit code 1).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

fn load_config(common: &Common, require_env: bool) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            if require_env && common.env.is_none() {
                return usage("an environment is required: pass --env or --config");
            }
            ExperimentConfig::default()
        }
    };
    if let Some(env) = &common.env {
        cfg.env = env.parse()?;
    }
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if common.jobs.is_some() {
        cfg.jobs = common.jobs;
    }
    Ok(cfg)
}

fn default_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds[0]
}

fn gen_dataset(
    common: &Common,
    sampler: &str,
    samples: Option<usize>,
    policy: Option<&Path>,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let mut cfg = load_config(common, true)?;
    let sampler: SamplerId = sampler.parse()?;
    if let Some(k) = samples {
        cfg.samples = k;
    }
    cfg.validate()?;
    let seed = default_seed(&cfg);
    let start = Instant::now();
    let data = with_jobs(cfg.jobs, || -> anyhow::Result<_> {
        let mea = match (sampler, policy) {
            (SamplerId::Mea | SamplerId::Ma, Some(p)) => Some(Policy::load(p)?),
            (SamplerId::Mea | SamplerId::Ma, None) => {
                log::info!("training a max-entropy policy for {sampler}");
                Some(train_max_entropy_policy(cfg.env, &mea_config(&cfg, seed))?.policy)
            }
            _ => None,
        };
        if let Some(p) = &mea {
            if p.env != cfg.env {
                return usage(format!("policy was trained on {}, not {}", p.env, cfg.env));
            }
        }
        Ok(build_dataset(&cfg, sampler, seed, mea.as_ref())?)
    })??;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{}_{}_seed{seed}.csv", cfg.env, sampler)));
    data.save(&out)?;
    println!("wrote {} transitions to {} in {:.2?}", data.len(), out.display(), start.elapsed());
    Ok(())
}

fn train_mea(common: &Common, out: Option<PathBuf>) -> anyhow::Result<()> {
    let cfg = load_config(common, true)?;
    cfg.validate()?;
    let seed = default_seed(&cfg);
    let start = Instant::now();
    let outcome = with_jobs(cfg.jobs, || train_max_entropy_policy(cfg.env, &mea_config(&cfg, seed)))??;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("{}_mea_seed{seed}.json", cfg.env)));
    outcome.policy.save(&out)?;
    println!(
        "wrote {} (best visited-state entropy {:.4} nats) in {:.2?}",
        out.display(),
        outcome.best_score,
        start.elapsed()
    );
    Ok(())
}

fn run_experiment(common: &Common, samples: Option<usize>, out: Option<PathBuf>) -> anyhow::Result<bool> {
    let mut cfg = load_config(common, false)?;
    if let Some(k) = samples {
        cfg.samples = k;
    }
    if let Some(dir) = out {
        cfg.out_dir = dir;
    }
    cfg.validate()?;
    let start = Instant::now();
    let outcome = experiment::run_experiment(&cfg)?;
    print!("{}", experiment::report(&outcome.bundle));
    println!("\nwrote {} files to {} in {:.2?}", outcome.files.len(), cfg.out_dir.display(), start.elapsed());
    Ok(outcome.missing_cells() == 0)
}

fn report(dir: &Path) -> anyhow::Result<()> {
    if !dir.is_dir() {
        bail!("results directory {} does not exist", dir.display());
    }
    let bundle = experiment::load_bundle(dir).with_context(|| format!("reading results in {}", dir.display()))?;
    print!("{}", experiment::report(&bundle));
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err.chain().any(|e| {
        e.downcast_ref::<Usage>().is_some()
            || e.downcast_ref::<surroforge::Error>().is_some_and(surroforge::Error::is_validation)
    });
    if validation {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match cli.command {
        Command::GenDataset { common, sampler, samples, policy, out } => {
            gen_dataset(&common, &sampler, samples, policy.as_deref(), out)
        }
        Command::TrainMea { common, out } => train_mea(&common, out),
        Command::RunExperiment { common, samples, out } => match run_experiment(&common, samples, out) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: some cells could not be computed (see the log)");
                return ExitCode::from(2);
            }
            Err(e) => Err(e),
        },
        Command::Report { out, dir } => match out.or(dir) {
            Some(d) => report(&d),
            None => usage("pass the results directory"),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
