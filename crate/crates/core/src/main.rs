use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sue::cli::{self, RunConfig, SweepConfig, SynthArgs, DEFAULT_SYNTH_PAIRS, DEFAULT_SYNTH_REMOVAL};
use sue::eval::DEFAULT_N_TEST;
use sue::synth::SyntheticScenario;
use sue::{Error, Result};

/// Shared embeddings for two modalities from mostly unpaired data.
#[derive(Parser)]
#[command(name = "sue", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-modality dataset with a few known pairs.
    Synth {
        /// Named scenario (`acceptance`).
        #[arg(long, conflicts_with = "scenario")]
        preset: Option<String>,
        /// Scenario as a JSON file instead of a preset.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of known pairs kept.
        #[arg(long, default_value_t = DEFAULT_SYNTH_PAIRS)]
        pairs: usize,
        /// Held-out test pairs.
        #[arg(long, default_value_t = DEFAULT_N_TEST)]
        n_test: usize,
        /// Fraction of unpaired samples dropped per modality.
        #[arg(long, default_value_t = DEFAULT_SYNTH_REMOVAL)]
        removal_frac: f64,
        /// Overrides the scenario seed (SUE_SEED also works).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the pipeline and write checkpoints to the run directory.
    Fit(RunArgs),
    /// Evaluate a fitted model on the held-out test pairs.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Model checkpoint; defaults to `<out>/model.ckpt`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Random-walk similarity of paired versus shuffled batches.
    Rwsim(RunArgs),
    /// Run a grid of synthetic experiments.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Concurrent grid points; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Skip the MMD residual.
    #[arg(long)]
    no_mmd: bool,
    /// Skip CCA (and therefore MMD needs equal embedding widths).
    #[arg(long)]
    no_cca: bool,
    /// Skip spectral embedding and align the raw features.
    #[arg(long)]
    raw_features: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if self.no_mmd {
            cfg.stages.mmd = false;
        }
        if self.no_cca {
            cfg.stages.cca = false;
        }
        if self.raw_features {
            cfg.stages.se = false;
        }
        cfg.validate()?;
        if self.jobs > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.jobs)
                .build_global()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { preset, scenario, out, pairs, n_test, removal_frac, seed } => {
            let seed = match seed {
                Some(s) => Some(s),
                None => match std::env::var(cli::SEED_ENV) {
                    Ok(s) => Some(s.trim().parse().map_err(|_| Error::Config(format!("{}={s:?} is not an unsigned integer", cli::SEED_ENV)))?),
                    Err(_) => None,
                },
            };
            let mut sc = match (preset, scenario) {
                (Some(p), None) => cli::preset(&p, 0)?,
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    serde_json::from_str::<SyntheticScenario>(&text)
                        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
                }
                _ => return Err(Error::Config("give --preset or --scenario".into())),
            };
            if let Some(s) = seed {
                sc.seed = s;
            }
            cli::cmd_synth(&SynthArgs { scenario: sc, pairs, n_test, removal_frac, out: out.clone() })?;
            println!("wrote dataset to {}", out.display());
        }
        Command::Fit(args) => {
            let cfg = args.load()?;
            let model = cli::cmd_fit(&cfg)?;
            println!(
                "fitted {} (output dim {}) -> {}",
                model.config.variant(),
                model.output_dim(),
                cfg.model_path().display()
            );
        }
        Command::Eval { run, model } => {
            let cfg = run.load()?;
            let rep = cli::cmd_eval(&cfg, model.as_deref())?;
            for (k, v) in &rep.metrics {
                println!("{k}\t{v:.4}");
            }
        }
        Command::Rwsim(args) => {
            let cfg = args.load()?;
            let rep = cli::cmd_rwsim(&cfg)?;
            for (k, v) in &rep.metrics {
                println!("{k}\t{v:.6}");
            }
        }
        Command::Sweep { config, jobs } => {
            let cfg = SweepConfig::load(&config)?;
            let outcomes = cli::cmd_sweep(&cfg, jobs)?;
            let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
            println!("{} points, {failed} failed -> {}", outcomes.len(), cfg.out.join("sweep.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
