//! `asymkl` command-line entry point.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 when training
//! aborts on a non-finite value, 4 when a verification suite fails and 1 for
//! anything else (I/O and the like).

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use asymkl::algorithms::{gradcheck, RegularizerRegistry};
use asymkl::analysis::{bounds_suite, oracle_suite, VerificationReport};
use asymkl::numerics::Rng;
use asymkl::runtime::{evaluate_policy, load_nets, median, run_learner, transfer_run, ExperimentConfig, RunOutput, Snapshot};

/// Environment variable that overrides `log_dir` for every run command.
const LOG_DIR_VAR: &str = "ASYMKL_LOG_DIR";

#[derive(Parser)]
#[command(name = "asymkl", version, about = "KL-regularized RL with learned default policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the actor count.
    #[arg(long)]
    actors: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent from a config.
    Train(RunArgs),
    /// Evaluate saved checkpoints with stochastic episodes.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint directory; defaults to the run's final checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
    },
    /// Train against the pretrained default policy named in `[pretrained]`.
    Transfer(RunArgs),
    /// Finite-difference check of every loss.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Tabular oracles for the optimal default policy and regularized values.
    OracleCheck {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Mutual-information bound checks on random joints and latent stacks.
    BoundsCheck {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every registered regularizer on one config with the same seed.
    Ablation(RunArgs),
    /// Summarize `progress.csv` files (or run directories) as one CSV table.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Also report the first learner step whose median return reaches this.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numeric(String),
    Check(String),
    Other(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Check(_) => 4,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numeric(m) | Failure::Check(m) | Failure::Other(m) => m,
        }
    }
}

impl From<asymkl::Error> for Failure {
    fn from(e: asymkl::Error) -> Self {
        match e {
            asymkl::Error::Config { .. } => Failure::Config(e.to_string()),
            asymkl::Error::Numeric(_) => Failure::Numeric(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(actors) = args.actors {
        cfg.actors = actors;
    }
    if let Some(dir) = std::env::var_os(LOG_DIR_VAR) {
        cfg.log_dir = Some(PathBuf::from(dir));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_run(label: &str, out: &RunOutput) {
    match out.rows.last() {
        Some(last) => println!(
            "{label}: {} learner steps, {} env steps, {} episodes, final eval return mean {:.3} median {:.3}, kl {:.4}",
            out.learner_steps,
            out.env_steps,
            out.episodes,
            last.eval_return_mean,
            last.eval_return_median,
            last.mean_kl
        ),
        None => println!("{label}: {} learner steps, no evaluations", out.learner_steps),
    }
}

fn train(args: &RunArgs) -> Outcome {
    let cfg = load_config(args)?;
    let out = run_learner(&cfg)?;
    print_run(&cfg.name, &out);
    if let Some(dir) = cfg.run_dir() {
        log::info!("logs in {}", dir.display());
    }
    Ok(())
}

fn transfer(args: &RunArgs) -> Outcome {
    let cfg = load_config(args)?;
    let out = transfer_run(&cfg)?;
    print_run(&cfg.name, &out);
    Ok(())
}

fn eval(args: &RunArgs, checkpoint: Option<&Path>, episodes: usize) -> Outcome {
    let cfg = load_config(args)?;
    let dir = match checkpoint {
        Some(dir) => dir.to_path_buf(),
        None => cfg
            .run_dir()
            .ok_or_else(|| Failure::Config("no --checkpoint given and the config has no log_dir".into()))?
            .join("checkpoints")
            .join("final"),
    };
    let nets = load_nets(&cfg, &dir)?;
    let mut env = cfg.build_env()?;
    let setup = cfg.setup()?;
    let mut rng = Rng::new(cfg.seed).fork(u64::MAX);
    let returns = evaluate_policy(&Snapshot::of(&nets, 0), env.as_mut(), &setup.obs_spec, episodes, &mut rng)?;
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let min = returns.iter().copied().fold(f64::INFINITY, f64::min);
    let max = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{{\"episodes\":{},\"mean\":{mean},\"median\":{},\"std\":{std},\"min\":{min},\"max\":{max}}}",
        returns.len(),
        median(&returns)
    );
    Ok(())
}

fn checked(report: &VerificationReport) -> Outcome {
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Check("verification failed".into()))
    }
}

fn gradcheck_cmd(trials: usize, seed: u64, tolerance: f64) -> Outcome {
    let report = gradcheck::run_suite(trials, seed)?;
    let failing: Vec<_> = report.cases.iter().filter(|c| c.max_rel_error > tolerance).collect();
    for c in &failing {
        println!(
            "FAIL trial {} {} {}/{} {}: max relative error {:.3e}",
            c.trial, c.head, c.algorithm, c.regularizer, c.loss, c.max_rel_error
        );
    }
    println!(
        "{} {} checks over {trials} instances, max relative error {:.3e} (tolerance {tolerance:e})",
        if report.passed(tolerance) { "PASS" } else { "FAIL" },
        report.cases.len(),
        report.max_error()
    );
    if report.passed(tolerance) {
        Ok(())
    } else {
        Err(Failure::Check(format!("{} gradient checks above tolerance", failing.len())))
    }
}

fn ablation(args: &RunArgs) -> Outcome {
    let base = load_config(args)?;
    println!("regularizer,learner_steps,final_return_mean,final_return_median,steps_to_stop");
    for name in RegularizerRegistry::default().names() {
        let mut cfg = base.clone();
        cfg.regularizer = name.to_string();
        cfg.name = format!("{}-{name}", base.name);
        let out = run_learner(&cfg)?;
        let last = out.rows.last();
        let reached = base.stop_at_return.and_then(|t| out.steps_to_return(t));
        println!(
            "{name},{},{},{},{}",
            out.learner_steps,
            last.map_or(f64::NAN, |r| r.eval_return_mean),
            last.map_or(f64::NAN, |r| r.eval_return_median),
            reached.map_or(String::new(), |s| s.to_string())
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Train(args) => train(&args),
        Command::Eval {
            run,
            checkpoint,
            episodes,
        } => eval(&run, checkpoint.as_deref(), episodes),
        Command::Transfer(args) => transfer(&args),
        Command::Gradcheck {
            trials,
            seed,
            tolerance,
        } => gradcheck_cmd(trials, seed, tolerance),
        Command::OracleCheck { instances, seed } => checked(&oracle_suite(instances, seed)?),
        Command::BoundsCheck { instances, seed } => checked(&bounds_suite(instances, seed)?),
        Command::Ablation(args) => ablation(&args),
        Command::Report { inputs, threshold } => report::summarize(&inputs, threshold, std::io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
