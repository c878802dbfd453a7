//! `udpfl`: calibrate noise, run simulations and sweeps, report utility bounds.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use udpfl_core::accountant::{self, AlphaGrid, PrivacyBudget, DEFAULT_TOLERANCE};
use udpfl_core::bounds::{self, BoundQuery};
use udpfl_core::experiment::{self, Completion, ExperimentConfig, ExperimentOutcome};
use udpfl_core::{Execution, MechanismKind, MechanismParams};

#[derive(Parser, Debug)]
#[command(
    name = "udpfl",
    version,
    about = "Differentially private federated learning with Gaussian, Laplace and Staircase noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the least-noise calibration for each mechanism and ε, one JSON object per line.
    Calibrate(CalibrateArgs),
    /// Run one experiment: CSV metrics, then a one-line JSON summary.
    Run(RunArgs),
    /// Run many experiments into one CSV with an `experiment_id` column.
    Sweep(SweepArgs),
    /// Print expected ℓ1 perturbation bounds as JSON.
    Bounds(BoundsArgs),
}

macro_rules! config_flags {
    ($($key:ident),* $(,)?) => {
        /// Flags mirroring the config-file keys; they override file values.
        #[derive(Args, Debug, Default, Clone)]
        struct ConfigFlags {
            $(
                #[arg(long, value_name = "VALUE", allow_hyphen_values = true, help_heading = "Config overrides")]
                $key: Option<String>,
            )*
        }

        impl ConfigFlags {
            fn overrides(&self) -> Vec<(String, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$key {
                        out.push((stringify!($key).to_string(), v.clone()));
                    }
                )*
                out
            }
        }
    };
}

config_flags!(
    mechanism,
    epsilon,
    delta,
    rounds,
    calibration_rounds,
    clients,
    selection_fraction,
    sample_rate,
    clip,
    local_epochs,
    learning_rate,
    aggregator,
    curve,
    curve_steps,
    curve_learning_rate,
    lipschitz,
    shuffle,
    accounting,
    heterogeneous_epsilon,
    dataset,
    separation,
    seed,
    output,
    execution,
);

#[derive(Args, Debug)]
struct RunArgs {
    /// Config file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Config files; each is expanded over the grid flags.
    #[arg(long, short, num_args = 1..)]
    config: Vec<PathBuf>,
    /// Comma-separated mechanisms to sweep.
    #[arg(long, value_delimiter = ',')]
    mechanisms: Vec<MechanismKind>,
    /// Comma-separated ε values to sweep.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    epsilons: Vec<f64>,
    /// Comma-separated seeds to sweep.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Run sweep entries one after another instead of concurrently.
    #[arg(long)]
    sequential: bool,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Comma-separated mechanisms; defaults to the config's mechanism.
    #[arg(long, value_delimiter = ',')]
    mechanisms: Vec<MechanismKind>,
    /// Comma-separated ε targets; defaults to the config's ε.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    epsilons: Vec<f64>,
    /// Number of mechanism applications to calibrate for. Defaults to what
    /// `run` would use for the same config (rounds × local epochs).
    #[arg(long)]
    horizon: Option<usize>,
    /// Relative bisection tolerance on the noise knob.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    #[command(flatten)]
    flags: ConfigFlags,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    mechanism: MechanismKind,
    /// σ (gaussian), b (laplace) or λ (staircase).
    #[arg(long)]
    scale: f64,
    #[arg(long, default_value_t = 1.0)]
    sensitivity: f64,
    /// Staircase inner fraction; defaults to the amplitude-minimizing value.
    #[arg(long)]
    nu: Option<f64>,
    /// Number of perturbed coordinates.
    #[arg(long, default_value_t = 1)]
    loss_length: usize,
    #[arg(long, default_value_t = 1)]
    rounds: usize,
}

fn load_config(path: Option<&Path>, flags: &ConfigFlags) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => {
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?
        }
        None => String::new(),
    };
    Ok(experiment::parse_config(&text, &flags.overrides())?)
}

fn csv_sink(output: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match output {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn report_halt(outcome: &ExperimentOutcome) -> bool {
    if let Completion::BudgetExhausted { round, client } = outcome.completion {
        eprintln!("BudgetExhausted: privacy budget exhausted at round {round} (client {client})");
        return true;
    }
    false
}

fn calibrate(args: CalibrateArgs) -> Result<ExitCode> {
    let cfg = load_config(args.config.as_deref(), &args.flags)?;
    let (mode, planned) = experiment::calibration_plan(&cfg);
    let horizon = args.horizon.unwrap_or(planned);
    let mechanisms = if args.mechanisms.is_empty() {
        vec![cfg.mechanism]
    } else {
        args.mechanisms
    };
    let epsilons = if args.epsilons.is_empty() {
        vec![cfg.epsilon]
    } else {
        args.epsilons
    };
    let grid = AlphaGrid::default();
    for &kind in &mechanisms {
        for &eps in &epsilons {
            let budget = PrivacyBudget::new(eps, cfg.delta, horizon)?;
            let result = accountant::calibrate_noise_with(
                kind,
                cfg.clip,
                &budget,
                &grid,
                args.tolerance,
                mode,
            )?;
            print_json(&result)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let cfg = load_config(args.config.as_deref(), &args.flags)?;
    let mut sink = csv_sink(cfg.output.as_deref())?;
    let outcome = experiment::run_experiment(&cfg, &mut sink)?;
    sink.flush()?;
    drop(sink);
    print_json(&outcome.summary)?;
    Ok(if report_halt(&outcome) {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

#[derive(serde::Serialize)]
struct SweepSummary<'a> {
    experiment_id: usize,
    mechanism: MechanismKind,
    epsilon: Option<f64>,
    seed: u64,
    #[serde(flatten)]
    summary: &'a experiment::ExperimentSummary,
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let bases = if args.config.is_empty() {
        vec![load_config(None, &args.flags)?]
    } else {
        args.config
            .iter()
            .map(|p| load_config(Some(p), &args.flags))
            .collect::<Result<Vec<_>>>()?
    };
    let configs: Vec<ExperimentConfig> = bases
        .iter()
        .flat_map(|b| experiment::expand_grid(b, &args.mechanisms, &args.epsilons, &args.seeds))
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let output = bases.first().and_then(|b| b.output.clone());
    let exec = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let mut sink = csv_sink(output.as_deref())?;
    let entries = experiment::sweep(&configs, exec, &mut sink)?;
    sink.flush()?;
    drop(sink);
    let mut halted = false;
    for (e, cfg) in entries.iter().zip(&configs) {
        print_json(&SweepSummary {
            experiment_id: e.experiment_id,
            mechanism: cfg.mechanism,
            epsilon: cfg.epsilon.is_finite().then_some(cfg.epsilon),
            seed: cfg.seed,
            summary: &e.outcome.summary,
        })?;
        halted |= report_halt(&e.outcome);
    }
    Ok(if halted {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn bounds(args: BoundsArgs) -> Result<ExitCode> {
    let params = match (args.mechanism, args.nu) {
        (MechanismKind::Staircase, None) => {
            MechanismParams::staircase_optimal(args.sensitivity, args.scale)?
        }
        (MechanismKind::Staircase, Some(nu)) => {
            MechanismParams::staircase(args.sensitivity, args.scale, nu)?
        }
        (_, Some(_)) => bail!("--nu only applies to the staircase mechanism"),
        (kind, None) => MechanismParams::new(kind, args.sensitivity, args.scale, None)?,
    };
    let query = BoundQuery::new(params, args.loss_length, args.rounds)?;
    print_json(&bounds::report(&query)?)?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // usage errors exit 1 so that 2 keeps meaning "budget exhausted"
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Bounds(a) => bounds(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
