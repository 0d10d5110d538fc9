//! `cultabc`: ingest adoption events, simulate, and infer transmission bias.
//!
//! Every run writes its data files plus `manifest.json` into `--out-dir`.
//! Passing that manifest back as `--config` re-runs the same command with the
//! same settings and seed.

mod commands;
mod error;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cultabc::seed::RNG_SCHEME;
use error::Failure;
use manifest::{digest_file, now, Outputs, RunManifest, MANIFEST_SCHEMA_VERSION};
use settings::{load_config, load_params, Settings};

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(
    name = "cultabc",
    version,
    about = "Infer frequency-dependent transmission bias from variant frequency data"
)]
struct Cli {
    /// Master seed; each stochastic stage derives its own seed from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Outputs are identical for any value.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON settings file, or the manifest of an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "cultabc-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct ModelArgs {
    /// Population size N.
    #[arg(long)]
    population_size: Option<usize>,
    /// Innovation probability μ per copy.
    #[arg(long)]
    innovation_rate: Option<f64>,
    /// Generations discarded before recording.
    #[arg(long)]
    warmup_steps: Option<usize>,
    /// Params JSON written by `ingest`; sets N and μ.
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a frequency table and estimate N and μ from an adoption-event CSV.
    Ingest {
        input: Option<PathBuf>,
        /// First timepoint kept (default: earliest event).
        #[arg(long, allow_hyphen_values = true)]
        start: Option<i64>,
        /// Last timepoint kept (default: latest event).
        #[arg(long, allow_hyphen_values = true)]
        end: Option<i64>,
    },
    /// Run the transmission model once and write its frequency table.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Frequency bias b: negative for conformity, positive for novelty.
        #[arg(long, allow_hyphen_values = true)]
        bias: Option<f64>,
        /// Recorded timepoints.
        #[arg(long)]
        timepoints: Option<usize>,
    },
    /// Turn-over profile of a frequency table, optionally against a simulated neutral baseline.
    Turnover {
        input: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        y_max: Option<usize>,
        /// Neutral simulations for the baseline and KS test (0 disables).
        #[arg(long)]
        neutral_reps: Option<usize>,
    },
    /// Mean diversity of neutral runs started with all variants distinct.
    Warmup {
        #[command(flatten)]
        model: ModelArgs,
        /// Generations simulated per run.
        #[arg(long)]
        horizon: Option<usize>,
        /// Runs averaged.
        #[arg(long)]
        iterations: Option<usize>,
        /// Relative band around the final value that defines the plateau.
        #[arg(long)]
        plateau_tolerance: Option<f64>,
    },
    /// Rejection ABC posterior of b for an observed frequency table.
    Infer {
        input: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        y_max: Option<usize>,
        /// Reference simulations.
        #[arg(long)]
        iterations: Option<usize>,
        /// Accepted fraction ε.
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        prior_low: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        prior_high: Option<f64>,
        /// Goodness of fit with this many pseudo-observed rows.
        #[arg(long)]
        gof: Option<usize>,
        /// Cross-validation with this many held-out rows.
        #[arg(long)]
        cv: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        cv_tolerances: Option<Vec<f64>>,
        /// 100,000 reference simulations unless --iterations is given.
        #[arg(long)]
        full_scale: bool,
    },
    /// Random-forest choice between conformity, novelty and neutrality.
    Choose {
        input: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        y_max: Option<usize>,
        /// Reference simulations per model.
        #[arg(long)]
        n_per_model: Option<usize>,
        /// Trees in the classification forest.
        #[arg(long)]
        trees: Option<usize>,
        /// Trees in the misclassification regression forest.
        #[arg(long)]
        posterior_trees: Option<usize>,
        /// Bootstrap draws per tree (default: reference size).
        #[arg(long)]
        bootstrap_rows: Option<usize>,
        /// 50,000 simulations per model and 1,000 trees unless given explicitly.
        #[arg(long)]
        full_scale: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Simulate { .. } => "simulate",
            Command::Turnover { .. } => "turnover",
            Command::Warmup { .. } => "warmup",
            Command::Infer { .. } => "infer",
            Command::Choose { .. } => "choose",
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_model(s: &mut Settings, m: &ModelArgs) -> Result<(), Failure> {
    if m.params.is_some() {
        s.params = m.params.clone();
    }
    if let Some(path) = &s.params {
        let p = load_params(path)?;
        s.population_size = p.population_size;
        s.innovation_rate = p.innovation_rate;
    }
    set(&mut s.population_size, m.population_size);
    set(&mut s.innovation_rate, m.innovation_rate);
    set(&mut s.warmup_steps, m.warmup_steps);
    Ok(())
}

fn apply_input(s: &mut Settings, input: &Option<PathBuf>) {
    if input.is_some() {
        s.input = input.clone();
    }
}

/// Overlays the command-line flags onto `s`.
fn apply(s: &mut Settings, command: &Command) -> Result<(), Failure> {
    match command {
        Command::Ingest { input, start, end } => {
            apply_input(s, input);
            s.range_start = start.or(s.range_start);
            s.range_end = end.or(s.range_end);
        }
        Command::Simulate {
            model,
            bias,
            timepoints,
        } => {
            apply_model(s, model)?;
            set(&mut s.bias, *bias);
            set(&mut s.timepoints, *timepoints);
        }
        Command::Turnover {
            input,
            model,
            y_max,
            neutral_reps,
        } => {
            apply_input(s, input);
            apply_model(s, model)?;
            set(&mut s.y_max, *y_max);
            set(&mut s.neutral_reps, *neutral_reps);
        }
        Command::Warmup {
            model,
            horizon,
            iterations,
            plateau_tolerance,
        } => {
            apply_model(s, model)?;
            set(&mut s.horizon, *horizon);
            set(&mut s.warmup_iterations, *iterations);
            set(&mut s.plateau_tolerance, *plateau_tolerance);
        }
        Command::Infer {
            input,
            model,
            y_max,
            iterations,
            tolerance,
            prior_low,
            prior_high,
            gof,
            cv,
            cv_tolerances,
            full_scale,
        } => {
            apply_input(s, input);
            apply_model(s, model)?;
            if *full_scale {
                s.iterations = 100_000;
            }
            set(&mut s.y_max, *y_max);
            set(&mut s.iterations, *iterations);
            set(&mut s.tolerance, *tolerance);
            set(&mut s.prior_low, *prior_low);
            set(&mut s.prior_high, *prior_high);
            s.gof_pseudo = gof.or(s.gof_pseudo);
            s.cv_folds = cv.or(s.cv_folds);
            set(&mut s.cv_tolerances, cv_tolerances.clone());
        }
        Command::Choose {
            input,
            model,
            y_max,
            n_per_model,
            trees,
            posterior_trees,
            bootstrap_rows,
            full_scale,
        } => {
            apply_input(s, input);
            apply_model(s, model)?;
            if *full_scale {
                s.n_per_model = 50_000;
                s.n_trees = 1_000;
                s.posterior_trees = 1_000;
            }
            set(&mut s.y_max, *y_max);
            set(&mut s.n_per_model, *n_per_model);
            set(&mut s.n_trees, *trees);
            set(&mut s.posterior_trees, *posterior_trees);
            s.bootstrap_rows = bootstrap_rows.or(s.bootstrap_rows);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<RunManifest, Failure> {
    let started_at = now();
    let name = cli.command.name();
    let (mut settings, config_seed) = match &cli.config {
        Some(path) => {
            let file = load_config(path)?;
            if let Some(recorded) = &file.command {
                if recorded != name {
                    return Err(Failure::usage(format!(
                        "{}: manifest records command `{recorded}`, not `{name}`",
                        path.display()
                    )));
                }
            }
            (file.settings, file.seed)
        }
        None => (Settings::default(), None),
    };
    apply(&mut settings, &cli.command)?;
    let seed = cli.seed.or(config_seed).unwrap_or(DEFAULT_SEED);
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Failure::usage("--workers must be >= 1"));
        }
        cultabc::parallel::set_workers(w);
    }

    let mut inputs = Vec::new();
    if let Some(p) = &settings.input {
        if !p.is_file() {
            return Err(Failure::usage(format!("{}: no such file", p.display())));
        }
        inputs.push(digest_file(p)?);
    }
    if let Some(p) = &settings.params {
        inputs.push(digest_file(p)?);
    }

    let mut out = Outputs::create(&cli.out_dir)?;
    match cli.command {
        Command::Ingest { .. } => commands::ingest(&settings, &mut out)?,
        Command::Simulate { .. } => commands::simulate(&settings, seed, &mut out)?,
        Command::Turnover { .. } => commands::turnover(&settings, seed, &mut out)?,
        Command::Warmup { .. } => commands::warmup(&settings, seed, &mut out)?,
        Command::Infer { .. } => commands::infer(&settings, seed, &mut out)?,
        Command::Choose { .. } => commands::choose(&settings, seed, &mut out)?,
    }
    out.finish(RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        rng_scheme: RNG_SCHEME.into(),
        command: name.into(),
        seed,
        workers: cli.workers,
        config: settings,
        inputs,
        outputs: Vec::new(),
        started_at,
        finished_at: String::new(),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let out_dir = cli.out_dir.clone();
    match run(cli) {
        Ok(m) => {
            eprintln!(
                "{}: wrote {} files and {}",
                m.command,
                m.outputs.len(),
                out_dir.join(manifest::MANIFEST_FILE).display()
            );
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
