//! `fresh-csma`: run simulations, figure presets, parameter sweeps and
//! theorem checks from the command line.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fresh_csma_core::experiment::{
    preset, run_experiment, ExperimentSpec, ParamDefaults, SweepParam, WeightSpec, PRESET_NAMES,
};
use fresh_csma_core::verify::{verify, Theorem};
use fresh_csma_core::{Error, LogBase, PolicyKind};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "fresh-csma", version, about = "Fresh-CSMA age-of-information simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduce a figure preset at desk scale.
    Preset {
        /// Preset name; `list` prints the available names.
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one parameter over an explicit list of values.
    Sweep(SweepArgs),
    /// Check a theorem or lemma over randomized states.
    Verify {
        /// thm1, lemma1, lemma2, thm3, thm4, thm5 or all.
        theorem: String,
        /// States (closed-form checks) or samples per state (Monte Carlo checks).
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// Delivered updates per run.
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long, value_enum)]
    log_base: Option<LogBaseArg>,
    /// CSV destination; defaults to `$FRESH_CSMA_OUTPUT_DIR/<scenario>.csv`, else stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    param: SweepParamArg,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',', default_value = "max_weight,idealized_fresh_csma,near_realistic_fresh_csma")]
    policies: Vec<String>,
    #[arg(long, default_value_t = 10)]
    n_sources: usize,
    /// `uniform`, `sqrt` or a comma-separated list.
    #[arg(long, default_value = "uniform")]
    weights: String,
    #[arg(long, value_enum, default_value_t = DefaultsArg::Aoi)]
    defaults: DefaultsArg,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    b_offset: Option<u64>,
    /// Flip probability of every Markov source; required by AoII policies.
    #[arg(long)]
    markov_q: Option<f64>,
    #[arg(long, default_value = "sweep")]
    scenario: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogBaseArg {
    Natural,
    Ten,
}

#[derive(Clone, Copy, ValueEnum)]
enum DefaultsArg {
    Aoi,
    Aoii,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SweepParamArg {
    NSources,
    Alpha,
    Beta,
    BOffset,
    MinislotsPerUpdate,
}

impl From<SweepParamArg> for SweepParam {
    fn from(p: SweepParamArg) -> Self {
        match p {
            SweepParamArg::NSources => SweepParam::NSources,
            SweepParamArg::Alpha => SweepParam::Alpha,
            SweepParamArg::Beta => SweepParam::Beta,
            SweepParamArg::BOffset => SweepParam::BOffset,
            SweepParamArg::MinislotsPerUpdate => SweepParam::MinislotsPerUpdate,
        }
    }
}

enum Failure {
    Usage(String),
    Check,
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parameter(_) | Error::Domain(_) | Error::Config(_) => Failure::Usage(e.to_string()),
            Error::Io(_) | Error::Csv(_) => Failure::Runtime(e.to_string()),
        }
    }
}

fn apply_common(mut spec: ExperimentSpec, common: &Common) -> ExperimentSpec {
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    if let Some(h) = common.horizon {
        spec.horizon_deliveries = h;
    }
    if let Some(r) = common.replications {
        spec.replications = r;
    }
    if let Some(b) = common.log_base {
        spec.log_base = match b {
            LogBaseArg::Natural => LogBase::Natural,
            LogBaseArg::Ten => LogBase::Ten,
        };
    }
    if let Some(o) = &common.output {
        spec.output = Some(o.clone());
    }
    spec
}

fn output_path(spec: &ExperimentSpec) -> Option<PathBuf> {
    spec.output.clone().or_else(|| {
        std::env::var_os("FRESH_CSMA_OUTPUT_DIR").map(|d| PathBuf::from(d).join(format!("{}.csv", spec.scenario)))
    })
}

fn run_spec(spec: ExperimentSpec) -> Result<(), Failure> {
    spec.validate()?;
    let table = run_experiment(&spec)?;
    match output_path(&spec) {
        Some(path) => {
            table.write_csv_file(&path)?;
            eprintln!("wrote {} rows to {}", table.rows.len(), path.display());
        }
        None => table.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn parse_weights(text: &str) -> Result<WeightSpec, Failure> {
    match text {
        "uniform" | "sqrt" => Ok(WeightSpec::Profile(text.into())),
        list => list
            .split(',')
            .map(|w| w.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map(WeightSpec::Values)
            .map_err(|e| Failure::Usage(format!("invalid weights '{list}': {e}"))),
    }
}

fn sweep_spec(args: &SweepArgs) -> Result<ExperimentSpec, Failure> {
    let policies = args
        .policies
        .iter()
        .map(|p| p.parse::<PolicyKind>())
        .collect::<Result<Vec<_>, _>>()?;
    let mut spec = preset("fig3_symmetric")?;
    spec.scenario = args.scenario.clone();
    spec.policies = policies;
    spec.n_sources = args.n_sources;
    spec.weights = parse_weights(&args.weights)?;
    spec.param_defaults = match args.defaults {
        DefaultsArg::Aoi => ParamDefaults::Aoi,
        DefaultsArg::Aoii => ParamDefaults::Aoii,
    };
    spec.alpha = args.alpha;
    spec.beta = args.beta;
    spec.b_offset = args.b_offset;
    spec.markov_q = args.markov_q;
    spec.sweep_param = Some(args.param.into());
    spec.sweep_values = args.values.clone();
    Ok(apply_common(spec, &args.common))
}

fn run_verify(theorem: &str, trials: Option<usize>, seed: u64) -> Result<(), Failure> {
    let theorems = if theorem == "all" {
        Theorem::ALL.to_vec()
    } else {
        vec![theorem.parse::<Theorem>()?]
    };
    let mut all_passed = true;
    let mut out = std::io::stdout().lock();
    for t in theorems {
        let report = verify(t, trials, seed)?;
        writeln!(out, "{report}").map_err(|e| Failure::Runtime(e.to_string()))?;
        all_passed &= report.passed;
    }
    if all_passed {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, common } => {
            let spec = ExperimentSpec::from_file(&config).map_err(|e| match e {
                Error::Io(io) => Failure::Usage(format!("cannot read {}: {io}", config.display())),
                other => other.into(),
            })?;
            run_spec(apply_common(spec, &common))
        }
        Command::Preset { name, common } => {
            if name == "list" {
                println!("{}", PRESET_NAMES.join("\n"));
                return Ok(());
            }
            run_spec(apply_common(preset(&name)?, &common))
        }
        Command::Sweep(args) => run_spec(sweep_spec(&args)?),
        Command::Verify { theorem, trials, seed } => run_verify(&theorem, trials, seed),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CHECK_FAILED)
        }
    }
}
