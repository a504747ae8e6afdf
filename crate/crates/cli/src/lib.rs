//! Experiment driver: declarative JSON configs in, CSV/SVG/JSON artifacts out.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};

/// Thread-count override for the internal rayon pool.
pub const THREADS_ENV: &str = "DM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dmctl", version, about = "Deformable-mirror modelling, steady-state control and identification")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON experiment config; omitted keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set identification.p_grid=1:20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Shorthand for `--set output_dir=DIR`.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assemble the plate model and export its matrices.
    BuildModel {
        /// Model directory (default `<output_dir>/model`).
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Steady-state forces for a list of Zernike targets.
    SteadyState {
        /// Exported model directory; assembled from the config if omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Target mode such as `Z2^0` or `j4`; repeat or comma-separate.
        #[arg(long = "mode", value_delimiter = ',')]
        modes: Vec<String>,
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        /// Skip the bar-chart SVG.
        #[arg(long)]
        no_svg: bool,
    },
    /// Generate one trajectory.
    Simulate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        f: Option<usize>,
        #[arg(long)]
        h: Option<f64>,
        /// Input and initial-state seed (default `seeds.train`).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long)]
        input_std: Option<f64>,
        #[arg(long)]
        init_std: Option<f64>,
        /// Trajectory CSV (default `<output_dir>/trajectory.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate train/val/test data and run order selection.
    Fit {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Directory with `train.csv`, `val.csv`, `test.csv` to use instead of simulating.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Evaluate a saved predictor on a trajectory.
    Validate {
        #[arg(long)]
        predictor: PathBuf,
        /// Trajectory CSV; a fresh test set is simulated if omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Summarize a finished `fit` run.
    Report {
        /// Run directory (default `output_dir`).
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

fn push<T: ToString>(out: &mut Vec<String>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        out.push(format!("{key}={}", v.to_string()));
    }
}

/// Subcommand flags folded into config overrides, so the echoed config
/// records them.
fn flag_overrides(cmd: &Command) -> Vec<String> {
    let mut o = Vec::new();
    match cmd {
        Command::SteadyState {
            modes,
            amplitude,
            tol,
            no_svg,
            ..
        } => {
            if !modes.is_empty() {
                o.push(format!("steady_state.modes={}", serde_json::to_string(modes).expect("strings")));
            }
            push(&mut o, "steady_state.amplitude", *amplitude);
            push(&mut o, "steady_state.tol", *tol);
            if *no_svg {
                o.push("steady_state.svg=false".into());
            }
        }
        Command::Simulate {
            f,
            h,
            snr,
            input_std,
            init_std,
            ..
        } => {
            push(&mut o, "simulation.f", *f);
            push(&mut o, "simulation.h", *h);
            push(&mut o, "simulation.snr", *snr);
            push(&mut o, "simulation.input_std", *input_std);
            push(&mut o, "simulation.init_std", *init_std);
        }
        _ => {}
    }
    o
}

pub fn resolve_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut overrides = cli.global.overrides.clone();
    if let Some(dir) = &cli.global.output_dir {
        overrides.push(format!("output_dir={}", serde_json::to_string(dir).expect("path")));
    }
    overrides.extend(flag_overrides(&cli.command));
    config::load(cli.global.config.as_deref(), &overrides)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::BuildModel { model_out } => commands::cmd_build_model(&cfg, model_out.as_deref()).map(drop),
        Command::SteadyState { model, .. } => commands::cmd_steady_state(&cfg, model.as_deref()).map(drop),
        Command::Simulate { model, seed, out, .. } => commands::cmd_simulate(&cfg, model.as_deref(), *seed, out.as_deref()).map(drop),
        Command::Fit { model, data_dir } => commands::cmd_fit(&cfg, model.as_deref(), data_dir.as_deref()).map(drop),
        Command::Validate { predictor, data, model } => commands::cmd_validate(&cfg, predictor, data.as_deref(), model.as_deref()).map(drop),
        Command::Report { run } => commands::cmd_report(&cfg, run.as_deref()).map(drop),
    }
}

/// Parses, runs and maps the outcome to a process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
