mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::output::CliError;

/// Nonlocal cubic-quintic double-well toolkit.
#[derive(Debug, Parser)]
#[command(name = "dwell", version)]
struct Cli {
    /// Worker threads for parallel sweeps (defaults to all cores).
    #[arg(long, global = true, env = "DWELL_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,

    /// Output directory; created if missing.
    #[arg(long, default_value = "dwell-out")]
    pub out: PathBuf,

    /// Seed for random perturbations.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Take the configuration (and scenario settings) from a built-in preset.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParentArg {
    Symmetric,
    Antisymmetric,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PerturbationArg {
    Random,
    Eigenvector,
    None,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Linear eigenvalues, eigenmodes and the rotated basis.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Overlap integrals over a range sweep and the regime thresholds.
    Overlaps {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1)]
        sigma_min: f64,
        #[arg(long, default_value_t = 12.0)]
        sigma_max: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma_step: f64,
    },
    /// Fixed points, critical norms and phase portraits of the two-mode reduction.
    Twomode {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8.0)]
        n_max: f64,
        #[arg(long, default_value_t = 0.01)]
        n_step: f64,
        /// Norm of the phase portrait.
        #[arg(long, default_value_t = 5.0)]
        probe_norm: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma_min: f64,
        #[arg(long, default_value_t = 10.0)]
        sigma_max: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma_step: f64,
        #[arg(long, default_value_t = 400.0)]
        t_end: f64,
    },
    /// Stationary branches by pseudo-arclength continuation.
    Continue {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ParentArg::Both)]
        parent: ParentArg,
        /// Also trace the asymmetric branch born at each parent's first pitchfork.
        #[arg(long)]
        daughters: bool,
        /// Linearization spectrum on every k-th state (0 disables it).
        #[arg(long, default_value_t = 1)]
        stability_stride: usize,
        /// Store full profiles of every state.
        #[arg(long)]
        profiles: bool,
    },
    /// Linearization spectra of stored states.
    Stability {
        #[command(flatten)]
        common: Common,
        /// JSON file with one state or a list of states (as written by `continue --profiles`).
        #[arg(long)]
        states: PathBuf,
        /// Also write every full spectrum.
        #[arg(long)]
        spectra: bool,
    },
    /// Time evolution of a perturbed stationary state.
    Evolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, value_enum)]
        parent: Option<ParentArg>,
        #[arg(long, value_enum)]
        perturbation: Option<PerturbationArg>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Screened-Poisson thermal response against the exponential-kernel convolution.
    Thermal {
        #[command(flatten)]
        common: Common,
        /// Diffusion length squared.
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma0: f64,
        /// Peak amplitude of the Gaussian beam.
        #[arg(long, default_value_t = 0.8)]
        amplitude: f64,
        #[arg(long, default_value_t = 2.0)]
        width: f64,
    },
    /// Runs presets and compares them with their stored expectations.
    Regress {
        #[command(flatten)]
        common: Common,
        /// List the presets and exit.
        #[arg(long)]
        list: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return output::report_error(&CliError::usage(format!("cannot configure {n} workers: {e}")));
        }
    }
    let result = match cli.command {
        Command::Spectrum { common } => commands::spectrum(&common),
        Command::Overlaps {
            common,
            sigma_min,
            sigma_max,
            sigma_step,
        } => commands::overlaps(&common, sigma_min, sigma_max, sigma_step),
        Command::Twomode {
            common,
            n_max,
            n_step,
            probe_norm,
            sigma_min,
            sigma_max,
            sigma_step,
            t_end,
        } => commands::twomode(
            &common,
            &commands::TwomodeArgs {
                n_max,
                n_step,
                probe_norm,
                sigma_min,
                sigma_max,
                sigma_step,
                t_end,
            },
        ),
        Command::Continue {
            common,
            parent,
            daughters,
            stability_stride,
            profiles,
        } => commands::continuation(&common, parent, daughters, stability_stride, profiles),
        Command::Stability { common, states, spectra } => commands::stability(&common, &states, spectra),
        Command::Evolve {
            common,
            mu,
            parent,
            perturbation,
            t_end,
            dt,
        } => commands::evolve(&common, mu, parent, perturbation, t_end, dt),
        Command::Thermal {
            common,
            d,
            sigma0,
            amplitude,
            width,
        } => commands::thermal(&common, d, sigma0, amplitude, width),
        Command::Regress { common, list } => commands::regress(&common, list),
    };
    match result {
        Ok(code) => code,
        Err(e) => output::report_error(&e),
    }
}
