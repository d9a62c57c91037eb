//! Command-line front end: argument parsing, dispatch and output.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::{Error, Result};

pub mod commands;
pub mod config;
pub mod io;
pub mod presets;

pub use commands::{cmd_cool, cmd_fit, cmd_iv, cmd_pulse, cmd_rates, cmd_spectrum, Context, FitKind};
pub use config::{LoadedConfig, Scenario, ScenarioConfig};

/// Exit code for malformed configuration or input data.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numerical failures inside the library.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "qcrsim",
    version,
    about = "QCR-cooled resonator simulator and calibration fits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file, overlaid on the preset if both are given.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in scenario: table1, fig1c, fig2c, fig3b_pulse, fig3d, fig4c.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for synthetic noise.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Junction current and differential conductance over the sweep.
    Iv,
    /// QCR decay rate, bath temperature and occupation over the sweep.
    Rates,
    /// Steady-state resonator occupation with QCR and drive-line baths.
    Cool,
    /// Master-equation transient under square-wave QCR modulation.
    Pulse,
    /// Synthesize a number-splitting spectrum, or extract populations from
    /// one with --input.
    Spectrum {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Calibrate device parameters from measured data.
    Fit {
        #[arg(value_enum)]
        kind: FitArg,
        /// Two-column data file (V in uV and I in nA, or V in uV and nbar).
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitArg {
    Iv,
    Cooling,
}

/// Map an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

/// Run a parsed command line, writing to `--out` or `stdout`.
pub fn run<W: Write>(cli: &Cli, stdout: W) -> Result<()> {
    let loaded = LoadedConfig::load(cli.preset.as_deref(), cli.config.as_deref())?;
    let ctx = Context::new(loaded, cli.seed)?;
    let mut buf = Vec::new();
    match &cli.command {
        Command::Iv => cmd_iv(&ctx)?.write_csv(&mut buf)?,
        Command::Rates => cmd_rates(&ctx)?.write_csv(&mut buf)?,
        Command::Cool => cmd_cool(&ctx)?.write_csv(&mut buf)?,
        Command::Pulse => cmd_pulse(&ctx)?.0.write_csv(&mut buf)?,
        Command::Spectrum { input } => cmd_spectrum(&ctx, input.as_deref())?.write_csv(&mut buf)?,
        Command::Fit { kind, data } => {
            let kind = match kind {
                FitArg::Iv => FitKind::Iv,
                FitArg::Cooling => FitKind::Cooling,
            };
            cmd_fit(&ctx, kind, data)?.write(&mut buf)?
        }
    }
    match &cli.out {
        Some(path) => {
            std::fs::write(path, &buf).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?
        }
        None => {
            let mut out = stdout;
            out.write_all(&buf)?;
            out.flush()?;
        }
    }
    Ok(())
}
