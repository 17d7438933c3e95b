//! `fockchip`: runs the chip's experiments from a configuration file and
//! writes machine-readable results.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::output::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "fockchip",
    version,
    about = "Digital twin of a heralded two-photon LN chip"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Chip configuration (JSON). Defaults to the bundled reference chip.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Pulses per run; overrides the desk-scale default.
    #[arg(long, global = true)]
    pulses: Option<u64>,
    /// Simulate the whole two-hour acquisition instead of 1/20 of it.
    #[arg(long, global = true, conflicts_with = "pulses")]
    full: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic loss and rate budget.
    RateBudget {
        /// Integration time, s.
        #[arg(long, default_value_t = commands::TWO_HOURS_S)]
        duration: f64,
    },
    /// Spectral purity from the configuration, and from a measured g²(0).
    Purity {
        #[arg(long)]
        g2: Option<f64>,
        #[arg(long, requires = "g2")]
        g2_err: Option<f64>,
    },
    /// Coupler splitting against voltage, analytic and simulated.
    VoltageScan {
        /// Comma list or start:stop:step, V.
        #[arg(long, default_value = "16:52:1", allow_hyphen_values = true)]
        voltages: String,
    },
    /// Four-folds against relative delay, with a sinc² dip fit. Each point
    /// runs the full two hours unless --pulses is given.
    HomScan {
        /// Comma list or start:stop:step, ps.
        #[arg(long, default_value = "-60:60:5", allow_hyphen_values = true)]
        delays: String,
        /// Coupler voltage; defaults to the 50:50 point.
        #[arg(long)]
        voltage: Option<f64>,
        /// Starting bandwidth for the fit, GHz; defaults to the S filters.
        #[arg(long)]
        bandwidth_hint: Option<f64>,
        /// Fit the bandwidth as well.
        #[arg(long)]
        fit_width: bool,
        /// Fit the dip centre as well.
        #[arg(long)]
        fit_center: bool,
        /// Herald filter detuning for the accidental-coincidence run, nm.
        #[arg(long, default_value_t = 4.0)]
        mismatch_nm: f64,
    },
    /// Four-folds against pulse offset at the 50:50 and bar settings.
    NoonHistogram {
        /// Coupler voltage; defaults to the 50:50 point.
        #[arg(long)]
        voltage: Option<f64>,
        #[arg(long, default_value_t = 3)]
        max_offset: u32,
    },
    /// Unheralded HBT autocorrelation of one source's idler split at C3.
    G2 {
        /// Source to keep on (1 or 2).
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        source: u8,
        /// Purity to impose on the source instead of the derived one.
        #[arg(long)]
        purity: Option<f64>,
    },
}

fn run(cli: Cli) -> Result<String, Failure> {
    let ctx = commands::Context::new(
        cli.common.config.as_deref(),
        cli.common.seed,
        cli.common.pulses,
        cli.common.full,
    )?;
    let report = match cli.command {
        Command::RateBudget { duration } => commands::rate_budget(&ctx, duration)?,
        Command::Purity { g2, g2_err } => commands::purity(&ctx, g2, g2_err)?,
        Command::VoltageScan { voltages } => commands::voltage_scan(&ctx, &voltages)?,
        Command::HomScan {
            delays,
            voltage,
            bandwidth_hint,
            fit_width,
            fit_center,
            mismatch_nm,
        } => commands::hom_scan(
            &ctx,
            &commands::HomScanArgs {
                delays: &delays,
                voltage,
                bandwidth_hint,
                fit_width,
                fit_center,
                mismatch_nm,
            },
        )?,
        Command::NoonHistogram {
            voltage,
            max_offset,
        } => commands::noon_histogram(&ctx, voltage, max_offset)?,
        Command::G2 { source, purity } => commands::g2(&ctx, usize::from(source) - 1, purity)?,
    };
    report.write(&cli.common.out)?;
    Ok(report.summary)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
