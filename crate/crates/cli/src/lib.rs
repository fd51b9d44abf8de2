//! `transient-bench` command-line front end: run scenarios to CSV, report
//! overvoltage and dominant frequency, draw SVG plots.

pub mod analyze;
pub mod plot;
pub mod simulate;
pub mod waveform_csv;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

/// Process exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<transient_bench_core::Error> for CliError {
    fn from(e: transient_bench_core::Error) -> Self {
        use transient_bench_core::Error as E;
        let code = match e {
            E::Singular { .. } | E::Numeric { .. } => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "transient-bench",
    version,
    about = "Switching-transient studies of transformer energization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario (or a batch file of scenarios) and write waveforms.csv
    /// plus manifest.json.
    Simulate {
        scenario: PathBuf,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        /// Dotted-path override, e.g. `transformer.tap=21`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Time step, s.
        #[arg(long)]
        dt: Option<f64>,
        /// End time, s.
        #[arg(long = "t-end")]
        t_end: Option<f64>,
    },
    /// Peak over-voltage and dominant frequency of one probe.
    Analyze {
        csv: PathBuf,
        #[arg(long)]
        probe: String,
        /// Rated line-to-line rms voltage for the p.u. base, kV.
        #[arg(long = "base-kv")]
        base_kv: f64,
        /// Time window `a:b`, s.
        #[arg(long)]
        window: Option<String>,
    },
    /// Static SVG plot of selected probes.
    Plot {
        csv: PathBuf,
        /// Comma-separated probe names.
        #[arg(long, value_delimiter = ',', required = true)]
        probes: Vec<String>,
        /// Inset window `a:b`, s.
        #[arg(long)]
        zoom: Option<String>,
        /// Main plot window `a:b`, s.
        #[arg(long = "t-range")]
        t_range: Option<String>,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
}

/// Parses `a:b` into an ordered time window.
pub fn parse_window(text: &str) -> CliResult<(f64, f64)> {
    let (a, b) = text
        .split_once(':')
        .ok_or_else(|| CliError::usage(format!("window `{text}` is not of the form a:b")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| CliError::usage(format!("window bound `{s}` is not a number")))
    };
    let (a, b) = (parse(a)?, parse(b)?);
    if b <= a {
        return Err(CliError::usage(format!("window `{text}` is empty")));
    }
    Ok((a, b))
}

/// Runs one parsed command, writing human output to `out`.
pub fn execute(cli: Cli, out: &mut dyn std::io::Write) -> CliResult<()> {
    match cli.command {
        Command::Simulate {
            scenario,
            out: dir,
            overrides,
            dt,
            t_end,
        } => {
            let mut pairs = Vec::with_capacity(overrides.len() + 2);
            for o in &overrides {
                let (k, v) = o
                    .split_once('=')
                    .ok_or_else(|| CliError::usage(format!("override `{o}` is not KEY=VALUE")))?;
                pairs.push((k.trim().to_string(), v.trim().to_string()));
            }
            if let Some(dt) = dt {
                pairs.push(("sim.dt_s".into(), format!("{dt:?}")));
            }
            if let Some(t) = t_end {
                pairs.push(("sim.t_end_s".into(), format!("{t:?}")));
            }
            simulate::simulate(&scenario, &dir, &pairs, out)
        }
        Command::Analyze {
            csv,
            probe,
            base_kv,
            window,
        } => {
            let window = window.as_deref().map(parse_window).transpose()?;
            analyze::analyze(&csv, &probe, base_kv, window, out)
        }
        Command::Plot {
            csv,
            probes,
            zoom,
            t_range,
            out: svg,
        } => {
            let zoom = zoom.as_deref().map(parse_window).transpose()?;
            let t_range = t_range.as_deref().map(parse_window).transpose()?;
            plot::plot(&csv, &probes, t_range, zoom, &svg, out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows() {
        assert_eq!(parse_window("0:1e-3").unwrap(), (0.0, 1e-3));
        assert_eq!(parse_window(" 0.5 : 2 ").unwrap(), (0.5, 2.0));
        assert!(parse_window("1:1").is_err());
        assert!(parse_window("2:1").is_err());
        assert!(parse_window("a:b").is_err());
        assert!(parse_window("12").is_err());
    }

    #[test]
    fn core_errors_map_to_exit_codes() {
        use transient_bench_core::Error;
        let e: CliError = Error::Singular { nodes: vec![2] }.into();
        assert_eq!(e.code, EXIT_NUMERIC);
        let e: CliError = Error::Config {
            path: "sim.dt_s".into(),
            message: "must be > 0".into(),
        }
        .into();
        assert_eq!(e.code, EXIT_USAGE);
    }
}
