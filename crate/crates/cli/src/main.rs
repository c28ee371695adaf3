#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use clap::{Args, Parser, Subcommand, ValueEnum};
use commands::Manifest;
use config::RunConfig;
use error::CliError;
use layerlab::harness::LimitKind;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "layerlab", version, about = "Shot-noise simulation of stable, layered stable and mixed stable processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate sample paths and write one file per process per path.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Companion processes on the same draws, e.g. stable:1.3,layered:1.1:2.5
        #[arg(long)]
        coupled: Option<String>,
        /// Re-run the configuration recorded in a manifest.
        #[arg(long)]
        from_manifest: Option<PathBuf>,
    },
    /// Compare rescaled terminal values with the short- or long-time limit law.
    LimitCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        h: f64,
        /// `default` or lo:hi:n per axis.
        #[arg(long, default_value = "default", allow_hyphen_values = true)]
        y_grid: String,
        #[arg(long, default_value_t = 0.07)]
        threshold: f64,
    },
    /// Change-of-measure diagnostics between the stable and layered laws.
    Rn {
        #[command(flatten)]
        common: Common,
        /// sup-exceeds:c, terminal-exceeds:c, clipped-norm or one.
        #[arg(long, default_value = "sup-exceeds:3")]
        functional: String,
    },
    /// Hill estimate of the terminal tail index with a bootstrap interval.
    Tail {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run the invariant suite and print a table.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Short,
    Long,
}

#[derive(Args, Default)]
struct Common {
    /// File of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// stable, layered, layered-rejection or mixed.
    #[arg(long)]
    process: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// discrete:[(x1,..,xd):w,...] or uniform:d:mass
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<String>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma_cap: Option<f64>,
    /// Output directory for simulate, report file otherwise.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    format: Option<String>,
    /// canonical or blend:<mass>
    #[arg(long)]
    q: Option<String>,
    /// point:a, discrete:a:p,... or uniform:lo:hi
    #[arg(long)]
    mix: Option<String>,
    /// inner or outer
    #[arg(long)]
    base: Option<String>,
    /// Add a Brownian term matching the covariance of the discarded jumps.
    #[arg(long)]
    gaussian_remainder: bool,
}

impl Common {
    /// Defaults, then the config file, then flags. The flag reports whether
    /// an output path was given explicitly.
    fn resolve(&self, base: RunConfig) -> Result<(RunConfig, bool), CliError> {
        let mut c = base;
        let default_out = c.out.clone();
        if let Some(p) = &self.config {
            c.apply_file(p)?;
        }
        macro_rules! over {
            ($($f:ident => $k:ident),*) => {$(
                if let Some(v) = &self.$f { c.$k = v.clone(); }
            )*};
        }
        over!(process => process, alpha => alpha, beta => beta, sigma => sigma, horizon => horizon,
              grid_n => grid_n, paths => paths, seed => seed, gamma_cap => gamma_cap, out => out,
              format => format, q => q, mix => mix, base => base);
        if self.gaussian_remainder {
            c.gaussian_remainder = true;
        }
        let out_set = c.out != default_out || self.out.is_some();
        Ok((c, out_set))
    }
}

fn emit<T: Serialize>(report: &T, out: Option<&str>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, &text).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, coupled, from_manifest } => {
            let base = match &from_manifest {
                Some(p) => Manifest::read(p)?.config,
                None => RunConfig::default(),
            };
            let (mut c, _) = common.resolve(base)?;
            if let Some(s) = coupled {
                c.coupled = s;
            }
            let m = commands::simulate(&c)?;
            eprintln!("wrote {} files to {} in {:.3}s", m.files.len() + 1, c.out, m.wall_time_seconds);
            Ok(())
        }
        Command::LimitCheck { common, mode, h, y_grid, threshold } => {
            let (c, out_set) = common.resolve(RunConfig::default())?;
            let kind = match mode {
                Mode::Short => LimitKind::Short,
                Mode::Long => LimitKind::Long,
            };
            let r = commands::limit(&c, kind, h, &y_grid, threshold)?;
            emit(&r, out_set.then_some(c.out.as_str()))?;
            if r.pass {
                Ok(())
            } else {
                Err(CliError::CheckFailed(format!("cf distance {:.4} >= threshold {}", r.distance, r.threshold)))
            }
        }
        Command::Rn { common, functional } => {
            let (c, out_set) = common.resolve(RunConfig::default())?;
            let r = commands::rn(&c, &functional)?;
            emit(&r, out_set.then_some(c.out.as_str()))?;
            if r.weights_normalized && r.estimates_agree {
                Ok(())
            } else {
                Err(CliError::CheckFailed("weights not normalized or estimates disagree".into()))
            }
        }
        Command::Tail { common, k } => {
            let (c, out_set) = common.resolve(RunConfig::default())?;
            let r = commands::tail(&c, k)?;
            emit(&r, out_set.then_some(c.out.as_str()))
        }
        Command::Selftest => {
            let corrupt = std::env::var("LAYERLAB_SELFTEST_CORRUPT").map(|v| v.trim() == "zeta").unwrap_or(false);
            let checks = commands::run_selftest(corrupt)?;
            print!("{}", commands::selftest_table(&checks));
            let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(CliError::CheckFailed(format!("failing checks: {}", failed.join("; "))))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
