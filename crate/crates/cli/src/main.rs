//! `wavenet`: simulate and analyse damped wave networks from JSON configs.

mod commands;
mod config;
mod emit;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use wavenet::chain::FluxSign;
use wavenet::counterex::ProbeShift;
use wavenet::spectra::SearchBox;

use commands::{CexVariant, Outcome, SimOverrides, SweepOverrides};
use emit::{Outputs, RunManifest};

#[derive(Parser)]
#[command(name = "wavenet", version, about = "Damped wave networks with point-mass oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Directory for CSV, JSON, SVG and manifest output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG plots (needs --out).
    #[arg(long, requires = "out")]
    svg: bool,
    /// Exit with status 1 when the verdict is unstable or unbounded.
    #[arg(long)]
    expect_stable: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a network and report the Pi-tree (or chain) verdict.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Time-domain evolution with an energy audit.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "T", alias = "t-final")]
        t_final: Option<f64>,
        #[arg(long)]
        cfl: Option<f64>,
        #[arg(long = "cells-per-unit-length")]
        cells_per_unit: Option<f64>,
        #[arg(long)]
        sample_stride: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Eigenvalues of the characteristic system in a box.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        /// re_min,re_max,im_min,im_max
        #[arg(long = "box", allow_hyphen_values = true)]
        search_box: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Resolvent norm along the imaginary axis on a ladder of meshes.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        stop: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        h_base: Option<f64>,
        #[arg(long)]
        levels: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Chain determinant stability predicate with its witness table.
    ChainCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, value_enum)]
        sign: Option<SignArg>,
        #[command(flatten)]
        common: Common,
    },
    /// Convergent-driven probes of the circuit or star counterexample.
    Counterexample {
        #[arg(long, value_enum)]
        variant: VariantArg,
        /// Free edge length, e.g. "sqrt(2)" or "1.41421356".
        #[arg(long)]
        length: String,
        #[arg(long, default_value_t = 8)]
        probes: usize,
        #[arg(long, value_enum, default_value_t = ShiftArg::Shifted)]
        shift: ShiftArg,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SignArg {
    Kirchhoff,
    Reversed,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Circuit,
    Star,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShiftArg {
    Shifted,
    Unshifted,
}

fn parse_box(text: &str) -> Result<SearchBox> {
    let v: Vec<f64> = text.split(',').map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<_, _>>()?;
    if v.len() != 4 {
        bail!("--box needs four numbers re_min,re_max,im_min,im_max");
    }
    Ok(SearchBox::new(v[0], v[1], v[2], v[3]))
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check { .. } => "check",
            Command::Simulate { .. } => "simulate",
            Command::Spectrum { .. } => "spectrum",
            Command::Sweep { .. } => "sweep",
            Command::ChainCheck { .. } => "chain-check",
            Command::Counterexample { .. } => "counterexample",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Check { common, .. }
            | Command::Simulate { common, .. }
            | Command::Spectrum { common, .. }
            | Command::Sweep { common, .. }
            | Command::ChainCheck { common, .. }
            | Command::Counterexample { common, .. } => common,
        }
    }

    fn config(&self) -> Option<&PathBuf> {
        match self {
            Command::Check { config, .. }
            | Command::Simulate { config, .. }
            | Command::Spectrum { config, .. }
            | Command::Sweep { config, .. }
            | Command::ChainCheck { config, .. } => Some(config),
            Command::Counterexample { .. } => None,
        }
    }
}

fn execute(command: &Command, out: &mut Outputs) -> Result<Outcome> {
    let svg = command.common().svg;
    let cfg = match command.config() {
        Some(path) => config::load(path)?,
        None => Default::default(),
    };
    match command {
        Command::Check { tol, .. } => commands::check(&cfg, *tol),
        Command::Simulate { t_final, cfl, cells_per_unit, sample_stride, .. } => {
            let o = SimOverrides {
                t_final: *t_final,
                cfl: *cfl,
                cells_per_unit: *cells_per_unit,
                sample_stride: *sample_stride,
            };
            commands::simulate(&cfg, o, out, svg)
        }
        Command::Spectrum { search_box, .. } => {
            let b = search_box.as_deref().map(parse_box).transpose()?;
            commands::spectrum(&cfg, b, out, svg)
        }
        Command::Sweep { start, stop, step, h_base, levels, .. } => {
            let o = SweepOverrides { start: *start, stop: *stop, step: *step, h_base: *h_base, levels: *levels };
            commands::sweep_cmd(&cfg, o, out, svg)
        }
        Command::ChainCheck { tol, sign, .. } => {
            let sign = sign.map(|s| match s {
                SignArg::Kirchhoff => FluxSign::Kirchhoff,
                SignArg::Reversed => FluxSign::Reversed,
            });
            commands::chain_check(&cfg, *tol, sign)
        }
        Command::Counterexample { variant, length, probes, shift, .. } => {
            let variant = match variant {
                VariantArg::Circuit => CexVariant::Circuit,
                VariantArg::Star => CexVariant::Star,
            };
            let shift = match shift {
                ShiftArg::Shifted => ProbeShift::Shifted,
                ShiftArg::Unshifted => ProbeShift::Unshifted,
            };
            commands::counterexample(variant, length, *probes, shift, out, svg)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    let start = Instant::now();
    let command = &cli.command;
    let mut out = Outputs::new(command.common().out.as_deref())?;
    let outcome = execute(command, &mut out)?;
    print!("{}", emit::to_json(&outcome.summary)?);
    out.json(outcome.summary_file, &outcome.summary)?;
    out.finish(RunManifest {
        subcommand: command.name().into(),
        config: command.config().map(|p| p.display().to_string()),
        parameters: outcome.parameters,
        output_dir: String::new(),
        version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        files: Vec::new(),
    })?;
    Ok(outcome.unstable && command.common().expect_stable)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("verdict: unstable");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
