//! `autowave`: calibrate the cell curve, sweep front speed against bias,
//! solve template-image path problems and print solve-time estimates.
//!
//! Exit codes: 0 success or target reached, 2 no path, 3 iteration budget
//! exceeded, 4 configuration or input error, 5 numerical failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use autowave::FixtureKind;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "autowave", version, about = "Trigger-wave simulator and path solver")]
struct Cli {
    /// TOML run configuration; nominal values when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags that replace the matching configuration keys.
#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, global = true)]
    rows: Option<usize>,
    #[arg(long, global = true)]
    cols: Option<usize>,
    /// Bias current I_B (uA).
    #[arg(long, global = true)]
    bias: Option<f64>,
    /// Integration step (ns).
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Winner threshold V_w (V).
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the cubic slope to a transition interval and write curve.toml.
    Calibrate {
        /// Target t_p (ns).
        #[arg(long)]
        target_tp: Option<f64>,
    },
    /// Measure t_p and c_p over a list of biases and write speed.csv.
    Speed {
        /// Comma-separated biases (uA); an empty list writes only the header.
        #[arg(long = "biases", value_delimiter = ',', num_args = 0..)]
        biases: Option<Vec<f64>>,
    },
    /// Solve a path problem and write solution.json and overlay.pgm.
    Solve {
        /// room, maze, corridor or sealed.
        #[arg(long)]
        fixture: Option<FixtureKind>,
        /// PGM template image; takes precedence over --fixture.
        #[arg(long)]
        template: Option<PathBuf>,
        /// Start cell as ROW,COL.
        #[arg(long, value_parser = parse_cell)]
        start: Option<[usize; 2]>,
        /// Target cell as ROW,COL.
        #[arg(long, value_parser = parse_cell)]
        target: Option<[usize; 2]>,
        /// Dump a PGM frame every this many ns of each wave.
        #[arg(long)]
        frames: Option<f64>,
        /// Transition interval for the timeouts (ns); measured when omitted.
        #[arg(long)]
        tp: Option<f64>,
        #[arg(long)]
        no_overlay: bool,
    },
    /// Print the series solve time for a path length and/or the worst case
    /// for a grid size.
    #[command(allow_negative_numbers = true)]
    Predict {
        /// Path length P.
        #[arg(long)]
        steps: Option<u64>,
        /// Grid size N M.
        #[arg(long, num_args = 2, value_names = ["N", "M"])]
        size: Option<Vec<usize>>,
        /// Transition interval (ns).
        #[arg(long, default_value_t = 16.92)]
        tp: f64,
    },
}

fn parse_cell(s: &str) -> Result<[usize; 2], String> {
    let (r, c) = s.split_once(',').ok_or_else(|| format!("expected ROW,COL, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok([parse(r)?, parse(c)?])
}

fn configure(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = o.rows {
        cfg.grid.rows = v;
    }
    if let Some(v) = o.cols {
        cfg.grid.cols = v;
    }
    if let Some(v) = o.bias {
        cfg.grid.bias = v;
    }
    if let Some(v) = o.dt {
        cfg.grid.dt = v;
    }
    if let Some(v) = o.threshold {
        cfg.wave.threshold = v;
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.out {
        cfg.output.dir = v.clone();
    }
    match &cli.command {
        Command::Calibrate { target_tp } => {
            if let Some(v) = target_tp {
                cfg.wave.target_tp = *v;
            }
        }
        Command::Speed { biases } => {
            if let Some(v) = biases {
                cfg.sweep.biases = v.clone();
            }
        }
        Command::Solve { fixture, template, start, target, frames, tp, no_overlay } => {
            let p = &mut cfg.problem;
            if fixture.is_some() {
                p.fixture = *fixture;
                p.template = None;
            }
            if template.is_some() {
                p.template = template.clone();
            }
            p.start = start.or(p.start);
            p.target = target.or(p.target);
            p.t_p = tp.or(p.t_p);
            cfg.output.frame_every = frames.or(cfg.output.frame_every);
            if *no_overlay {
                cfg.output.overlay = false;
            }
        }
        Command::Predict { .. } => {}
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    if let Command::Predict { steps, size, tp } = &cli.command {
        let size = size.as_ref().map(|v| (v[0], v[1]));
        return commands::predict(*steps, size, *tp);
    }
    let cfg = configure(cli)?;
    match &cli.command {
        Command::Calibrate { .. } => commands::calibrate(&cfg),
        Command::Speed { .. } => commands::speed(&cfg, &cfg.sweep.biases),
        Command::Solve { .. } => commands::solve(&cfg),
        Command::Predict { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
