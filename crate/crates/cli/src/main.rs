//! `cqca`: run simulations, protocol sessions, security sweeps and the
//! threshold search.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 protocol abort.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Command, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "cqca", version, about = "Counterfactual certificate-authorization simulator")]
struct Cli {
    /// `key = value` file applied before the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    flags: Flags,

    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Monte Carlo rounds with every setting revealed; merit report and theory table.
    Simulate,
    /// Full session with sampling, checks and sifting.
    Protocol,
    /// Information curves over a grid of probe strengths (CSV).
    Analyze,
    /// Largest tolerable probe strength and its error rate.
    Threshold,
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// Number of rounds.
    #[arg(long, global = true)]
    n: Option<u64>,
    /// Fraction of rounds disclosed for the checks.
    #[arg(long, global = true)]
    f: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// none, eve, alice-single or alice-double.
    #[arg(long, global = true)]
    attack: Option<String>,
    /// Eve's probe strength in radians.
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// Fraction of rounds Alice attacks.
    #[arg(long, global = true)]
    p: Option<f64>,
    /// random-quarter or always-d2.
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Arm targeted by a single-path attack: b or c.
    #[arg(long, global = true)]
    target: Option<String>,
    #[arg(long, global = true)]
    knows_schedule: Option<bool>,
    #[arg(long, global = true)]
    schedule_guess_rate: Option<f64>,
    #[arg(long, global = true)]
    loss_rate: Option<f64>,
    #[arg(long, global = true)]
    dark_rate: Option<f64>,
    #[arg(long, global = true)]
    timing_jitter: Option<bool>,
    /// Absolute tolerance floor of the checks.
    #[arg(long, global = true)]
    floor: Option<f64>,
    /// z-score of the checks.
    #[arg(long, global = true)]
    z: Option<f64>,
    #[arg(long, global = true)]
    error_ceiling: Option<f64>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// text, csv or json-lines.
    #[arg(long, global = true)]
    format: Option<String>,
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    /// Bisection width for the threshold.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field {
                    out.push((stringify!($field), v.to_string()));
                })*
            };
        }
        push!(
            n,
            f,
            seed,
            attack,
            theta,
            p,
            strategy,
            target,
            knows_schedule,
            schedule_guess_rate,
            loss_rate,
            dark_rate,
            timing_jitter,
            floor,
            z,
            error_ceiling,
            format,
            grid_points,
            tol
        );
        if let Some(path) = &self.output {
            out.push(("output", path.display().to_string()));
        }
        out
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, String> {
    let command = match cli.command {
        Sub::Simulate => Command::Simulate,
        Sub::Protocol => Command::Protocol,
        Sub::Analyze => Command::Analyze,
        Sub::Threshold => Command::Threshold,
    };
    let mut cfg = RunConfig::new(command);
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.apply_text(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    for (k, v) in cli.flags.pairs() {
        cfg.set(k, &v).map_err(|e| e.to_string())?;
    }
    cfg.command = command;
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    eprint!("{}", cfg.to_text());
    match commands::run(&cfg) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
