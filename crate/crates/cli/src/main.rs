//! `weylab` — experiment runner for torus equidistribution diagnostics.
//!
//! Every subcommand reads its settings from flags (optionally merged over a
//! flat TOML config file given with `--config`), writes fixed-header CSV
//! tables plus a deterministic `summary.json` keyed by a SHA-256 hash of the
//! resolved inputs, and records wall-clock metadata separately in
//! `run_meta.json` so re-runs stay byte-identical.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 computation failure.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use commands::Failure;
use serde_json::json;

#[derive(Parser)]
#[command(name = "weylab", version, about = "Equidistribution experiments on dilated curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exponential-sum magnitudes over a frequency box, with a verdict
    Weyl(commands::WeylArgs),
    /// Box discrepancy of the sample clouds
    Discrepancy(commands::DiscrepancyArgs),
    /// Non-degeneracy order report for a curve family
    RndOrder(commands::RndOrderArgs),
    /// Sub-level interval structure of a pairing
    Sublevel(commands::SublevelArgs),
    /// Fit the sub-level exponent alpha across an epsilon grid
    AlphaFit(commands::AlphaFitArgs),
    /// Exponent-schedule sweep with uniform negativity checks
    VdcSweep(commands::VdcSweepArgs),
    /// Fourth moment of the rotated sums over a full period
    FourthMoment(commands::FourthMomentArgs),
    /// Counterexample dilation constructions
    #[command(subcommand)]
    BadDilation(commands::BadDilationCmd),
    /// Monte-Carlo over rotation offsets, with a constructed contrast
    Rotations(commands::RotationsArgs),
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Weyl(a) => commands::run_weyl(a),
        Command::Discrepancy(a) => commands::run_discrepancy(a),
        Command::RndOrder(a) => commands::run_rnd_order(a),
        Command::Sublevel(a) => commands::run_sublevel(a),
        Command::AlphaFit(a) => commands::run_alpha_fit(a),
        Command::VdcSweep(a) => commands::run_vdc_sweep(a),
        Command::FourthMoment(a) => commands::run_fourth_moment(a),
        Command::BadDilation(commands::BadDilationCmd::Poly(a)) => commands::run_bad_poly(a),
        Command::BadDilation(commands::BadDilationCmd::Generic(a)) => commands::run_bad_generic(a),
        Command::Rotations(a) => commands::run_rotations(a),
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(Failure::Config(e)) => {
            eprintln!("{}", json!({"kind": "config", "error": format!("{e:#}")}));
            std::process::exit(2);
        }
        Err(Failure::Compute(e)) => {
            eprintln!("{}", json!({"kind": "compute", "error": format!("{e:#}")}));
            std::process::exit(3);
        }
    }
}
