//! `zrp`: steady states, identity checks, matrix product values, simulation
//! and the separation experiment for the multispecies q-Hahn zero range process.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "zrp", version, about = "Exact and Monte Carlo tools for the multispecies q-Hahn zero range process")]
pub struct Cli {
    /// Arithmetic for computed values.
    #[arg(long, value_enum, default_value_t = ModeArg::Exact, global = true)]
    pub mode: ModeArg,

    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Largest sector dimension to enumerate.
    #[arg(long, default_value_t = 20_000, global = true)]
    pub cap: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Float,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Stationary distribution of a sector.
    Steady(SteadyArgs),
    /// Run identity checks over the built-in parameter grids.
    Verify(VerifyArgs),
    /// Matrix product probabilities for two species.
    Mpa(MpaArgs),
    /// Monte Carlo estimate of the stationary distribution.
    Simulate(SimulateArgs),
    /// Evaluate the separation identity over a grid, as CSV.
    Conjecture(ConjectureArgs),
}

/// Sector and model parameters. Scalars are rationals such as `1/3` or decimals.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Number of species.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Number of sites.
    #[arg(long = "L")]
    pub len: usize,
    /// Particle numbers per species, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub m: Vec<u32>,
    #[arg(long)]
    pub q: Option<String>,
    /// Site parameters mu_1..mu_L (inhomogeneous).
    #[arg(long, value_delimiter = ',')]
    pub mus: Option<Vec<String>>,
    /// Common site parameter (homogeneous).
    #[arg(long)]
    pub mu: Option<String>,
    /// Spectral parameter of the transfer matrix.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Right hop scale.
    #[arg(long, default_value = "1")]
    pub a: String,
    /// Left hop scale.
    #[arg(long, default_value = "1")]
    pub b: String,
}

#[derive(Args, Debug)]
pub struct SteadyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// ybe, inversion, gauge, commute, baxter, duality, zf, aux, lemmas or all.
    #[arg(value_parser = suite_names())]
    pub suite: String,
    /// Restrict the vertex suites to one conserved weight, e.g. `1,1`.
    #[arg(long, value_delimiter = ',')]
    pub weight: Option<Vec<u32>>,
    /// Largest total weight in the vertex suites.
    #[arg(long, default_value_t = 4)]
    pub max_weight: u32,
    /// Fock space cutoff for the operator identities.
    #[arg(long, default_value_t = 12)]
    pub cutoff: usize,
}

fn suite_names() -> clap::builder::PossibleValuesParser {
    let mut names: Vec<&'static str> = zrp_core::suites::Suite::ALL.iter().map(|s| s.name()).collect();
    names.push("all");
    clap::builder::PossibleValuesParser::new(names)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormulaArg {
    Inhomogeneous,
    Homogeneous,
    Tazrp,
}

#[derive(Args, Debug)]
pub struct MpaArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = FormulaArg::Inhomogeneous)]
    pub formula: FormulaArg,
    /// Compare with the stationary vector of the dynamics and report the ratio.
    #[arg(long)]
    pub crosscheck: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of Gillespie events (or chain steps with --discrete) per replica.
    #[arg(long, default_value_t = 1_000_000)]
    pub events: u64,
    /// Events discarded at the start; defaults to 10% of --events.
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Independent replicas, one random stream each.
    #[arg(long, default_value_t = 1)]
    pub replicas: u64,
    /// Sample the discrete-time chain of the transfer matrix instead.
    #[arg(long)]
    pub discrete: bool,
    /// Initial configuration as JSON, e.g. `[[1,0],[0,1],[0,0]]`.
    #[arg(long)]
    pub initial: Option<String>,
    /// CSV file for the trajectory of the first replica.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Largest sector dimension for the exact comparison.
    #[arg(long, default_value_t = 2_000)]
    pub exact_cap: usize,
}

#[derive(Args, Debug)]
pub struct ConjectureArgs {
    #[arg(long, default_value_t = 4)]
    pub max_len: usize,
    #[arg(long, default_value_t = 4)]
    pub max_total: u32,
    #[arg(long, default_value = "1/5")]
    pub mu: String,
    #[arg(long, default_value = "1/3")]
    pub q: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(commands::run(&cli))
}
