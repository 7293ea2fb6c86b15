mod commands;
mod report;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use transship_core::error::Error;

use report::Format;

#[derive(Parser, Debug)]
#[command(name = "transship", version, about = "Approximate transshipment and shortest paths on weighted undirected graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct Routing {
    /// Shifted grids per level.
    #[arg(long)]
    pub samples_s: Option<usize>,
    /// Grid base `w`.
    #[arg(long)]
    pub grid_base_w: Option<usize>,
    /// Replace the measured routing quality with this value.
    #[arg(long)]
    pub kappa: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimum-cost transshipment of a demand vector.
    Transship(commands::TransshipArgs),
    /// Approximate shortest-path tree and potential from a source set.
    Sssp(commands::SsspArgs),
    /// l1 embedding of the shortest-path metric.
    Embed(commands::EmbedArgs),
    /// Ultra-sparse spanner.
    Spanner(commands::SpannerArgs),
    /// Dyadic routing on the line with exact rational costs.
    RouteDemo(commands::RouteDemoArgs),
    /// Re-check emitted flows, potentials and trees.
    Verify(verify::VerifyArgs),
    /// Write a generated graph and optional demands.
    Gen(commands::GenArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Path,
    Cycle,
    Grid,
    Complete,
    RandomConnected,
}

#[derive(Debug)]
pub enum Failure {
    Input(String),
    Core(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Core(Error::Stage { .. }) => 3,
            Failure::Core(_) => 2,
            Failure::Verification => 4,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Transship(a) => commands::transship(&a),
        Command::Sssp(a) => commands::sssp(&a),
        Command::Embed(a) => commands::embed(&a),
        Command::Spanner(a) => commands::spanner(&a),
        Command::RouteDemo(a) => commands::route_demo(&a),
        Command::Verify(a) => verify::verify(&a),
        Command::Gen(a) => commands::gen(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(msg) => eprintln!("error: {msg}"),
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Verification => eprintln!("verification failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
