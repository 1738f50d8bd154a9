use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hdg_cli::commands::{self, Command, Overrides};
use hdg_cli::CliError;

/// HDG solves, convergence studies and inf-sup estimates driven by a study configuration.
///
/// Exit codes: 1 configuration error, 2 assembly error, 3 solver error, 4 acceptance-check failure.
#[derive(Parser)]
#[command(name = "hdg", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Study configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Use level n only; for `convergence`, drop the configured levels above n.
    #[arg(long, value_name = "N")]
    level_override: Option<usize>,
    /// Seed for the random-trial identity checks and the Lanczos start vector.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the finest configured level.
    Solve(Common),
    /// Run a convergence study and check the configured rate band.
    Convergence(Common),
    /// Estimate the discrete inf-sup constant on every level.
    Infsup(Common),
    /// Generate or inspect meshes.
    #[command(subcommand)]
    Mesh(MeshCmd),
}

#[derive(Subcommand)]
enum MeshCmd {
    /// Write the case mesh of every configured level.
    Generate(Common),
    /// Check and summarize a mesh file.
    Inspect {
        path: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn run_with(c: &Common, cmd: Command) -> Result<String, CliError> {
    let ov = Overrides { out: c.out.clone(), level_override: c.level_override, seed: c.seed };
    let cfg = commands::load_config(&c.config, &ov, cmd)?;
    match cmd {
        Command::Solve => commands::cmd_solve(&cfg),
        Command::Convergence => commands::cmd_convergence(&cfg),
        Command::InfSup => commands::cmd_infsup(&cfg),
        Command::MeshGenerate => commands::cmd_mesh_generate(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Cmd::Solve(c) => run_with(c, Command::Solve),
        Cmd::Convergence(c) => run_with(c, Command::Convergence),
        Cmd::Infsup(c) => run_with(c, Command::InfSup),
        Cmd::Mesh(MeshCmd::Generate(c)) => run_with(c, Command::MeshGenerate),
        Cmd::Mesh(MeshCmd::Inspect { path, out }) => commands::cmd_mesh_inspect(path, out.as_deref()),
    };
    match result {
        Ok(table) => {
            print!("{table}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
