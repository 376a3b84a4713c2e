use std::path::PathBuf;
use std::process::ExitCode;

use capres::commands::{self, Command, Status};
use capres::config::RunConfig;
use capres::error::CliError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "capres", version, about = "Resonances by complex absorbing potentials and exterior complex scaling")]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// TOML run configuration.
    #[arg(long, short, global = true, default_value = "capres.toml")]
    config: PathBuf,

    /// Output directory; overrides output.dir.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for contour evaluations (default: all cores).
    #[arg(long, short, global = true)]
    jobs: Option<usize>,

    /// Also write SVG plots.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Check the configuration against every constraint.
    Validate,
    /// Eigenvalues of one operator.
    Spectrum,
    /// Track eigenvalues along a decreasing CAP strength schedule.
    Sweep,
    /// Contour multiplicities.
    Multiplicity,
    /// Main path against the reference values.
    Compare,
    /// Reference resonances from the independent solver.
    Oracle,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Command {
        match s {
            Sub::Validate => Command::Validate,
            Sub::Spectrum => Command::Spectrum,
            Sub::Sweep => Command::Sweep,
            Sub::Multiplicity => Command::Multiplicity,
            Sub::Compare => Command::Compare,
            Sub::Oracle => Command::Oracle,
        }
    }
}

fn execute(cli: &Cli) -> Result<Status, CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let cfg = RunConfig::load(&cli.config)?;
    let cmd = Command::from(cli.command);
    let output = commands::run(cmd, &cfg, cli.svg || cfg.output.svg)?;
    let dir = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    output.write_to(&dir)?;
    println!("{}", output.summary);
    Ok(output.status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::ToleranceFailure) => ExitCode::from(1),
        Ok(Status::ConstraintFailure) => ExitCode::from(2),
        Err(e) => {
            eprintln!("capres: {e}");
            e.exit_code()
        }
    }
}
