use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use permlab::config::RunConfig;
use permlab::grid::FieldDump;
use permlab::pipeline;
use permlab::Error;

#[derive(Parser)]
#[command(name = "permlab", version, about = "Permeability, Darcy and two-scale Stokes studies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the cell problems and write K per microstructure.
    Cell { config: PathBuf },
    /// Solve the effective Darcy problem at `eps`.
    Darcy { config: PathBuf },
    /// Solve the fine perforated-domain problem at `eps`.
    Fine { config: PathBuf },
    /// Run the error sweep over `sweep.eps` and write sweep.csv.
    Sweep { config: PathBuf },
    /// Print the header and summary statistics of a field dump.
    Dump { file: PathBuf },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidObstacle(_)
        | Error::InvalidLayout(_)
        | Error::InvalidGrid(_)
        | Error::ObstacleTouchesBoundary(_)
        | Error::DisconnectedFluid { .. }
        | Error::EpsTooLarge { .. }
        | Error::IncommensurateGrids(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    let cfg = RunConfig::load(path)?;
    cfg.validate_geometry()?;
    Ok(cfg)
}

fn run(cmd: Cmd) -> Result<u8, Error> {
    match cmd {
        Cmd::Cell { config } => {
            let cfg = load(&config)?;
            for (id, s) in pipeline::run_cell(&cfg)?.iter().enumerate() {
                println!(
                    "obstacle {id}: K = [[{:e}, {:e}], [{:e}, {:e}]] fluid_fraction={} energy_residual={:e}",
                    s.k[0][0], s.k[0][1], s.k[1][0], s.k[1][1], s.fluid_fraction, s.energy_residual
                );
            }
        }
        Cmd::Darcy { config } => {
            let cfg = load(&config)?;
            let (sol, vel) = pipeline::run_darcy(&cfg)?;
            println!(
                "n={} conservation={:e} max_normal_jump={:e} max_tangential_jump={:e}",
                sol.grid.nx,
                sol.conservation,
                vel.max_normal_jump(),
                vel.max_tangential_jump()
            );
        }
        Cmd::Fine { config } => {
            let cfg = load(&config)?;
            let (mesh, sol) = pipeline::run_fine(&cfg)?;
            println!(
                "n={} iterations={} divergence_residual={:e} {}",
                mesh.grid.nx,
                sol.iterations,
                sol.divergence_residual,
                pipeline::describe_monitors(&sol.monitors)
            );
        }
        Cmd::Sweep { config } => {
            let cfg = load(&config)?;
            let out = pipeline::run_sweep(&cfg)?;
            println!("wrote {}", out.csv_path.display());
            let r = &out.report;
            println!(
                "rate_vel={:e} rate_grad={:e} rate_press={:e}",
                r.rate_vel.alpha, r.rate_grad.alpha, r.rate_press.alpha
            );
            if !out.monitors_ok {
                eprintln!(
                    "error: a stability monitor grew by more than {}x between consecutive eps",
                    pipeline::MONITOR_BLOWUP
                );
                return Ok(EXIT_SOLVER);
            }
        }
        Cmd::Dump { file } => {
            let d = FieldDump::read(&file)?;
            let min = d.values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = d.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = d.values.iter().sum::<f64>() / d.values.len().max(1) as f64;
            println!("{} {} {:e} {}", d.n1, d.n2, d.h, d.kind);
            println!("min={min:e} max={max:e} mean={mean:e} l2={:e}", d.l2_norm());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
