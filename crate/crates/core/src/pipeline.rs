//! Config-driven runs behind the `permlab` subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cell::{energy_residual, solve_cell_problem, CellSolution, PermTensor};
use crate::config::RunConfig;
use crate::darcy::{effective_velocity, solve_darcy, DarcyOptions, DarcyProblem, DarcySolution, EffectiveVelocity};
use crate::error::{Error, Result};
use crate::fine::{solve_fine, FineSolution, Monitors};
use crate::geometry::{build_perforated_mesh, mask_to_pgm, rasterize_cell, PerforatedMesh};
use crate::grid::FieldDump;
use crate::twoscale::{build_two_scale, csv_rows, error_norms, ConvergenceReport, ErrorRow};

/// Growth of a stability monitor between consecutive periods that fails a sweep.
pub const MONITOR_BLOWUP: f64 = 10.0;

#[derive(Clone, Debug, Serialize)]
pub struct CellSummary {
    pub n: usize,
    pub fluid_fraction: f64,
    #[serde(rename = "K")]
    pub k: [[f64; 2]; 2],
    pub energy_residual: f64,
    pub iterations: [usize; 2],
}

impl CellSummary {
    pub fn of(sol: &CellSolution) -> Self {
        Self {
            n: sol.n(),
            fluid_fraction: sol.fluid_fraction,
            k: sol.k.0,
            energy_residual: energy_residual(sol),
            iterations: sol.iterations,
        }
    }
}

pub fn k_matrix_text(k: &PermTensor) -> String {
    k.0.iter().map(|r| format!("{:e} {:e}\n", r[0], r[1])).collect()
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))?;
    Ok(pool.install(f))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(&cfg.output_dir)
}

/// Cell problems for every microstructure at `n` cells per side.
pub fn cell_solutions(cfg: &RunConfig, n: usize) -> Result<Vec<CellSolution>> {
    cfg.obstacles.iter().map(|o| solve_cell_problem(&rasterize_cell(o, n)?, cfg.solver)).collect()
}

/// `permlab cell`: writes `cell_<id>_K.txt` and `cell_<id>.json`.
pub fn run_cell(cfg: &RunConfig) -> Result<Vec<CellSummary>> {
    let sols = with_pool(cfg.threads, || cell_solutions(cfg, cfg.n_per_cell))??;
    let dir = out_dir(cfg)?;
    let mut out = Vec::new();
    for (id, sol) in sols.iter().enumerate() {
        let summary = CellSummary::of(sol);
        fs::write(dir.join(format!("cell_{id}_K.txt")), k_matrix_text(&sol.k))?;
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(dir.join(format!("cell_{id}.json")), json + "\n")?;
        out.push(summary);
    }
    Ok(out)
}

fn require_eps(cfg: &RunConfig) -> Result<f64> {
    cfg.eps.ok_or_else(|| Error::Config("`eps`: missing required key".into()))
}

pub fn darcy_for(cfg: &RunConfig, cells: &[CellSolution], n: usize) -> Result<DarcySolution> {
    let k = cfg.layout.subdomains.iter().map(|&(_, id)| cells[id].k).collect();
    solve_darcy(&DarcyProblem::new(cfg.layout.clone(), k, cfg.force.clone(), n), DarcyOptions::default())
}

/// `permlab darcy`: writes `darcy_P0.txt` and `darcy_flux_jump.csv` on the
/// `n_per_cell / eps` grid.
pub fn run_darcy(cfg: &RunConfig) -> Result<(DarcySolution, EffectiveVelocity)> {
    let eps = require_eps(cfg)?;
    let n = (cfg.n_per_cell as f64 / eps).round() as usize;
    let (sol, vel) = with_pool(cfg.threads, || -> Result<_> {
        let cells = cell_solutions(cfg, cfg.n_per_cell)?;
        let sol = darcy_for(cfg, &cells, n)?;
        let vel = effective_velocity(&sol);
        Ok((sol, vel))
    })??;
    let dir = out_dir(cfg)?;
    sol.pressure.to_dump("P0").write(&dir.join("darcy_P0.txt"))?;
    fs::write(dir.join("darcy_flux_jump.csv"), vel.to_csv())?;
    Ok((sol, vel))
}

/// `permlab fine`: writes velocity, pressure and extended pressure dumps
/// plus `fine_mask.pgm`.
pub fn run_fine(cfg: &RunConfig) -> Result<(PerforatedMesh, FineSolution)> {
    let eps = require_eps(cfg)?;
    let mesh = build_perforated_mesh(&cfg.layout, &cfg.obstacles, eps, cfg.n_per_cell)?;
    let sol = with_pool(cfg.threads, || solve_fine(&mesh, &cfg.force, cfg.solver))??;
    let dir = out_dir(cfg)?;
    FieldDump::from_faces(&sol.velocity, 0, "u").write(&dir.join("fine_u.txt"))?;
    FieldDump::from_faces(&sol.velocity, 1, "v").write(&dir.join("fine_v.txt"))?;
    sol.pressure.to_dump("p").write(&dir.join("fine_p.txt"))?;
    sol.extended.to_dump("P").write(&dir.join("fine_P.txt"))?;
    fs::write(dir.join("fine_mask.pgm"), mask_to_pgm(mesh.grid.nx, mesh.grid.ny, &mesh.solid))?;
    Ok((mesh, sol))
}

/// One sweep row: fine solve, Darcy solve and two-scale errors at `eps`.
pub fn sweep_row(cfg: &RunConfig, cells: &[CellSolution], eps: f64) -> Result<ErrorRow> {
    let mesh = build_perforated_mesh(&cfg.layout, &cfg.obstacles, eps, cfg.n_per_cell)?;
    let darcy = darcy_for(cfg, cells, mesh.grid.nx)?;
    let fine = solve_fine(&mesh, &cfg.force, cfg.solver)?;
    let two = build_two_scale(cells, &darcy, &mesh)?;
    error_norms(&fine, &two, &darcy, &mesh)
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub report: ConvergenceReport,
    pub csv_path: PathBuf,
    /// No monitor grew by more than [`MONITOR_BLOWUP`] between consecutive rows.
    pub monitors_ok: bool,
}

pub fn monitors_stable(rows: &[ErrorRow]) -> bool {
    rows.windows(2).all(|w| {
        let grow = |a: f64, b: f64| b <= MONITOR_BLOWUP * a;
        grow(w[0].energy_const, w[1].energy_const) && grow(w[0].poincare_const, w[1].poincare_const)
    })
}

/// `permlab sweep`: one row per `sweep.eps`, written to `sweep.csv`.
/// On a solver failure the completed rows are kept in the file.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    if cfg.sweep_eps.len() < 3 {
        return Err(Error::Config(format!("`sweep.eps`: need at least 3 values, got {}", cfg.sweep_eps.len())));
    }
    let dir = out_dir(cfg)?.to_path_buf();
    let csv_path = dir.join("sweep.csv");
    let mut eps = cfg.sweep_eps.clone();
    eps.sort_by(|a, b| b.total_cmp(a));

    let results: Vec<Result<ErrorRow>> = with_pool(cfg.threads, || {
        use rayon::prelude::*;
        match cell_solutions(cfg, cfg.n_per_cell) {
            Err(e) => vec![Err(e)],
            Ok(cells) => eps.par_iter().map(|&e| sweep_row(cfg, &cells, e)).collect(),
        }
    })?;
    let mut rows = Vec::new();
    let mut failure = None;
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    if let Some(e) = failure {
        let mut partial = format!("# config_sha256={}\n", cfg.hash);
        partial.push_str(&csv_rows(&rows));
        fs::write(&csv_path, partial)?;
        return Err(e);
    }
    let report = ConvergenceReport::new(rows)?;
    fs::write(&csv_path, report.to_csv(&cfg.hash))?;
    let monitors_ok = monitors_stable(&report.rows);
    Ok(SweepOutcome { report, csv_path, monitors_ok })
}

/// Monitors of a fine solution, for reporting.
pub fn describe_monitors(m: &Monitors) -> String {
    format!("energy_const={:e} poincare_const={:e}", m.energy, m.poincare)
}
