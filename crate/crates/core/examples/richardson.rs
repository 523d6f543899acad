//! Richardson extrapolation of K11 for the centred square of side 0.5,
//! from cell solves at n = 16 ... 256, one extrapolation per consecutive triple.

use std::time::Instant;

use permlab::cell::solve_cell_problem;
use permlab::geometry::{rasterize_cell, ObstacleSpec};
use permlab::saddle::SolverOptions;

fn main() -> permlab::Result<()> {
    let obstacle = ObstacleSpec::square(0.5, 0.5, 0.5);
    let mut k = Vec::new();
    for n in [16, 32, 64, 128, 256] {
        let t = Instant::now();
        let sol = solve_cell_problem(&rasterize_cell(&obstacle, n)?, SolverOptions::default())?;
        println!("n={n:4} K11={:.10e} ({:.1?})", sol.k.get(0, 0), t.elapsed());
        k.push(sol.k.get(0, 0));
    }
    for w in k.windows(3) {
        let (p, ext) = permlab::cell::richardson(w[0], w[1], w[2]);
        println!("order p={p:.4} extrapolated K11={ext:.10e}");
    }
    Ok(())
}
