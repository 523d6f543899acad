//! Fine-scale Stokes problem on the perforated mesh and the pressure
//! extension into the obstacles.

use crate::darcy::Force;
use crate::error::Result;
use crate::geometry::PerforatedMesh;
use crate::grid::{CellField, FaceGradient, FaceMask, StaggeredField};
use crate::saddle::{self, SaddleProblem, SolverOptions};

/// Stability monitors logged on every fine solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monitors {
    /// `(||u|| + eps ||grad u|| + ||p||) / ||f||`.
    pub energy: f64,
    /// `||u|| / (eps ||grad u||)`.
    pub poincare: f64,
}

#[derive(Clone, Debug)]
pub struct FineSolution {
    pub eps: f64,
    /// `u_eps`, zero on solid faces and walls.
    pub velocity: StaggeredField,
    /// `p_eps`, zero mean over the fluid and zero in the solid.
    pub pressure: CellField,
    /// `P_eps`, the extension of `p_eps` to the whole domain.
    pub extended: CellField,
    pub gradient: FaceGradient,
    pub momentum_residual: f64,
    pub divergence_residual: f64,
    pub iterations: usize,
    pub monitors: Monitors,
}

pub fn solve_fine(mesh: &PerforatedMesh, force: &Force, opts: SolverOptions) -> Result<FineSolution> {
    let grid = mesh.grid;
    let eps = mesh.eps;
    let f = force.sample(grid);
    let problem = SaddleProblem::stokes(grid, mesh.solid.clone(), eps * eps, f.clone());
    let sol = saddle::solve(&problem, opts)?.into_result()?;
    let faces = FaceMask::new(grid, Some(&mesh.solid));
    let gradient = FaceGradient::of(&sol.velocity, &faces);
    let extended = extend_pressure(&sol.pressure, mesh);
    let monitors = monitors(eps, &sol.velocity, &gradient, &sol.pressure, &f);
    Ok(FineSolution {
        eps,
        velocity: sol.velocity,
        pressure: sol.pressure,
        extended,
        gradient,
        momentum_residual: sol.momentum_residual,
        divergence_residual: sol.divergence_residual,
        iterations: sol.iterations,
        monitors,
    })
}

pub fn monitors(eps: f64, u: &StaggeredField, grad: &FaceGradient, p: &CellField, f: &StaggeredField) -> Monitors {
    let (nu, ng, np, nf) = (u.l2_norm(), grad.l2_norm(), p.l2_norm(), f.l2_norm());
    Monitors {
        energy: if nf > 0.0 { (nu + eps * ng + np) / nf } else { 0.0 },
        poincare: if ng > 0.0 { nu / (eps * ng) } else { 0.0 },
    }
}

/// Copies `p` on fluid cells; every solid cell of a perforated lattice cell
/// receives the mean of `p` over that lattice cell's fluid part.
pub fn extend_pressure(p: &CellField, mesh: &PerforatedMesh) -> CellField {
    let g = mesh.grid;
    let m = mesh.n_per_cell;
    let mut out = p.clone();
    for cells in &mesh.perforated {
        for &[za, zb] in cells {
            let (mut sum, mut count) = (0.0, 0usize);
            for b in 0..m {
                for a in 0..m {
                    let c = g.cell(za * m + a, zb * m + b);
                    if !mesh.solid[c] {
                        sum += p.data[c];
                        count += 1;
                    }
                }
            }
            let mean = sum / count as f64;
            for b in 0..m {
                for a in 0..m {
                    let c = g.cell(za * m + a, zb * m + b);
                    if mesh.solid[c] {
                        out.data[c] = mean;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_perforated_mesh, Layout, ObstacleSpec};

    fn mesh(eps: f64, n: usize) -> PerforatedMesh {
        build_perforated_mesh(&Layout::whole(0), &[ObstacleSpec::square(0.5, 0.5, 0.5)], eps, n).unwrap()
    }

    #[test]
    fn zero_force_gives_zero_solution() {
        let s = solve_fine(&mesh(0.25, 8), &Force::Zero, SolverOptions::default()).unwrap();
        assert_eq!(s.velocity.max_abs(), 0.0);
        assert!(s.pressure.data.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn constant_pressure_extends_to_constant() {
        let m = mesh(0.25, 8);
        let p = CellField::from_fn(m.grid, |_, _| 2.5);
        assert!(extend_pressure(&p, &m).data.iter().all(|x| *x == 2.5));
    }

    #[test]
    fn checkerboard_extension_matches_hand_average() {
        let m = mesh(0.5, 8);
        let g = m.grid;
        let mut p = CellField::zeros(g);
        // checker on lattice cell (1, 0): +1 on even, -3 on odd fluid cells
        let (mut sum, mut count) = (0.0, 0);
        for b in 0..8 {
            for a in 0..8 {
                let c = g.cell(8 + a, b);
                let v = if (a + b) % 2 == 0 { 1.0 } else { -3.0 };
                p.data[c] = v;
                if !m.solid[c] {
                    sum += v;
                    count += 1;
                }
            }
        }
        // 48 fluid cells of an 8x8 cell with a 4x4 hole, half of each colour
        assert_eq!(count, 48);
        assert_eq!(sum / count as f64, -1.0);
        let e = extend_pressure(&p, &m);
        for b in 0..8 {
            for a in 0..8 {
                let c = g.cell(8 + a, b);
                assert_eq!(e.data[c], if m.solid[c] { -1.0 } else { p.data[c] });
            }
        }
    }

    #[test]
    fn extension_is_idempotent_and_bounded() {
        let m = mesh(0.25, 8);
        let fluid = m.fluid();
        let mut p = CellField::from_fn(m.grid, |x, y| (7.0 * x).sin() + y * y);
        p.data.iter_mut().zip(&fluid).for_each(|(x, f)| {
            if !f {
                *x = 0.0
            }
        });
        let once = extend_pressure(&p, &m);
        assert_eq!(extend_pressure(&once, &m), once);
        let yf = m.cells[0].fluid_fraction();
        assert!(once.l2_norm() <= p.l2_norm() / yf.sqrt());
    }

    #[test]
    fn solution_respects_constraints() {
        let m = mesh(0.25, 8);
        let s = solve_fine(&m, &Force::SinPiX2 { amplitude: 1.0 }, SolverOptions::default()).unwrap();
        assert!(s.divergence_residual <= 1e-8);
        let faces = FaceMask::new(m.grid, Some(&m.solid));
        for c in 0..2 {
            for (k, v) in s.velocity.comps[c].iter().enumerate() {
                if !faces.is_active(c, k) {
                    assert_eq!(*v, 0.0);
                }
            }
        }
        // zero extension: the norm over the active faces is the full norm
        let mut active = s.velocity.clone();
        faces.restrict(&mut active);
        assert_eq!(active.l2_norm(), s.velocity.l2_norm());
        let fluid = m.fluid();
        assert!(s.pressure.masked_mean(&fluid).abs() < 1e-12);
        for (k, f) in fluid.iter().enumerate() {
            if *f {
                assert_eq!(s.extended.data[k], s.pressure.data[k]);
            }
        }
        assert!(s.monitors.energy > 0.0 && s.monitors.poincare > 0.0);
    }


    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn extension_is_idempotent_for_random_pressures(
            side in 0.2f64..0.6,
            values in proptest::collection::vec(-5.0f64..5.0, 32 * 32),
        ) {
            let m = build_perforated_mesh(&Layout::whole(0), &[ObstacleSpec::square(0.5, 0.5, side)], 0.25, 8).unwrap();
            let fluid = m.fluid();
            let mut p = CellField::zeros(m.grid);
            for (k, v) in values.iter().enumerate() {
                p.data[k] = if fluid[k] { *v } else { 0.0 };
            }
            let once = extend_pressure(&p, &m);
            proptest::prop_assert_eq!(&extend_pressure(&once, &m), &once);
            for (k, f) in fluid.iter().enumerate() {
                if *f {
                    proptest::prop_assert_eq!(once.data[k], p.data[k]);
                }
            }
        }
    }
}
