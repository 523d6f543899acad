//! Periodic cell problems: the matrix `W`, the permeability tensor `K`,
//! the divergence correctors `Theta` and the skew potentials `phi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CellMask;
use crate::grid::{CellField, FaceGradient, FaceMask, MacGrid, StaggeredField};
use crate::krylov;
use crate::saddle::{self, SaddleProblem, SolverOptions};

/// 2x2 permeability tensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermTensor(pub [[f64; 2]; 2]);

impl PermTensor {
    pub fn identity() -> Self {
        Self([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self([[a, 0.0], [0.0, b]])
    }

    pub fn scaled(&self, s: f64) -> Self {
        let k = self.0;
        Self([[s * k[0][0], s * k[0][1]], [s * k[1][0], s * k[1][1]]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let k = self.0;
        [k[0][0] * v[0] + k[0][1] * v[1], k[1][0] * v[0] + k[1][1] * v[1]]
    }

    pub fn asymmetry(&self) -> f64 {
        (self.0[0][1] - self.0[1][0]).abs()
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let k = self.0;
        let off = 0.5 * (k[0][1] + k[1][0]);
        let mean = 0.5 * (k[0][0] + k[1][1]);
        let half_diff = 0.5 * (k[0][0] - k[1][1]);
        let r = half_diff.hypot(off);
        [mean - r, mean + r]
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Checks symmetry (relative 1e-8) and positive eigenvalues.
    pub fn validate(&self) -> Result<()> {
        let ok = self.0.iter().flatten().all(|x| x.is_finite())
            && self.asymmetry() <= 1e-8 * self.frobenius().max(1e-300)
            && self.eigenvalues()[0] > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::SingularK(self.0))
        }
    }

    /// `R K R^T` for the counter-clockwise quarter turn `R`.
    pub fn rotated90(&self) -> Self {
        let k = self.0;
        Self([[k[1][1], -k[1][0]], [-k[0][1], k[0][0]]])
    }
}

#[derive(Clone, Debug)]
pub struct CellSolution {
    pub grid: MacGrid,
    pub mask: CellMask,
    /// Columns `W_j`, zero on every non-active face.
    pub w: [StaggeredField; 2],
    /// `pi_j`, zero mean over the fluid, zero in the solid.
    pub pi: [CellField; 2],
    pub k: PermTensor,
    pub fluid_fraction: f64,
    pub iterations: [usize; 2],
    pub divergence_residual: [f64; 2],
}

impl CellSolution {
    pub fn n(&self) -> usize {
        self.grid.nx
    }

    pub fn face_mask(&self) -> FaceMask {
        FaceMask::new(self.grid, Some(&self.mask.solid))
    }

    /// Gradients of both columns, `[grad W_1, grad W_2]`.
    pub fn gradients(&self) -> [FaceGradient; 2] {
        let faces = self.face_mask();
        [FaceGradient::of(&self.w[0], &faces), FaceGradient::of(&self.w[1], &faces)]
    }

    /// Cell average of `W_ij` (component `i` of column `j`).
    pub fn cell_average(&self, i: usize, j: usize) -> CellField {
        let g = self.grid;
        let src = &self.w[j].comps[i];
        let mut out = CellField::zeros(g);
        for b in 0..g.ny {
            for a in 0..g.nx {
                let (ia, ib) = (a as isize, b as isize);
                let hi = if i == 0 { g.face_at(0, ia + 1, ib) } else { g.face_at(1, ia, ib + 1) };
                out.data[g.cell(a, b)] = 0.5 * (src[g.face(i, a, b)] + src[hi.unwrap()]);
            }
        }
        out
    }
}

pub fn solve_cell_problem(mask: &CellMask, opts: SolverOptions) -> Result<CellSolution> {
    let n = mask.n;
    let grid = MacGrid::periodic(n);
    let column = |j: usize| {
        let force = StaggeredField::from_fn(grid, |_, _| if j == 0 { [1.0, 0.0] } else { [0.0, 1.0] });
        let problem = SaddleProblem::stokes(grid, mask.solid.clone(), 1.0, force);
        saddle::solve(&problem, opts).and_then(|s| s.into_result())
    };
    let (s0, s1) = rayon::join(|| column(0), || column(1));
    let (s0, s1) = (s0?, s1?);
    let h2 = grid.h * grid.h;
    let w = [s0.velocity, s1.velocity];
    let mut k = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            k[i][j] = h2 * w[j].comps[i].iter().sum::<f64>();
        }
    }
    Ok(CellSolution {
        grid,
        mask: mask.clone(),
        w,
        pi: [s0.pressure, s1.pressure],
        k: PermTensor(k),
        fluid_fraction: mask.fluid_fraction(),
        iterations: [s0.iterations, s1.iterations],
        divergence_residual: [s0.divergence_residual, s1.divergence_residual],
    })
}

/// `E_ij = |K_ij - <grad W_i, grad W_j>|`.
pub fn permeability_energy_check(sol: &CellSolution) -> [[f64; 2]; 2] {
    let grads = sol.gradients();
    let mut e = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            e[i][j] = (sol.k.get(i, j) - grads[i].inner(&grads[j])).abs();
        }
    }
    e
}

/// Largest energy-identity residual relative to `|K|`.
pub fn energy_residual(sol: &CellSolution) -> f64 {
    let e = permeability_energy_check(sol);
    e.iter().flatten().fold(0.0f64, |m, x| m.max(*x)) / sol.k.frobenius()
}

#[derive(Clone, Debug)]
pub struct ThetaField {
    /// `theta[i][j]`.
    pub theta: [[StaggeredField; 2]; 2],
    pub target: [[CellField; 2]; 2],
    /// `|integral of the target over the fluid|`.
    pub compatibility: [[f64; 2]; 2],
    pub divergence_residual: [[f64; 2]; 2],
}

/// Divergence target `-W_ij + K_ij / |Y_f|` on fluid cells, zero in the solid.
pub fn theta_target(sol: &CellSolution, i: usize, j: usize) -> CellField {
    let mut g = sol.cell_average(i, j);
    let c = sol.k.get(i, j) / sol.fluid_fraction;
    for (x, &s) in g.data.iter_mut().zip(&sol.mask.solid) {
        *x = if s { 0.0 } else { c - *x };
    }
    g
}

pub fn solve_theta(sol: &CellSolution, opts: SolverOptions) -> Result<ThetaField> {
    let grid = sol.grid;
    let one = |i: usize, j: usize| -> Result<(StaggeredField, CellField, f64, f64)> {
        let target = theta_target(sol, i, j);
        let integral = target.inner(&CellField::from_fn(grid, |_, _| 1.0));
        let mut problem = SaddleProblem::stokes(grid, sol.mask.solid.clone(), 1.0, StaggeredField::zeros(grid));
        problem.divergence = target.clone();
        let s = saddle::solve(&problem, opts)?.into_result()?;
        Ok((s.velocity, target, integral.abs(), s.divergence_residual))
    };
    let results: Vec<_> = [(0, 0), (0, 1), (1, 0), (1, 1)].iter().map(|&(i, j)| one(i, j)).collect::<Result<_>>()?;
    let mut it = results.into_iter();
    let mut next = || it.next().unwrap();
    let (a, b, c, d) = (next(), next(), next(), next());
    Ok(ThetaField {
        compatibility: [[a.2, b.2], [c.2, d.2]],
        divergence_residual: [[a.3, b.3], [c.3, d.3]],
        target: [[a.1, b.1], [c.1, d.1]],
        theta: [[a.0, b.0], [c.0, d.0]],
    })
}

/// Antisymmetric potentials `phi[k][i][j]` with `sum_k D_k phi_kij ~ W_ij - K_ij`.
#[derive(Clone, Debug)]
pub struct SkewPotential {
    pub phi: [[[CellField; 2]; 2]; 2],
    /// `|| sum_k D_k phi_kij - (W_ij - K_ij) ||` per `(i, j)`.
    pub residual: [[f64; 2]; 2],
}

impl SkewPotential {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().flatten().fold(0.0f64, |m, x| m.max(*x))
    }
}

fn periodic_laplacian(n: usize, h: f64) -> impl Fn(&[f64], &mut [f64]) {
    let s = 1.0 / (h * h);
    move |x: &[f64], y: &mut [f64]| {
        for j in 0..n {
            let (jm, jp) = ((j + n - 1) % n, (j + 1) % n);
            for i in 0..n {
                let (im, ip) = ((i + n - 1) % n, (i + 1) % n);
                y[j * n + i] = s * (4.0 * x[j * n + i] - x[j * n + im] - x[j * n + ip] - x[jm * n + i] - x[jp * n + i]);
            }
        }
    }
}

/// Central difference along `d` on a periodic cell field.
fn central(f: &CellField, d: usize) -> CellField {
    let g = f.grid;
    let n = g.nx;
    let mut out = CellField::zeros(g);
    for j in 0..n {
        for i in 0..n {
            let (lo, hi) = if d == 0 {
                (j * n + (i + n - 1) % n, j * n + (i + 1) % n)
            } else {
                (((j + n - 1) % n) * n + i, ((j + 1) % n) * n + i)
            };
            out.data[j * n + i] = (f.data[hi] - f.data[lo]) / (2.0 * g.h);
        }
    }
    out
}

pub fn skew_potential(sol: &CellSolution) -> Result<SkewPotential> {
    let g = sol.grid;
    let n = g.nx;
    let apply = periodic_laplacian(n, g.h);
    // data[i][j] = W_ij - K_ij, extended by zero into the solid
    let mut data: Vec<Vec<CellField>> = Vec::new();
    let mut pot: Vec<Vec<CellField>> = Vec::new();
    for i in 0..2 {
        let mut drow = Vec::new();
        let mut prow = Vec::new();
        for j in 0..2 {
            let mut rhs = sol.cell_average(i, j);
            rhs.data.iter_mut().for_each(|x| *x -= sol.k.get(i, j));
            // solve -lap h = -(rhs)
            let b: Vec<f64> = rhs.data.iter().map(|x| -x).collect();
            let mut x = vec![0.0; n * n];
            let st = krylov::cg(&apply, &b, &mut x, None, true, 1e-12, 20 * n * n);
            if !st.converged {
                return Err(Error::MaxIterExceeded { iterations: st.iterations, residual: st.residual });
            }
            prow.push(CellField { grid: g, data: x });
            drow.push(rhs);
        }
        data.push(drow);
        pot.push(prow);
    }
    let phi: [[[CellField; 2]; 2]; 2] = std::array::from_fn(|k| {
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let mut a = central(&pot[i][j], k);
                let b = central(&pot[k][j], i);
                a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x -= y);
                a
            })
        })
    });
    let mut residual = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut r = central(&phi[0][i][j], 0);
            let r1 = central(&phi[1][i][j], 1);
            for ((x, y), d) in r.data.iter_mut().zip(&r1.data).zip(&data[i][j].data) {
                *x += y - d;
            }
            residual[i][j] = r.l2_norm();
        }
    }
    Ok(SkewPotential { phi, residual })
}

/// Richardson extrapolation from values on grids `n`, `2n`, `4n`.
/// Returns the observed order and the extrapolated limit.
pub fn richardson(k1: f64, k2: f64, k4: f64) -> (f64, f64) {
    let p = ((k1 - k2) / (k2 - k4)).log2();
    (p, k4 + (k4 - k2) / (2f64.powf(p) - 1.0))
}
