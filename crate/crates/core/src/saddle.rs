//! Discrete Stokes saddle-point solver on masked MAC grids.
//!
//! Solves `-nu lap u + grad p = f`, `div u = g` with `u = 0` on solid faces
//! and walls. The outer loop is a conjugate-residual iteration on the
//! pressure Schur complement `S = -D A^{-1} G`, which makes the divergence
//! residual non-increasing; each application of `A^{-1}` (one scalar
//! Laplacian per velocity component) reuses a sparse Cholesky factor.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{MatMut, Side};

use crate::error::{Error, Result};
use crate::grid::{div, grad, lap, CellField, FaceMask, MacGrid, Neighbor, StaggeredField};

#[derive(Clone, Debug)]
pub struct SaddleProblem {
    pub grid: MacGrid,
    pub solid: Vec<bool>,
    pub viscosity: f64,
    pub force: StaggeredField,
    /// Divergence target on fluid cells (ignored on solid cells).
    pub divergence: CellField,
}

impl SaddleProblem {
    /// Divergence-free Stokes problem.
    pub fn stokes(grid: MacGrid, solid: Vec<bool>, viscosity: f64, force: StaggeredField) -> Self {
        Self { grid, solid, viscosity, force, divergence: CellField::zeros(grid) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Absolute L2 tolerance on `div u - g`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 10_000 }
    }
}

#[derive(Clone, Debug)]
pub struct SaddleSolution {
    pub velocity: StaggeredField,
    /// Zero mean over the fluid cells, zero on solid cells.
    pub pressure: CellField,
    pub momentum_residual: f64,
    pub divergence_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `||div u - g||` after every outer iteration (entry 0 is the start).
    pub divergence_history: Vec<f64>,
}

impl SaddleSolution {
    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxIterExceeded { iterations: self.iterations, residual: self.divergence_residual })
        }
    }
}

/// Factorised `nu (-lap)` restricted to the active faces of one component.
struct ComponentSolver {
    faces: Vec<usize>,
    llt: Option<faer::sparse::linalg::solvers::Llt<usize, f64>>,
    /// Constants are in the kernel; the first dof is pinned.
    floating: bool,
}

impl ComponentSolver {
    fn new(mask: &FaceMask, c: usize, nu: f64) -> Result<Self> {
        let g = mask.grid;
        let dims = g.face_dims(c);
        let faces: Vec<usize> = (0..g.num_faces(c)).filter(|&k| mask.is_active(c, k)).collect();
        let mut row_of = vec![usize::MAX; g.num_faces(c)];
        for (r, &k) in faces.iter().enumerate() {
            row_of[k] = r;
        }
        let scale = nu / (g.h * g.h);
        let mut anchored = false;
        let mut stencils: Vec<Vec<(usize, f64)>> = Vec::with_capacity(faces.len());
        for &k in &faces {
            let (i, j) = (k % dims[0], k / dims[0]);
            let mut diag = 4.0;
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(5);
            for d in 0..2 {
                for step in [-1, 1] {
                    match mask.neighbor(c, i, j, d, step) {
                        Neighbor::Face(n) => row.push((row_of[n], -scale)),
                        Neighbor::Zero => anchored = true,
                        Neighbor::Reflect => {
                            anchored = true;
                            diag += 1.0;
                        }
                    }
                }
            }
            row.push((row_of[k], diag * scale));
            stencils.push(row);
        }
        let floating = !anchored && !faces.is_empty();
        let skip = usize::from(floating);
        let n = faces.len() - skip.min(faces.len());
        if n == 0 {
            return Ok(Self { faces, llt: None, floating });
        }
        let mut triplets = Vec::with_capacity(5 * n);
        for (r, row) in stencils.iter().enumerate().skip(skip) {
            let mut entries: Vec<(usize, f64)> = row.iter().filter(|(col, _)| *col >= skip).copied().collect();
            entries.sort_by_key(|e| e.0);
            entries.dedup_by(|a, b| {
                if a.0 == b.0 {
                    b.1 += a.1;
                    true
                } else {
                    false
                }
            });
            for (col, v) in entries {
                triplets.push(Triplet::new(r - skip, col - skip, v));
            }
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        let llt = a.sp_cholesky(Side::Lower).map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
        Ok(Self { faces, llt: Some(llt), floating })
    }

    /// Solves in place on the face array of this component.
    fn solve(&self, data: &mut [f64]) {
        let Some(llt) = &self.llt else {
            self.faces.iter().for_each(|&k| data[k] = 0.0);
            return;
        };
        let skip = usize::from(self.floating);
        let mut rhs: Vec<f64> = self.faces[skip..].iter().map(|&k| data[k]).collect();
        let n = rhs.len();
        llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut rhs, n, 1));
        if self.floating {
            data[self.faces[0]] = 0.0;
        }
        for (&k, v) in self.faces[skip..].iter().zip(&rhs) {
            data[k] = *v;
        }
        if self.floating {
            let mean = self.faces.iter().map(|&k| data[k]).sum::<f64>() / self.faces.len() as f64;
            self.faces.iter().for_each(|&k| data[k] -= mean);
        }
    }
}

/// `A^{-1}` for the masked vector Laplacian.
pub struct VelocitySolver {
    pub mask: FaceMask,
    comps: [ComponentSolver; 2],
}

impl VelocitySolver {
    pub fn new(grid: MacGrid, solid: &[bool], nu: f64) -> Result<Self> {
        let mask = FaceMask::new(grid, Some(solid));
        let comps = [ComponentSolver::new(&mask, 0, nu)?, ComponentSolver::new(&mask, 1, nu)?];
        Ok(Self { mask, comps })
    }

    /// Whether constants lie in the kernel of component `c`.
    pub fn floating(&self, c: usize) -> bool {
        self.comps[c].floating
    }

    /// Returns `A^{-1} rhs` (only active faces of `rhs` are read).
    pub fn apply_inverse(&self, rhs: &StaggeredField) -> StaggeredField {
        let mut out = rhs.clone();
        self.mask.restrict(&mut out);
        for c in 0..2 {
            self.comps[c].solve(&mut out.comps[c]);
        }
        out
    }
}

fn masked_div(vel: &StaggeredField, solid: &[bool]) -> Vec<f64> {
    let mut d = div(vel).data;
    d.iter_mut().zip(solid).for_each(|(x, &s)| {
        if s {
            *x = 0.0
        }
    });
    d
}

fn masked_grad(p: &[f64], grid: MacGrid, mask: &FaceMask) -> StaggeredField {
    let mut gp = grad(&CellField { grid, data: p.to_vec() });
    mask.restrict(&mut gp);
    gp
}

fn project_fluid_mean(v: &mut [f64], fluid: &[bool]) {
    let (mut s, mut n) = (0.0, 0usize);
    for (x, &f) in v.iter().zip(fluid) {
        if f {
            s += x;
            n += 1;
        }
    }
    let m = s / n.max(1) as f64;
    for (x, &f) in v.iter_mut().zip(fluid) {
        *x = if f { *x - m } else { 0.0 };
    }
}

fn dot_h(a: &[f64], b: &[f64], h2: f64) -> f64 {
    h2 * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

pub fn solve(problem: &SaddleProblem, opts: SolverOptions) -> Result<SaddleSolution> {
    let grid = problem.grid;
    let solid = &problem.solid;
    if solid.len() != grid.num_cells() {
        return Err(Error::InvalidGrid("mask size does not match grid".into()));
    }
    let fluid: Vec<bool> = solid.iter().map(|s| !s).collect();
    if !fluid.iter().any(|&f| f) {
        return Err(Error::InvalidGrid("no fluid cells".into()));
    }
    let h2 = grid.h * grid.h;

    let mut g = problem.divergence.data.clone();
    g.iter_mut().zip(solid).for_each(|(x, &s)| {
        if s {
            *x = 0.0
        }
    });
    let integral = h2 * g.iter().sum::<f64>();
    let scale = h2 * g.iter().map(|x| x.abs()).sum::<f64>();
    if integral.abs() > 1e-10 * scale.max(1.0) {
        return Err(Error::IncompatibleDivergence { integral });
    }

    let inv = VelocitySolver::new(grid, solid, problem.viscosity)?;
    let mut force = problem.force.clone();
    inv.mask.restrict(&mut force);
    for c in 0..2 {
        if inv.floating(c) {
            let vals: Vec<f64> = (0..grid.num_faces(c)).filter(|&k| inv.mask.is_active(c, k)).map(|k| force.comps[c][k]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let size = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if mean.abs() > 1e-12 * size {
                return Err(Error::NoAnchor { mean });
            }
        }
    }

    let div_residual = |u: &StaggeredField| -> f64 {
        let d = masked_div(u, solid);
        let r: Vec<f64> = d.iter().zip(&g).map(|(a, b)| a - b).collect();
        dot_h(&r, &r, h2).sqrt()
    };

    // u = A^{-1}(f - G p) with p = 0
    let mut u = inv.apply_inverse(&force);
    let mut pressure = vec![0.0; grid.num_cells()];
    let mut r: Vec<f64> = masked_div(&u, solid).iter().zip(&g).map(|(d, g)| g - d).collect();
    project_fluid_mean(&mut r, &fluid);

    let mut history = vec![div_residual(&u)];
    let mut iterations = 0;
    let mut converged = history[0] <= opts.tol;

    if !converged {
        let schur = |q: &[f64]| -> (StaggeredField, Vec<f64>) {
            let y = inv.apply_inverse(&masked_grad(q, grid, &inv.mask));
            let mut s = masked_div(&y, solid);
            s.iter_mut().for_each(|x| *x = -*x);
            project_fluid_mean(&mut s, &fluid);
            (y, s)
        };
        let (mut y_r, mut s_r) = schur(&r);
        let mut dir = r.clone();
        let mut y_dir = y_r.clone();
        let mut s_dir = s_r.clone();
        let mut r_sr = dot_h(&r, &s_r, h2);
        while iterations < opts.max_iter {
            let ss = dot_h(&s_dir, &s_dir, h2);
            if ss <= 0.0 || r_sr <= 0.0 {
                break;
            }
            let alpha = r_sr / ss;
            for k in 0..r.len() {
                pressure[k] += alpha * dir[k];
                r[k] -= alpha * s_dir[k];
            }
            u.axpy(-alpha, &y_dir);
            project_fluid_mean(&mut r, &fluid);
            iterations += 1;
            let res = div_residual(&u);
            history.push(res);
            if res <= opts.tol {
                converged = true;
                break;
            }
            (y_r, s_r) = schur(&r);
            let r_sr_new = dot_h(&r, &s_r, h2);
            let beta = r_sr_new / r_sr;
            r_sr = r_sr_new;
            for k in 0..r.len() {
                dir[k] = r[k] + beta * dir[k];
                s_dir[k] = s_r[k] + beta * s_dir[k];
            }
            y_dir = {
                let mut t = y_dir.scaled(beta);
                t.axpy(1.0, &y_r);
                t
            };
        }
    }

    project_fluid_mean(&mut pressure, &fluid);
    let pressure = CellField { grid, data: pressure };

    // momentum residual on active faces
    let mut m = lap(&u, &inv.mask).scaled(-problem.viscosity);
    m.axpy(1.0, &masked_grad(&pressure.data, grid, &inv.mask));
    m.axpy(-1.0, &force);
    inv.mask.restrict(&mut m);
    let momentum_residual = m.l2_norm();
    let divergence_residual = *history.last().unwrap();

    Ok(SaddleSolution {
        velocity: u,
        pressure,
        momentum_residual,
        divergence_residual,
        iterations,
        converged,
        divergence_history: history,
    })
}
