//! Effective Darcy problem with piecewise-constant permeability.
//!
//! Cell-centred finite volumes on a walled `n x n` grid of the unit square.
//! Faces inside one subdomain use that subdomain's tensor; faces on the
//! interface eliminate a face pressure `P_S` so that the pressure is
//! continuous and the normal flux is single-valued. Tangential pressure
//! derivatives never difference across the interface.

use std::fmt;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::MatMut;

use crate::cell::PermTensor;
use crate::error::{Error, Result};
use crate::geometry::Layout;
use crate::grid::{CellField, MacGrid, StaggeredField};

pub type VectorFn = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Body force, given in closed form.
#[derive(Clone)]
pub enum Force {
    Zero,
    Constant([f64; 2]),
    /// `(a sin(pi x2), 0)`.
    SinPiX2 { amplitude: f64 },
    Custom(VectorFn),
}

impl Force {
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        match self {
            Force::Zero => [0.0, 0.0],
            Force::Constant(v) => *v,
            Force::SinPiX2 { amplitude } => [amplitude * (std::f64::consts::PI * y).sin(), 0.0],
            Force::Custom(f) => f(x, y),
        }
    }

    /// Normal components sampled at the face centres of `grid`.
    pub fn sample(&self, grid: MacGrid) -> StaggeredField {
        StaggeredField::from_fn(grid, |x, y| self.eval(x, y))
    }
}

impl fmt::Debug for Force {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Force::Zero => write!(f, "Zero"),
            Force::Constant(v) => write!(f, "Constant({v:?})"),
            Force::SinPiX2 { amplitude } => write!(f, "SinPiX2 {{ amplitude: {amplitude} }}"),
            Force::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

#[derive(Clone)]
pub struct DarcyProblem {
    pub layout: Layout,
    /// One tensor per subdomain of `layout`.
    pub k: Vec<PermTensor>,
    pub force: Force,
    pub n: usize,
    /// Outward normal flux `u0 . n` on the boundary; zero when absent.
    pub boundary_flux: Option<ScalarFn>,
}

impl fmt::Debug for DarcyProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DarcyProblem")
            .field("layout", &self.layout)
            .field("k", &self.k)
            .field("force", &self.force)
            .field("n", &self.n)
            .field("boundary_flux", &self.boundary_flux.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl DarcyProblem {
    pub fn new(layout: Layout, k: Vec<PermTensor>, force: Force, n: usize) -> Self {
        Self { layout, k, force, n, boundary_flux: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DarcyOptions {
    /// Relative residual target of the refinement loop.
    pub tol: f64,
}

impl Default for DarcyOptions {
    fn default() -> Self {
        Self { tol: 1e-10 }
    }
}

/// Affine expression `sum coeff * P[cell] + constant`.
#[derive(Clone, Debug, Default)]
struct Affine {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl Affine {
    fn add(&mut self, cell: usize, c: f64) {
        self.terms.push((cell, c));
    }

    fn add_scaled(&mut self, other: &Affine, s: f64) {
        self.terms.extend(other.terms.iter().map(|&(k, c)| (k, s * c)));
        self.constant += s * other.constant;
    }

    fn eval(&self, p: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(k, c)| c * p[k]).sum::<f64>()
    }
}

#[derive(Clone, Debug)]
pub struct DarcySolution {
    pub grid: MacGrid,
    pub layout: Layout,
    pub k: Vec<PermTensor>,
    pub force: Force,
    pub subdomain: Vec<usize>,
    /// Zero-mean effective pressure.
    pub pressure: CellField,
    /// `n . K (f - grad P0)` on every face (boundary faces carry the data).
    pub flux: StaggeredField,
    /// Interface as `(axis, face line)`.
    pub interface_line: Option<(usize, usize)>,
    /// Face pressure on each interface face, indexed along the interface.
    pub interface_pressure: Vec<f64>,
    /// One-sided cell gradients of `P0` per subdomain, extended across the
    /// interface by constant continuation along the normal.
    pub gradient: Vec<[CellField; 2]>,
    /// Relative algebraic residual of the final iterate.
    pub residual: f64,
    /// Largest cell imbalance `|sum of outward fluxes| / h`.
    pub conservation: f64,
    pub refinement_steps: usize,
}

struct Assembly {
    grid: MacGrid,
    subdomain: Vec<usize>,
    interface_line: Option<(usize, usize)>,
    /// Flux across every face, as affine expressions in `P`.
    faces: [Vec<Affine>; 2],
    /// Face pressure on interface faces.
    face_pressure: Vec<Affine>,
}

fn find_interface(grid: MacGrid, subdomain: &[usize], layout: &Layout) -> Result<Option<(usize, usize)>> {
    let n = grid.nx;
    match layout.interface() {
        None => Ok(None),
        Some((axis, _)) => {
            let line = (0..n)
                .find(|&k| {
                    let c = if axis == 0 { grid.cell(k, 0) } else { grid.cell(0, k) };
                    subdomain[c] != subdomain[0]
                })
                .unwrap_or(n);
            if line == 0 || line == n {
                return Err(Error::InvalidLayout(format!("interface does not cross the {n}x{n} grid")));
            }
            Ok(Some((axis, line)))
        }
    }
}

fn neighbor(grid: MacGrid, i: usize, j: usize, d: usize, step: isize) -> Option<usize> {
    let (a, b) = if d == 0 { (i as isize + step, j as isize) } else { (i as isize, j as isize + step) };
    grid.cell_at(a, b)
}

/// Tangential derivative of `P` along `t` in cell `(i, j)` using same-subdomain
/// neighbours only.
fn cell_derivative(grid: MacGrid, sub: &[usize], i: usize, j: usize, t: usize) -> Affine {
    let c = grid.cell(i, j);
    let same = |k: Option<usize>| k.filter(|&k| sub[k] == sub[c]);
    let lo = same(neighbor(grid, i, j, t, -1));
    let hi = same(neighbor(grid, i, j, t, 1));
    let h = grid.h;
    let mut a = Affine::default();
    match (lo, hi) {
        (Some(l), Some(r)) => {
            a.add(r, 0.5 / h);
            a.add(l, -0.5 / h);
        }
        (None, Some(r)) => {
            a.add(r, 1.0 / h);
            a.add(c, -1.0 / h);
        }
        (Some(l), None) => {
            a.add(c, 1.0 / h);
            a.add(l, -1.0 / h);
        }
        (None, None) => {}
    }
    a
}

fn assemble(problem: &DarcyProblem) -> Result<Assembly> {
    let n = problem.n;
    if n < 2 {
        return Err(Error::InvalidGrid(format!("Darcy grid needs n >= 2, got {n}")));
    }
    problem.layout.validate(usize::MAX)?;
    if problem.k.len() != problem.layout.len() {
        return Err(Error::InvalidLayout(format!(
            "{} permeability tensors for {} subdomains",
            problem.k.len(),
            problem.layout.len()
        )));
    }
    for k in &problem.k {
        k.validate()?;
    }
    let grid = MacGrid::walled(n);
    let h = grid.h;
    let subdomain: Vec<usize> =
        (0..n * n).map(|c| problem.layout.subdomain_of(grid.cell_center(c % n, c / n))).collect();
    let interface_line = find_interface(grid, &subdomain, &problem.layout)?;

    let mut faces: [Vec<Affine>; 2] = [Vec::new(), Vec::new()];
    let mut face_pressure = vec![Affine::default(); if interface_line.is_some() { n } else { 0 }];
    for d in 0..2 {
        let t = 1 - d;
        let dims = grid.face_dims(d);
        let mut out = vec![Affine::default(); dims[0] * dims[1]];
        for fj in 0..dims[1] {
            for fi in 0..dims[0] {
                let f = fj * dims[0] + fi;
                let [x, y] = grid.face_center(d, fi, fj);
                let [lo, hi] = grid.face_cells(d, fi, fj);
                let (Some(l), Some(r)) = (lo, hi) else {
                    let g = problem.boundary_flux.as_ref().map_or(0.0, |g| g(x, y));
                    // store outward flux as the flux in +x_d direction
                    out[f].constant = if lo.is_none() { -g } else { g };
                    continue;
                };
                let force = problem.force.eval(x, y);
                let (ll, rr) = (grid_ij(grid, l), grid_ij(grid, r));
                if subdomain[l] == subdomain[r] {
                    let k = problem.k[subdomain[l]];
                    let (kdd, kdt) = (k.get(d, d), k.get(d, t));
                    let mut q = Affine { terms: Vec::new(), constant: kdd * force[d] + kdt * force[t] };
                    q.add(r, -kdd / h);
                    q.add(l, kdd / h);
                    q.add_scaled(&cell_derivative(grid, &subdomain, ll.0, ll.1, t), -0.5 * kdt);
                    q.add_scaled(&cell_derivative(grid, &subdomain, rr.0, rr.1, t), -0.5 * kdt);
                    out[f] = q;
                } else {
                    let (km, kp) = (problem.k[subdomain[l]], problem.k[subdomain[r]]);
                    let a = 2.0 * km.get(d, d) / h;
                    let b = 2.0 * kp.get(d, d) / h;
                    let side = |k: PermTensor, cell: (usize, usize)| {
                        let mut c = Affine { terms: Vec::new(), constant: k.get(d, d) * force[d] + k.get(d, t) * force[t] };
                        c.add_scaled(&cell_derivative(grid, &subdomain, cell.0, cell.1, t), -k.get(d, t));
                        c
                    };
                    let (cm, cp) = (side(km, ll), side(kp, rr));
                    let mut ps = Affine::default();
                    ps.add_scaled(&cm, 1.0 / (a + b));
                    ps.add_scaled(&cp, -1.0 / (a + b));
                    ps.add(l, a / (a + b));
                    ps.add(r, b / (a + b));
                    let mut q = Affine::default();
                    q.add_scaled(&cm, b / (a + b));
                    q.add_scaled(&cp, a / (a + b));
                    let trans = a * b / (a + b);
                    q.add(r, -trans);
                    q.add(l, trans);
                    out[f] = q;
                    face_pressure[if d == 0 { fj } else { fi }] = ps;
                }
            }
        }
        faces[d] = out;
    }
    Ok(Assembly { grid, subdomain, interface_line, faces, face_pressure })
}

fn grid_ij(grid: MacGrid, c: usize) -> (usize, usize) {
    (c % grid.nx, c / grid.nx)
}

impl Assembly {
    /// Per-cell balance `sum of outward fluxes` as affine expressions.
    fn balances(&self) -> Vec<Affine> {
        let g = self.grid;
        let mut rows = vec![Affine::default(); g.num_cells()];
        for d in 0..2 {
            let dims = g.face_dims(d);
            for fj in 0..dims[1] {
                for fi in 0..dims[0] {
                    let q = &self.faces[d][fj * dims[0] + fi];
                    let [lo, hi] = g.face_cells(d, fi, fj);
                    if let Some(l) = lo {
                        rows[l].add_scaled(q, 1.0);
                    }
                    if let Some(r) = hi {
                        rows[r].add_scaled(q, -1.0);
                    }
                }
            }
        }
        rows
    }
}

pub fn solve_darcy(problem: &DarcyProblem, opts: DarcyOptions) -> Result<DarcySolution> {
    solve_darcy_from(problem, opts, None)
}

/// As [`solve_darcy`], starting the refinement loop from `guess`.
pub fn solve_darcy_from(problem: &DarcyProblem, opts: DarcyOptions, guess: Option<&[f64]>) -> Result<DarcySolution> {
    let asm = assemble(problem)?;
    let grid = asm.grid;
    let ncell = grid.num_cells();
    let h = grid.h;

    // net boundary flux
    let mut net = 0.0;
    for d in 0..2 {
        let dims = grid.face_dims(d);
        for fj in 0..dims[1] {
            for fi in 0..dims[0] {
                let [lo, hi] = grid.face_cells(d, fi, fj);
                if lo.is_none() || hi.is_none() {
                    let q = asm.faces[d][fj * dims[0] + fi].constant;
                    net += h * if lo.is_none() { -q } else { q };
                }
            }
        }
    }
    if net.abs() > 1e-12 {
        return Err(Error::IncompatibleFlux(net));
    }

    let rows = asm.balances();
    // A P = b with A from the linear part, b = -constant part
    let mut triplets = Vec::new();
    let mut b = vec![0.0; ncell];
    let mut linear: Vec<Vec<(usize, f64)>> = Vec::with_capacity(ncell);
    for (r, row) in rows.iter().enumerate() {
        let mut t = row.terms.clone();
        t.sort_by_key(|e| e.0);
        t.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        b[r] = -row.constant;
        linear.push(t);
    }
    // pin cell 0 in the factorised matrix; the dropped row is implied by
    // the others because all rows sum to zero
    for (r, t) in linear.iter().enumerate() {
        if r == 0 {
            triplets.push(Triplet::new(0, 0, 1.0));
            continue;
        }
        for &(c, v) in t {
            if c != 0 {
                triplets.push(Triplet::new(r, c, v));
            }
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(ncell, ncell, &triplets)
        .map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::LinearAlgebra(format!("{e:?}")))?;

    let apply = |p: &[f64]| -> Vec<f64> {
        linear.iter().map(|t| t.iter().map(|&(c, v)| v * p[c]).sum::<f64>()).collect()
    };
    let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut p = guess.map_or_else(|| vec![0.0; ncell], |g| g.to_vec());
    let mut residual = f64::INFINITY;
    let mut steps = 0;
    for _ in 0..6 {
        let ap = apply(&p);
        let mut r: Vec<f64> = b.iter().zip(&ap).map(|(b, a)| b - a).collect();
        let rn = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let previous = residual;
        residual = if bnorm > 0.0 { rn / bnorm } else { rn };
        // stop at the tolerance or once refinement no longer helps
        if residual <= opts.tol.min(1e-13) || rn == 0.0 || (residual <= opts.tol && residual > 0.5 * previous) {
            break;
        }
        r[0] = 0.0;
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut r, ncell, 1));
        p.iter_mut().zip(&r).for_each(|(x, d)| *x += d);
        steps += 1;
    }
    if !(residual <= opts.tol) {
        return Err(Error::MaxIterExceeded { iterations: steps, residual });
    }
    let mean = p.iter().sum::<f64>() / ncell as f64;
    p.iter_mut().for_each(|x| *x -= mean);

    let mut flux = StaggeredField::zeros(grid);
    for d in 0..2 {
        for (f, q) in asm.faces[d].iter().enumerate() {
            flux.comps[d][f] = q.eval(&p);
        }
    }
    let conservation = rows.iter().map(|r| r.eval(&p).abs() / h).fold(0.0f64, f64::max);
    let interface_pressure: Vec<f64> = asm.face_pressure.iter().map(|a| a.eval(&p)).collect();
    let pressure = CellField { grid, data: p };
    let gradient = one_sided_gradients(&pressure, &asm.subdomain, asm.interface_line, &interface_pressure, problem.layout.len());

    Ok(DarcySolution {
        grid,
        layout: problem.layout.clone(),
        k: problem.k.clone(),
        force: problem.force.clone(),
        subdomain: asm.subdomain,
        pressure,
        flux,
        interface_line: asm.interface_line,
        interface_pressure,
        gradient,
        residual,
        conservation,
        refinement_steps: steps,
    })
}

/// Derivative at offset 0 from samples at `-d1`, `0`, `+d2`.
fn three_point(a: f64, b: f64, c: f64, d1: f64, d2: f64) -> f64 {
    (d1 * d1 * c - d2 * d2 * a - (d1 * d1 - d2 * d2) * b) / (d1 * d2 * (d1 + d2))
}

fn one_sided_gradients(
    p: &CellField,
    sub: &[usize],
    interface: Option<(usize, usize)>,
    p_face: &[f64],
    nsub: usize,
) -> Vec<[CellField; 2]> {
    let g = p.grid;
    let n = g.nx;
    let h = g.h;
    let v = &p.data;
    let mut out: Vec<[CellField; 2]> = (0..nsub).map(|_| [CellField::zeros(g), CellField::zeros(g)]).collect();
    for j in 0..n {
        for i in 0..n {
            let c = g.cell(i, j);
            let s = sub[c];
            for d in 0..2 {
                // what lies at offsets -1, +1, +-2 along d
                enum Nb {
                    Cell(usize),
                    Face(f64),
                    Wall,
                }
                let look = |step: isize| -> Nb {
                    match neighbor(g, i, j, d, step) {
                        None => Nb::Wall,
                        Some(k) if sub[k] == s => Nb::Cell(k),
                        // the only other-subdomain neighbour is across the interface
                        Some(_) => Nb::Face(p_face[if d == 0 { j } else { i }]),
                    }
                };
                let val = match (look(-1), look(1)) {
                    (Nb::Cell(l), Nb::Cell(r)) => (v[r] - v[l]) / (2.0 * h),
                    (Nb::Face(a), Nb::Cell(r)) => three_point(a, v[c], v[r], 0.5 * h, h),
                    (Nb::Cell(l), Nb::Face(b)) => three_point(v[l], v[c], b, h, 0.5 * h),
                    (Nb::Wall, Nb::Cell(r)) => match look(2) {
                        Nb::Cell(r2) => (-3.0 * v[c] + 4.0 * v[r] - v[r2]) / (2.0 * h),
                        _ => (v[r] - v[c]) / h,
                    },
                    (Nb::Cell(l), Nb::Wall) => match look(-2) {
                        Nb::Cell(l2) => (3.0 * v[c] - 4.0 * v[l] + v[l2]) / (2.0 * h),
                        _ => (v[c] - v[l]) / h,
                    },
                    (Nb::Face(a), _) => (v[c] - a) / (0.5 * h),
                    (_, Nb::Face(b)) => (b - v[c]) / (0.5 * h),
                    (Nb::Wall, Nb::Wall) => 0.0,
                };
                out[s][d].data[c] = val;
            }
        }
    }
    // constant continuation of each subdomain's field across the interface
    if let Some((axis, line)) = interface {
        for (s, fields) in out.iter_mut().enumerate() {
            for field in fields.iter_mut() {
                for j in 0..n {
                    for i in 0..n {
                        let c = g.cell(i, j);
                        if sub[c] == s {
                            continue;
                        }
                        let k = if axis == 0 { i } else { j };
                        let src_k = if k >= line { line - 1 } else { line };
                        let src = if axis == 0 { g.cell(src_k, j) } else { g.cell(i, src_k) };
                        field.data[c] = field.data[src];
                    }
                }
            }
        }
    }
    out
}

/// Bilinear interpolation of a cell-centred field with constant extrapolation
/// beyond the outermost cell centres.
pub fn interpolate(field: &CellField, x: f64, y: f64) -> f64 {
    let g = field.grid;
    let locate = |x: f64, n: usize| -> (usize, f64) {
        let xi = (x / g.h - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = (xi.floor() as usize).min(n.saturating_sub(2));
        (i0, xi - i0 as f64)
    };
    let (i0, tx) = locate(x, g.nx);
    let (j0, ty) = locate(y, g.ny);
    let i1 = (i0 + 1).min(g.nx - 1);
    let j1 = (j0 + 1).min(g.ny - 1);
    let d = &field.data;
    let v00 = d[g.cell(i0, j0)];
    let v10 = d[g.cell(i1, j0)];
    let v01 = d[g.cell(i0, j1)];
    let v11 = d[g.cell(i1, j1)];
    (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
}

impl DarcySolution {
    /// Driving field `f - grad P0` of subdomain `s` at `(x, y)`.
    pub fn drive(&self, s: usize, x: f64, y: f64) -> [f64; 2] {
        let f = self.force.eval(x, y);
        [f[0] - interpolate(&self.gradient[s][0], x, y), f[1] - interpolate(&self.gradient[s][1], x, y)]
    }

    /// Subdomain-wise `u0 = K (f - grad P0)` at cell centres.
    pub fn u0(&self) -> [CellField; 2] {
        let g = self.grid;
        let mut out = [CellField::zeros(g), CellField::zeros(g)];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.cell(i, j);
                let s = self.subdomain[c];
                let [x, y] = g.cell_center(i, j);
                let f = self.force.eval(x, y);
                let drive = [f[0] - self.gradient[s][0].data[c], f[1] - self.gradient[s][1].data[c]];
                let u = self.k[s].apply(drive);
                out[0].data[c] = u[0];
                out[1].data[c] = u[1];
            }
        }
        out
    }
}

/// One interface face of the trace report.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceTrace {
    pub face_index: usize,
    pub x: f64,
    pub y: f64,
    pub normal_jump: f64,
    pub tangential_jump: f64,
}

#[derive(Clone, Debug)]
pub struct EffectiveVelocity {
    pub u0: [CellField; 2],
    pub traces: Vec<InterfaceTrace>,
}

impl EffectiveVelocity {
    pub fn max_normal_jump(&self) -> f64 {
        self.traces.iter().map(|t| t.normal_jump).fold(0.0, f64::max)
    }

    pub fn max_tangential_jump(&self) -> f64 {
        self.traces.iter().map(|t| t.tangential_jump).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("face_index,x,y,normal_jump,tangential_jump\n");
        for t in &self.traces {
            s.push_str(&format!("{},{:e},{:e},{:e},{:e}\n", t.face_index, t.x, t.y, t.normal_jump, t.tangential_jump));
        }
        s
    }
}

/// Subdomain velocities plus the jump of `u0` across each interface face,
/// evaluated from the one-sided traces on both sides.
pub fn effective_velocity(sol: &DarcySolution) -> EffectiveVelocity {
    let g = sol.grid;
    let h = g.h;
    let mut traces = Vec::new();
    if let Some((d, line)) = sol.interface_line {
        let t = 1 - d;
        for pos in 0..g.nx {
            let (fi, fj) = if d == 0 { (line, pos) } else { (pos, line) };
            let [lo, hi] = g.face_cells(d, fi, fj);
            let (l, r) = (lo.unwrap(), hi.unwrap());
            let [x, y] = g.face_center(d, fi, fj);
            let f = sol.force.eval(x, y);
            let ps = sol.interface_pressure[pos];
            let p = &sol.pressure.data;
            let trace = |cell: usize, dn: f64| -> [f64; 2] {
                let (ci, cj) = grid_ij(g, cell);
                let dt = cell_derivative(g, &sol.subdomain, ci, cj, t).eval(p);
                let mut drive = [0.0; 2];
                drive[d] = f[d] - dn;
                drive[t] = f[t] - dt;
                sol.k[sol.subdomain[cell]].apply(drive)
            };
            let um = trace(l, (ps - p[l]) / (0.5 * h));
            let up = trace(r, (p[r] - ps) / (0.5 * h));
            traces.push(InterfaceTrace {
                face_index: g.face(d, fi, fj),
                x,
                y,
                normal_jump: (um[d] - up[d]).abs(),
                tangential_jump: (um[t] - up[t]).abs(),
            });
        }
    }
    EffectiveVelocity { u0: sol.u0(), traces }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split() -> Layout {
        Layout::half_split(1, 0.5, 0, 1)
    }

    fn max_dev_from_linear(sol: &DarcySolution, f: [f64; 2]) -> f64 {
        let g = sol.grid;
        let exact = CellField::from_fn(g, |x, y| f[0] * x + f[1] * y);
        let m = exact.mean();
        sol.pressure.data.iter().zip(&exact.data).map(|(a, e)| (a - (e - m)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn conservative_force_is_absorbed_by_pressure() {
        for (layout, k) in [
            (Layout::whole(0), vec![PermTensor::identity()]),
            (split(), vec![PermTensor::diag(2.0, 2.0), PermTensor::identity()]),
        ] {
            let p = DarcyProblem::new(layout, k, Force::Constant([0.0, 1.0]), 32);
            let s = solve_darcy(&p, DarcyOptions::default()).unwrap();
            assert!(max_dev_from_linear(&s, [0.0, 1.0]) < 1e-11);
            let v = effective_velocity(&s);
            assert!(v.u0.iter().all(|c| c.data.iter().all(|x| x.abs() < 1e-10)));
            assert!(v.max_normal_jump() <= 1e-12 && v.max_tangential_jump() <= 1e-10);
            assert!(s.pressure.mean().abs() < 1e-12);
        }
    }

    #[test]
    fn sine_forcing_conserves_flux_across_the_interface() {
        for n in [64, 128] {
            let p = DarcyProblem::new(
                split(),
                vec![PermTensor::diag(2.0, 2.0), PermTensor::identity()],
                Force::SinPiX2 { amplitude: 1.0 },
                n,
            );
            let s = solve_darcy(&p, DarcyOptions::default()).unwrap();
            assert!(s.conservation <= 1e-8, "{}", s.conservation);
            let v = effective_velocity(&s);
            assert_eq!(v.traces.len(), n);
            assert!(v.max_normal_jump() <= 1e-12);
            assert!(v.max_tangential_jump() > 0.1);
            assert!(v.u0[0].l2_norm() > 0.1);
        }
    }

    #[test]
    fn initial_guess_does_not_change_the_answer() {
        let p = DarcyProblem::new(
            split(),
            vec![PermTensor([[2.0, 0.3], [0.3, 1.0]]), PermTensor::identity()],
            Force::SinPiX2 { amplitude: 1.0 },
            32,
        );
        let a = solve_darcy(&p, DarcyOptions::default()).unwrap();
        let shifted: Vec<f64> = a.pressure.data.iter().map(|x| x + 5.0).collect();
        let b = solve_darcy_from(&p, DarcyOptions::default(), Some(&shifted)).unwrap();
        let noise: Vec<f64> = (0..a.pressure.data.len()).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        let c = solve_darcy_from(&p, DarcyOptions::default(), Some(&noise)).unwrap();
        for other in [&b, &c] {
            for (x, y) in a.pressure.data.iter().zip(&other.pressure.data) {
                assert!((x - y).abs() <= 1e-11);
            }
            let (ua, ub) = (a.u0(), other.u0());
            for d in 0..2 {
                for (x, y) in ua[d].data.iter().zip(&ub[d].data) {
                    assert!((x - y).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn anisotropic_constant_force_is_exact() {
        let p = DarcyProblem::new(
            split(),
            vec![PermTensor([[2.0, 0.7], [0.7, 1.0]]), PermTensor([[1.0, -0.4], [-0.4, 3.0]])],
            Force::Constant([0.3, -1.2]),
            24,
        );
        let s = solve_darcy(&p, DarcyOptions::default()).unwrap();
        assert!(max_dev_from_linear(&s, [0.3, -1.2]) < 1e-11);
        assert!(effective_velocity(&s).max_normal_jump() <= 1e-12);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let bad = DarcyProblem::new(Layout::whole(0), vec![PermTensor([[1.0, 2.0], [2.0, 1.0]])], Force::Zero, 8);
        assert!(matches!(solve_darcy(&bad, DarcyOptions::default()), Err(Error::SingularK(_))));
        let mut leaky = DarcyProblem::new(Layout::whole(0), vec![PermTensor::identity()], Force::Zero, 8);
        leaky.boundary_flux = Some(Arc::new(|_, _| 1.0));
        assert!(matches!(solve_darcy(&leaky, DarcyOptions::default()), Err(Error::IncompatibleFlux(_))));
    }

    #[test]
    fn three_point_rule_is_exact_for_quadratics() {
        let f = |x: f64| 1.0 + 2.0 * x - 3.0 * x * x;
        let (d1, d2) = (0.05, 0.1);
        assert!((three_point(f(-d1), f(0.0), f(d2), d1, d2) - 2.0).abs() < 1e-12);
    }


    fn spd() -> impl proptest::strategy::Strategy<Value = PermTensor> {
        use proptest::prelude::*;
        (0.1f64..3.0, 0.1f64..3.0, -1.0f64..1.0).prop_map(|(a, b, c)| {
            let off = c * (a * b).sqrt();
            PermTensor([[a, off], [off, b]])
        })
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn constant_force_is_exact_for_random_tensors(
            km in spd(),
            kp in spd(),
            f in (-2.0f64..2.0, -2.0f64..2.0),
            axis in 0usize..2,
            half in 3usize..9,
        ) {
            let layout = Layout::half_split(axis, 0.5, 0, 1);
            let p = DarcyProblem::new(layout, vec![km, kp], Force::Constant([f.0, f.1]), 2 * half);
            let s = solve_darcy(&p, DarcyOptions::default()).unwrap();
            proptest::prop_assert!(max_dev_from_linear(&s, [f.0, f.1]) <= 1e-9);
            let v = effective_velocity(&s);
            proptest::prop_assert!(v.max_normal_jump() <= 1e-12);
            proptest::prop_assert!(s.pressure.mean().abs() <= 1e-12);
        }
    }
}
