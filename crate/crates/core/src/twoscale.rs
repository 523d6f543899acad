//! Two-scale approximation `V = W(x/eps) (f - grad P0)`, interface jump data,
//! error norms against the fine solution, and rate fitting.

use std::fmt::Write as _;

use crate::cell::{CellSolution, PermTensor};
use crate::darcy::DarcySolution;
use crate::error::{Error, Result};
use crate::fine::FineSolution;
use crate::geometry::PerforatedMesh;
use crate::grid::{FaceGradient, StaggeredField};

/// Per-subdomain two-scale fields on the fine grid. Each subdomain's field
/// is evaluated everywhere; the error norms only read it on that subdomain.
#[derive(Clone, Debug)]
pub struct TwoScaleField {
    /// `V^l` on every fine face.
    pub velocity: Vec<StaggeredField>,
    /// `(grad_y W^l)(x/eps) F^l`, laid out like a fine [`FaceGradient`].
    pub gradient: Vec<FaceGradient>,
}

impl TwoScaleField {
    /// Single field using the subdomain owning each face (the lower-index
    /// side on the interface).
    pub fn combined(&self, mesh: &PerforatedMesh) -> StaggeredField {
        let g = mesh.grid;
        let mut out = StaggeredField::zeros(g);
        for c in 0..2 {
            let dims = g.face_dims(c);
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let s = mesh.face_sides(c, i, j)[0].0;
                    let k = j * dims[0] + i;
                    out.comps[c][k] = self.velocity[s].comps[c][k];
                }
            }
        }
        out
    }
}

fn check_cells(cells: &[CellSolution], mesh: &PerforatedMesh) -> Result<()> {
    for (s, &(_, id)) in mesh.layout.subdomains.iter().enumerate() {
        let cell = cells
            .get(id)
            .ok_or_else(|| Error::IncommensurateGrids(format!("no cell solution for microstructure {id} (subdomain {s})")))?;
        if cell.n() != mesh.n_per_cell {
            return Err(Error::IncommensurateGrids(format!(
                "cell grid {} vs {} fine cells per period",
                cell.n(),
                mesh.n_per_cell
            )));
        }
    }
    Ok(())
}

fn check_darcy(darcy: &DarcySolution, mesh: &PerforatedMesh) -> Result<()> {
    if darcy.grid.nx != mesh.grid.nx || darcy.layout != mesh.layout {
        return Err(Error::IncommensurateGrids(format!(
            "Darcy grid {} vs fine grid {} (or different layouts)",
            darcy.grid.nx, mesh.grid.nx
        )));
    }
    Ok(())
}

/// Builds `V^l` from tiled cell solutions and the Darcy drive `f - grad P0`.
pub fn build_two_scale(cells: &[CellSolution], darcy: &DarcySolution, mesh: &PerforatedMesh) -> Result<TwoScaleField> {
    check_darcy(darcy, mesh)?;
    build_two_scale_with(cells, mesh, |s, x, y| darcy.drive(s, x, y))
}

/// As [`build_two_scale`] with an arbitrary drive field `F^l(x)`.
pub fn build_two_scale_with(
    cells: &[CellSolution],
    mesh: &PerforatedMesh,
    drive: impl Fn(usize, f64, f64) -> [f64; 2],
) -> Result<TwoScaleField> {
    check_cells(cells, mesh)?;
    let g = mesh.grid;
    let n = mesh.n_per_cell;
    let mut velocity = Vec::new();
    let mut gradient = Vec::new();
    for s in 0..mesh.layout.len() {
        let cell = &cells[mesh.layout.micro_id(s)];
        let cg = cell.grid;
        let tile_grad = cell.gradients();
        let mut v = StaggeredField::zeros(g);
        for c in 0..2 {
            let dims = g.face_dims(c);
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let [x, y] = g.face_center(c, i, j);
                    let f = drive(s, x, y);
                    let t = cg.face(c, i % n, j % n);
                    v.comps[c][j * dims[0] + i] = cell.w[0].comps[c][t] * f[0] + cell.w[1].comps[c][t] * f[1];
                }
            }
        }
        let mut fg = FaceGradient {
            grid: g,
            normal: [vec![0.0; g.num_cells()], vec![0.0; g.num_cells()]],
            tangential: [Vec::new(), Vec::new()],
            weight: [Vec::new(), Vec::new()],
        };
        for c in 0..2 {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let [x, y] = g.cell_center(i, j);
                    let f = drive(s, x, y);
                    let t = cg.cell(i % n, j % n);
                    fg.normal[c][g.cell(i, j)] = tile_grad[0].normal[c][t] * f[0] + tile_grad[1].normal[c][t] * f[1];
                }
            }
            let dims = g.edge_dims(c);
            let tdims = cg.edge_dims(c);
            let mut tv = vec![0.0; dims[0] * dims[1]];
            for b in 0..dims[1] {
                for a in 0..dims[0] {
                    let [x, y] = g.edge_center(c, a, b);
                    let f = drive(s, x, y);
                    let t = (b % n) * tdims[0] + a % n;
                    tv[b * dims[0] + a] = tile_grad[0].tangential[c][t] * f[0] + tile_grad[1].tangential[c][t] * f[1];
                }
            }
            fg.tangential[c] = tv;
            fg.weight[c] = vec![1.0; dims[0] * dims[1]];
        }
        velocity.push(v);
        gradient.push(fg);
    }
    Ok(TwoScaleField { velocity, gradient })
}

/// Interface data for one sample point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceJump {
    /// `h[t][j]`: component `t` of the jump for column `j`.
    pub h: [[f64; 2]; 2],
    /// `M_ij = delta_ij - n_j n_m K-_mi / <n K- n>`.
    pub m: [[f64; 2]; 2],
}

/// `wm[t][j]`, `wp[t][j]` are the `W` samples on the two sides of the interface.
pub fn interface_jump(
    wm: [[f64; 2]; 2],
    wp: [[f64; 2]; 2],
    km: &PermTensor,
    kp: &PermTensor,
    n: [f64; 2],
) -> Result<InterfaceJump> {
    let nkn: f64 = (0..2).map(|i| (0..2).map(|m| n[i] * km.get(i, m) * n[m]).sum::<f64>()).sum();
    if !(nkn > 1e-14) {
        return Err(Error::DegenerateNormal(nkn));
    }
    let mut h = [[0.0; 2]; 2];
    let mut m = [[0.0; 2]; 2];
    for t in 0..2 {
        for j in 0..2 {
            let mut corr = 0.0;
            for i in 0..2 {
                for mm in 0..2 {
                    corr += wm[t][i] * (km.get(mm, j) - kp.get(mm, j)) * n[i] * n[mm];
                }
            }
            h[t][j] = wm[t][j] - wp[t][j] - corr / nkn;
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            let s: f64 = (0..2).map(|mm| n[mm] * km.get(mm, i)).sum();
            m[i][j] = f64::from(u8::from(i == j)) - n[j] * s / nkn;
        }
    }
    Ok(InterfaceJump { h, m })
}

/// `max_j |sum_i n_i M_ij|`.
pub fn continuity_defect(m: &[[f64; 2]; 2], n: [f64; 2]) -> f64 {
    (0..2).map(|j| (n[0] * m[0][j] + n[1] * m[1][j]).abs()).fold(0.0, f64::max)
}

/// Cell-averaged `W` of a cell solution at unit-cell point `y`, as `[t][j]`.
pub fn sample_w(cell: &CellSolution, y: [f64; 2]) -> [[f64; 2]; 2] {
    let n = cell.n();
    let idx = |v: f64| ((v.rem_euclid(1.0) * n as f64).floor() as usize).min(n - 1);
    let c = cell.grid.cell(idx(y[0]), idx(y[1]));
    let mut w = [[0.0; 2]; 2];
    for t in 0..2 {
        for j in 0..2 {
            w[t][j] = cell.cell_average(t, j).data[c];
        }
    }
    w
}

/// Errors of one fine solve against the two-scale field.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub eps: f64,
    pub n_per_cell: usize,
    /// Per subdomain.
    pub err_vel: Vec<f64>,
    pub err_grad: Vec<f64>,
    pub err_press: f64,
    pub energy_const: f64,
    pub poincare_const: f64,
}

impl ErrorRow {
    /// Norm over the whole domain, `sqrt(sum over subdomains of err^2)`.
    pub fn total_vel(&self) -> f64 {
        self.err_vel.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn total_grad(&self) -> f64 {
        self.err_grad.iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}

pub fn error_norms(
    fine: &FineSolution,
    two: &TwoScaleField,
    darcy: &DarcySolution,
    mesh: &PerforatedMesh,
) -> Result<ErrorRow> {
    let g = mesh.grid;
    check_darcy(darcy, mesh)?;
    let ns = mesh.layout.len();
    let h2 = g.h * g.h;
    let eps = mesh.eps;

    let mut vel = vec![0.0; ns];
    for c in 0..2 {
        let dims = g.face_dims(c);
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let k = j * dims[0] + i;
                let w = g.face_weight(c, i, j);
                for (s, share) in mesh.face_sides(c, i, j) {
                    let d = fine.velocity.comps[c][k] - two.velocity[s].comps[c][k];
                    vel[s] += share * w * d * d;
                }
            }
        }
    }

    let mut grad = vec![0.0; ns];
    let fg = &fine.gradient;
    for c in 0..2 {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.cell(i, j);
                let s = mesh.subdomain[k];
                let d = eps * fg.normal[c][k] - two.gradient[s].normal[c][k];
                grad[s] += d * d;
            }
        }
        let dims = g.edge_dims(c);
        for b in 0..dims[1] {
            for a in 0..dims[0] {
                let e = b * dims[0] + a;
                for (s, share) in mesh.node_sides(a, b) {
                    let d = eps * fg.tangential[c][e] - two.gradient[s].tangential[c][e];
                    grad[s] += share * fg.weight[c][e] * d * d;
                }
            }
        }
    }

    let mean = fine.extended.mean();
    let mut press = 0.0;
    for (p, p0) in fine.extended.data.iter().zip(&darcy.pressure.data) {
        let d = p - mean - p0;
        press += d * d;
    }

    Ok(ErrorRow {
        eps,
        n_per_cell: mesh.n_per_cell,
        err_vel: vel.iter().map(|v| (h2 * v).sqrt()).collect(),
        err_grad: grad.iter().map(|v| (h2 * v).sqrt()).collect(),
        err_press: (h2 * press).sqrt(),
        energy_const: fine.monitors.energy,
        poincare_const: fine.monitors.poincare,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_log_slope(x: &[f64], y: &[f64]) -> f64 {
    fit_line(x, y).0
}

/// `(slope, rms residual)` of the log-log least-squares line.
fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (rss / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub alpha: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
}

/// Fits `err ~ C eps^alpha` over `(eps, err)` pairs.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientRows(points.len()));
    }
    if let Some(&(_, e)) = points.iter().find(|(_, e)| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::NonPositiveError(e));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let (alpha, residual) = fit_line(&x, &y);
    Ok(RateFit { alpha, residual })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    /// Sorted by `eps`, largest first.
    pub rows: Vec<ErrorRow>,
    pub rate_vel: RateFit,
    pub rate_grad: RateFit,
    pub rate_press: RateFit,
}

pub const CSV_HEADER: &str = "eps,n_per_cell,err_vel_1,err_vel_2,err_grad_1,err_grad_2,err_press,energy_const,poincare_const";

impl ConvergenceReport {
    /// Rates are fitted to the whole-domain norms of each error.
    pub fn new(mut rows: Vec<ErrorRow>) -> Result<Self> {
        rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        let fit = |f: &dyn Fn(&ErrorRow) -> f64| fit_rate(&rows.iter().map(|r| (r.eps, f(r))).collect::<Vec<_>>());
        Ok(Self {
            rate_vel: fit(&ErrorRow::total_vel)?,
            rate_grad: fit(&ErrorRow::total_grad)?,
            rate_press: fit(&|r| r.err_press)?,
            rows,
        })
    }

    /// The three columns of errors, each strictly decreasing as `eps` shrinks.
    pub fn strictly_decreasing(&self) -> bool {
        let cols: [&dyn Fn(&ErrorRow) -> Vec<f64>; 3] =
            [&|r| r.err_vel.clone(), &|r| r.err_grad.clone(), &|r| vec![r.err_press]];
        cols.iter().all(|col| self.rows.windows(2).all(|w| col(&w[0]).iter().zip(col(&w[1])).all(|(a, b)| b < *a)))
    }

    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut s = String::new();
        writeln!(s, "# config_sha256={config_hash}").unwrap();
        s.push_str(&csv_rows(&self.rows));
        writeln!(s, "rate_vel={:e}", self.rate_vel.alpha).unwrap();
        writeln!(s, "rate_grad={:e}", self.rate_grad.alpha).unwrap();
        writeln!(s, "rate_press={:e}", self.rate_press.alpha).unwrap();
        s
    }
}

/// Header plus one line per row; missing second-subdomain columns are empty.
pub fn csv_rows(rows: &[ErrorRow]) -> String {
    let mut s = String::new();
    writeln!(s, "{CSV_HEADER}").unwrap();
    for r in rows {
        let sub = |v: &Vec<f64>, k: usize| v.get(k).map_or(String::new(), |x| format!("{x:e}"));
        writeln!(
            s,
            "{:e},{},{},{},{},{},{:e},{:e},{:e}",
            r.eps,
            r.n_per_cell,
            sub(&r.err_vel, 0),
            sub(&r.err_vel, 1),
            sub(&r.err_grad, 0),
            sub(&r.err_grad, 1),
            r.err_press,
            r.energy_const,
            r.poincare_const
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::solve_cell_problem;
    use crate::darcy::{solve_darcy, DarcyOptions, DarcyProblem, Force};
    use crate::fine::{monitors, solve_fine};
    use crate::geometry::{build_perforated_mesh, rasterize_cell, Layout, ObstacleSpec};
    use crate::grid::{CellField, FaceMask};
    use crate::saddle::SolverOptions;
    use proptest::prelude::*;

    fn spd() -> impl Strategy<Value = PermTensor> {
        (0.01f64..10.0, 0.01f64..10.0, 0.0f64..std::f64::consts::PI)
            .prop_map(|(a, b, th)| {
                let (c, s) = (th.cos(), th.sin());
                PermTensor([
                    [a * c * c + b * s * s, (a - b) * c * s],
                    [(a - b) * c * s, a * s * s + b * c * c],
                ])
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn normal_annihilates_the_continuity_matrix(k in spd(), theta in 0.0f64..std::f64::consts::TAU) {
            let n = [theta.cos(), theta.sin()];
            let j = interface_jump([[0.0; 2]; 2], [[0.0; 2]; 2], &k, &k, n).unwrap();
            prop_assert!(continuity_defect(&j.m, n) <= 1e-13);
        }

        #[test]
        fn rate_ignores_a_common_factor(a in 0.1f64..2.0, c in 1e-3f64..1e3, noise in proptest::collection::vec(0.9f64..1.1, 4)) {
            let eps = [0.25f64, 0.125, 0.0625, 0.03125];
            let pts: Vec<(f64, f64)> = eps.iter().zip(&noise).map(|(e, z)| (*e, z * e.powf(a))).collect();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|(e, v)| (*e, c * v)).collect();
            let r0 = fit_rate(&pts).unwrap();
            let r1 = fit_rate(&scaled).unwrap();
            prop_assert!((r0.alpha - r1.alpha).abs() <= 1e-10);
        }
    }

    #[test]
    fn equal_sides_have_no_jump() {
        let k = PermTensor([[2.0, 0.3], [0.3, 1.0]]);
        let w = [[0.1, -0.2], [0.05, 0.3]];
        let j = interface_jump(w, w, &k, &k, [0.0, 1.0]).unwrap();
        assert!(j.h.iter().flatten().all(|x| x.abs() < 1e-15));
        let d = interface_jump(w, w, &PermTensor::diag(1.0, 0.0), &k, [0.0, 1.0]);
        assert!(matches!(d, Err(Error::DegenerateNormal(_))));
    }

    #[test]
    fn vertical_normal_kills_the_second_row() {
        let j = interface_jump([[0.0; 2]; 2], [[0.0; 2]; 2], &PermTensor::diag(3.0, 2.0), &PermTensor::identity(), [0.0, 1.0])
            .unwrap();
        assert!(j.m[1].iter().all(|x| x.abs() < 1e-15));
        assert_eq!(j.m[0], [1.0, 0.0]);
    }

    #[test]
    fn exact_power_laws_are_recovered() {
        let eps = [0.25f64, 0.125, 0.0625];
        let a = fit_rate(&eps.iter().map(|e| (*e, e.sqrt())).collect::<Vec<_>>()).unwrap();
        assert!((a.alpha - 0.5).abs() < 1e-12);
        let b = fit_rate(&eps.iter().map(|e| (*e, 3.0 * e)).collect::<Vec<_>>()).unwrap();
        assert!((b.alpha - 1.0).abs() < 1e-12);
        assert!(matches!(fit_rate(&[(0.5, 1.0), (0.25, 0.5)]), Err(Error::InsufficientRows(2))));
        assert!(matches!(fit_rate(&[(0.5, 1.0), (0.25, 0.0), (0.1, 0.1)]), Err(Error::NonPositiveError(_))));
    }

    fn setup(eps: f64, force: Force) -> (Vec<CellSolution>, DarcySolution, PerforatedMesh) {
        let ob = ObstacleSpec::square(0.5, 0.5, 0.5);
        let mesh = build_perforated_mesh(&Layout::whole(0), &[ob.clone()], eps, 8).unwrap();
        let cell = solve_cell_problem(&rasterize_cell(&ob, 8).unwrap(), SolverOptions::default()).unwrap();
        let darcy = solve_darcy(
            &DarcyProblem::new(Layout::whole(0), vec![cell.k], force, mesh.grid.nx),
            DarcyOptions::default(),
        )
        .unwrap();
        (vec![cell], darcy, mesh)
    }

    #[test]
    fn conservative_force_gives_zero_two_scale_field() {
        let (cells, darcy, mesh) = setup(0.25, Force::Constant([0.0, 1.0]));
        let v = build_two_scale(&cells, &darcy, &mesh).unwrap();
        assert!(v.velocity[0].max_abs() < 1e-10);
    }

    #[test]
    fn unit_drive_tiles_w_and_averages_to_k() {
        let mut prev = f64::INFINITY;
        for eps in [0.25, 0.125, 0.0625] {
            let (cells, _, mesh) = setup(eps, Force::Zero);
            let v = build_two_scale_with(&cells, &mesh, |_, _, _| [1.0, 0.0]).unwrap();
            let g = mesh.grid;
            let faces = FaceMask::new(g, Some(&mesh.solid));
            for c in 0..2 {
                let dims = g.face_dims(c);
                for (k, x) in v.velocity[0].comps[c].iter().enumerate() {
                    let on_wall = g.face_weight(c, k % dims[0], k / dims[0]) < 1.0;
                    if !faces.is_active(c, k) && !on_wall {
                        assert_eq!(*x, 0.0);
                    }
                }
            }
            // integral of V_1 over the domain against K_11
            let total = g.h * g.h * v.velocity[0].comps[0].iter().enumerate().map(|(k, x)| {
                let dims = g.face_dims(0);
                g.face_weight(0, k % dims[0], k / dims[0]) * x
            }).sum::<f64>();
            let dev = (total - cells[0].k.get(0, 0)).abs();
            assert!(dev <= prev + 1e-15);
            prev = dev;
            // one period shift reproduces the sample
            let n = mesh.n_per_cell;
            let dims = g.face_dims(0);
            assert_eq!(v.velocity[0].comps[0][3 * dims[0] + 2], v.velocity[0].comps[0][(3 + n) * dims[0] + 2 + n]);
        }
    }

    #[test]
    fn identical_fields_give_zero_errors() {
        let (cells, darcy, mesh) = setup(0.25, Force::SinPiX2 { amplitude: 1.0 });
        let v = build_two_scale(&cells, &darcy, &mesh).unwrap();
        let g = mesh.grid;
        let mut grad = v.gradient[0].clone();
        // undo the eps scaling applied to the fine gradient
        let fg = FaceMask::new(g, Some(&mesh.solid));
        let reference = FaceGradient::of(&v.velocity[0], &fg);
        grad.normal.iter_mut().flatten().for_each(|x| *x /= mesh.eps);
        grad.tangential.iter_mut().flatten().for_each(|x| *x /= mesh.eps);
        grad.weight = reference.weight.clone();
        let mut extended = darcy.pressure.clone();
        extended.data.iter_mut().for_each(|x| *x += 4.0);
        let fine = FineSolution {
            eps: mesh.eps,
            velocity: v.velocity[0].clone(),
            pressure: CellField::zeros(g),
            extended,
            gradient: grad,
            momentum_residual: 0.0,
            divergence_residual: 0.0,
            iterations: 0,
            monitors: monitors(mesh.eps, &v.velocity[0], &reference, &CellField::zeros(g), &v.velocity[0]),
        };
        let row = error_norms(&fine, &v, &darcy, &mesh).unwrap();
        assert!(row.err_vel[0] == 0.0 && row.err_grad[0] < 1e-14 && row.err_press < 1e-14, "{row:?}");
    }

    #[test]
    fn zero_force_gives_zero_errors() {
        let (cells, darcy, mesh) = setup(0.25, Force::Zero);
        let v = build_two_scale(&cells, &darcy, &mesh).unwrap();
        let fine = solve_fine(&mesh, &Force::Zero, SolverOptions::default()).unwrap();
        let row = error_norms(&fine, &v, &darcy, &mesh).unwrap();
        assert_eq!((row.err_vel[0], row.err_grad[0], row.err_press), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let (cells, darcy, _) = setup(0.25, Force::Zero);
        let other = build_perforated_mesh(&Layout::whole(0), &[ObstacleSpec::square(0.5, 0.5, 0.5)], 0.25, 16).unwrap();
        assert!(matches!(build_two_scale(&cells, &darcy, &other), Err(Error::IncommensurateGrids(_))));
    }

    #[test]
    fn csv_layout() {
        let row = ErrorRow {
            eps: 0.25,
            n_per_cell: 8,
            err_vel: vec![0.5],
            err_grad: vec![0.25],
            err_press: 0.125,
            energy_const: 1.0,
            poincare_const: 2.0,
        };
        let mut rows = vec![row.clone(), row.clone(), row];
        rows[1].eps = 0.125;
        rows[2].eps = 0.0625;
        let rep = ConvergenceReport::new(rows).unwrap();
        let csv = rep.to_csv("ab");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# config_sha256=ab");
        assert_eq!(lines[1], CSV_HEADER);
        assert_eq!(lines[2], "2.5e-1,8,5e-1,,2.5e-1,,1.25e-1,1e0,2e0");
        assert!(lines[5].starts_with("rate_vel="));
        assert_eq!(lines.len(), 8);
        assert!(!rep.strictly_decreasing());
    }
}
