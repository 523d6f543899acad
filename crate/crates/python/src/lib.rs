//! Python bindings: cell problems, the Darcy limit and the error sweep.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use permlab::darcy::{effective_velocity, solve_darcy as darcy_solve, DarcyOptions, DarcyProblem, Force};
use permlab::geometry::{rasterize_cell, Layout, ObstacleSpec};
use permlab::{cell, pipeline, twoscale, Error, PermTensor, RunConfig, SolverOptions};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::InvalidObstacle(_)
        | Error::InvalidLayout(_)
        | Error::InvalidGrid(_)
        | Error::ObstacleTouchesBoundary(_)
        | Error::DisconnectedFluid { .. }
        | Error::EpsTooLarge { .. }
        | Error::SingularK(_)
        | Error::InsufficientRows(_)
        | Error::NonPositiveError(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// One periodic obstacle inside the unit cell.
#[pyclass(name = "Obstacle", frozen, from_py_object)]
#[derive(Clone)]
struct PyObstacle(ObstacleSpec);

#[pymethods]
impl PyObstacle {
    #[staticmethod]
    #[pyo3(signature = (side, center = (0.5, 0.5)))]
    fn square(side: f64, center: (f64, f64)) -> PyResult<Self> {
        Self::checked(ObstacleSpec::square(center.0, center.1, side))
    }

    #[staticmethod]
    #[pyo3(signature = (radius, center = (0.5, 0.5)))]
    fn disk(radius: f64, center: (f64, f64)) -> PyResult<Self> {
        Self::checked(ObstacleSpec::disk(center.0, center.1, radius))
    }

    #[staticmethod]
    fn polygon(vertices: Vec<[f64; 2]>) -> PyResult<Self> {
        Self::checked(ObstacleSpec::Polygon { vertices })
    }

    fn __repr__(&self) -> String {
        format!("Obstacle({:?})", self.0)
    }
}

impl PyObstacle {
    fn checked(spec: ObstacleSpec) -> PyResult<Self> {
        spec.validate().map_err(to_py)?;
        Ok(Self(spec))
    }
}

/// Permeability and diagnostics of one cell solve.
#[pyclass(name = "CellResult", frozen, get_all)]
struct PyCellResult {
    n: usize,
    k: [[f64; 2]; 2],
    fluid_fraction: f64,
    energy_residual: f64,
    iterations: [usize; 2],
}

#[pymethods]
impl PyCellResult {
    fn eigenvalues(&self) -> [f64; 2] {
        PermTensor(self.k).eigenvalues()
    }

    fn __repr__(&self) -> String {
        format!("CellResult(n={}, k={:?}, fluid_fraction={})", self.n, self.k, self.fluid_fraction)
    }
}

/// Solves both cell problems for `obstacle` on an `n x n` periodic grid.
#[pyfunction]
#[pyo3(signature = (obstacle, n = 64, tol = 1e-8, max_iter = 10_000))]
fn solve_cell(py: Python<'_>, obstacle: PyObstacle, n: usize, tol: f64, max_iter: usize) -> PyResult<PyCellResult> {
    let sol = py
        .detach(|| {
            let mask = rasterize_cell(&obstacle.0, n)?;
            cell::solve_cell_problem(&mask, SolverOptions { tol, max_iter })
        })
        .map_err(to_py)?;
    Ok(PyCellResult {
        n,
        k: sol.k.0,
        fluid_fraction: sol.fluid_fraction,
        energy_residual: cell::energy_residual(&sol),
        iterations: sol.iterations,
    })
}

/// Solves the effective Darcy problem on an `n x n` grid.
///
/// `k` holds one tensor per subdomain; two tensors need `split_axis` (1 or 2).
/// `force` is a constant vector, or `None` for `(sin(pi x2), 0)`.
#[pyfunction]
#[pyo3(signature = (k, n, split_axis = None, split_value = 0.5, force = None))]
fn solve_darcy<'py>(
    py: Python<'py>,
    k: Vec<[[f64; 2]; 2]>,
    n: usize,
    split_axis: Option<usize>,
    split_value: f64,
    force: Option<[f64; 2]>,
) -> PyResult<Bound<'py, PyDict>> {
    let layout = match split_axis {
        None => Layout::whole(0),
        Some(a @ (1 | 2)) => Layout::half_split(a - 1, split_value, 0, 1),
        Some(a) => return Err(PyValueError::new_err(format!("split_axis must be 1 or 2, got {a}"))),
    };
    let force = force.map_or(Force::SinPiX2 { amplitude: 1.0 }, Force::Constant);
    let k = k.into_iter().map(PermTensor).collect();
    let (sol, vel) = py
        .detach(|| {
            let sol = darcy_solve(&DarcyProblem::new(layout, k, force, n), DarcyOptions::default())?;
            let vel = effective_velocity(&sol);
            Ok::<_, Error>((sol, vel))
        })
        .map_err(to_py)?;
    let rows: Vec<Vec<f64>> = sol.pressure.data.chunks(sol.grid.nx).map(<[f64]>::to_vec).collect();
    let out = PyDict::new(py);
    out.set_item("pressure", rows)?;
    out.set_item("conservation", sol.conservation)?;
    out.set_item("max_normal_jump", vel.max_normal_jump())?;
    out.set_item("max_tangential_jump", vel.max_tangential_jump())?;
    Ok(out)
}

/// Runs the error sweep described by a TOML configuration string and
/// writes `sweep.csv` to its output directory.
#[pyfunction]
fn run_sweep<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RunConfig::parse(config).map_err(to_py)?;
    cfg.validate_geometry().map_err(to_py)?;
    let outcome = py.detach(|| pipeline::run_sweep(&cfg)).map_err(to_py)?;
    let r = &outcome.report;
    let rows = r
        .rows
        .iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("eps", row.eps)?;
            d.set_item("err_vel", row.total_vel())?;
            d.set_item("err_grad", row.total_grad())?;
            d.set_item("err_press", row.err_press)?;
            d.set_item("energy_const", row.energy_const)?;
            d.set_item("poincare_const", row.poincare_const)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = PyDict::new(py);
    out.set_item("rows", rows)?;
    out.set_item("rate_vel", r.rate_vel.alpha)?;
    out.set_item("rate_grad", r.rate_grad.alpha)?;
    out.set_item("rate_press", r.rate_press.alpha)?;
    out.set_item("monitors_ok", outcome.monitors_ok)?;
    out.set_item("csv_path", outcome.csv_path.display().to_string())?;
    Ok(out)
}

/// Least-squares slope of `log err` against `log eps`.
#[pyfunction]
fn fit_rate(eps: Vec<f64>, err: Vec<f64>) -> PyResult<f64> {
    if eps.len() != err.len() {
        return Err(PyValueError::new_err("eps and err differ in length"));
    }
    let points: Vec<(f64, f64)> = eps.into_iter().zip(err).collect();
    Ok(twoscale::fit_rate(&points).map_err(to_py)?.alpha)
}

#[pymodule]
#[pyo3(name = "permlab")]
fn permlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyObstacle>()?;
    m.add_class::<PyCellResult>()?;
    m.add_function(wrap_pyfunction!(solve_cell, m)?)?;
    m.add_function(wrap_pyfunction!(solve_darcy, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
