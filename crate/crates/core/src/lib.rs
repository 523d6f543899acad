//! Permeability tensors from periodic Stokes cell problems, the Darcy
//! limit on piecewise-homogenised domains, and two-scale error studies
//! against fine perforated-domain Stokes solves.

pub mod cell;
pub mod config;
pub mod darcy;
pub mod error;
pub mod fine;
pub mod geometry;
pub mod grid;
pub mod krylov;
pub mod pipeline;
pub mod saddle;
pub mod twoscale;

pub use cell::{CellSolution, PermTensor};
pub use config::RunConfig;
pub use darcy::{DarcyProblem, DarcySolution, Force};
pub use error::{Error, Result};
pub use fine::FineSolution;
pub use geometry::{CellMask, Layout, ObstacleSpec, PerforatedMesh};
pub use grid::{CellField, MacGrid, StaggeredField};
pub use saddle::{SaddleProblem, SaddleSolution, SolverOptions};
pub use twoscale::{ConvergenceReport, ErrorRow, TwoScaleField};
