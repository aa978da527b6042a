//! High-order discontinuous Galerkin discrete-ordinates transport on curved meshes.
//!
//! The pipeline is: build or read a [`mesh::HighOrderMesh`], assemble the per-ordinate
//! DG blocks with [`assembly::assemble`], schedule sweeps on each ordinate's dependency
//! graph with [`sweepgraph`], and run source iteration with [`solver::TransportSolver`].
//! Every stage is generic over the floating point type; the aliases below fix it to `f64`.

pub mod assembly;
pub mod discretization;
pub mod linalg;
pub mod mesh;
pub mod scalar;
pub mod solver;
pub mod sweepgraph;
pub mod verification;

pub use scalar::{Point2, Real};

pub type Mesh = mesh::HighOrderMesh<f64>;
pub type Operator = assembly::TransportOperator<f64>;
pub type Quadrature = discretization::AngularQuadrature<f64>;
pub type CrossSections = assembly::CrossSections<f64>;
pub type Graph = sweepgraph::DependencyGraph<f64>;
pub type Ordering = sweepgraph::SweepOrdering<f64>;
pub type Solver<'a> = solver::TransportSolver<'a, f64>;
pub type SolveConfig = solver::SolveConfig<f64>;
pub type State = solver::SolverState<f64>;
pub type Manufactured = verification::ManufacturedSolution<f64>;
