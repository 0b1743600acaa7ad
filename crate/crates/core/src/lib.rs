//! Schatten-p regularized discrete optimal transport.
//!
//! The crate solves
//!
//! ```text
//! min_{P in U(a,b)}  <C, P> + sum_i lambda_i * || A_i(P) ||_{S_{p_i}}^{q_i}
//! ```
//!
//! where `U(a,b)` is the transportation polytope and each `A_i` is an affine
//! map of the coupling (the coupling itself, a barycentric map, an elastic
//! displacement, a covariance, ...). The solver is KL mirror descent with a
//! Sinkhorn projection and exact rounding after every step.
//!
//! Alongside the solver live the pieces needed to check it: an exact
//! transportation simplex, a tilted-cost optimality certificate, synthetic
//! instance generators with known optima, and the closed-form Gaussian
//! solutions.

pub mod error;
pub mod gaussian;
pub mod measures;
pub mod metrics;
pub mod oracle;
pub mod par;
pub mod polytope;
pub mod regmaps;
pub mod schatten;
pub mod solver;

pub use error::{Error, Result};
pub use measures::{cost_matrix, CostMatrix, DiscreteMeasure};
pub use polytope::{kl_project, marginal_error, round_to_polytope, Coupling};
pub use regmaps::{AffineCouplingMap, MapImage, MapKind, RegularizerTerm};
pub use solver::{solve, Problem, SolveReport, SolverOptions, StepSchedule};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real vector used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
