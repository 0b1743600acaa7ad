//! Independent ground truth: an exact transportation LP, the tilted-cost
//! optimality certificate and brute-force scalar minimizers.

pub mod certificate;
pub mod grid;
pub mod network_simplex;

pub use certificate::{kkt_certificate, CertificateReport, Verdict};
pub use grid::{separable_grid_oracle, ScalarProblem};
pub use network_simplex::{exact_ot_lp, LpSolution, MAX_LP_CELLS};
