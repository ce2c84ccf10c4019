//! Spectral laboratory for the fractional porous-medium flow
//! `u_t + (-Delta)^s (u^m) = 0` on intervals and rectangles with zero
//! Dirichlet conditions.
//!
//! The operator is the spectral fractional Laplacian: eigenvalues
//! `lambda_k^s` on the closed-form Dirichlet sine basis. On top of the
//! solver the crate measures kernel envelope constants, evaluates the
//! explicit constants of the decay/smoothing/positivity estimates, and turns
//! each estimate into a sampled numerical check with a machine-readable
//! report.

pub mod basis;
pub mod constants;
pub mod datum;
pub mod domain;
pub mod elliptic;
pub mod error;
pub mod field;
pub mod green;
pub mod operator;
pub mod report;
pub mod solver;
pub mod verify;

pub use basis::{EigenBasis, Mode};
pub use datum::Datum;
pub use domain::{Coord, DomainSpec};
pub use error::{Error, Result};
pub use field::Field;
pub use green::{envelope_bq, GreenEvaluator};
pub use operator::{phi1_distance_ratio, phi1_profile, FractionalOperator};
pub use solver::{benilan_crandall_margin, DtPolicy, PmeSolver, SolverConfig, Trajectory};
