//! Small dense convex solvers: a primal-dual interior-point method for SDPs
//! and a dense simplex for LPs.

pub mod lp;
pub mod sdp;

use serde::{Deserialize, Serialize};

pub use lp::{solve_lp, LpProblem, LpSolution};
pub use sdp::{solve_sdp, ConstraintSense, SdpConstraint, SdpProblem, SdpSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusKind {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

/// Outcome of a solve. Residuals are only meaningful when `kind` is optimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStatus {
    pub kind: StatusKind,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Relative duality gap (SDP) or max `|y_i s_i|` (LP).
    pub complementarity: f64,
}

impl SolveStatus {
    pub fn new(kind: StatusKind, iterations: usize) -> Self {
        Self {
            kind,
            iterations,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            complementarity: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.kind == StatusKind::Optimal
    }
}
