//! Interior-point solver for linear matrix inequality programs
//!
//! ```text
//!   minimize    c^T u
//!   subject to  F0_b + sum_i u_i F_ib  PSD        for every PSD block b
//!               a0_r + a_r^T u        >= 0        for every nonnegative row r
//!               G u = g
//! ```
//!
//! Equalities are removed by a nullspace parametrization (see [`presolve`]),
//! and the remaining free-variable problem is solved with a homogeneous
//! self-dual embedding, Nesterov-Todd scaling and Mehrotra's
//! predictor-corrector (see [`ipm`]).

pub mod ipm;
pub mod presolve;
mod program;

pub use ipm::{DenseIpm, IpmSettings};
pub use presolve::{presolve, Presolved};
pub use program::{ConicProgram, LinRow, PsdBlock};

use nalgebra::{DMatrix, DVector};

/// Outcome classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    /// A dual ray certifies that no `u` satisfies the constraints.
    Infeasible,
    /// A primal ray drives the objective to minus infinity.
    Unbounded,
    /// Iteration limit or numerical breakdown; `u` is the best iterate.
    Stalled,
}

/// Result of a conic solve.
#[derive(Debug, Clone)]
pub struct ConicResult {
    pub status: Status,
    /// Primal point in the original (pre-elimination) variables.
    pub u: DVector<f64>,
    /// Dual matrices, one per PSD block.
    pub psd_duals: Vec<DMatrix<f64>>,
    /// Dual multipliers of the nonnegative rows.
    pub lin_duals: DVector<f64>,
    /// Relative primal residual of the reduced problem.
    pub primal_residual: f64,
    /// Relative dual residual of the reduced problem.
    pub dual_residual: f64,
    /// Duality gap divided by `1 + |objective|`.
    pub rel_gap: f64,
    pub objective: f64,
    pub iterations: usize,
}

impl ConicResult {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Largest of the primal, dual and gap measures.
    pub fn max_residual(&self) -> f64 {
        self.primal_residual.max(self.dual_residual).max(self.rel_gap)
    }
}

/// Anything able to solve a [`ConicProgram`].
pub trait ConicSolver: Send + Sync {
    fn solve(&self, cp: &ConicProgram) -> ConicResult;
}

/// Solve with the built-in interior-point method and default settings.
pub fn solve(cp: &ConicProgram) -> ConicResult {
    DenseIpm::default().solve(cp)
}
