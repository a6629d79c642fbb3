//! Self-contained numerical kernels: monotone root finding and a dense
//! convex QP solver.

mod bisect;
mod qp;

pub use bisect::{bisect, bisect_boundary, BisectResult};
pub use qp::{
    complementarity_violation, qp_solve, qp_solve_hinted, QpConfig, QpProblem, QpSolution,
    QpStatus,
};
