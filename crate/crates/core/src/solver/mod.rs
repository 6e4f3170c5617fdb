//! Grid solvers and the tools built on them.

pub mod convergence;
mod fit;
pub mod generalized;
pub mod grid;
pub mod marching;
pub mod mollify;
pub mod picard;

use thiserror::Error;

use crate::characteristics::TraceError;

pub use convergence::{convergence_table, ConvergenceRow, ConvergenceTable};
pub use fit::{fit_growth, norm_ratio_history, GrowthFit};
pub use generalized::{generalized_solution, sampler_l2_distance, GeneralizedReport, LevelReport, MollifierConfig};
pub use grid::{GridSolution, GridSpec};
pub use marching::{solve_marching, solve_marching_with, FootInterp};
pub use mollify::{mollify, Mollified};
pub use picard::{picard_window, solve_picard, PicardConfig, PicardReport, WindowReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("non-finite value at t = {t} (level {level})")]
    NonFinite { level: usize, t: f64 },
    #[error(
        "Picard iteration on window [{beta}, {gamma}] is not contracting (change grew for {streak} iterations); \
         try a window height of at most {suggested_height}"
    )]
    NonContraction {
        beta: f64,
        gamma: f64,
        streak: usize,
        suggested_height: f64,
    },
    #[error("Picard iteration on window [{beta}, {gamma}] did not reach tolerance {tol} in {iterations} iterations (last change {change:.3e})")]
    NoConvergence {
        beta: f64,
        gamma: f64,
        iterations: usize,
        change: f64,
        tol: f64,
    },
    #[error("invalid input: {0}")]
    Invalid(String),
}
