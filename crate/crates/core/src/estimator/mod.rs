//! Ruling reprojection loss and the window solver.

mod alpha;
mod params;
mod residual;
mod solver;

pub use alpha::{alpha_objective, solve_alpha, AlphaSolve, MIN_CONDITIONING};
pub use params::{
    LineParams, SharedMotionParams, SurfaceSetParams, TranslationSignal, LINE_BLOCK, MAX_GRAVITY, SHARED_BLOCK,
};
pub use residual::{loss_jacobian, residuals, ObsStatus, ResidualVector, DEFAULT_PENALTY};
pub use solver::{
    has_unbounded_direction, numerical_rank, retract, solve_window, Diagnostics, SolverConfig, Termination,
    WindowSolution, PARALLEL_EPS,
};
