//! Classical comparison policies and their episodic runner.

mod policies;
mod runner;
mod simplex;

pub use policies::{
    aansc_policy, decide, evaluate_pen, heuristic_policy, onsra_policy, BaselineDecision, BaselineError, GridSpec,
    PenEvaluation, PolicyOutcome, PolicyTag, ScenarioSnapshot,
};
pub use runner::{run_baseline, BaselineParams, BaselineRunError};
pub use simplex::{project_simplex, ratio_grid, simplex_grid};
