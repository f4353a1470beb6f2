//! Linear-quadratic pursuit-evasion games with intermittent communication.
//!
//! The pursuer sees the game state only at discrete communication instants
//! and propagates a certainty-equivalent estimate in between. This crate
//! computes the equilibrium value matrix, detects finite escape times of the
//! associated Riccati flows, derives the minimum-cardinality communication
//! schedule, and forward-simulates the closed-loop game to evaluate payoffs.
//!
//! Module map:
//!
//! - [`model`]: game specification and well-posedness checks.
//! - [`riccati`]: backward adaptive integration of the matrix Riccati flows
//!   with dense output.
//! - [`expm`]: matrix exponential (scaling and squaring, Padé 13).
//! - [`escape`]: escape-time detection by norm blow-up and by the linear
//!   (Radon) representation.
//! - [`schedule`]: optimal schedules, admissibility checks and slack.
//! - [`sim`]: strategies, closed-loop simulation and payoff evaluation.
//! - [`io`]: JSON/CSV formats and command dispatch.
//! - [`exec`]: sequential or rayon-backed fan-out.

// `!(a < b)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod linalg;
mod tolerances;

pub mod escape;
pub mod exec;
pub mod expm;
pub mod io;
pub mod model;
pub mod riccati;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
pub use exec::Execution;
pub use tolerances::Tolerances;

pub use escape::{detect_escape_norm, detect_escape_radon, EscapeMethod, EscapeReport};
pub use model::{example_one_spec, validate_spec, GameSpec, ValidationReport, Violation};
pub use riccati::{
    riccati_residual, solve_riccati, solve_value_riccati, RiccatiKind, RiccatiProblem,
    RiccatiSolution, StepControl,
};
pub use schedule::{
    check_admissibility, max_next_instance, optimal_schedule, Admissibility, CommSchedule,
    IntervalCertificate, ScheduleOptions,
};
pub use sim::{
    deviation_sweep, open_loop_inputs, payoff_two_ways, reachable_radius, risky_strategy, simulate,
    theorem1_sign_check, EvaderStrategy, InputSignal, PursuerStrategy, Trajectory,
};
