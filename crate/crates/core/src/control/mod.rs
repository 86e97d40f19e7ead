//! Sensor-space closed-loop control.
//!
//! The outer loop solves for a reference sensor vector whose predicted pose
//! matches the target; the inner loop turns the sensor error into pressure
//! references through a damped least-squares step on an estimated Jacobian
//! and tracks them with per-chamber ADRC.

pub mod adrc;
pub mod closed_loop;
pub mod gd;
pub mod inner;
pub mod path;

pub use adrc::{adrc_track, AdrcConfig, AdrcState, AdrcTrace};
pub use closed_loop::{
    closed_loop, follow_path, ClosedLoopResult, ControlConfig, ControlTrace, Controller, PathResult, TraceRow,
    WaypointResult,
};
pub use gd::{initial_guess, objective, solve_sensor_target, GdConfig, GdSolution, InitialGuess};
pub use inner::{broyden_update, estimate_jacobian, inner_step, InnerConfig, InnerStep, Manipulator};
pub use path::{generate_path, load_waypoints, save_waypoints, PathShape, PathSpec};
