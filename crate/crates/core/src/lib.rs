//! Spring/IMU proprioception and sensor-space closed-loop control for a
//! two-segment pneumatic soft manipulator, verified against a virtual plant.
//!
//! The pipeline runs left to right:
//!
//! - [`kinematics`]: constant-curvature segment geometry and frame chain.
//! - [`plant`]: pressure-driven virtual manipulator with payload compliance,
//!   pressure lag and a seeded sim-to-real gap.
//! - [`sensing`]: spring inductance path with quartic calibration, IMU reads,
//!   noise and quantisation; assembles the 24-value sensor vector.
//! - [`nn`]: small dense networks with input gradients and Adam training.
//! - [`proprioception`]: datasets, the sensor-to-pose predictor with
//!   sim-to-real correction, evaluation and ablation.
//! - [`control`]: gradient-descent sensor reference solver, Jacobian inner
//!   loop, ADRC pressure tracking and the closed-loop orchestrator.

pub mod control;
pub mod error;
pub mod kinematics;
pub mod nn;
pub mod plant;
pub mod proprioception;
pub mod sensing;

pub use error::{Error, Result};
pub use kinematics::{ArcParams, Pose, RigidTransform, SegmentGeometry};
pub use nn::{Mlp, TrainConfig};
pub use plant::{ActuationVector, GapModel, LoadSpec, Plant, PlantConfig};
pub use proprioception::{Dataset, EvalReport, PosePredictor, Sample};
pub use sensing::{SensorModel, SensorNoise, SensorVector};
