//! Tracking control of the kinematic unicycle using the spatial (right-invariant)
//! group error on SE(2).
//!
//! Modules, bottom-up:
//!
//! - [`se2`]: group, algebra, weighted inner product and projection
//! - [`group_error`]: body-fixed and spatial errors, their rates, the Lyapunov value
//! - [`controller`]: the gradient law, its regressor/gradient split, Kanayama baseline
//! - [`excitation`]: sliding-window Gram integrals and PE certificates
//! - [`linearization`]: local linear error dynamics and an LTV decay probe
//! - [`trajectory`], [`sim`], [`experiment`]: references, closed-loop runs, batches
//! - [`cli`]: the `unitrack` command line

pub mod cli;
pub mod controller;
pub mod excitation;
pub mod experiment;
pub mod group_error;
pub mod integrate;
pub mod linearization;
pub mod log;
pub mod se2;
pub mod sim;
pub mod trajectory;

pub use controller::{Gains, KanayamaGains};
pub use group_error::{left_error, lyapunov, right_error, BodyError, GroupError, SpatialError};
pub use log::{LogRow, SimLog};
pub use se2::{AlgebraVector, ControlPair, Pose};
pub use sim::{simulate, ControllerSpec, InitialCondition, SimConfig, SimError};
pub use trajectory::{DesiredTrajectory, TrajectorySpec};
