//! UWB TDOA localization toolkit: anchor-placement analysis and optimization
//! in cluttered 3D spaces, an error-state Kalman filter fusing IMU and TDOA
//! measurements, and a simulation harness comparing achieved error with
//! theoretical lower bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eskf;
pub mod geometry;
pub mod io;
pub mod kinematics;
pub mod measurement;
mod par;
pub mod placement;
pub mod sim;

pub use error::{Error, Result};
pub use par::set_threads;
