use crate::geometry::{Pose, Vec3};

/// True kinematic state of a rigid body at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicSample {
    pub t: f64,
    pub pose: Pose,
    /// Inertial frame, m/s.
    pub velocity: Vec3,
    /// Inertial frame, m/s^2 (kinematic, without gravity).
    pub acceleration: Vec3,
    /// Body frame, rad/s.
    pub angular_rate: Vec3,
}

/// Anything that can be sampled for ground truth over `[0, duration]`.
pub trait Trajectory {
    fn duration(&self) -> f64;

    fn sample(&self, t: f64) -> KinematicSample;
}

/// A body resting at a fixed pose.
#[derive(Debug, Clone, Copy)]
pub struct Stationary {
    pub pose: Pose,
    pub duration: f64,
}

impl Trajectory for Stationary {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn sample(&self, t: f64) -> KinematicSample {
        KinematicSample {
            t,
            pose: self.pose,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            angular_rate: Vec3::zeros(),
        }
    }
}

/// Straight line at constant velocity from `start`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantVelocity {
    pub start: Pose,
    pub velocity: Vec3,
    pub duration: f64,
}

impl Trajectory for ConstantVelocity {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn sample(&self, t: f64) -> KinematicSample {
        KinematicSample {
            t,
            pose: Pose::new(self.start.position + t * self.velocity, self.start.orientation),
            velocity: self.velocity,
            acceleration: Vec3::zeros(),
            angular_rate: Vec3::zeros(),
        }
    }
}
