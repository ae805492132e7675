use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::record::MeasurementRecord;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::kinematics::Trajectory;

pub const GRAVITY: f64 = 9.81;

/// Continuous-time IMU noise densities and gravity.
///
/// Defaults are generic low-cost MEMS figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuParams {
    /// Accelerometer white noise, m/s^2/sqrt(Hz).
    pub sigma_a: f64,
    /// Gyro white noise, rad/s/sqrt(Hz).
    pub sigma_w: f64,
    /// Accelerometer bias random walk, m/s^3/sqrt(Hz).
    pub sigma_ba: f64,
    /// Gyro bias random walk, rad/s^2/sqrt(Hz).
    pub sigma_bw: f64,
    pub gravity: Vec3,
}

impl Default for ImuParams {
    fn default() -> Self {
        Self {
            sigma_a: 0.02,
            sigma_w: 0.002,
            sigma_ba: 2e-4,
            sigma_bw: 2e-5,
            gravity: Vec3::new(0.0, 0.0, -GRAVITY),
        }
    }
}

impl ImuParams {
    pub fn noiseless() -> Self {
        Self {
            sigma_a: 0.0,
            sigma_w: 0.0,
            sigma_ba: 0.0,
            sigma_bw: 0.0,
            ..Self::default()
        }
    }

    /// Zero densities are allowed (noiseless synthesis).
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_a", self.sigma_a),
            ("sigma_w", self.sigma_w),
            ("sigma_ba", self.sigma_ba),
            ("sigma_bw", self.sigma_bw),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.gravity.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("gravity must be finite"));
        }
        Ok(())
    }
}

/// IMU samples at `rate` Hz over the trajectory, starting at t = 0 with zero
/// biases.
///
/// gyro = w + b_w + n, acc = C^T (a - g) + b_a + n. Biases follow discrete
/// random walks with per-step std `sigma_b sqrt(dt)`; white noise has per-sample
/// std `sigma sqrt(rate)`.
pub fn synth_imu<T: Trajectory + ?Sized>(traj: &T, params: &ImuParams, rate: f64, seed: u64) -> Result<Vec<MeasurementRecord>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("IMU rate must be > 0, got {rate}")));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal3 = |rng: &mut ChaCha8Rng| -> Vec3 {
        Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        )
    };
    let dt = 1.0 / rate;
    let white_a = params.sigma_a * rate.sqrt();
    let white_w = params.sigma_w * rate.sqrt();
    let walk_a = params.sigma_ba * dt.sqrt();
    let walk_w = params.sigma_bw * dt.sqrt();

    let count = (traj.duration() * rate + 1e-9).floor() as usize + 1;
    let mut b_a = Vec3::zeros();
    let mut b_w = Vec3::zeros();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let t = k as f64 * dt;
        let s = traj.sample(t);
        let c_t = s.pose.orientation.inverse();
        let specific_force = c_t.transform_vector(&(s.acceleration - params.gravity));
        let acc = specific_force + b_a + white_a * normal3(&mut rng);
        let gyro = s.angular_rate + b_w + white_w * normal3(&mut rng);
        out.push(MeasurementRecord::imu(t, acc, gyro));
        b_a += walk_a * normal3(&mut rng);
        b_w += walk_w * normal3(&mut rng);
    }
    Ok(out)
}

/// Ground-truth records at `rate` Hz.
pub fn synth_ground_truth<T: Trajectory + ?Sized>(traj: &T, rate: f64) -> Result<Vec<MeasurementRecord>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("ground-truth rate must be > 0, got {rate}")));
    }
    let count = (traj.duration() * rate + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| {
            let s = traj.sample(k as f64 / rate);
            MeasurementRecord::ground_truth(s.t, s.pose, s.velocity)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Quat};
    use crate::kinematics::{ConstantVelocity, Stationary};
    use crate::measurement::Payload;
    use approx::assert_relative_eq;

    fn unpack(r: &MeasurementRecord) -> (Vec3, Vec3) {
        match r.payload {
            Payload::Imu { acc, gyro } => (acc, gyro),
            _ => panic!("not imu"),
        }
    }

    #[test]
    fn static_noiseless() {
        let traj = Stationary { pose: Pose::at(Vec3::new(1.0, 2.0, 1.5)), duration: 2.0 };
        let recs = synth_imu(&traj, &ImuParams::noiseless(), 100.0, 1).unwrap();
        assert_eq!(recs.len(), 201);
        for r in &recs {
            let (acc, gyro) = unpack(r);
            assert_relative_eq!(acc, Vec3::new(0.0, 0.0, 9.81), epsilon = 1e-12);
            assert_eq!(gyro, Vec3::zeros());
        }
    }

    #[test]
    fn tilted_static_sees_rotated_gravity() {
        let q = Quat::from_euler_angles(0.0, -std::f64::consts::FRAC_PI_2, 0.0);
        let traj = Stationary { pose: Pose::new(Vec3::zeros(), q), duration: 0.1 };
        let recs = synth_imu(&traj, &ImuParams::noiseless(), 100.0, 1).unwrap();
        let (acc, _) = unpack(&recs[0]);
        assert_relative_eq!(acc, Vec3::new(9.81, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn constant_velocity_noiseless() {
        let traj = ConstantVelocity {
            start: Pose::at(Vec3::zeros()),
            velocity: Vec3::new(1.0, 0.5, 0.0),
            duration: 3.0,
        };
        for r in synth_imu(&traj, &ImuParams::noiseless(), 50.0, 3).unwrap() {
            let (acc, gyro) = unpack(&r);
            assert_relative_eq!(acc, Vec3::new(0.0, 0.0, 9.81), epsilon = 1e-12);
            assert_eq!(gyro, Vec3::zeros());
        }
    }

    #[test]
    fn gyro_white_noise_statistics() {
        let rate = 100.0;
        let params = ImuParams { sigma_w: 0.01, sigma_bw: 0.0, ..ImuParams::noiseless() };
        let traj = Stationary { pose: Pose::at(Vec3::zeros()), duration: (100_000 - 1) as f64 / rate };
        let recs = synth_imu(&traj, &params, rate, 42).unwrap();
        assert_eq!(recs.len(), 100_000);
        let xs: Vec<f64> = recs.iter().map(|r| unpack(r).1.x).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let expected = 0.01 * rate.sqrt();
        assert!((std / expected - 1.0).abs() < 0.02, "{std} vs {expected}");
    }

    #[test]
    fn deterministic_given_seed() {
        let traj = Stationary { pose: Pose::at(Vec3::zeros()), duration: 1.0 };
        let a = synth_imu(&traj, &ImuParams::default(), 200.0, 9).unwrap();
        let b = synth_imu(&traj, &ImuParams::default(), 200.0, 9).unwrap();
        let c = synth_imu(&traj, &ImuParams::default(), 200.0, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_rate() {
        let traj = Stationary { pose: Pose::at(Vec3::zeros()), duration: 1.0 };
        assert!(synth_imu(&traj, &ImuParams::default(), 0.0, 1).is_err());
        assert!(synth_imu(&traj, &ImuParams::default(), -5.0, 1).is_err());
    }
}
