use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::measurement::{ImuParams, TdoaParams};

/// How `gate_gamma` is applied to the scalar innovation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Reject when `|nu| / sqrt(S) > gamma`.
    #[default]
    Mahalanobis,
    /// Reject when `nu^2 / S > gamma` (gamma is a chi-squared(1) quantile).
    ChiSquared,
}

/// Diagonal prior used by filter initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialCovariance {
    /// Position variance without a multilateration fix, m^2.
    pub position: f64,
    /// Position variance around a multilateration fix, m^2.
    pub position_fix: f64,
    pub velocity: f64,
    /// Roll and pitch, rad^2.
    pub tilt: f64,
    pub yaw: f64,
    pub accel_bias: f64,
    pub gyro_bias: f64,
}

impl Default for InitialCovariance {
    fn default() -> Self {
        Self {
            position: 25.0,
            position_fix: 0.09,
            velocity: 0.01,
            tilt: 0.0025,
            yaw: 1.0,
            accel_bias: 4e-4,
            gyro_bias: 4e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EskfConfig {
    /// IMU origin to UWB antenna, body frame, m.
    pub lever_arm: Vec3,
    pub sigma_tdoa: f64,
    /// Measurement variance for links in the pair schedule, m^2.
    pub variance_scheduled: f64,
    /// Measurement variance for out-of-schedule links, m^2.
    pub variance_oos: f64,
    pub gate_gamma: f64,
    pub gate_mode: GateMode,
    pub imu: ImuParams,
    pub initial: InitialCovariance,
}

impl Default for EskfConfig {
    fn default() -> Self {
        Profile::Arena.eskf_config()
    }
}

impl EskfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_gamma > 0.0) {
            return Err(Error::invalid("gate_gamma must be > 0"));
        }
        if !(self.variance_scheduled > 0.0 && self.variance_oos > 0.0) {
            return Err(Error::invalid("measurement variances must be > 0"));
        }
        if !self.lever_arm.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("lever arm must be finite"));
        }
        self.imu.validate()
    }
}

/// Named parameter sets for the deployments the toolkit ships assets for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Open flight arena: sigma 0.1 m, gate 5.
    Arena,
    /// Staircase: scheduled variance raised to 0.015 m^2.
    Staircase,
    /// Cafeteria + hallway, decentralized: OOS variance 0.025 m^2, gate 10.
    Multiroom,
}

impl Profile {
    pub const ALL: [Profile; 3] = [Profile::Arena, Profile::Staircase, Profile::Multiroom];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Arena => "arena",
            Profile::Staircase => "staircase",
            Profile::Multiroom => "multiroom",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown profile '{name}' (arena, staircase, multiroom)")))
    }

    //   profile    sigma  var_sched  var_oos  gate
    //   arena      0.1    0.01       0.025    5
    //   staircase  0.1    0.015      0.025    5
    //   multiroom  0.1    0.01       0.025    10
    pub fn eskf_config(self) -> EskfConfig {
        let (variance_scheduled, gate_gamma) = match self {
            Profile::Arena => (0.01, 5.0),
            Profile::Staircase => (0.015, 5.0),
            Profile::Multiroom => (0.01, 10.0),
        };
        EskfConfig {
            lever_arm: Vec3::zeros(),
            sigma_tdoa: 0.1,
            variance_scheduled,
            variance_oos: 0.025,
            gate_gamma,
            gate_mode: GateMode::Mahalanobis,
            imu: ImuParams::default(),
            initial: InitialCovariance::default(),
        }
    }

    /// Radio model for synthesis and bounds in this deployment.
    pub fn tdoa_params(self) -> TdoaParams {
        TdoaParams {
            sigma: 0.1,
            variance_oos: 0.025,
            ..TdoaParams::default()
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_table() {
        let a = Profile::Arena.eskf_config();
        assert_eq!((a.sigma_tdoa, a.variance_scheduled, a.gate_gamma), (0.1, 0.01, 5.0));
        let s = Profile::Staircase.eskf_config();
        assert_eq!(s.variance_scheduled, 0.015);
        let m = Profile::Multiroom.eskf_config();
        assert_eq!((m.variance_oos, m.gate_gamma), (0.025, 10.0));
        for p in Profile::ALL {
            assert_eq!(Profile::parse(p.name()).unwrap(), p);
            p.eskf_config().validate().unwrap();
            p.tdoa_params().validate().unwrap();
        }
        assert!(Profile::parse("lab").is_err());
    }
}
