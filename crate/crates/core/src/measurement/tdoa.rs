use serde::{Deserialize, Serialize};

use super::anchors::{AnchorPlacement, Pair};
use crate::error::{Error, Result};
use crate::geometry::{penetration_length, rotate, segment_occluded, skew, Environment, Pose, Vec3};

/// Below this distance the tag is considered to sit on an anchor.
pub const COINCIDENT_DISTANCE: f64 = 1e-9;

/// Radio-side TDOA model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdoaParams {
    /// LOS noise std, m.
    pub sigma: f64,
    /// Variance of out-of-schedule pairs, m^2.
    pub variance_oos: f64,
    /// Extra path length per meter of obstacle crossed.
    pub nlos_bias_per_meter: f64,
    /// Extra noise std on a link with an occluded leg, m.
    pub nlos_extra_sigma: f64,
    /// Out-of-schedule measurements per scheduled slot (decentralized mode).
    pub oos_fraction: f64,
    /// Max anchor separation for out-of-schedule pairs; `None` is unlimited.
    pub radio_range: Option<f64>,
}

impl Default for TdoaParams {
    fn default() -> Self {
        Self {
            sigma: 0.1,
            variance_oos: 0.025,
            nlos_bias_per_meter: 0.4,
            nlos_extra_sigma: 0.1,
            oos_fraction: 0.3,
            radio_range: None,
        }
    }
}

impl TdoaParams {
    /// Unbiased measurements with std `sigma`; out-of-schedule variance keeps
    /// the default 2.5x inflation.
    pub fn unbiased(sigma: f64) -> Self {
        Self {
            sigma,
            variance_oos: 2.5 * sigma * sigma,
            nlos_bias_per_meter: 0.0,
            ..Self::default()
        }
    }

    /// Noise parameters may be zero for noiseless synthesis.
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("sigma", self.sigma),
            ("nlos_bias_per_meter", self.nlos_bias_per_meter),
            ("nlos_extra_sigma", self.nlos_extra_sigma),
            ("oos_fraction", self.oos_fraction),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.oos_fraction > 1.0 {
            return Err(Error::invalid("oos_fraction must be <= 1"));
        }
        if !(self.variance_oos >= self.sigma * self.sigma) {
            return Err(Error::invalid(format!(
                "variance_oos ({}) must be >= sigma^2 ({})",
                self.variance_oos,
                self.sigma * self.sigma
            )));
        }
        if let Some(r) = self.radio_range {
            if !(r > 0.0) {
                return Err(Error::invalid("radio_range must be > 0"));
            }
        }
        Ok(())
    }

    pub fn link_variance(&self, occluded: bool) -> f64 {
        if occluded {
            self.sigma * self.sigma + self.nlos_extra_sigma * self.nlos_extra_sigma
        } else {
            self.sigma * self.sigma
        }
    }
}

/// Row of the measurement Jacobian w.r.t. position and the local rotation
/// error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdoaJacobian {
    pub d_dp: Vec3,
    pub d_dtheta: Vec3,
}

fn unit_from(anchor: &Vec3, tag: &Vec3, which: usize) -> Result<(Vec3, f64)> {
    let diff = tag - anchor;
    let dist = diff.norm();
    if !(dist >= COINCIDENT_DISTANCE) {
        return Err(Error::degenerate(format!(
            "tag at {:?} coincides with anchor {}",
            tag.as_slice(),
            which + 1
        )));
    }
    Ok((diff / dist, dist))
}

/// Noiseless difference of distances `|p_u - a_j| - |p_u - a_i|`, `p_u` the
/// tag antenna position.
pub fn tdoa_predict(pair: Pair, pose: &Pose, lever_arm: &Vec3, placement: &AnchorPlacement) -> Result<f64> {
    placement.check_pair(pair)?;
    let tag = pose.transform_point(lever_arm);
    tdoa_at_point(pair, &tag, placement)
}

pub fn tdoa_at_point(pair: Pair, tag: &Vec3, placement: &AnchorPlacement) -> Result<f64> {
    let (_, di) = unit_from(placement.anchor(pair.i), tag, pair.i)?;
    let (_, dj) = unit_from(placement.anchor(pair.j), tag, pair.j)?;
    Ok(dj - di)
}

/// `u_j - u_i` at a tag point: the gradient of the measurement w.r.t. the tag
/// position.
pub fn tdoa_gradient(pair: Pair, tag: &Vec3, placement: &AnchorPlacement) -> Result<Vec3> {
    let (ui, _) = unit_from(placement.anchor(pair.i), tag, pair.i)?;
    let (uj, _) = unit_from(placement.anchor(pair.j), tag, pair.j)?;
    Ok(uj - ui)
}

/// Linearization under the right-multiplicative error `q <- q (x) dq`:
/// `dp_u/dtheta = -C [l]x`.
pub fn tdoa_jacobian(pair: Pair, pose: &Pose, lever_arm: &Vec3, placement: &AnchorPlacement) -> Result<TdoaJacobian> {
    placement.check_pair(pair)?;
    let tag = pose.transform_point(lever_arm);
    let g = tdoa_gradient(pair, &tag, placement)?;
    let c = pose.orientation.to_rotation_matrix().into_inner();
    // (g^T (-C [l]x))^T = [l]x C^T g
    let d_dtheta = skew(lever_arm) * (c.transpose() * g);
    Ok(TdoaJacobian { d_dp: g, d_dtheta })
}

/// Deterministic NLOS path-lengthening for the link, with the sign structure
/// of the measurement (`j` leg positive, `i` leg negative).
pub fn nlos_bias(pair: Pair, point: &Vec3, placement: &AnchorPlacement, env: &Environment, params: &TdoaParams) -> f64 {
    let kappa = params.nlos_bias_per_meter;
    if kappa == 0.0 || env.obstacles.is_empty() {
        return 0.0;
    }
    let pen_j = penetration_length(point, placement.anchor(pair.j), env);
    let pen_i = penetration_length(point, placement.anchor(pair.i), env);
    kappa * pen_j - kappa * pen_i
}

/// Either leg of the link crosses an obstacle.
pub fn link_occluded(pair: Pair, point: &Vec3, placement: &AnchorPlacement, env: &Environment) -> bool {
    segment_occluded(point, placement.anchor(pair.i), env)
        || segment_occluded(point, placement.anchor(pair.j), env)
}

/// Convenience: rotated lever arm.
pub fn antenna_offset(pose: &Pose, lever_arm: &Vec3) -> Vec3 {
    rotate(&pose.orientation, lever_arm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{quat_from_small_angle, Aabb, Obstacle, Quat};
    use crate::measurement::TdoaMode;
    use approx::assert_relative_eq;

    fn line_placement() -> AnchorPlacement {
        AnchorPlacement::new(
            vec![Vec3::zeros(), Vec3::new(10.0, 0.0, 0.0)],
            vec![Pair::new(0, 1)],
            TdoaMode::Centralized,
        )
        .unwrap()
    }

    #[test]
    fn predict_examples() {
        let pl = line_placement();
        let pair = Pair::new(0, 1);
        let mid = Pose::at(Vec3::new(5.0, 3.0, -2.0));
        assert_eq!(tdoa_predict(pair, &mid, &Vec3::zeros(), &pl).unwrap(), 0.0);

        let pose = Pose::at(Vec3::new(2.0, 0.0, 0.0));
        assert_relative_eq!(tdoa_predict(pair, &pose, &Vec3::zeros(), &pl).unwrap(), 6.0, epsilon = 1e-12);
        assert_relative_eq!(tdoa_predict(pair, &pose, &Vec3::x(), &pl).unwrap(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn coincident_tag_is_degenerate() {
        let pl = line_placement();
        let err = tdoa_predict(Pair::new(0, 1), &Pose::at(Vec3::zeros()), &Vec3::zeros(), &pl);
        assert!(matches!(err, Err(Error::DegenerateGeometry(_))));
        assert!(tdoa_predict(Pair::new(0, 5), &Pose::at(Vec3::y()), &Vec3::zeros(), &pl).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let pl = line_placement();
        let pose = Pose::at(Vec3::new(2.0, 0.0, 0.0));
        let jac = tdoa_jacobian(Pair::new(0, 1), &pose, &Vec3::zeros(), &pl).unwrap();
        assert_relative_eq!(jac.d_dp, Vec3::new(-2.0, 0.0, 0.0), epsilon = 1e-15);
        assert_eq!(jac.d_dtheta, Vec3::zeros());
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let anchors = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(6.0, 1.0, 2.5),
            Vec3::new(-2.0, 5.0, 1.0),
        ];
        let pl = AnchorPlacement::new(anchors, vec![Pair::new(0, 1), Pair::new(2, 1)], TdoaMode::Centralized).unwrap();
        let lever = Vec3::new(0.3, -0.2, 0.15);
        let q = Quat::from_euler_angles(0.3, -0.4, 1.1);
        let pose = Pose::new(Vec3::new(1.5, 2.0, 0.7), q);
        let h = 1e-6;
        for &pair in &pl.pairs {
            let jac = tdoa_jacobian(pair, &pose, &lever, &pl).unwrap();
            for k in 0..3 {
                let mut e = Vec3::zeros();
                e[k] = h;
                let plus = tdoa_predict(pair, &Pose::new(pose.position + e, q), &lever, &pl).unwrap();
                let minus = tdoa_predict(pair, &Pose::new(pose.position - e, q), &lever, &pl).unwrap();
                let fd = (plus - minus) / (2.0 * h);
                assert!((fd - jac.d_dp[k]).abs() <= 1e-5 * jac.d_dp[k].abs().max(1e-3));

                let qp = q * quat_from_small_angle(&e).unwrap();
                let qm = q * quat_from_small_angle(&(-e)).unwrap();
                let plus = tdoa_predict(pair, &Pose::new(pose.position, qp), &lever, &pl).unwrap();
                let minus = tdoa_predict(pair, &Pose::new(pose.position, qm), &lever, &pl).unwrap();
                let fd = (plus - minus) / (2.0 * h);
                assert!(
                    (fd - jac.d_dtheta[k]).abs() <= 1e-5 * jac.d_dtheta[k].abs().max(1e-3),
                    "theta {k}: {fd} vs {}",
                    jac.d_dtheta[k]
                );
            }
        }
    }

    #[test]
    fn nlos_bias_examples() {
        let pl = AnchorPlacement::new(
            vec![Vec3::new(-3.0, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0)],
            vec![Pair::new(0, 1)],
            TdoaMode::Centralized,
        )
        .unwrap();
        let boundary = Aabb::new(Vec3::new(-5.0, -5.0, -5.0), Vec3::new(5.0, 5.0, 5.0)).unwrap();
        let params = TdoaParams::default();
        let open = Environment::open("open", boundary);
        assert_eq!(nlos_bias(Pair::new(0, 1), &Vec3::zeros(), &pl, &open, &params), 0.0);

        // 1 m of obstacle on the j leg only.
        let wall = Obstacle::new(Vec3::new(1.0, -1.0, -1.0), Vec3::new(2.0, 1.0, 1.0)).unwrap();
        let env = Environment::new("j", boundary, vec![wall]).unwrap();
        assert_relative_eq!(nlos_bias(Pair::new(0, 1), &Vec3::zeros(), &pl, &env, &params), 0.4, epsilon = 1e-12);
        assert_relative_eq!(nlos_bias(Pair::new(1, 0), &Vec3::zeros(), &pl, &env, &params), -0.4, epsilon = 1e-12);

        // Equal penetration on both legs cancels.
        let left = Obstacle::new(Vec3::new(-2.0, -1.0, -1.0), Vec3::new(-1.0, 1.0, 1.0)).unwrap();
        let env = Environment::new("both", boundary, vec![wall, left]).unwrap();
        assert_relative_eq!(nlos_bias(Pair::new(0, 1), &Vec3::zeros(), &pl, &env, &params), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(TdoaParams::default().validate().is_ok());
        let bad = TdoaParams { variance_oos: 0.001, ..TdoaParams::default() };
        assert!(bad.validate().is_err());
        let bad = TdoaParams { sigma: -1.0, ..TdoaParams::default() };
        assert!(bad.validate().is_err());
    }
}
