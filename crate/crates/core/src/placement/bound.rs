use nalgebra::SymmetricEigen;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{penetration_length, Environment, Mat3, Vec3};
use crate::measurement::{AnchorPlacement, Pair, TdoaParams, COINCIDENT_DISTANCE};

/// Information matrices with a larger condition number are unobservable.
pub const MAX_CONDITION: f64 = 1e12;

/// Contribution of one link at one point: `w g g^T` and `w g b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkTerm {
    pub info: Mat3,
    pub weighted_bias: Vec3,
}

impl LinkTerm {
    pub fn zero() -> Self {
        Self {
            info: Mat3::zeros(),
            weighted_bias: Vec3::zeros(),
        }
    }

    pub fn add(&mut self, other: &LinkTerm) {
        self.info += other.info;
        self.weighted_bias += other.weighted_bias;
    }
}

/// Geometry of one anchor leg seen from a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub unit: Vec3,
    /// Meters of obstacle crossed; zero iff line of sight.
    pub penetration: f64,
}

pub fn leg(point: &Vec3, anchor: &Vec3, env: &Environment) -> Result<Leg> {
    let diff = point - anchor;
    let dist = diff.norm();
    if !(dist >= COINCIDENT_DISTANCE) {
        return Err(Error::degenerate(format!(
            "point {:?} coincides with an anchor",
            point.as_slice()
        )));
    }
    let penetration = if env.obstacles.is_empty() {
        0.0
    } else {
        penetration_length(point, anchor, env)
    };
    Ok(Leg {
        unit: diff / dist,
        penetration,
    })
}

pub fn link_term(leg_i: &Leg, leg_j: &Leg, params: &TdoaParams) -> LinkTerm {
    let g = leg_j.unit - leg_i.unit;
    let occluded = leg_i.penetration > 0.0 || leg_j.penetration > 0.0;
    let w = 1.0 / params.link_variance(occluded);
    let kappa = params.nlos_bias_per_meter;
    let bias = kappa * leg_j.penetration - kappa * leg_i.penetration;
    LinkTerm {
        info: (g * g.transpose()) * w,
        weighted_bias: (w * bias) * g,
    }
}

pub(crate) fn check_sigma(params: &TdoaParams) -> Result<()> {
    if !(params.sigma > 0.0) {
        return Err(Error::invalid(format!(
            "bounds need sigma > 0, got {}",
            params.sigma
        )));
    }
    params.validate()
}

/// Summed information and weighted bias over the pair schedule.
pub fn information(point: &Vec3, placement: &AnchorPlacement, env: &Environment, params: &TdoaParams) -> Result<LinkTerm> {
    check_sigma(params)?;
    let legs = placement
        .anchors
        .iter()
        .map(|a| leg(point, a, env))
        .collect::<Result<Vec<_>>>()?;
    let mut total = LinkTerm::zero();
    for &Pair { i, j } in &placement.pairs {
        total.add(&link_term(&legs[i], &legs[j], params));
    }
    Ok(total)
}

/// Fisher information of the tag position for one round of scheduled
/// measurements (zero lever arm).
pub fn fim(point: &Vec3, placement: &AnchorPlacement, env: &Environment, params: &TdoaParams) -> Result<Mat3> {
    Ok(information(point, placement, env, params)?.info)
}

/// MSE lower bound at one point: `Tr(F^-1) + |Delta|^2` with the linearized
/// bias `Delta = F^-1 sum w g b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointBound {
    pub point: [f64; 3],
    pub mse_lb: f64,
    pub variance_term: f64,
    pub bias_term: f64,
    pub conditioning: f64,
    pub observable: bool,
}

impl PointBound {
    pub fn rmse(&self) -> f64 {
        self.mse_lb.sqrt()
    }

    pub fn unobservable(point: &Vec3, conditioning: f64) -> Self {
        Self {
            point: [point.x, point.y, point.z],
            mse_lb: f64::INFINITY,
            variance_term: f64::INFINITY,
            bias_term: f64::INFINITY,
            conditioning,
            observable: false,
        }
    }
}

pub fn bound_from_information(point: &Vec3, term: &LinkTerm) -> PointBound {
    let eig = SymmetricEigen::new(term.info);
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let conditioning = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(conditioning <= MAX_CONDITION) {
        return PointBound::unobservable(point, conditioning);
    }
    let inv_diag = eig.eigenvalues.map(|l| 1.0 / l);
    let variance_term = inv_diag.sum();
    // Delta = V diag(1/l) V^T wb
    let proj = eig.eigenvectors.transpose() * term.weighted_bias;
    let delta = eig.eigenvectors * proj.component_mul(&inv_diag);
    let bias_term = delta.norm_squared();
    PointBound {
        point: [point.x, point.y, point.z],
        mse_lb: variance_term + bias_term,
        variance_term,
        bias_term,
        conditioning,
        observable: true,
    }
}

pub fn mse_lower_bound(point: &Vec3, placement: &AnchorPlacement, env: &Environment, params: &TdoaParams) -> Result<PointBound> {
    let term = information(point, placement, env, params)?;
    Ok(bound_from_information(point, &term))
}

/// Linearized bias vector `Delta` of the weighted least-squares position
/// estimate, or `None` when unobservable.
pub fn bias_vector(point: &Vec3, placement: &AnchorPlacement, env: &Environment, params: &TdoaParams) -> Result<Option<Vec3>> {
    let term = information(point, placement, env, params)?;
    let b = bound_from_information(point, &term);
    if !b.observable {
        return Ok(None);
    }
    Ok(term.info.try_inverse().map(|inv| inv * term.weighted_bias))
}
