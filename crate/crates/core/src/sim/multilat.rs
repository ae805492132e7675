use nalgebra::Matrix3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::measurement::{tdoa_at_point, tdoa_gradient, AnchorPlacement, Pair};

pub const STEP_TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 50;

/// One TDOA observation with its noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdoaObservation {
    pub pair: Pair,
    pub d: f64,
    pub variance: f64,
}

impl TdoaObservation {
    pub fn new(pair: Pair, d: f64, variance: f64) -> Self {
        Self { pair, d, variance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultilatResult {
    pub position: Vec3,
    pub iterations: usize,
    pub converged: bool,
}

/// Gauss-Newton maximum-likelihood position from TDOA observations.
///
/// A singular normal matrix is an error; running out of iterations is not,
/// it is reported through `converged`.
pub fn multilateration_ml(obs: &[TdoaObservation], placement: &AnchorPlacement, init: &Vec3) -> Result<MultilatResult> {
    if obs.len() < 3 {
        return Err(Error::degenerate(format!("{} observations cannot fix a 3D position", obs.len())));
    }
    for o in obs {
        placement.check_pair(o.pair)?;
        if !(o.variance > 0.0) || !o.d.is_finite() {
            return Err(Error::invalid("observation variance must be > 0 and d finite"));
        }
    }
    let mut p = *init;
    for it in 1..=MAX_ITERATIONS {
        let mut normal = Matrix3::zeros();
        let mut rhs = Vec3::zeros();
        for o in obs {
            let g = tdoa_gradient(o.pair, &p, placement)?;
            let r = o.d - tdoa_at_point(o.pair, &p, placement)?;
            let w = 1.0 / o.variance;
            normal += (g * g.transpose()) * w;
            rhs += g * (w * r);
        }
        let eig = normal.symmetric_eigen();
        let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
        if !(lo > hi * 1e-12) {
            return Err(Error::degenerate(format!("normal matrix is singular at {:?}", p.as_slice())));
        }
        let step = normal
            .cholesky()
            .ok_or_else(|| Error::degenerate("normal matrix is not positive definite"))?
            .solve(&rhs);
        p += step;
        if !p.iter().all(|c| c.is_finite()) {
            break;
        }
        if step.norm() < STEP_TOLERANCE {
            return Ok(MultilatResult { position: p, iterations: it, converged: true });
        }
    }
    Ok(MultilatResult { position: p, iterations: MAX_ITERATIONS, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::Pairing;

    fn cube() -> AnchorPlacement {
        let mut anchors = Vec::new();
        for &z in &[0.0, 10.0] {
            for &(x, y) in &[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)] {
                anchors.push(Vec3::new(x, y, z));
            }
        }
        AnchorPlacement::with_pairing(anchors, Pairing::Ring).unwrap()
    }

    fn exact(pl: &AnchorPlacement, p: &Vec3) -> Vec<TdoaObservation> {
        pl.pairs
            .iter()
            .map(|&pair| TdoaObservation::new(pair, tdoa_at_point(pair, p, pl).unwrap(), 0.01))
            .collect()
    }

    #[test]
    fn fixed_point_at_truth() {
        let pl = cube();
        let truth = Vec3::new(3.0, 4.0, 6.0);
        let r = multilateration_ml(&exact(&pl, &truth), &pl, &truth).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!((r.position - truth).norm() < 1e-12);
    }

    #[test]
    fn recovers_from_perturbed_start() {
        let pl = cube();
        let truth = Vec3::new(3.0, 4.0, 6.0);
        let init = truth + Vec3::new(0.6, -0.6, 0.52);
        let r = multilateration_ml(&exact(&pl, &truth), &pl, &init).unwrap();
        assert!(r.converged);
        assert!((r.position - truth).norm() < 1e-6);
    }

    #[test]
    fn too_few_or_collinear_observations() {
        let pl = cube();
        let truth = Vec3::new(3.0, 4.0, 6.0);
        let obs = exact(&pl, &truth);
        assert!(matches!(multilateration_ml(&obs[..2], &pl, &truth), Err(Error::DegenerateGeometry(_))));
        let same: Vec<_> = std::iter::repeat_n(obs[0], 5).collect();
        assert!(matches!(multilateration_ml(&same, &pl, &truth), Err(Error::DegenerateGeometry(_))));
    }
}
