use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eskf::Estimate;
use crate::geometry::{Environment, Pose, Quat, Vec3};
use crate::measurement::{AnchorPlacement, MeasurementRecord, Payload, TdoaParams};
use crate::placement::mse_lower_bound;

pub const DEFAULT_WARMUP: f64 = 2.0;

/// Ground-truth pose sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub pose: Pose,
    pub velocity: Vec3,
}

/// Ground-truth samples of a log, in order.
pub fn truth_samples(records: &[MeasurementRecord]) -> Vec<TruthSample> {
    records
        .iter()
        .filter_map(|r| match r.payload {
            Payload::GroundTruth { pose, velocity } => Some(TruthSample { t: r.t, pose, velocity }),
            _ => None,
        })
        .collect()
}

/// Linear interpolation of the true position; `None` outside the sampled span.
pub fn interpolate_position(gt: &[TruthSample], t: f64) -> Option<Vec3> {
    let first = gt.first()?;
    let last = gt.last()?;
    if t < first.t || t > last.t {
        return None;
    }
    let k = gt.partition_point(|s| s.t <= t);
    if k == gt.len() {
        return Some(last.pose.position);
    }
    let (a, b) = (&gt[k - 1], &gt[k]);
    if b.t <= a.t {
        return Some(b.pose.position);
    }
    let w = (t - a.t) / (b.t - a.t);
    Some(a.pose.position * (1.0 - w) + b.pose.position * w)
}

/// Accuracy of an estimate log against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub rmse: f64,
    pub rmse_axis: [f64; 3],
    pub max_error: f64,
    pub samples: usize,
    /// Mean position NEES divided by 3.
    pub nees_mean: f64,
    pub reject_rate: f64,
    /// Average RMSE lower bound over the trajectory at 1 Hz.
    pub bound_rmse: f64,
    pub diverged: bool,
    pub divergence_time: Option<f64>,
}

impl EvalSummary {
    pub fn from_errors(errors: &ErrorStats) -> Self {
        Self {
            rmse: errors.rmse,
            rmse_axis: errors.rmse_axis,
            max_error: errors.max_error,
            samples: errors.samples,
            nees_mean: errors.nees_mean,
            reject_rate: 0.0,
            bound_rmse: f64::NAN,
            diverged: false,
            divergence_time: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub rmse: f64,
    pub rmse_axis: [f64; 3],
    pub max_error: f64,
    pub samples: usize,
    pub nees_mean: f64,
    /// First estimate time included.
    pub start: f64,
}

/// Position errors at estimate timestamps from `est[0].t + warmup` on.
pub fn position_errors(est: &[Estimate], gt: &[TruthSample], warmup: f64) -> Result<Vec<(f64, Vec3, Option<f64>)>> {
    if !(warmup >= 0.0) {
        return Err(Error::invalid("warm-up must be >= 0"));
    }
    let start = est.first().ok_or_else(|| Error::invalid("estimate log is empty"))?.t + warmup;
    let out: Vec<_> = est
        .iter()
        .filter(|e| e.t >= start)
        .filter_map(|e| {
            let truth = interpolate_position(gt, e.t)?;
            let err = e.p - truth;
            let nees = e.pos_cov.try_inverse().map(|inv| err.dot(&(inv * err)));
            Some((e.t, err, nees))
        })
        .collect();
    if out.is_empty() {
        return Err(Error::invalid("estimate and ground-truth logs do not overlap after the warm-up"));
    }
    Ok(out)
}

/// RMSE of position over estimate timestamps with interpolated ground truth.
pub fn rmse(est: &[Estimate], gt: &[TruthSample], warmup: f64) -> Result<ErrorStats> {
    let errors = position_errors(est, gt, warmup)?;
    let n = errors.len() as f64;
    let mut sq = Vec3::zeros();
    let mut max_error: f64 = 0.0;
    let (mut nees_sum, mut nees_n) = (0.0, 0usize);
    for (_, e, nees) in &errors {
        sq += e.component_mul(e);
        max_error = max_error.max(e.norm());
        if let Some(v) = nees {
            nees_sum += v;
            nees_n += 1;
        }
    }
    let axis = sq / n;
    Ok(ErrorStats {
        rmse: (axis.sum()).sqrt(),
        rmse_axis: [axis.x.sqrt(), axis.y.sqrt(), axis.z.sqrt()],
        max_error,
        samples: errors.len(),
        nees_mean: if nees_n > 0 { nees_sum / nees_n as f64 / 3.0 } else { f64::NAN },
        start: errors[0].0,
    })
}

/// Bound samples: the true position once per second from `start` on.
pub fn bound_sample_times(gt: &[TruthSample], start: f64) -> Vec<f64> {
    let Some(last) = gt.last() else { return Vec::new() };
    let mut t = start.ceil();
    let mut out = Vec::new();
    while t <= last.t {
        out.push(t);
        t += 1.0;
    }
    out
}

/// Mean RMSE lower bound at the 1 Hz truth samples, with unobservable points
/// making it infinite.
pub fn trajectory_bound(
    gt: &[TruthSample],
    start: f64,
    placement: &AnchorPlacement,
    env: &Environment,
    params: &TdoaParams,
) -> Result<f64> {
    let pts: Vec<Vec3> = bound_sample_times(gt, start)
        .into_iter()
        .filter_map(|t| interpolate_position(gt, t))
        .collect();
    if pts.is_empty() {
        return Err(Error::invalid("trajectory is shorter than the warm-up"));
    }
    let targets = crate::placement::TargetSet::new(pts)?;
    Ok(crate::placement::placement_metric(&targets, placement, env, params)?.aggregate_rmse)
}

/// Per-timestep `(t, |error|, bound)` for plotting.
pub fn error_curve(
    est: &[Estimate],
    gt: &[TruthSample],
    warmup: f64,
    placement: &AnchorPlacement,
    env: &Environment,
    params: &TdoaParams,
) -> Result<Vec<[f64; 3]>> {
    position_errors(est, gt, warmup)?
        .into_iter()
        .map(|(t, e, _)| {
            let truth = interpolate_position(gt, t).expect("inside span");
            let bound = match mse_lower_bound(&truth, placement, env, params) {
                Ok(b) => b.rmse(),
                Err(_) => f64::INFINITY,
            };
            Ok([t, e.norm(), bound])
        })
        .collect()
}

/// Estimate built from a pose only, as when reading estimate logs.
pub fn estimate_from_parts(t: f64, p: Vec3, q: Quat, v: Vec3, p_diag: [f64; 15]) -> Estimate {
    Estimate {
        t,
        p,
        q,
        v,
        p_diag,
        pos_cov: nalgebra::Matrix3::from_diagonal(&Vec3::new(p_diag[0], p_diag[1], p_diag[2])),
    }
}
