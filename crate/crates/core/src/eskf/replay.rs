use std::collections::BTreeMap;

use serde::Serialize;

use super::config::EskfConfig;
use super::filter::{correct_tdoa, initialize, measurement_variance, predict, GateDecision, ImuSample};
use super::state::{ErrorState, NavState, POS};
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Quat, Vec3};
use crate::measurement::{first_unsorted, tdoa_at_point, AnchorPlacement, MeasurementRecord, Pair, Payload};
use crate::sim::{multilateration_ml, TdoaObservation};

/// Length of the static window used for leveling and the first fix.
pub const INIT_WINDOW: f64 = 0.5;

/// Filter output at one IMU timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub t: f64,
    pub p: Vec3,
    pub q: Quat,
    pub v: Vec3,
    pub p_diag: [f64; 15],
    pub pos_cov: Mat3,
}

impl Estimate {
    fn new(state: &NavState, err: &ErrorState) -> Self {
        Self {
            t: state.t,
            p: state.p,
            q: state.q,
            v: state.v,
            p_diag: err.diag(),
            pos_cov: err.cov_block(POS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairStats {
    /// One-based anchor indices, as in files.
    pub pair: [usize; 2],
    pub accepted: usize,
    pub rejected: usize,
    pub skipped: usize,
    pub mean_abs_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatingReport {
    pub accepted: usize,
    pub rejected: usize,
    pub skipped: usize,
    /// `rejected / (accepted + rejected)`.
    pub reject_rate: f64,
    pub per_pair: Vec<PairStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedDecision {
    pub t: f64,
    /// Index of the record in the input log.
    pub record: usize,
    pub pair: Pair,
    pub decision: GateDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceInfo {
    pub t: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub estimates: Vec<Estimate>,
    pub decisions: Vec<LoggedDecision>,
    pub report: GatingReport,
    pub divergence: Option<DivergenceInfo>,
    /// Whether the initial position came from multilateration.
    pub had_first_fix: bool,
}

fn gating_report(decisions: &[LoggedDecision]) -> GatingReport {
    #[derive(Default)]
    struct Acc {
        accepted: usize,
        rejected: usize,
        skipped: usize,
        normalized_sum: f64,
    }
    let mut per: BTreeMap<Pair, Acc> = BTreeMap::new();
    for d in decisions {
        let a = per.entry(d.pair).or_default();
        if d.decision.skipped {
            a.skipped += 1;
        } else {
            a.normalized_sum += d.decision.normalized;
            if d.decision.accepted {
                a.accepted += 1;
            } else {
                a.rejected += 1;
            }
        }
    }
    let per_pair: Vec<PairStats> = per
        .into_iter()
        .map(|(pair, a)| {
            let tested = a.accepted + a.rejected;
            PairStats {
                pair: [pair.i + 1, pair.j + 1],
                accepted: a.accepted,
                rejected: a.rejected,
                skipped: a.skipped,
                mean_abs_normalized: if tested > 0 { a.normalized_sum / tested as f64 } else { 0.0 },
            }
        })
        .collect();
    let accepted = per_pair.iter().map(|p| p.accepted).sum::<usize>();
    let rejected = per_pair.iter().map(|p| p.rejected).sum::<usize>();
    let skipped = per_pair.iter().map(|p| p.skipped).sum::<usize>();
    GatingReport {
        accepted,
        rejected,
        skipped,
        reject_rate: if accepted + rejected > 0 { rejected as f64 / (accepted + rejected) as f64 } else { 0.0 },
        per_pair,
    }
}

/// Minimum number of window observations for a first fix (one redundant).
pub const MIN_FIX_OBSERVATIONS: usize = 4;

/// Multilateration over the TDOA records of the static window, started at the
/// anchor centroid. `None` when there are too few records, no convergence, or
/// the residuals are implausible for the configured noise.
pub fn first_fix(records: &[MeasurementRecord], placement: &AnchorPlacement, cfg: &EskfConfig) -> Option<Vec3> {
    let obs: Vec<TdoaObservation> = records
        .iter()
        .filter_map(|r| match r.payload {
            Payload::Tdoa { pair, d } => Some(TdoaObservation::new(pair, d, measurement_variance(pair, placement, cfg))),
            _ => None,
        })
        .collect();
    if obs.len() < MIN_FIX_OBSERVATIONS {
        return None;
    }
    let centroid = placement.anchors.iter().sum::<Vec3>() / placement.len() as f64;
    let fix = match multilateration_ml(&obs, placement, &centroid) {
        Ok(r) if r.converged => r.position,
        _ => return None,
    };
    let chi2: f64 = obs
        .iter()
        .map(|o| {
            let r = o.d - tdoa_at_point(o.pair, &fix, placement).unwrap_or(f64::INFINITY);
            r * r / o.variance
        })
        .sum();
    // per degree of freedom, generous against gross outliers only
    (chi2 / (obs.len() - 3) as f64 <= 9.0).then_some(fix)
}

/// Replay a time-ordered log through the filter.
///
/// The first `INIT_WINDOW` seconds are treated as static: their IMU samples
/// level the filter and their TDOA records provide the initial position.
/// Afterwards every record is processed in order, holding the latest IMU
/// sample between IMU timestamps. One estimate is produced per IMU record.
/// Divergence stops the replay and is reported in the result.
pub fn run_filter(records: &[MeasurementRecord], placement: &AnchorPlacement, cfg: &EskfConfig) -> Result<FilterRun> {
    cfg.validate()?;
    placement.validate()?;
    if let Some(k) = first_unsorted(records) {
        return Err(Error::invalid(format!("record {} is earlier than its predecessor", k + 1)));
    }
    let t0 = records
        .iter()
        .find(|r| r.is_imu())
        .map(|r| r.t)
        .ok_or_else(|| Error::invalid("log has no IMU records"))?;
    let split = records.partition_point(|r| r.t <= t0 + INIT_WINDOW);
    let window = &records[..split];

    let (mut acc_sum, mut n_imu, mut last_imu, mut t_init) = (Vec3::zeros(), 0usize, None, t0);
    for r in window {
        if let Payload::Imu { acc, gyro } = r.payload {
            acc_sum += acc;
            n_imu += 1;
            last_imu = Some(ImuSample { acc, gyro });
            t_init = r.t;
        }
    }
    let mut imu = last_imu.expect("window starts with an IMU record");
    let fix = first_fix(window, placement, cfg);
    let (mut state, mut err) = initialize(fix, &(acc_sum / n_imu as f64), t_init, cfg)?;

    let mut estimates = vec![Estimate::new(&state, &err)];
    let mut decisions = Vec::new();
    let mut divergence = None;

    for (k, r) in records.iter().enumerate().skip(split) {
        if divergence.is_some() {
            break;
        }
        let dt = r.t - state.t;
        let step = match r.payload {
            Payload::GroundTruth { .. } => continue,
            Payload::Imu { acc, gyro } => (|| {
                if dt > 0.0 {
                    (state, err) = predict(&state, &err, &imu, dt, cfg)?;
                }
                imu = ImuSample { acc, gyro };
                estimates.push(Estimate::new(&state, &err));
                Ok(())
            })(),
            Payload::Tdoa { pair, d } => (|| {
                if dt > 0.0 {
                    (state, err) = predict(&state, &err, &imu, dt, cfg)?;
                }
                let (s, e, decision) = correct_tdoa(&state, &err, pair, d, placement, cfg)?;
                (state, err) = (s, e);
                decisions.push(LoggedDecision { t: r.t, record: k, pair, decision });
                Ok(())
            })(),
        };
        let step = step.and_then(|()| {
            if state.is_finite() {
                Ok(())
            } else {
                Err(Error::Divergence { t: r.t, dtheta_norm: f64::NAN, detail: "non-finite state".into() })
            }
        });
        match step {
            Ok(()) => {}
            Err(e @ Error::Divergence { .. }) => {
                log::warn!("{e}");
                divergence = Some(DivergenceInfo { t: r.t, message: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }

    Ok(FilterRun {
        report: gating_report(&decisions),
        estimates,
        decisions,
        divergence,
        had_first_fix: fix.is_some(),
    })
}
