use super::anchors::Pair;
use crate::geometry::{Pose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    /// Specific force (m/s^2) and angular rate (rad/s), body frame.
    Imu { acc: Vec3, gyro: Vec3 },
    Tdoa { pair: Pair, d: f64 },
    GroundTruth { pose: Pose, velocity: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    pub t: f64,
    pub payload: Payload,
}

impl MeasurementRecord {
    pub fn imu(t: f64, acc: Vec3, gyro: Vec3) -> Self {
        Self {
            t,
            payload: Payload::Imu { acc, gyro },
        }
    }

    pub fn tdoa(t: f64, pair: Pair, d: f64) -> Self {
        Self {
            t,
            payload: Payload::Tdoa { pair, d },
        }
    }

    pub fn ground_truth(t: f64, pose: Pose, velocity: Vec3) -> Self {
        Self {
            t,
            payload: Payload::GroundTruth { pose, velocity },
        }
    }

    pub fn is_imu(&self) -> bool {
        matches!(self.payload, Payload::Imu { .. })
    }

    pub fn is_tdoa(&self) -> bool {
        matches!(self.payload, Payload::Tdoa { .. })
    }
}

/// Stable merge of several time-sorted streams into one sorted log. On equal
/// timestamps earlier streams come first.
pub fn merge_streams(streams: Vec<Vec<MeasurementRecord>>) -> Vec<MeasurementRecord> {
    let mut all: Vec<(usize, usize, MeasurementRecord)> = streams
        .into_iter()
        .enumerate()
        .flat_map(|(s, recs)| recs.into_iter().enumerate().map(move |(k, r)| (s, k, r)))
        .collect();
    all.sort_by(|a, b| a.2.t.total_cmp(&b.2.t).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    all.into_iter().map(|(_, _, r)| r).collect()
}

/// Index of the first record whose timestamp decreases, if any.
pub fn first_unsorted(records: &[MeasurementRecord]) -> Option<usize> {
    records.windows(2).position(|w| w[1].t < w[0].t).map(|k| k + 1)
}
