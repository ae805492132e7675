//! Sensor models: the TDOA measurement equation with lever arm, the IMU
//! noise/bias model, the NLOS bias model and synthetic log generation.

mod anchors;
mod imu;
mod record;
mod synth;
mod tdoa;

pub use anchors::{ring_pairs, AnchorPlacement, Pair, Pairing, TdoaMode};
pub use imu::{synth_ground_truth, synth_imu, ImuParams, GRAVITY};
pub use record::{first_unsorted, merge_streams, MeasurementRecord, Payload};
pub use synth::{out_of_schedule_links, synth_tdoa};
pub use tdoa::{
    antenna_offset, link_occluded, nlos_bias, tdoa_at_point, tdoa_gradient, tdoa_jacobian, tdoa_predict,
    TdoaJacobian, TdoaParams, COINCIDENT_DISTANCE,
};
