//! Error-state Kalman filter fusing IMU propagation with gated TDOA
//! corrections, plus a replay driver for measurement logs.

mod config;
mod filter;
mod replay;
mod state;

pub use config::{EskfConfig, GateMode, InitialCovariance, Profile};
pub use filter::{
    correct_tdoa, gate_rejects, initialize, inject_and_reset, measurement_row, measurement_variance, predict,
    GateDecision, ImuSample, MAX_INJECTED_ANGLE, MAX_REGULAR_DT,
};
pub use replay::{
    first_fix, run_filter, DivergenceInfo, Estimate, FilterRun, GatingReport, LoggedDecision, PairStats, INIT_WINDOW,
    MIN_FIX_OBSERVATIONS,
};
pub use state::{enforce_psd, symmetrize, Cov15, ErrorState, NavState, Vec15, ATT, BA, BW, POS, VEL};
