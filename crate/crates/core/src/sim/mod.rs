//! Scenario construction and evaluation: trajectories, the maximum-likelihood
//! multilateration oracle, scenario and Monte-Carlo runners and RMSE
//! evaluation against ground truth.

mod eval;
mod multilat;
mod scenario;
mod trajectory;

pub use multilat::{multilateration_ml, MultilatResult, TdoaObservation, MAX_ITERATIONS, STEP_TOLERANCE};
pub use trajectory::{gen_trajectory, stair_waypoints, PathTrajectory, SpeedProfile, TrajectorySpec};
pub use eval::{
    bound_sample_times, error_curve, estimate_from_parts, interpolate_position, position_errors, rmse, trajectory_bound,
    truth_samples, ErrorStats, EvalSummary, TruthSample, DEFAULT_WARMUP,
};
pub use scenario::{
    aggregate_trials, run_monte_carlo, run_scenario, stream_seed, summarize, synthesize, MonteCarloSummary, Rates,
    Scenario, ScenarioRun, TrialSummary, STREAM_IMU, STREAM_TDOA,
};
