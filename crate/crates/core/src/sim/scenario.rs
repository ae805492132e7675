use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{rmse, trajectory_bound, truth_samples, EvalSummary, TruthSample, DEFAULT_WARMUP};
use super::trajectory::{gen_trajectory, TrajectorySpec};
use crate::error::{Error, Result};
use crate::eskf::{run_filter, EskfConfig, FilterRun, InitialCovariance, Profile};
use crate::geometry::{Environment, Vec3};
use crate::measurement::{
    merge_streams, synth_ground_truth, synth_imu, synth_tdoa, AnchorPlacement, ImuParams, MeasurementRecord, TdoaParams,
};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub imu: f64,
    /// Scheduled TDOA slots per second, all pairs together.
    pub tdoa: f64,
    pub gt: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            imu: 200.0,
            tdoa: 50.0,
            gt: 100.0,
        }
    }
}

/// Everything needed to synthesize and evaluate one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub env: Environment,
    pub placement: AnchorPlacement,
    pub trajectory: TrajectorySpec,
    pub imu: ImuParams,
    pub tdoa: TdoaParams,
    pub rates: Rates,
    pub seed: u64,
    pub profile: Profile,
    pub lever_arm: Vec3,
    /// Filter prior; how well the start pose is known.
    pub initial: InitialCovariance,
    pub warmup: f64,
}

impl Scenario {
    pub fn new(name: impl Into<String>, env: Environment, placement: AnchorPlacement, trajectory: TrajectorySpec) -> Self {
        Self {
            name: name.into(),
            env,
            placement,
            trajectory,
            imu: ImuParams::default(),
            tdoa: Profile::Arena.tdoa_params(),
            rates: Rates::default(),
            seed: 0,
            profile: Profile::Arena,
            lever_arm: Vec3::zeros(),
            initial: InitialCovariance::default(),
            warmup: DEFAULT_WARMUP,
        }
    }

    /// Filter configuration: the profile preset with the scenario's lever arm,
    /// IMU model and prior.
    pub fn eskf_config(&self) -> EskfConfig {
        EskfConfig {
            lever_arm: self.lever_arm,
            imu: self.imu,
            initial: self.initial,
            ..self.profile.eskf_config()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Independent sub-seed for one synthesis stream.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

pub const STREAM_IMU: u64 = 1;
pub const STREAM_TDOA: u64 = 2;

/// Merged IMU, TDOA and ground-truth log of a scenario.
pub fn synthesize(s: &Scenario) -> Result<Vec<MeasurementRecord>> {
    s.placement.validate()?;
    let traj = gen_trajectory(&s.trajectory, Some(&s.env.boundary))?;
    let imu = synth_imu(&traj, &s.imu, s.rates.imu, stream_seed(s.seed, STREAM_IMU))?;
    let tdoa = synth_tdoa(
        &traj,
        &s.placement,
        &s.env,
        &s.tdoa,
        &s.lever_arm,
        s.rates.tdoa,
        stream_seed(s.seed, STREAM_TDOA),
    )?;
    let gt = synth_ground_truth(&traj, s.rates.gt)?;
    Ok(merge_streams(vec![imu, tdoa, gt]))
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub log: Vec<MeasurementRecord>,
    pub truth: Vec<TruthSample>,
    pub filter: FilterRun,
    pub summary: EvalSummary,
}

/// Evaluate a filter run against the truth of its log.
pub fn summarize(s: &Scenario, filter: &FilterRun, truth: &[TruthSample]) -> Result<EvalSummary> {
    let stats = rmse(&filter.estimates, truth, s.warmup)?;
    let mut summary = EvalSummary::from_errors(&stats);
    summary.reject_rate = filter.report.reject_rate;
    // A noiseless run has no bound to compare with.
    if s.tdoa.sigma > 0.0 {
        summary.bound_rmse = trajectory_bound(truth, stats.start, &s.placement, &s.env, &s.tdoa)?;
    }
    if let Some(d) = &filter.divergence {
        summary.diverged = true;
        summary.divergence_time = Some(d.t);
    }
    Ok(summary)
}

/// Synthesize, filter and evaluate one scenario.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioRun> {
    let log = synthesize(s)?;
    let filter = run_filter(&log, &s.placement, &s.eskf_config())?;
    let truth = truth_samples(&log);
    let summary = match summarize(s, &filter, &truth) {
        Ok(summary) => summary,
        // A run that diverged before the warm-up has nothing to evaluate.
        Err(_) if filter.divergence.is_some() => EvalSummary {
            rmse: f64::INFINITY,
            rmse_axis: [f64::INFINITY; 3],
            max_error: f64::INFINITY,
            samples: 0,
            nees_mean: f64::NAN,
            reject_rate: filter.report.reject_rate,
            bound_rmse: f64::NAN,
            diverged: true,
            divergence_time: filter.divergence.as_ref().map(|d| d.t),
        },
        Err(e) => return Err(e),
    };
    Ok(ScenarioRun { log, truth, filter, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    #[serde(flatten)]
    pub summary: EvalSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub trials: usize,
    pub base_seed: u64,
    /// Over non-diverged trials.
    pub mean_rmse: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std_rmse: f64,
    pub mean_nees: f64,
    pub mean_bound: f64,
    pub diverged: usize,
    pub per_trial: Vec<TrialSummary>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn aggregate_trials(base_seed: u64, per_trial: Vec<TrialSummary>) -> MonteCarloSummary {
    let ok: Vec<&EvalSummary> = per_trial.iter().map(|t| &t.summary).filter(|s| !s.diverged).collect();
    let rmses: Vec<f64> = ok.iter().map(|s| s.rmse).collect();
    let mean_rmse = mean(&rmses);
    let std_rmse = if rmses.len() > 1 {
        (rmses.iter().map(|r| (r - mean_rmse).powi(2)).sum::<f64>() / (rmses.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    MonteCarloSummary {
        trials: per_trial.len(),
        base_seed,
        mean_rmse,
        std_rmse,
        mean_nees: mean(&ok.iter().map(|s| s.nees_mean).collect::<Vec<_>>()),
        mean_bound: mean(&ok.iter().map(|s| s.bound_rmse).collect::<Vec<_>>()),
        diverged: per_trial.len() - ok.len(),
        per_trial,
    }
}

/// Trials with seeds `base_seed + k`, run concurrently, aggregated in order.
pub fn run_monte_carlo(s: &Scenario, trials: usize, base_seed: u64) -> Result<MonteCarloSummary> {
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let per_trial = par::map_range(trials, |k| {
        let seed = base_seed.wrapping_add(k as u64);
        run_scenario(&s.with_seed(seed)).map(|run| TrialSummary { seed, summary: run.summary })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(aggregate_trials(base_seed, per_trial))
}
