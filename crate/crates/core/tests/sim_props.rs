use proptest::prelude::*;
use tdoa_forge::geometry::{Aabb, Environment, Vec3};
use tdoa_forge::kinematics::Trajectory;
use tdoa_forge::measurement::{AnchorPlacement, ImuParams, Pairing, TdoaParams};
use tdoa_forge::sim::{
    aggregate_trials, gen_trajectory, run_monte_carlo, run_scenario, synthesize, Rates, Scenario, SpeedProfile,
    TrajectorySpec,
};

fn arena() -> (Environment, AnchorPlacement) {
    let mut a = Vec::new();
    for &z in &[0.15, 2.65] {
        for &(x, y) in &[(0.0, 0.0), (6.0, 0.0), (6.0, 6.0), (0.0, 6.0)] {
            a.push(Vec3::new(x, y, z));
        }
    }
    (
        Environment::open("arena", Aabb::new(Vec3::new(-0.5, -0.5, 0.0), Vec3::new(6.5, 6.5, 6.0)).unwrap()),
        AnchorPlacement::with_pairing(a, Pairing::Ring).unwrap(),
    )
}

fn loop_path(speed: f64) -> TrajectorySpec {
    TrajectorySpec::Waypoints {
        points: [[1.0, 1.0, 1.2], [2.5, 1.0, 1.3], [5.0, 1.5, 1.5], [5.0, 5.0, 1.1], [2.0, 4.5, 1.6], [1.0, 2.0, 1.2]]
            .iter()
            .map(|p| Vec3::new(p[0], p[1], p[2]))
            .collect(),
        profile: SpeedProfile { speed, hold: 1.0, ramp: 1.5 },
    }
}

fn scenario() -> Scenario {
    let (env, pl) = arena();
    let mut s = Scenario::new("loop", env, pl, loop_path(1.0));
    s.tdoa = TdoaParams::unbiased(0.1);
    s.rates = Rates { imu: 200.0, tdoa: 50.0, gt: 50.0 };
    s.initial.yaw = 0.01;
    s
}

fn close(fd: &Vec3, exact: &Vec3) -> bool {
    (fd - exact).norm() <= 1e-4 * exact.norm().max(1e-2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kinematics_match_finite_differences(frac in 0.02..0.98f64, speed in 0.3..2.0f64) {
        let traj = gen_trajectory(&loop_path(speed), None).unwrap();
        let t = frac * traj.duration();
        let h = 1e-4;
        let (a, s, b) = (traj.sample(t - h), traj.sample(t), traj.sample(t + h));
        let vel = (b.pose.position - a.pose.position) / (2.0 * h);
        prop_assert!(close(&vel, &s.velocity), "velocity {:?} vs {:?}", vel, s.velocity);
        let acc = (b.velocity - a.velocity) / (2.0 * h);
        prop_assert!(close(&acc, &s.acceleration), "acceleration {:?} vs {:?}", acc, s.acceleration);
        let rel = a.pose.orientation.inverse() * b.pose.orientation;
        let omega = rel.scaled_axis() / (2.0 * h);
        prop_assert!(close(&omega, &s.angular_rate), "rate {:?} vs {:?}", omega, s.angular_rate);
    }
}

#[test]
fn noiseless_run_is_accurate() {
    let mut s = scenario();
    s.imu = ImuParams::noiseless();
    s.tdoa = TdoaParams::unbiased(0.0);
    let run = run_scenario(&s).unwrap();
    assert!(!run.summary.diverged);
    assert!(run.summary.rmse < 1e-2, "rmse {}", run.summary.rmse);
}

#[test]
fn runs_are_deterministic() {
    let s = scenario().with_seed(11);
    let (a, b) = (run_scenario(&s).unwrap(), run_scenario(&s).unwrap());
    assert_eq!(a.log, b.log);
    assert_eq!(a.filter.estimates, b.filter.estimates);
    assert_eq!(a.summary, b.summary);
    assert_ne!(synthesize(&s.with_seed(12)).unwrap(), a.log);
}

#[test]
fn monte_carlo_single_trial_equals_run() {
    let s = scenario();
    let mc = run_monte_carlo(&s, 1, 5).unwrap();
    let run = run_scenario(&s.with_seed(5)).unwrap();
    assert_eq!(mc.per_trial[0].summary, run.summary);
    assert_eq!(mc.mean_rmse, run.summary.rmse);
    assert_eq!(mc.std_rmse, 0.0);
}

#[test]
fn monte_carlo_prefix() {
    let s = scenario();
    let long = run_monte_carlo(&s, 4, 20).unwrap();
    let short = run_monte_carlo(&s, 2, 20).unwrap();
    assert_eq!(&long.per_trial[..2], &short.per_trial[..]);
    assert_eq!(aggregate_trials(20, long.per_trial[..2].to_vec()), short);
    assert!(run_monte_carlo(&s, 0, 0).is_err());
}
