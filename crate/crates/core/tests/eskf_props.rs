use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdoa_forge::eskf::{
    correct_tdoa, initialize, inject_and_reset, measurement_row, predict, Cov15, ErrorState, EskfConfig, ImuSample, NavState, Vec15,
};
use tdoa_forge::geometry::{Quat, Vec3};
use tdoa_forge::measurement::{tdoa_predict, AnchorPlacement, Pair, Pairing};

fn cube() -> AnchorPlacement {
    let mut a = Vec::new();
    for &z in &[0.0, 10.0] {
        for &(x, y) in &[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)] {
            a.push(Vec3::new(x, y, z));
        }
    }
    AnchorPlacement::with_pairing(a, Pairing::Ring).unwrap()
}

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn state() -> impl Strategy<Value = NavState> {
    (vec3(3.0), vec3(1.0), (-3.0..3.0f64, -1.2..1.2f64, -3.0..3.0f64), vec3(0.1), vec3(0.01)).prop_map(
        |(p, v, (r, pi, y), b_a, b_w)| NavState {
            p: p + Vec3::repeat(5.0),
            v,
            q: Quat::from_euler_angles(r, pi, y),
            b_a,
            b_w,
            t: 0.0,
        },
    )
}

fn injected(state: &NavState, k: usize, h: f64) -> NavState {
    let mut dx = Vec15::zeros();
    dx[k] = h;
    inject_and_reset(state, &ErrorState { dx, p: Cov15::identity() }).unwrap().0
}

fn symmetric_psd(p: &Cov15) -> bool {
    let asym = (p - p.transpose()).abs().max();
    let min_eig = p.symmetric_eigen().eigenvalues.min();
    asym < 1e-9 && min_eig >= -1e-9
}

proptest! {
    #[test]
    fn h_matches_finite_differences(s in state(), lever in vec3(0.4), i in 0usize..8, k in 1usize..8) {
        let pl = cube();
        let pair = Pair::new(i, (i + k) % 8);
        let cfg = EskfConfig { lever_arm: lever, ..EskfConfig::default() };
        let h = measurement_row(pair, &s, &pl, &cfg).unwrap();
        let eps = 1e-6;
        let meas = |n: &NavState| tdoa_predict(pair, &n.pose(), &lever, &pl).unwrap();
        for c in 0..15 {
            let fd = (meas(&injected(&s, c, eps)) - meas(&injected(&s, c, -eps))) / (2.0 * eps);
            prop_assert!((fd - h[c]).abs() <= 1e-4 * h.norm(), "component {}: {} vs {}", c, fd, h[c]);
        }
    }

    #[test]
    fn covariance_stays_symmetric_psd(seed in any::<u64>()) {
        let pl = cube();
        let cfg = EskfConfig { lever_arm: Vec3::new(0.05, -0.02, 0.1), ..EskfConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut s, mut e) = initialize(Some(Vec3::new(5.0, 4.0, 1.5)), &Vec3::new(0.3, -0.2, 9.8), 0.0, &cfg).unwrap();
        for _ in 0..200 {
            if rng.random_bool(0.8) {
                let imu = ImuSample {
                    acc: Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 9.81 + rng.random_range(-1.0..1.0)),
                    gyro: Vec3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
                };
                (s, e) = predict(&s, &e, &imu, rng.random_range(0.001..0.02), &cfg).unwrap();
                s.v *= 0.9;
            } else {
                let i = rng.random_range(0..8);
                let pair = Pair::new(i, (i + 1 + rng.random_range(0..7)) % 8);
                let truth = tdoa_predict(pair, &s.pose(), &cfg.lever_arm, &pl).unwrap();
                let out = correct_tdoa(&s, &e, pair, truth + rng.random_range(-0.1..0.1), &pl, &cfg).unwrap();
                s = out.0;
                e = out.1;
            }
            prop_assert!(symmetric_psd(&e.p));
            prop_assert!((s.q.into_inner().norm() - 1.0).abs() < 1e-9);
        }
    }
}
