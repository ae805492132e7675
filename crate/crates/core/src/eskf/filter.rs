use serde::Serialize;

use super::config::{EskfConfig, GateMode};
use super::state::{enforce_psd, symmetrize, Cov15, ErrorState, NavState, Vec15, ATT, BA, BW, POS, VEL};
use crate::error::{Error, Result};
use crate::geometry::{quat_from_small_angle, skew, Mat3, Quat, Vec3};
use crate::measurement::{tdoa_jacobian, tdoa_predict, AnchorPlacement, Pair};

/// Longest propagation step considered regular; longer steps are logged.
pub const MAX_REGULAR_DT: f64 = 0.1;

/// Corrections with a larger rotation component indicate divergence.
pub const MAX_INJECTED_ANGLE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub acc: Vec3,
    pub gyro: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateDecision {
    pub innovation: f64,
    pub innovation_var: f64,
    /// `|innovation| / sqrt(innovation_var)`.
    pub normalized: f64,
    pub accepted: bool,
    /// Geometry was degenerate and no test could be made.
    pub skipped: bool,
}

impl GateDecision {
    fn skipped() -> Self {
        Self {
            innovation: f64::NAN,
            innovation_var: f64::NAN,
            normalized: f64::NAN,
            accepted: false,
            skipped: true,
        }
    }
}

fn set_block(m: &mut Cov15, row: usize, col: usize, b: &Mat3) {
    m.fixed_view_mut::<3, 3>(row, col).copy_from(b);
}

/// INS propagation by `dt` with the IMU sample held constant.
pub fn predict(state: &NavState, err: &ErrorState, imu: &ImuSample, dt: f64, cfg: &EskfConfig) -> Result<(NavState, ErrorState)> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if dt > MAX_REGULAR_DT {
        log::warn!("IMU gap of {dt:.3} s at t = {:.3}", state.t);
    }
    let r = state.q.to_rotation_matrix().into_inner();
    let f_body = imu.acc - state.b_a;
    let w_body = imu.gyro - state.b_w;
    let a_world = r * f_body + cfg.imu.gravity;

    let dq = quat_from_small_angle(&(w_body * dt))?;
    let next = NavState {
        p: state.p + state.v * dt + 0.5 * a_world * dt * dt,
        v: state.v + a_world * dt,
        q: Quat::new_normalize((state.q * dq).into_inner()),
        b_a: state.b_a,
        b_w: state.b_w,
        t: state.t + dt,
    };

    let i3 = Mat3::identity();
    let mut f = Cov15::identity();
    set_block(&mut f, POS, VEL, &(i3 * dt));
    set_block(&mut f, VEL, ATT, &(-r * skew(&f_body) * dt));
    set_block(&mut f, VEL, BA, &(-r * dt));
    set_block(&mut f, ATT, ATT, &dq.to_rotation_matrix().into_inner().transpose());
    set_block(&mut f, ATT, BW, &(-i3 * dt));

    let imu = &cfg.imu;
    let mut q_diag = Vec15::zeros();
    for (offset, density) in [(VEL, imu.sigma_a), (ATT, imu.sigma_w), (BA, imu.sigma_ba), (BW, imu.sigma_bw)] {
        q_diag.fixed_rows_mut::<3>(offset).fill(density * density * dt);
    }

    let mut p = f * err.p * f.transpose();
    for k in 0..15 {
        p[(k, k)] += q_diag[k];
    }
    symmetrize(&mut p);
    Ok((next, ErrorState { dx: f * err.dx, p }))
}

/// Measurement row for one link: position and local-rotation blocks.
pub fn measurement_row(pair: Pair, state: &NavState, placement: &AnchorPlacement, cfg: &EskfConfig) -> Result<Vec15> {
    let jac = tdoa_jacobian(pair, &state.pose(), &cfg.lever_arm, placement)?;
    let mut h = Vec15::zeros();
    h.fixed_rows_mut::<3>(POS).copy_from(&jac.d_dp);
    h.fixed_rows_mut::<3>(ATT).copy_from(&jac.d_dtheta);
    Ok(h)
}

pub fn measurement_variance(pair: Pair, placement: &AnchorPlacement, cfg: &EskfConfig) -> f64 {
    if placement.is_scheduled(pair) {
        cfg.variance_scheduled
    } else {
        cfg.variance_oos
    }
}

pub fn gate_rejects(normalized: f64, cfg: &EskfConfig) -> bool {
    match cfg.gate_mode {
        GateMode::Mahalanobis => normalized > cfg.gate_gamma,
        GateMode::ChiSquared => normalized * normalized > cfg.gate_gamma,
    }
}

/// Gated Kalman update with one TDOA measurement, followed by injection and
/// reset. Rejected or degenerate measurements return the inputs untouched.
pub fn correct_tdoa(
    state: &NavState,
    err: &ErrorState,
    pair: Pair,
    measured: f64,
    placement: &AnchorPlacement,
    cfg: &EskfConfig,
) -> Result<(NavState, ErrorState, GateDecision)> {
    placement.check_pair(pair)?;
    let (predicted, h) = match (
        tdoa_predict(pair, &state.pose(), &cfg.lever_arm, placement),
        measurement_row(pair, state, placement, cfg),
    ) {
        (Ok(d), Ok(h)) => (d, h),
        _ => return Ok((*state, *err, GateDecision::skipped())),
    };
    let r = measurement_variance(pair, placement, cfg);
    let ph = err.p * h;
    let s = h.dot(&ph) + r;
    let innovation = measured - predicted - h.dot(&err.dx);
    let normalized = innovation.abs() / s.sqrt();
    let mut decision = GateDecision {
        innovation,
        innovation_var: s,
        normalized,
        accepted: false,
        skipped: false,
    };
    if gate_rejects(normalized, cfg) {
        return Ok((*state, *err, decision));
    }
    decision.accepted = true;

    let k = ph / s;
    let dx = err.dx + k * innovation;
    // Joseph form
    let ikh = Cov15::identity() - k * h.transpose();
    let mut p = ikh * err.p * ikh.transpose() + (k * k.transpose()) * r;
    enforce_psd(&mut p);
    let (next, reset) = inject_and_reset(state, &ErrorState { dx, p })?;
    Ok((next, reset, decision))
}

/// Compose the error estimate into the nominal state and reset it to zero.
pub fn inject_and_reset(state: &NavState, err: &ErrorState) -> Result<(NavState, ErrorState)> {
    if err.dx.iter().all(|&x| x == 0.0) {
        return Ok((*state, ErrorState { dx: Vec15::zeros(), p: err.p }));
    }
    let dtheta = err.block(ATT);
    let angle = dtheta.norm();
    if !(angle < MAX_INJECTED_ANGLE) || !err.dx.iter().all(|x| x.is_finite()) {
        return Err(Error::Divergence {
            t: state.t,
            dtheta_norm: angle,
            detail: format!("dtheta = {:?}, dp = {:?}", dtheta.as_slice(), err.block(POS).as_slice()),
        });
    }
    let dq = quat_from_small_angle(&dtheta)?;
    let next = NavState {
        p: state.p + err.block(POS),
        v: state.v + err.block(VEL),
        q: Quat::new_normalize((state.q * dq).into_inner()),
        b_a: state.b_a + err.block(BA),
        b_w: state.b_w + err.block(BW),
        t: state.t,
    };
    let mut p = err.p;
    if angle > 0.0 {
        let mut g = Cov15::identity();
        set_block(&mut g, ATT, ATT, &(Mat3::identity() - skew(&(0.5 * dtheta))));
        p = g * err.p * g.transpose();
        symmetrize(&mut p);
    }
    Ok((next, ErrorState { dx: Vec15::zeros(), p }))
}

/// Level the filter from a static accelerometer mean (yaw = 0) and place it
/// at `first_fix` when one is available.
pub fn initialize(first_fix: Option<Vec3>, accel_mean: &Vec3, t: f64, cfg: &EskfConfig) -> Result<(NavState, ErrorState)> {
    let g = cfg.imu.gravity.norm();
    let norm = accel_mean.norm();
    if !((norm - g).abs() <= 0.2 * g) {
        return Err(Error::NotStatic { norm, expected: g });
    }
    let roll = accel_mean.y.atan2(accel_mean.z);
    let pitch = (-accel_mean.x).atan2(accel_mean.y.hypot(accel_mean.z));
    let q = Quat::from_euler_angles(roll, pitch, 0.0);

    let init = &cfg.initial;
    let mut p = Cov15::zeros();
    let pos_var = if first_fix.is_some() { init.position_fix } else { init.position };
    for k in 0..3 {
        p[(POS + k, POS + k)] = pos_var;
        p[(VEL + k, VEL + k)] = init.velocity;
        p[(BA + k, BA + k)] = init.accel_bias;
        p[(BW + k, BW + k)] = init.gyro_bias;
    }
    // Tilt/yaw prior is defined about inertial axes; the error is local.
    let r = q.to_rotation_matrix().into_inner();
    let att_world = Mat3::from_diagonal(&Vec3::new(init.tilt, init.tilt, init.yaw));
    set_block(&mut p, ATT, ATT, &(r.transpose() * att_world * r));
    symmetrize(&mut p);

    let state = NavState {
        p: first_fix.unwrap_or_else(Vec3::zeros),
        v: Vec3::zeros(),
        q,
        b_a: Vec3::zeros(),
        b_w: Vec3::zeros(),
        t,
    };
    Ok((state, ErrorState::new(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eskf::Profile;
    use crate::geometry::rotate;
    use crate::measurement::{ImuParams, TdoaMode};
    use approx::assert_relative_eq;

    fn rest_state() -> (NavState, ErrorState) {
        let state = NavState {
            p: Vec3::new(1.0, 2.0, 1.5),
            v: Vec3::zeros(),
            q: Quat::identity(),
            b_a: Vec3::zeros(),
            b_w: Vec3::zeros(),
            t: 0.0,
        };
        (state, ErrorState::new(Cov15::identity() * 0.01))
    }

    fn quiet_cfg() -> EskfConfig {
        EskfConfig { imu: ImuParams::noiseless(), ..Profile::Arena.eskf_config() }
    }

    #[test]
    fn static_equilibrium() {
        let cfg = quiet_cfg();
        let (mut s, mut e) = rest_state();
        let imu = ImuSample { acc: Vec3::new(0.0, 0.0, 9.81), gyro: Vec3::zeros() };
        for _ in 0..1000 {
            (s, e) = predict(&s, &e, &imu, 0.005, &cfg).unwrap();
        }
        assert_eq!(s.p, Vec3::new(1.0, 2.0, 1.5));
        assert_eq!(s.v, Vec3::zeros());
        assert_eq!(s.q, Quat::identity());
    }

    #[test]
    fn zero_process_noise_only_transports_covariance() {
        let cfg = quiet_cfg();
        let (s, e) = rest_state();
        let imu = ImuSample { acc: Vec3::new(0.3, -0.2, 9.7), gyro: Vec3::new(0.1, 0.0, -0.2) };
        let dt = 0.01;
        let (_, e2) = predict(&s, &e, &imu, dt, &cfg).unwrap();
        // Rebuild F independently from its block definition.
        let mut f = Cov15::identity();
        for k in 0..3 {
            f[(POS + k, VEL + k)] = dt;
            f[(ATT + k, BW + k)] = -dt;
            f[(VEL + k, BA + k)] = -dt;
        }
        let fb = imu.acc;
        let sk = skew(&fb) * (-dt);
        f.fixed_view_mut::<3, 3>(VEL, ATT).copy_from(&sk);
        let rot = Quat::from_scaled_axis(imu.gyro * dt).to_rotation_matrix().into_inner().transpose();
        f.fixed_view_mut::<3, 3>(ATT, ATT).copy_from(&rot);
        let expected = f * e.p * f.transpose();
        assert_relative_eq!(e2.p, expected, epsilon = 1e-12);
    }

    #[test]
    fn free_fall() {
        let cfg = quiet_cfg();
        let (mut s, mut e) = rest_state();
        s.p = Vec3::zeros();
        let imu = ImuSample { acc: Vec3::zeros(), gyro: Vec3::zeros() };
        for _ in 0..1000 {
            (s, e) = predict(&s, &e, &imu, 1e-3, &cfg).unwrap();
        }
        assert!((s.v.z + 9.81).abs() < 1e-3);
        assert!((s.p.z + 4.905).abs() < 1e-3);
        assert!(s.p.x.abs() < 1e-12 && s.v.x.abs() < 1e-12);
        assert!((s.t - 1.0).abs() < 1e-9);
    }

    #[test]
    fn predict_rejects_non_positive_dt() {
        let (s, e) = rest_state();
        let imu = ImuSample { acc: Vec3::new(0.0, 0.0, 9.81), gyro: Vec3::zeros() };
        assert!(predict(&s, &e, &imu, 0.0, &quiet_cfg()).is_err());
        assert!(predict(&s, &e, &imu, -0.01, &quiet_cfg()).is_err());
        assert!(predict(&s, &e, &imu, 0.5, &quiet_cfg()).is_ok());
    }

    fn line() -> AnchorPlacement {
        AnchorPlacement::new(
            vec![Vec3::new(-10.0, 0.0, 0.0), Vec3::new(10.0, 0.0, 0.0), Vec3::new(0.0, 10.0, 3.0)],
            vec![Pair::new(0, 1)],
            TdoaMode::Centralized,
        )
        .unwrap()
    }

    #[test]
    fn exact_measurement_changes_nothing_but_covariance() {
        let cfg = Profile::Arena.eskf_config();
        let (mut s, e) = rest_state();
        s.p = Vec3::new(2.0, 0.0, 0.0);
        let pl = line();
        let d = tdoa_predict(Pair::new(0, 1), &s.pose(), &cfg.lever_arm, &pl).unwrap();
        let (s2, e2, dec) = correct_tdoa(&s, &e, Pair::new(0, 1), d, &pl, &cfg).unwrap();
        assert!(dec.accepted);
        assert_eq!(dec.innovation, 0.0);
        assert_eq!(s2, s);
        assert!(e2.p[(0, 0)] < e.p[(0, 0)]);
    }

    #[test]
    fn outlier_is_rejected_untouched() {
        let cfg = Profile::Arena.eskf_config();
        let (mut s, mut e) = rest_state();
        s.p = Vec3::new(2.0, 0.0, 0.0);
        e.p = Cov15::identity() * 1e-4;
        let pl = line();
        let d = tdoa_predict(Pair::new(0, 1), &s.pose(), &cfg.lever_arm, &pl).unwrap();
        let (s2, e2, dec) = correct_tdoa(&s, &e, Pair::new(0, 1), d + 1.0, &pl, &cfg).unwrap();
        // S = 4e-4 * 4 + 0.01 < 0.04
        assert!(dec.innovation_var < 0.04);
        assert!(dec.normalized >= 5.0 && !dec.accepted);
        assert_eq!(s2, s);
        assert_eq!(e2, e);
    }

    #[test]
    fn scalar_kalman_update() {
        let cfg = Profile::Arena.eskf_config();
        let (mut s, _) = rest_state();
        s.p = Vec3::new(2.0, 0.0, 0.0);
        let var_x = 0.04;
        let mut p = Cov15::zeros();
        p[(0, 0)] = var_x;
        let e = ErrorState::new(p);
        let pl = line();
        let truth_x = 2.1;
        let d = tdoa_predict(Pair::new(0, 1), &crate::geometry::Pose::at(Vec3::new(truth_x, 0.0, 0.0)), &Vec3::zeros(), &pl).unwrap();
        let (s2, e2, dec) = correct_tdoa(&s, &e, Pair::new(0, 1), d, &pl, &cfg).unwrap();
        // h = -2 along x: S = 4 P + R, K = -2 P / S.
        let h = -2.0;
        let r = 0.01;
        let nu = d - (8.0 - 12.0);
        let s_hand = h * h * var_x + r;
        let k_hand = var_x * h / s_hand;
        assert_relative_eq!(dec.innovation_var, s_hand, epsilon = 1e-12);
        assert_relative_eq!(s2.p.x, 2.0 + k_hand * nu, epsilon = 1e-12);
        assert_relative_eq!(e2.p[(0, 0)], var_x * r / s_hand, epsilon = 1e-12);
    }

    #[test]
    fn oos_pair_uses_inflated_variance() {
        let cfg = Profile::Arena.eskf_config();
        let (mut s, e) = rest_state();
        s.p = Vec3::new(2.0, 1.0, 0.5);
        let pl = line();
        let d = tdoa_predict(Pair::new(0, 2), &s.pose(), &cfg.lever_arm, &pl).unwrap();
        let h = measurement_row(Pair::new(0, 2), &s, &pl, &cfg).unwrap();
        let (_, _, dec) = correct_tdoa(&s, &e, Pair::new(0, 2), d, &pl, &cfg).unwrap();
        assert_relative_eq!(dec.innovation_var, h.dot(&(e.p * h)) + 0.025, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_measurement_is_skipped() {
        let cfg = Profile::Arena.eskf_config();
        let (mut s, e) = rest_state();
        s.p = Vec3::new(-10.0, 0.0, 0.0);
        let (s2, e2, dec) = correct_tdoa(&s, &e, Pair::new(0, 1), 0.3, &line(), &cfg).unwrap();
        assert!(dec.skipped && !dec.accepted);
        assert_eq!((s2, e2), (s, e));
    }

    #[test]
    fn inject_examples() {
        let (s, e) = rest_state();
        let (s2, e2) = inject_and_reset(&s, &e).unwrap();
        assert_eq!((s2, e2), (s, e));

        let mut e1 = e;
        e1.dx[0] = 0.1;
        let (s3, e3) = inject_and_reset(&s, &e1).unwrap();
        assert_eq!(s3.p, s.p + Vec3::new(0.1, 0.0, 0.0));
        assert_eq!(e3.dx, Vec15::zeros());
        assert_eq!(e3.p, e.p);

        let mut e2 = e;
        e2.dx[ATT] = 0.02;
        let (s4, e4) = inject_and_reset(&s, &e2).unwrap();
        let expected = s.q * quat_from_small_angle(&Vec3::new(0.02, 0.0, 0.0)).unwrap();
        assert_relative_eq!(s4.q.coords, expected.coords, epsilon = 1e-15);
        // G = I - [dtheta/2]x on the attitude block.
        let mut g = Cov15::identity();
        g.fixed_view_mut::<3, 3>(ATT, ATT).copy_from(&(Mat3::identity() - skew(&Vec3::new(0.01, 0.0, 0.0))));
        assert_relative_eq!(e4.p, g * e.p * g.transpose(), epsilon = 1e-15);

        let mut bad = e;
        bad.dx[ATT + 2] = 0.6;
        assert!(matches!(inject_and_reset(&s, &bad), Err(Error::Divergence { .. })));
    }

    #[test]
    fn initialize_examples() {
        let cfg = Profile::Arena.eskf_config();
        let (s, e) = initialize(None, &Vec3::new(0.0, 0.0, 9.81), 0.0, &cfg).unwrap();
        assert_relative_eq!(s.q.coords, Quat::identity().coords, epsilon = 1e-15);
        assert_eq!(s.p, Vec3::zeros());
        for k in 0..3 {
            assert_eq!(e.p[(k, k)], 25.0);
        }
        assert_relative_eq!(e.p[(ATT + 2, ATT + 2)], 1.0, epsilon = 1e-15);

        let (s, _) = initialize(Some(Vec3::new(1.0, 2.0, 3.0)), &Vec3::new(9.81, 0.0, 0.0), 0.0, &cfg).unwrap();
        assert_relative_eq!(rotate(&s.q, &Vec3::x()), Vec3::z(), epsilon = 1e-12);
        let (_, pitch, _) = s.q.euler_angles();
        assert_relative_eq!(pitch.abs(), std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
        assert_eq!(s.p, Vec3::new(1.0, 2.0, 3.0));

        assert!(matches!(
            initialize(None, &Vec3::new(0.0, 0.0, 5.0), 0.0, &cfg),
            Err(Error::NotStatic { .. })
        ));
    }

    #[test]
    fn gate_monotone_in_gamma() {
        let mut cfg = Profile::Arena.eskf_config();
        for &n in &[0.5, 4.9, 5.0, 5.1, 9.0, 12.0] {
            let mut prev_reject = true;
            for gamma in [1.0, 3.0, 5.0, 7.0, 10.0, 20.0] {
                cfg.gate_gamma = gamma;
                let reject = gate_rejects(n, &cfg);
                assert!(prev_reject || !reject);
                prev_reject = reject;
            }
        }
        cfg.gate_mode = GateMode::ChiSquared;
        cfg.gate_gamma = 25.0;
        assert!(!gate_rejects(4.9, &cfg) && gate_rejects(5.1, &cfg));
    }
}
