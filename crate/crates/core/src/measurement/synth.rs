use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::anchors::{AnchorPlacement, Pair, TdoaMode};
use super::record::MeasurementRecord;
use super::tdoa::{link_occluded, nlos_bias, tdoa_at_point, TdoaParams};
use crate::error::{Error, Result};
use crate::geometry::{Environment, Vec3};
use crate::kinematics::Trajectory;

/// Noisy TDOA measurement of one link at a tag position.
fn measure(
    pair: Pair,
    tag: &Vec3,
    placement: &AnchorPlacement,
    env: &Environment,
    params: &TdoaParams,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let clean = tdoa_at_point(pair, tag, placement)?;
    let occluded = !env.obstacles.is_empty() && link_occluded(pair, tag, placement, env);
    let std = params.link_variance(occluded).sqrt();
    let bias = if occluded {
        nlos_bias(pair, tag, placement, env, params)
    } else {
        0.0
    };
    let eta: f64 = StandardNormal.sample(rng);
    Ok(clean + bias + std * eta)
}

/// Links outside the schedule that are within radio range, `i < j`.
pub fn out_of_schedule_links(placement: &AnchorPlacement, params: &TdoaParams) -> Vec<Pair> {
    let m = placement.len();
    let mut links = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let pair = Pair::new(i, j);
            if placement.is_scheduled(pair) {
                continue;
            }
            let sep = (placement.anchor(i) - placement.anchor(j)).norm();
            if params.radio_range.is_none_or(|r| sep <= r) {
                links.push(pair);
            }
        }
    }
    links
}

/// TDOA records along the trajectory.
///
/// Scheduled slots tick at `rate` Hz and cycle through the pair schedule in
/// order. In decentralized mode each slot additionally emits, with probability
/// `oos_fraction`, one out-of-schedule link drawn uniformly, half a slot later.
pub fn synth_tdoa<T: Trajectory + ?Sized>(
    traj: &T,
    placement: &AnchorPlacement,
    env: &Environment,
    params: &TdoaParams,
    lever_arm: &Vec3,
    rate: f64,
    seed: u64,
) -> Result<Vec<MeasurementRecord>> {
    if placement.pairs.is_empty() {
        return Err(Error::invalid("placement has an empty pair list"));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::invalid(format!("TDOA rate must be > 0, got {rate}")));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oos_links = match placement.mode {
        TdoaMode::Decentralized if params.oos_fraction > 0.0 => out_of_schedule_links(placement, params),
        _ => Vec::new(),
    };
    let dt = 1.0 / rate;
    let duration = traj.duration();
    let count = (duration * rate + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let t = k as f64 * dt;
        let pair = placement.pairs[k % placement.pairs.len()];
        let tag = traj.sample(t).pose.transform_point(lever_arm);
        let d = measure(pair, &tag, placement, env, params, &mut rng)?;
        out.push(MeasurementRecord::tdoa(t, pair, d));

        if !oos_links.is_empty() && rng.random::<f64>() < params.oos_fraction {
            let link = oos_links[rng.random_range(0..oos_links.len())];
            let t_oos = t + 0.5 * dt;
            if t_oos <= duration {
                let tag = traj.sample(t_oos).pose.transform_point(lever_arm);
                let d = measure(link, &tag, placement, env, params, &mut rng)?;
                out.push(MeasurementRecord::tdoa(t_oos, link, d));
            }
        }
    }
    Ok(out)
}
