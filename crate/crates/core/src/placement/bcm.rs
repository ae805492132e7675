//! Block coordinate-wise minimization of the average RMSE bound over a
//! discrete candidate set, and the outer loop that grows the anchor count
//! until a target bound is met.

use std::cmp::Ordering;

use serde::Serialize;

use super::bound::{bound_from_information, check_sigma, leg, link_term, Leg, LinkTerm, PointBound};
use super::metric::{placement_metric, MetricReport, TargetSet};
use super::search::PlacementSearchSpace;
use crate::error::{Error, Result};
use crate::geometry::{Environment, Vec3};
use crate::measurement::{AnchorPlacement, Pairing, TdoaParams};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BcmConfig {
    pub max_sweeps: usize,
    /// Stop once a sweep lowers the metric by less than this (m).
    pub tol: f64,
}

impl Default for BcmConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 20,
            tol: 1e-6,
        }
    }
}

/// Comparable placement quality: unobservable points first, then the summed
/// RMSE bound. Orders exactly like the metric whenever every point is
/// observable, and still ranks placements when the metric is infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub unobservable: usize,
    pub rmse_sum: f64,
    pub points: usize,
}

impl Score {
    pub fn from_bounds<'a>(bounds: impl IntoIterator<Item = &'a PointBound>) -> Self {
        let mut s = Score {
            unobservable: 0,
            rmse_sum: 0.0,
            points: 0,
        };
        for b in bounds {
            s.points += 1;
            if b.observable {
                s.rmse_sum += b.mse_lb.sqrt();
            } else {
                s.unobservable += 1;
            }
        }
        s
    }

    fn infeasible(points: usize) -> Self {
        Score {
            unobservable: usize::MAX,
            rmse_sum: f64::INFINITY,
            points,
        }
    }

    pub fn metric(&self) -> f64 {
        if self.unobservable > 0 {
            f64::INFINITY
        } else {
            self.rmse_sum / self.points as f64
        }
    }

    pub fn better_than(&self, other: &Score) -> bool {
        self.cmp_key(other) == Ordering::Less
    }

    fn cmp_key(&self, other: &Score) -> Ordering {
        self.unobservable
            .cmp(&other.unobservable)
            .then(self.rmse_sum.total_cmp(&other.rmse_sum))
    }
}

/// Per-point cached leg geometry for fast single-anchor moves.
struct Engine<'a> {
    targets: &'a TargetSet,
    env: &'a Environment,
    params: &'a TdoaParams,
    /// legs[point][anchor]
    legs: Vec<Vec<Leg>>,
}

impl<'a> Engine<'a> {
    fn new(targets: &'a TargetSet, placement: &AnchorPlacement, env: &'a Environment, params: &'a TdoaParams) -> Result<Self> {
        let legs = targets
            .points
            .iter()
            .map(|p| {
                placement
                    .anchors
                    .iter()
                    .map(|a| leg(p, a, env))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            targets,
            env,
            params,
            legs,
        })
    }

    fn set_anchor(&mut self, k: usize, pos: &Vec3) -> Result<()> {
        for (p, legs) in self.targets.points.iter().zip(self.legs.iter_mut()) {
            legs[k] = leg(p, pos, self.env)?;
        }
        Ok(())
    }

    /// Information from all links not touching anchor `k`, per point.
    fn rest_terms(&self, placement: &AnchorPlacement, k: usize) -> Vec<LinkTerm> {
        self.legs
            .iter()
            .map(|legs| {
                let mut acc = LinkTerm::zero();
                for pair in placement.pairs.iter().filter(|p| !p.involves(k)) {
                    acc.add(&link_term(&legs[pair.i], &legs[pair.j], self.params));
                }
                acc
            })
            .collect()
    }

    fn score_all(&self, placement: &AnchorPlacement) -> Score {
        let bounds: Vec<PointBound> = self
            .targets
            .points
            .iter()
            .zip(&self.legs)
            .map(|(p, legs)| {
                let mut acc = LinkTerm::zero();
                for pair in &placement.pairs {
                    acc.add(&link_term(&legs[pair.i], &legs[pair.j], self.params));
                }
                bound_from_information(p, &acc)
            })
            .collect();
        Score::from_bounds(&bounds)
    }

    /// Score with anchor `k` moved to `pos`.
    fn score_move(&self, placement: &AnchorPlacement, rest: &[LinkTerm], k: usize, pos: &Vec3) -> Score {
        let mut unobservable = 0;
        let mut rmse_sum = 0.0;
        for ((p, legs), rest) in self.targets.points.iter().zip(&self.legs).zip(rest) {
            let moved = match leg(p, pos, self.env) {
                Ok(l) => l,
                Err(_) => return Score::infeasible(self.targets.len()),
            };
            let pick = |idx: usize| if idx == k { &moved } else { &legs[idx] };
            let mut acc = *rest;
            for pair in placement.pairs.iter().filter(|p| p.involves(k)) {
                acc.add(&link_term(pick(pair.i), pick(pair.j), self.params));
            }
            let b = bound_from_information(p, &acc);
            if b.observable {
                rmse_sum += b.mse_lb.sqrt();
            } else {
                unobservable += 1;
            }
        }
        Score {
            unobservable,
            rmse_sum,
            points: self.targets.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BcmResult {
    #[serde(skip)]
    pub placement: AnchorPlacement,
    pub report: MetricReport,
    pub initial_metric: f64,
    /// Metric after each sweep.
    pub history: Vec<f64>,
    pub sweeps: usize,
}

fn separated(placement: &AnchorPlacement, k: usize, pos: &Vec3, min_sep: f64) -> bool {
    min_sep <= 0.0
        || placement
            .anchors
            .iter()
            .enumerate()
            .all(|(idx, a)| idx == k || (a - pos).norm() >= min_sep)
}

/// Moves one anchor at a time, in index order, to the candidate minimizing
/// the average RMSE bound with the others held fixed. An anchor only moves on
/// strict improvement; among equally good candidates the lowest index wins.
pub fn bcm_optimize(
    targets: &TargetSet,
    search: &PlacementSearchSpace,
    initial: &AnchorPlacement,
    env: &Environment,
    params: &TdoaParams,
    config: &BcmConfig,
) -> Result<BcmResult> {
    if search.candidates.is_empty() {
        return Err(Error::invalid("candidate set is empty"));
    }
    if config.max_sweeps == 0 {
        return Err(Error::invalid("max_sweeps must be >= 1"));
    }
    check_sigma(params)?;
    initial.validate()?;

    let mut placement = initial.clone();
    let mut engine = Engine::new(targets, &placement, env, params)?;
    let mut current = engine.score_all(&placement);
    let initial_metric = current.metric();
    let mut history = Vec::new();
    let mut sweeps = 0;

    while sweeps < config.max_sweeps {
        let before = current;
        for k in 0..placement.len() {
            if search.is_fixed(k) {
                continue;
            }
            let rest = engine.rest_terms(&placement, k);
            let here = engine.score_move(&placement, &rest, k, &placement.anchors[k].clone());
            let scores = par::map(&search.candidates, |c| {
                if separated(&placement, k, c, search.min_separation) {
                    engine.score_move(&placement, &rest, k, c)
                } else {
                    Score::infeasible(targets.len())
                }
            });
            let mut best: Option<(usize, Score)> = None;
            for (idx, s) in scores.into_iter().enumerate() {
                if best.is_none_or(|(_, b)| s.better_than(&b)) {
                    best = Some((idx, s));
                }
            }
            if let Some((idx, s)) = best {
                if s.better_than(&here) {
                    let pos = search.candidates[idx];
                    placement.anchors[k] = pos;
                    engine.set_anchor(k, &pos)?;
                    current = s;
                } else {
                    current = here;
                }
            }
        }
        sweeps += 1;
        history.push(current.metric());
        let improved = current.unobservable < before.unobservable
            || (current.unobservable == before.unobservable
                && (before.rmse_sum - current.rmse_sum) / targets.len() as f64 >= config.tol);
        if !improved {
            break;
        }
    }

    let report = placement_metric(targets, &placement, env, params)?;
    Ok(BcmResult {
        placement,
        report,
        initial_metric,
        history,
        sweeps,
    })
}

/// Farthest-point spread of `m` candidates: the first is the candidate
/// farthest from the target centroid (shifted by `offset`), each next one
/// maximizes the distance to those already chosen.
pub fn spread_initialization(search: &PlacementSearchSpace, targets: &TargetSet, m: usize, offset: usize) -> Result<Vec<Vec3>> {
    let cands = &search.candidates;
    if cands.len() < m {
        return Err(Error::invalid(format!(
            "{} candidates cannot host {m} anchors",
            cands.len()
        )));
    }
    let centroid = targets.points.iter().sum::<Vec3>() / targets.len() as f64;
    let first = cands
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |best, (i, c)| {
            let d = (c - centroid).norm();
            if d > best.1 {
                (i, d)
            } else {
                best
            }
        })
        .0;
    let first = (first + offset) % cands.len();
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = cands.iter().map(|c| (c - cands[first]).norm()).collect();
    while chosen.len() < m {
        let (idx, _) = nearest
            .iter()
            .enumerate()
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (i, &d)| {
                if d > best.1 {
                    (i, d)
                } else {
                    best
                }
            });
        chosen.push(idx);
        for (i, c) in cands.iter().enumerate() {
            nearest[i] = nearest[i].min((c - cands[idx]).norm());
        }
    }
    Ok(chosen.into_iter().map(|i| cands[i]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscalationConfig {
    pub rmse_target: f64,
    pub m_min: usize,
    pub m_max: usize,
    pub pairing: Pairing,
    pub bcm: BcmConfig,
    /// Offset of the first spread-initialization candidate.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscalationAttempt {
    pub anchors: usize,
    pub aggregate_rmse: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EscalationResult {
    pub placement: AnchorPlacement,
    pub m: usize,
    pub report: MetricReport,
    pub history: Vec<f64>,
    pub sweeps: usize,
    pub success: bool,
    pub attempts: Vec<EscalationAttempt>,
}

/// Smallest anchor count (stepping by two from `m_min`) whose optimized
/// placement meets `rmse_target`. When no count up to `m_max` succeeds, the
/// best attempt is returned with `success == false`.
pub fn escalate_anchor_count(
    targets: &TargetSet,
    search: &PlacementSearchSpace,
    env: &Environment,
    params: &TdoaParams,
    config: &EscalationConfig,
) -> Result<EscalationResult> {
    if config.m_min < 2 || config.m_max < config.m_min {
        return Err(Error::invalid(format!(
            "need 2 <= m_min <= m_max, got {}..{}",
            config.m_min, config.m_max
        )));
    }
    if config.pairing == Pairing::Disjoint && !config.m_min.is_multiple_of(2) {
        return Err(Error::invalid("disjoint pairing needs an even m_min"));
    }
    if !(config.rmse_target > 0.0) {
        return Err(Error::invalid("rmse_target must be > 0"));
    }
    let offset = (config.seed % search.candidates.len().max(1) as u64) as usize;
    let mut attempts = Vec::new();
    let mut best: Option<EscalationResult> = None;
    let mut m = config.m_min;
    while m <= config.m_max {
        let anchors = spread_initialization(search, targets, m, offset)?;
        let initial = AnchorPlacement::with_pairing(anchors, config.pairing)?;
        let res = bcm_optimize(targets, search, &initial, env, params, &config.bcm)?;
        let metric = res.report.aggregate_rmse;
        log::info!("m = {m}: aggregate RMSE bound {metric:.4} m after {} sweeps", res.sweeps);
        attempts.push(EscalationAttempt {
            anchors: m,
            aggregate_rmse: metric,
            sweeps: res.sweeps,
        });
        let success = metric <= config.rmse_target;
        let candidate = EscalationResult {
            placement: res.placement,
            m,
            report: res.report,
            history: res.history,
            sweeps: res.sweeps,
            success,
            attempts: Vec::new(),
        };
        if success {
            return Ok(EscalationResult {
                attempts,
                ..candidate
            });
        }
        if best.as_ref().is_none_or(|b| metric < b.report.aggregate_rmse) {
            best = Some(candidate);
        }
        m += 2;
    }
    let best = best.expect("at least one attempt");
    Ok(EscalationResult { attempts, ..best })
}
