use serde::Serialize;

use super::bound::{mse_lower_bound, PointBound};
use crate::error::{Error, Result};
use crate::geometry::{Environment, Vec3};
use crate::measurement::{AnchorPlacement, TdoaParams};
use crate::par;

/// Sample points the placement is designed for.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub points: Vec<Vec3>,
}

impl TargetSet {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("target set is empty"));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("target points must be finite"));
        }
        Ok(Self { points })
    }

    /// Also checks every point lies inside the environment boundary.
    pub fn within(points: Vec<Vec3>, env: &Environment) -> Result<Self> {
        let set = Self::new(points)?;
        if let Some(k) = set.points.iter().position(|p| !env.boundary.contains(p)) {
            return Err(Error::invalid(format!(
                "target point {} {:?} is outside the boundary",
                k + 1,
                set.points[k].as_slice()
            )));
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub per_point: Vec<PointBound>,
    /// Mean of the per-point RMSE bounds; infinite if any point is
    /// unobservable.
    pub aggregate_rmse: f64,
}

impl MetricReport {
    pub fn from_bounds(per_point: Vec<PointBound>) -> Self {
        let aggregate_rmse = aggregate(&per_point);
        Self {
            per_point,
            aggregate_rmse,
        }
    }

    pub fn unobservable_count(&self) -> usize {
        self.per_point.iter().filter(|b| !b.observable).count()
    }
}

pub(crate) fn aggregate(bounds: &[PointBound]) -> f64 {
    if bounds.iter().any(|b| !b.observable) {
        return f64::INFINITY;
    }
    bounds.iter().map(|b| b.mse_lb.sqrt()).sum::<f64>() / bounds.len() as f64
}

/// Average RMSE lower bound over the target points.
pub fn placement_metric(targets: &TargetSet, placement: &AnchorPlacement, env: &Environment, params: &TdoaParams) -> Result<MetricReport> {
    let bounds = par::map(&targets.points, |p| mse_lower_bound(p, placement, env, params))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_bounds(bounds))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatCell {
    pub x: f64,
    pub y: f64,
    /// Infinite when unobservable.
    pub rmse_lb: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: f64,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major, `y` outer.
    pub cells: Vec<HeatCell>,
}

impl Heatmap {
    pub fn get(&self, ix: usize, iy: usize) -> &HeatCell {
        &self.cells[iy * self.xs.len() + ix]
    }

    pub fn finite_min(&self) -> Option<f64> {
        self.cells
            .iter()
            .map(|c| c.rmse_lb)
            .filter(|v| v.is_finite())
            .min_by(f64::total_cmp)
    }
}

/// Cell centers covering `[lo, hi]`: `ceil(extent / resolution)` cells, the
/// last one possibly partial.
pub fn grid_centers(lo: f64, hi: f64, resolution: f64) -> Vec<f64> {
    let n = (((hi - lo) / resolution) - 1e-9).ceil().max(1.0) as usize;
    (0..n)
        .map(|i| {
            let start = lo + i as f64 * resolution;
            let center = start + 0.5 * resolution;
            if center > hi {
                0.5 * (start + hi)
            } else {
                center
            }
        })
        .collect()
}

/// RMSE bound on a horizontal grid at `height`. Cells where the bound is
/// undefined (unobservable, or on top of an anchor) are infinite.
pub fn heatmap(env: &Environment, placement: &AnchorPlacement, params: &TdoaParams, height: f64, resolution: f64) -> Result<Heatmap> {
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::invalid(format!("resolution must be > 0, got {resolution}")));
    }
    if !height.is_finite() {
        return Err(Error::invalid("height must be finite"));
    }
    super::bound::check_sigma(params)?;
    let b = &env.boundary;
    let xs = grid_centers(b.min.x, b.max.x, resolution);
    let ys = grid_centers(b.min.y, b.max.y, resolution);
    let points: Vec<(f64, f64)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    let cells = par::map(&points, |&(x, y)| {
        let p = Vec3::new(x, y, height);
        let rmse_lb = match mse_lower_bound(&p, placement, env, params) {
            Ok(bound) => bound.rmse(),
            Err(_) => f64::INFINITY,
        };
        HeatCell { x, y, rmse_lb }
    });
    Ok(Heatmap {
        height,
        xs,
        ys,
        cells,
    })
}
