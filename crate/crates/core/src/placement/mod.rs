//! Anchor-placement analysis: Fisher information of the TDOA model, the
//! variance-plus-bias MSE lower bound, the average-RMSE placement metric,
//! heatmaps and discrete placement optimization.

mod bcm;
mod bound;
mod metric;
mod search;

pub use bcm::{
    bcm_optimize, escalate_anchor_count, spread_initialization, BcmConfig, BcmResult, EscalationAttempt,
    EscalationConfig, EscalationResult, Score,
};
pub use bound::{
    bias_vector, bound_from_information, fim, information, leg, link_term, mse_lower_bound, Leg, LinkTerm,
    PointBound, MAX_CONDITION,
};
pub use metric::{grid_centers, heatmap, placement_metric, HeatCell, Heatmap, MetricReport, TargetSet};
pub use search::{PlacementSearchSpace, SurfaceGridOptions};
