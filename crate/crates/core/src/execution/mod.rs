//! Paired round-trip strategies: schedule resolution, region classification
//! and the cross- and self-impact cost functionals.
//!
//! Every cost is a sum of terms `rate_outer · g̃(rate_inner) · ∬ G(t − t′)`
//! over causal domains. The inner integrals follow the per-region limits, in
//! which the other stock's unwind phase runs up to the running time `t`, even
//! past that stock's own period end.

mod cost;
mod region;
mod schedule;

pub use cost::{
    cross_cost_ij, cross_cost_ji, cross_cost_total, self_cost, terms_ij, terms_ji, terms_self, CostBreakdown, CostTerm,
    CrossImpact, Integrator, StrategyRequest, COST_DISPLAY_SCALE,
};
pub use region::{classify_region, classify_schedule, BoundaryFlags, Region, RegionClass, BOUNDARY_TOLERANCE};
pub use schedule::{resolve_schedule, Direction, Leg, Presets, ResolvedSchedule, StrategyParams};
