//! Diagnostics over runs and traces.

pub mod harness;
pub mod metrics;
pub mod reports;

pub use harness::{budget_sweep, hitting_bound, hitting_probability_experiment, BudgetRow, BudgetSweep, HittingResult};
pub use metrics::{
    dual_hit_rates, frontier_overlap, local_consistency, rank_agreement, ConsistencyPoint, DualHit, RankAgreement,
    DEFAULT_K_SET,
};
pub use reports::{budget_report, consistency_report, funnel_report, prepost_report, Table};

/// Reference figures reported for the docking-based cheap and full
/// evaluators. They depend on external scoring software and are kept for
/// comparison only; the synthetic evaluators here do not reproduce them.
pub mod reference {
    pub const OV_AT_5: f64 = 0.887;
    pub const OV_AT_8: f64 = 0.992;
    pub const SPEARMAN: f64 = 0.356;
    pub const PEARSON: f64 = 0.428;
    pub const KENDALL: f64 = 0.302;
    /// Best-so-far search score (mean) at budgets 1 through 8.
    pub const BUDGET_SCORE_MEAN: [f64; 8] = [0.437, 0.519, 0.638, 0.703, 0.731, 0.801, 0.844, 0.869];
    /// Cumulative chemistry-floor recovery rate at budgets 1 through 8.
    pub const BUDGET_RECOVERY: [f64; 8] = [0.056, 0.111, 0.222, 0.222, 0.333, 0.444, 0.444, 0.500];
}
