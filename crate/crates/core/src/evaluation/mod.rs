//! Closed-loop rollouts, tracking metrics and classical baselines.

mod baseline;
mod care;
mod rollout;

pub use baseline::{drone_linearization, platoon_linearization, BaselineSpec, NominalController};
pub use care::{care_residual, care_solve, CareSolution, CARE_TOLERANCE};
pub use rollout::{
    compare, metrics, rollout, rollout_from, write_comparison_csv, write_trace_csv, Comparison, ComparisonEntry,
    ComparisonRow, Controller, Metrics, RolloutTrace, TAIL_STEPS,
};
