//! Sampling-based checks of the certificate conditions, an exhaustive grid
//! oracle, robust vertex checks and the composed-function rollout monitor.

mod check;
mod monitor;
mod oracle;
mod robust;

pub use check::{
    check_batch, check_certificate, classify, evaluate_state, node_values, CheckOptions, CheckReport, Counterexample,
    NodeRates, NodeValues, Tally, Verdict,
};
pub use monitor::{composed_from_values, monitor_composed_v, MonitorReport};
pub use oracle::{grid_state, grid_states, implication_oracle, GridSpec, MAX_GRID_POINTS};
pub use robust::{affineness_residual, check_robust_vertices, combine_vertices, RobustReport};
