//! Three-phase training: controller imitation, Lyapunov pre-training, then
//! joint minimization of the full loss.

mod config;
mod loss;
mod trainer;

pub use config::{GradMode, TrainConfig};
pub use loss::{flatten_grads, loss_a, loss_b, loss_ctrl, loss_goal, GradRequest, GroupGrads, LossBreakdown, LossContext, LossWeights, Updates};
pub use trainer::{train, write_history_csv, HistoryRow, Phase, TrainOutcome, Trainer};
