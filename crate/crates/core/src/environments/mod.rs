//! Networked plants: topology, per-subsystem vector fields, goal sets,
//! sampling and Euler time stepping.

mod dynamics;
mod model;
mod sampling;
mod scenario;
mod topology;

pub use dynamics::{
    drone_control_matrix, drone_derivative, microgrid_derivative, platoon_derivative, DroneParams, GridNeighbors, Line,
    MicrogridParams,
};
pub use model::{EnvConfig, EnvKind, EnvironmentModel, GoalFrame, NetworkState, Physics, StepResult};
pub use sampling::{
    sample_batch, sample_beta, sample_goal_batch, sample_goal_states, sample_initial_state, sample_states, StateBatch,
};
pub use scenario::{BoundaryProfile, Scenario};
pub use topology::{Neighbor, NetworkTopology, Sharing};
