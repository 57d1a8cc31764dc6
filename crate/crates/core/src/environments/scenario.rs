use serde::{Deserialize, Serialize};

/// Driver of the boundary pseudo-nodes during a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum BoundaryProfile {
    /// Boundary states stay at their initial value (from β).
    Constant,
    /// Leading truck starts at `initial_velocity` and accelerates with
    /// `amplitude·sin(frequency·k·dt)` at step `k`; the trailing boundary
    /// vehicle mirrors it.
    PlatoonLead {
        initial_velocity: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// Reference velocity `(v_x, 0)` with acceleration
    /// `amplitude·sin(frequency·k·dt) + offset`, clipped below at
    /// `min_velocity`.
    DroneReference {
        initial_velocity: f64,
        amplitude: f64,
        frequency: f64,
        offset: f64,
        min_velocity: f64,
    },
}

impl BoundaryProfile {
    pub fn initial_boundary(&self) -> Option<Vec<f64>> {
        match *self {
            BoundaryProfile::Constant => None,
            BoundaryProfile::PlatoonLead { initial_velocity, .. } => Some(vec![initial_velocity, initial_velocity]),
            BoundaryProfile::DroneReference { initial_velocity, .. } => Some(vec![initial_velocity, 0.0]),
        }
    }

    /// Boundary state after step `step` (0-based) given the state before it.
    pub fn advance(&self, boundary: &mut [f64], step: usize, dt: f64) {
        let t = step as f64 * dt;
        match *self {
            BoundaryProfile::Constant => {}
            BoundaryProfile::PlatoonLead { amplitude, frequency, .. } => {
                let v = boundary[0] + dt * amplitude * (frequency * t).sin();
                boundary[0] = v;
                boundary[1] = v;
            }
            BoundaryProfile::DroneReference {
                amplitude,
                frequency,
                offset,
                min_velocity,
                ..
            } => {
                let a = amplitude * (frequency * t).sin() + offset;
                boundary[0] = (boundary[0] + dt * a).max(min_velocity);
                boundary[1] = 0.0;
            }
        }
    }
}

/// Test-time rollout setup: boundary driver, initial-state box, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub profile: BoundaryProfile,
    pub init_box: Vec<[f64; 2]>,
    pub seed: u64,
}
