//! Classical controllers: LQR re-anchored at the locally observed goal, and
//! droop feedback.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::care::{care_solve, CareSolution};
use crate::environments::{EnvKind, EnvironmentModel, Physics};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineSpec {
    /// `Q = q_weight·I`, `R = r_weight·I`.
    Lqr { q_weight: f64, r_weight: f64 },
    /// `u = −gain·(x − x_ref)`.
    Droop { gain: f64 },
    /// LQR with unit weights for platoons and drones, droop with unit gain for
    /// microgrids.
    #[default]
    Nominal,
}

impl BaselineSpec {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "lqr" => Ok(BaselineSpec::Lqr {
                q_weight: 1.0,
                r_weight: 1.0,
            }),
            "droop" => Ok(BaselineSpec::Droop { gain: 1.0 }),
            "nominal" => Ok(BaselineSpec::Nominal),
            other => Err(Error::Config(format!("unknown baseline {other:?} (lqr, droop, nominal)"))),
        }
    }
}

/// Linearization used by the platoon LQR, in error coordinates
/// `z = [(p_f − p_b)/2, v − v_ref]` with `v_ref` the mean neighbor velocity.
/// The full three-state model is not stabilizable (`p_f + p_b` has no input).
pub fn platoon_linearization() -> (DMatrix<f64>, DMatrix<f64>) {
    (
        DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
    )
}

/// Drone hover linearization in error coordinates
/// `z = [e_x, v_x − v_x^ref, e_y, v_y − v_y^ref, θ, ω]` with
/// `e_x = (p_l − p_r)/2`, `e_y = (p_d − p_u)/2`, inputs relative to hover.
pub fn drone_linearization(p: &crate::environments::DroneParams) -> (DMatrix<f64>, DMatrix<f64>) {
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(6, 6, &[
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, -p.gravity, 0.0,
        0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    ]);
    let b = DMatrix::from_row_slice(
        6,
        2,
        &[
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            1.0 / p.mass,
            1.0 / p.mass,
            0.0,
            0.0,
            p.arm / p.inertia,
            -p.arm / p.inertia,
        ],
    );
    (a, b)
}

/// Per-node controller built once per environment.
#[derive(Debug, Clone, PartialEq)]
pub enum NominalController {
    /// `u = u_eq − K z(x, obs)`.
    Lqr {
        kind: EnvKind,
        gain: DMatrix<f64>,
        u_eq: Vec<f64>,
        solution: CareSolution,
    },
    Droop {
        gain: f64,
        refs: Vec<Vec<f64>>,
    },
}

impl NominalController {
    pub fn build(env: &EnvironmentModel, spec: &BaselineSpec) -> Result<Self> {
        let spec = match (spec, env.kind) {
            (BaselineSpec::Nominal, EnvKind::Microgrid) => BaselineSpec::Droop { gain: 1.0 },
            (BaselineSpec::Nominal, _) => BaselineSpec::Lqr {
                q_weight: 1.0,
                r_weight: 1.0,
            },
            (s, _) => s.clone(),
        };
        match spec {
            BaselineSpec::Lqr { q_weight, r_weight } => {
                if !(q_weight >= 0.0 && r_weight > 0.0) {
                    return Err(Error::Config("LQR needs q_weight >= 0 and r_weight > 0".into()));
                }
                let ((a, b), u_eq) = match &env.physics {
                    Physics::Platoon => (platoon_linearization(), vec![0.0]),
                    Physics::Drone(p) => (drone_linearization(p), vec![p.hover_thrust(); 2]),
                    Physics::Microgrid(_) => {
                        return Err(Error::Config("LQR baseline is not defined for microgrids; use droop".into()));
                    }
                };
                let n = a.nrows();
                let m = b.ncols();
                let q = DMatrix::identity(n, n) * q_weight;
                let r = DMatrix::identity(m, m) * r_weight;
                let solution = care_solve(&a, &b, &q, &r)?;
                Ok(NominalController::Lqr {
                    kind: env.kind,
                    gain: solution.k.clone(),
                    u_eq,
                    solution,
                })
            }
            BaselineSpec::Droop { gain } => {
                if env.kind != EnvKind::Microgrid {
                    return Err(Error::Config("droop baseline is defined for microgrids only".into()));
                }
                let refs = (0..env.n()).map(|i| env.goal_frame(i).anchor).collect();
                Ok(NominalController::Droop { gain, refs })
            }
            BaselineSpec::Nominal => unreachable!("resolved above"),
        }
    }

    /// Local error coordinates for the LQR; `obs` is
    /// [`EnvironmentModel::local_obs`].
    fn error_coords(kind: EnvKind, x: &[f64], obs: &[f64]) -> Vec<f64> {
        match kind {
            EnvKind::Platoon => {
                let v_ref = 0.5 * (obs[0] + obs[1]);
                vec![0.5 * (x[0] - x[1]), x[2] - v_ref]
            }
            _ => {
                let vx_ref = 0.5 * (obs[0] + obs[2]);
                let vy_ref = 0.5 * (obs[5] + obs[7]);
                vec![
                    0.5 * (x[0] - x[1]),
                    x[5] - vx_ref,
                    0.5 * (x[3] - x[2]),
                    x[6] - vy_ref,
                    x[4],
                    x[7],
                ]
            }
        }
    }

    /// Unclamped control of node `i`.
    pub fn control(&self, i: usize, x: &[f64], obs: &[f64]) -> Vec<f64> {
        match self {
            NominalController::Lqr { kind, gain, u_eq, .. } => {
                let z = Self::error_coords(*kind, x, obs);
                (0..gain.nrows())
                    .map(|r| u_eq[r] - (0..z.len()).map(|c| gain[(r, c)] * z[c]).sum::<f64>())
                    .collect()
            }
            NominalController::Droop { gain, refs } => x.iter().zip(&refs[i]).map(|(v, r)| -gain * (v - r)).collect(),
        }
    }

    pub fn care_residual(&self) -> Option<f64> {
        match self {
            NominalController::Lqr { solution, .. } => Some(solution.residual),
            NominalController::Droop { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{BoundaryProfile, EnvConfig, NetworkState};

    #[test]
    fn platoon_gain_is_closed_form() {
        let env = EnvConfig::platoon(5).build().unwrap();
        let c = NominalController::build(&env, &BaselineSpec::Nominal).unwrap();
        let NominalController::Lqr { gain, .. } = &c else { panic!() };
        assert!((gain[(0, 0)] + 1.0).abs() < 1e-9);
        assert!((gain[(0, 1)] - 3f64.sqrt()).abs() < 1e-9);
        assert!(c.care_residual().unwrap() <= 1e-8);
    }

    #[test]
    fn zero_error_gives_equilibrium_input() {
        let env = EnvConfig::platoon(5).build().unwrap();
        let c = NominalController::build(&env, &BaselineSpec::Nominal).unwrap();
        assert_eq!(c.control(2, &[0.7, 0.7, 2.0], &[2.0, 2.0]), vec![0.0]);
        // front gap larger than rear gap: speed up
        assert!(c.control(2, &[1.0, 0.5, 2.0], &[2.0, 2.0])[0] > 0.0);

        let drone = EnvConfig::drone(2, 2).build().unwrap();
        let c = NominalController::build(&drone, &BaselineSpec::Nominal).unwrap();
        let hover = 0.5 * 9.81;
        let u = c.control(0, &[1.0, 1.0, 0.1, 0.1, 0.0, 0.8, 0.0, 0.0], &[0.8, 0.0, 0.8, 0.0, 0.8, 0.0, 0.8, 0.0]);
        assert!((u[0] - hover).abs() < 1e-12 && (u[1] - hover).abs() < 1e-12);

        let mg = EnvConfig::microgrid(5).build().unwrap();
        let c = NominalController::build(&mg, &BaselineSpec::Nominal).unwrap();
        let anchor = mg.goal_frame(1).anchor;
        assert_eq!(c.control(1, &anchor, &[]), vec![0.0, 0.0]);
    }

    #[test]
    fn drone_lqr_residual() {
        let drone = EnvConfig::drone(2, 2).build().unwrap();
        let c = NominalController::build(&drone, &BaselineSpec::Nominal).unwrap();
        assert!(c.care_residual().unwrap() <= 1e-8);
    }

    #[test]
    fn baseline_kind_checks() {
        let mg = EnvConfig::microgrid(5).build().unwrap();
        assert!(NominalController::build(&mg, &BaselineSpec::parse("lqr").unwrap()).is_err());
        let pl = EnvConfig::platoon(5).build().unwrap();
        assert!(NominalController::build(&pl, &BaselineSpec::parse("droop").unwrap()).is_err());
        assert!(BaselineSpec::parse("pid").is_err());
    }

    #[test]
    fn isolated_truck_converges_under_lqr() {
        // single truck between boundary vehicles moving at constant speed
        let env = EnvConfig::platoon(1).build().unwrap();
        let c = NominalController::build(&env, &BaselineSpec::Nominal).unwrap();
        let mut s = NetworkState {
            nodes: vec![vec![1.5, 0.5, 1.0]],
            boundary: vec![2.0, 2.0],
            t: 0.0,
            step: 0,
        };
        let d0 = env.dist_to_goal(0, &s.nodes[0]) + (s.nodes[0][2] - 2.0).abs();
        // slowest closed-loop eigenvalue: roots of λ² + √3 λ + 1, Re = −√3/2
        let horizon = 5.0 / (3f64.sqrt() / 2.0);
        let steps = (horizon / env.dt).ceil() as usize;
        for _ in 0..steps {
            let obs = env.local_obs(0, &s.node_refs(), &s.boundary);
            let u = c.control(0, &s.nodes[0], &obs);
            s = env.step_euler(&s, &[u], &BoundaryProfile::Constant).unwrap().state;
        }
        let d1 = env.dist_to_goal(0, &s.nodes[0]) + (s.nodes[0][2] - 2.0).abs();
        assert!(d1 <= 0.1 * d0, "{d0} -> {d1}");
    }
}
