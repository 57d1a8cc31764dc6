use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dynamics::{
    drone_control_matrix, drone_derivative, microgrid_derivative, platoon_derivative, DroneParams, GridNeighbors,
    MicrogridParams,
};
use super::scenario::{BoundaryProfile, Scenario};
use super::topology::{Neighbor, NetworkTopology, Sharing};
use crate::error::{dim_check, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Platoon,
    PlanarDrone,
    Microgrid,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Platoon => "platoon",
            EnvKind::PlanarDrone => "planar_drone",
            EnvKind::Microgrid => "microgrid",
        }
    }
}

/// Environment config file. Only `kind` is required; every other field
/// falls back to the per-kind default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_box: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_init_box: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actuation_bounds: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty_vertices: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharing: Option<Sharing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drone: Option<DroneParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub microgrid: Option<MicrogridParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<BoundaryProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_offset: Option<f64>,
}

impl EnvConfig {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            kind,
            n: None,
            rows: None,
            cols: None,
            dt: None,
            horizon: None,
            train_box: None,
            test_init_box: None,
            actuation_bounds: None,
            uncertainty_vertices: None,
            sharing: None,
            drone: None,
            microgrid: None,
            scenario: None,
            reward_offset: None,
        }
    }

    pub fn platoon(n: usize) -> Self {
        Self {
            n: Some(n),
            ..Self::new(EnvKind::Platoon)
        }
    }

    pub fn drone(rows: usize, cols: usize) -> Self {
        Self {
            rows: Some(rows),
            cols: Some(cols),
            ..Self::new(EnvKind::PlanarDrone)
        }
    }

    pub fn microgrid(n: usize) -> Self {
        Self {
            n: Some(n),
            ..Self::new(EnvKind::Microgrid)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<EnvironmentModel> {
        EnvironmentModel::from_config(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Physics {
    Platoon,
    Drone(DroneParams),
    Microgrid(MicrogridParams),
}

/// Goal set of one node, `{x : R (x − anchor) = 0}` with `R` a symmetric
/// orthogonal projector, so `‖R (x − anchor)‖` is the distance to the set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalFrame {
    pub dim: usize,
    /// Row-major `dim × dim` projector onto the directions normal to the goal.
    pub residual: Vec<f64>,
    pub anchor: Vec<f64>,
}

impl GoalFrame {
    pub fn point(anchor: Vec<f64>) -> Self {
        let d = anchor.len();
        let mut r = vec![0.0; d * d];
        for k in 0..d {
            r[k * d + k] = 1.0;
        }
        Self {
            dim: d,
            residual: r,
            anchor,
        }
    }

    pub fn matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.dim, self.dim), self.residual.clone()).expect("goal frame shape")
    }

    /// `R (x − anchor)`.
    pub fn residual_of(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|k| {
                let row = &self.residual[k * d..(k + 1) * d];
                row.iter().zip(x).zip(&self.anchor).map(|((r, xi), a)| r * (xi - a)).sum()
            })
            .collect()
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        self.residual_of(x).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Orthogonal projection onto the goal set.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let r = self.residual_of(x);
        x.iter().zip(&r).map(|(a, b)| a - b).collect()
    }
}

/// Network state: per-node vectors, boundary pseudo-node state, time and the
/// number of Euler steps taken so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub nodes: Vec<Vec<f64>>,
    pub boundary: Vec<f64>,
    pub t: f64,
    pub step: usize,
}

impl NetworkState {
    pub fn node_refs(&self) -> Vec<&[f64]> {
        self.nodes.iter().map(Vec::as_slice).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.nodes.iter().flatten().chain(&self.boundary).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: NetworkState,
    /// True if any control component was outside its bounds.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentModel {
    pub kind: EnvKind,
    pub topology: NetworkTopology,
    pub physics: Physics,
    pub dt: f64,
    pub horizon: usize,
    pub train_box: Vec<[f64; 2]>,
    pub test_init_box: Vec<[f64; 2]>,
    pub actuation_bounds: Vec<[f64; 2]>,
    pub uncertainty_vertices: Vec<Vec<f64>>,
    pub sharing: Sharing,
    pub profile: BoundaryProfile,
    pub reward_offset: f64,
    /// `(rows, cols)` for drone formations.
    pub grid: Option<(usize, usize)>,
}

fn check_box(name: &str, b: &[[f64; 2]], dim: usize) -> Result<()> {
    dim_check(name, dim, b.len())?;
    for (k, [lo, hi]) in b.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("{name} axis {k}: need finite lower < upper, got [{lo}, {hi}]")));
        }
    }
    Ok(())
}

impl EnvironmentModel {
    pub fn from_config(cfg: &EnvConfig) -> Result<Self> {
        let kind = cfg.kind;
        let (topology, physics, grid) = match kind {
            EnvKind::Platoon => {
                let n = cfg.n.unwrap_or(5);
                if cfg.rows.is_some() || cfg.cols.is_some() || cfg.drone.is_some() || cfg.microgrid.is_some() {
                    return Err(Error::Config("platoon config accepts n, not rows/cols or other physics".into()));
                }
                let sharing = cfg.sharing.unwrap_or(Sharing::EndsMiddle);
                (NetworkTopology::platoon(n, sharing), Physics::Platoon, None)
            }
            EnvKind::PlanarDrone => {
                if cfg.n.is_some() || cfg.microgrid.is_some() {
                    return Err(Error::Config("drone config uses rows/cols and drone parameters".into()));
                }
                let rows = cfg.rows.unwrap_or(2);
                let cols = cfg.cols.unwrap_or(rows);
                let sharing = cfg.sharing.unwrap_or(Sharing::Single);
                if matches!(sharing, Sharing::EndsMiddle | Sharing::PerRole) {
                    return Err(Error::Config("drone sharing must be single or per_node".into()));
                }
                let p = cfg.drone.unwrap_or_default();
                if !(p.mass > 0.0 && p.inertia > 0.0) {
                    return Err(Error::Config("drone mass and inertia must be positive".into()));
                }
                (
                    NetworkTopology::drone_grid(rows, cols, sharing),
                    Physics::Drone(p),
                    Some((rows, cols)),
                )
            }
            EnvKind::Microgrid => {
                if cfg.rows.is_some() || cfg.cols.is_some() || cfg.drone.is_some() {
                    return Err(Error::Config("microgrid config uses n and microgrid parameters".into()));
                }
                let params = match &cfg.microgrid {
                    Some(p) => p.clone(),
                    None => MicrogridParams::synthetic_ring(cfg.n.unwrap_or(5)),
                };
                params.validate()?;
                if let Some(n) = cfg.n {
                    dim_check("microgrid n vs parameter vectors", n, params.n())?;
                }
                let sharing = cfg.sharing.unwrap_or(Sharing::Single);
                if matches!(sharing, Sharing::EndsMiddle | Sharing::PerRole) {
                    return Err(Error::Config("microgrid sharing must be single or per_node".into()));
                }
                let lines: Vec<(usize, usize)> = params.lines.iter().map(|l| (l.from, l.to)).collect();
                let topo = NetworkTopology::microgrid(params.n(), &lines, sharing);
                if sharing == Sharing::Single {
                    let same = (0..params.n())
                        .all(|i| params.delta_ref[i] == params.delta_ref[0] && params.e_ref[i] == params.e_ref[0]);
                    if !same {
                        return Err(Error::Config("a single shared group needs identical references".into()));
                    }
                }
                (topo, Physics::Microgrid(params), None)
            }
        };
        if topology.n == 0 {
            return Err(Error::Config("network needs at least one node".into()));
        }
        topology.validate()?;
        let d = topology.state_dims[0];
        let p = topology.control_dims[0];
        let defaults = Defaults::for_kind(kind, &physics);
        let reward_offset = cfg.reward_offset.unwrap_or(defaults.reward_offset(topology.n));
        let sharing = cfg.sharing.unwrap_or(defaults.sharing);
        let dt = cfg.dt.unwrap_or(defaults.dt);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0, got {dt}")));
        }
        let horizon = cfg.horizon.unwrap_or(500);
        let train_box = cfg.train_box.clone().unwrap_or(defaults.train_box);
        let test_init_box = cfg.test_init_box.clone().unwrap_or(defaults.test_init_box);
        let actuation_bounds = cfg.actuation_bounds.clone().unwrap_or(defaults.actuation_bounds);
        check_box("train_box", &train_box, d)?;
        check_box("test_init_box", &test_init_box, d)?;
        check_box("actuation_bounds", &actuation_bounds, p)?;
        let uncertainty_vertices = cfg.uncertainty_vertices.clone().unwrap_or(defaults.vertices);
        if uncertainty_vertices.is_empty() {
            return Err(Error::Config("uncertainty_vertices must not be empty".into()));
        }
        let beta_dim = match kind {
            EnvKind::Platoon => 1,
            EnvKind::PlanarDrone => 2,
            EnvKind::Microgrid => 0,
        };
        for v in &uncertainty_vertices {
            dim_check("uncertainty vertex", beta_dim, v.len())?;
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("uncertainty vertex".into()));
            }
        }
        let profile = cfg.scenario.clone().unwrap_or(defaults.profile);
        let profile_ok = matches!(
            (kind, &profile),
            (_, BoundaryProfile::Constant)
                | (EnvKind::Platoon, BoundaryProfile::PlatoonLead { .. })
                | (EnvKind::PlanarDrone, BoundaryProfile::DroneReference { .. })
        );
        if !profile_ok {
            return Err(Error::Config(format!("scenario profile does not fit a {} network", kind.name())));
        }
        Ok(Self {
            kind,
            topology,
            physics,
            dt,
            horizon,
            train_box,
            test_init_box,
            actuation_bounds,
            uncertainty_vertices,
            sharing,
            profile,
            reward_offset,
            grid,
        })
    }

    /// Fully resolved config reproducing this model.
    pub fn to_config(&self) -> EnvConfig {
        let mut cfg = EnvConfig::new(self.kind);
        match &self.physics {
            Physics::Platoon => cfg.n = Some(self.topology.n),
            Physics::Drone(p) => {
                let (r, c) = self.grid.unwrap_or((1, self.topology.n));
                cfg.rows = Some(r);
                cfg.cols = Some(c);
                cfg.drone = Some(*p);
            }
            Physics::Microgrid(p) => {
                cfg.n = Some(self.topology.n);
                cfg.microgrid = Some(p.clone());
            }
        }
        cfg.dt = Some(self.dt);
        cfg.horizon = Some(self.horizon);
        cfg.train_box = Some(self.train_box.clone());
        cfg.test_init_box = Some(self.test_init_box.clone());
        cfg.actuation_bounds = Some(self.actuation_bounds.clone());
        cfg.uncertainty_vertices = Some(self.uncertainty_vertices.clone());
        cfg.sharing = Some(self.sharing);
        cfg.scenario = Some(self.profile.clone());
        cfg.reward_offset = Some(self.reward_offset);
        cfg
    }

    /// Same environment at another size: `n` trucks, or an `n × n` formation.
    pub fn resized(&self, target: usize, sharing: Sharing) -> Result<Self> {
        let mut cfg = self.to_config();
        cfg.sharing = Some(sharing);
        cfg.reward_offset = None;
        match self.kind {
            EnvKind::Platoon => cfg.n = Some(target),
            EnvKind::PlanarDrone => {
                cfg.rows = Some(target);
                cfg.cols = Some(target);
            }
            EnvKind::Microgrid => {
                return Err(Error::Port("microgrid networks have no size-generic topology".into()));
            }
        }
        Self::from_config(&cfg)
    }

    pub fn n(&self) -> usize {
        self.topology.n
    }

    pub fn state_dim(&self) -> usize {
        self.topology.state_dims[0]
    }

    pub fn control_dim(&self) -> usize {
        self.topology.control_dims[0]
    }

    pub fn boundary_dim(&self) -> usize {
        match self.kind {
            EnvKind::Platoon | EnvKind::PlanarDrone => 2,
            EnvKind::Microgrid => 0,
        }
    }

    pub fn beta_dim(&self) -> usize {
        self.uncertainty_vertices[0].len()
    }

    /// Boundary pseudo-node state for an uncertainty parameter β:
    /// platoon `v_0 = v_{n+1} = β`, drone reference velocity `β`.
    pub fn boundary_from_beta(&self, beta: &[f64]) -> Result<Vec<f64>> {
        dim_check("beta", self.beta_dim(), beta.len())?;
        Ok(match self.kind {
            EnvKind::Platoon => vec![beta[0], beta[0]],
            EnvKind::PlanarDrone => vec![beta[0], beta[1]],
            EnvKind::Microgrid => Vec::new(),
        })
    }

    pub fn scenario(&self, seed: u64) -> Scenario {
        Scenario {
            profile: self.profile.clone(),
            init_box: self.test_init_box.clone(),
            seed,
        }
    }

    fn velocity_of(&self, nb: Neighbor, states: &[&[f64]], boundary: &[f64]) -> (f64, f64) {
        match (self.kind, nb) {
            (EnvKind::Platoon, Neighbor::Node(j)) => (states[j][2], 0.0),
            (EnvKind::Platoon, Neighbor::Boundary(k)) => (boundary[k], 0.0),
            (_, Neighbor::Node(j)) => (states[j][5], states[j][6]),
            (_, Neighbor::Boundary(_)) => (boundary[0], boundary[1]),
        }
    }

    /// Neighbor information a node may observe: platoon
    /// `[v_front, v_behind]`, drone `[(v_x, v_y)]` for left, right, up, down.
    /// Microgrid nodes observe nothing beyond their own state.
    pub fn local_obs(&self, i: usize, states: &[&[f64]], boundary: &[f64]) -> Vec<f64> {
        let nbs = &self.topology.neighbors[i];
        match self.kind {
            EnvKind::Platoon => nbs.iter().map(|&nb| self.velocity_of(nb, states, boundary).0).collect(),
            EnvKind::PlanarDrone => nbs
                .iter()
                .flat_map(|&nb| {
                    let (a, b) = self.velocity_of(nb, states, boundary);
                    [a, b]
                })
                .collect(),
            EnvKind::Microgrid => Vec::new(),
        }
    }

    /// `f_i(x_i, x_{N_i}, u_i)` without clamping.
    pub fn node_derivative(&self, i: usize, states: &[&[f64]], boundary: &[f64], u: &[f64]) -> Vec<f64> {
        let x = states[i];
        match &self.physics {
            Physics::Platoon => {
                let obs = self.local_obs(i, states, boundary);
                platoon_derivative(x, obs[0], obs[1], u).to_vec()
            }
            Physics::Drone(p) => {
                let o = self.local_obs(i, states, boundary);
                let nb = GridNeighbors {
                    left: (o[0], o[1]),
                    right: (o[2], o[3]),
                    up: (o[4], o[5]),
                    down: (o[6], o[7]),
                };
                drone_derivative(x, &nb, u, p).to_vec()
            }
            Physics::Microgrid(p) => microgrid_derivative(i, x, |j| states[j], u, p).to_vec(),
        }
    }

    /// Input matrix `g_i(x_i)`, row-major `d × p`.
    pub fn control_matrix(&self, x: &[f64]) -> Vec<f64> {
        match &self.physics {
            Physics::Platoon => vec![0.0, 0.0, 1.0],
            Physics::Drone(p) => drone_control_matrix(x, p).iter().flatten().copied().collect(),
            Physics::Microgrid(p) => vec![1.0 / p.inertia_angle[0], 0.0, 0.0, 1.0 / p.inertia_voltage[0]],
        }
    }

    /// Input matrix of node `i` (microgrid inertias may differ per node).
    pub fn node_control_matrix(&self, i: usize, x: &[f64]) -> Vec<f64> {
        match &self.physics {
            Physics::Microgrid(p) => vec![1.0 / p.inertia_angle[i], 0.0, 0.0, 1.0 / p.inertia_voltage[i]],
            _ => self.control_matrix(x),
        }
    }

    /// Componentwise clamp to the actuation bounds.
    pub fn clamp_control(&self, u: &[f64]) -> (Vec<f64>, bool) {
        let mut clamped = false;
        let out = u
            .iter()
            .zip(&self.actuation_bounds)
            .map(|(&v, &[lo, hi])| {
                let c = v.clamp(lo, hi);
                clamped |= c != v;
                c
            })
            .collect();
        (out, clamped)
    }

    /// One explicit Euler step of the whole network. Boundary states follow
    /// `profile`.
    pub fn step_euler(&self, state: &NetworkState, controls: &[Vec<f64>], profile: &BoundaryProfile) -> Result<StepResult> {
        dim_check("controls", self.n(), controls.len())?;
        dim_check("network state", self.n(), state.nodes.len())?;
        let refs = state.node_refs();
        let mut clamped = false;
        let mut next = state.clone();
        for i in 0..self.n() {
            dim_check("node control", self.control_dim(), controls[i].len())?;
            let (u, c) = self.clamp_control(&controls[i]);
            clamped |= c;
            let f = self.node_derivative(i, &refs, &state.boundary, &u);
            for (x, dx) in next.nodes[i].iter_mut().zip(&f) {
                *x += self.dt * dx;
            }
        }
        profile.advance(&mut next.boundary, state.step, self.dt);
        next.t = state.t + self.dt;
        next.step = state.step + 1;
        if let Some(i) = next.nodes.iter().position(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::Abort {
                step: state.step,
                detail: format!("node {i}"),
            });
        }
        Ok(StepResult { state: next, clamped })
    }

    pub fn goal_frame(&self, i: usize) -> GoalFrame {
        match &self.physics {
            Physics::Platoon => GoalFrame {
                dim: 3,
                residual: vec![0.5, -0.5, 0.0, -0.5, 0.5, 0.0, 0.0, 0.0, 0.0],
                anchor: vec![0.0; 3],
            },
            Physics::Drone(_) => {
                let mut r = vec![0.0; 64];
                for (a, b) in [(0, 1), (2, 3)] {
                    r[a * 8 + a] = 0.5;
                    r[a * 8 + b] = -0.5;
                    r[b * 8 + a] = -0.5;
                    r[b * 8 + b] = 0.5;
                }
                r[4 * 8 + 4] = 1.0;
                r[7 * 8 + 7] = 1.0;
                GoalFrame {
                    dim: 8,
                    residual: r,
                    anchor: vec![0.0; 8],
                }
            }
            Physics::Microgrid(p) => GoalFrame::point(vec![p.delta_ref[i], p.e_ref[i]]),
        }
    }

    pub fn dist_to_goal(&self, i: usize, x: &[f64]) -> f64 {
        self.goal_frame(i).distance(x)
    }

    /// Forces a box sample onto the goal set by overwriting the constrained
    /// coordinates, so the result keeps its box coordinates elsewhere.
    pub fn impose_goal(&self, i: usize, x: &mut [f64]) {
        match &self.physics {
            Physics::Platoon => x[1] = x[0],
            Physics::Drone(_) => {
                x[1] = x[0];
                x[3] = x[2];
                x[4] = 0.0;
                x[7] = 0.0;
            }
            Physics::Microgrid(p) => {
                x[0] = p.delta_ref[i];
                x[1] = p.e_ref[i];
            }
        }
    }
}

struct Defaults {
    sharing: Sharing,
    dt: f64,
    train_box: Vec<[f64; 2]>,
    test_init_box: Vec<[f64; 2]>,
    actuation_bounds: Vec<[f64; 2]>,
    vertices: Vec<Vec<f64>>,
    profile: BoundaryProfile,
    kind: EnvKind,
}

impl Defaults {
    fn for_kind(kind: EnvKind, physics: &Physics) -> Self {
        match physics {
            Physics::Platoon => Self {
                sharing: Sharing::EndsMiddle,
                dt: 0.01,
                train_box: vec![[0.0, 2.0], [0.0, 2.0], [0.0, 4.0]],
                test_init_box: vec![[0.6, 1.4], [0.6, 1.4], [1.0, 1.2]],
                actuation_bounds: vec![[-5.0, 5.0]],
                vertices: vec![vec![1.0], vec![3.0]],
                profile: BoundaryProfile::PlatoonLead {
                    initial_velocity: 2.0,
                    amplitude: 1.0,
                    frequency: 5.0,
                },
                kind,
            },
            Physics::Drone(p) => {
                let umax = 2.0 * p.mass * p.gravity;
                Self {
                    sharing: Sharing::Single,
                    dt: 0.03,
                    train_box: vec![
                        [0.0, 5.0],
                        [0.0, 5.0],
                        [0.0, 5.0],
                        [0.0, 5.0],
                        [-FRAC_PI_2, FRAC_PI_2],
                        [-7.0, 7.0],
                        [-5.0, 5.0],
                        [-FRAC_PI_2, FRAC_PI_2],
                    ],
                    test_init_box: vec![
                        [0.8, 1.2],
                        [0.8, 1.2],
                        [0.09, 0.11],
                        [0.09, 0.11],
                        [-0.05, 0.05],
                        [0.85, 1.15],
                        [-0.15, 0.15],
                        [-0.05, 0.05],
                    ],
                    actuation_bounds: vec![[0.0, umax], [0.0, umax]],
                    vertices: vec![vec![0.5, 0.0], vec![1.5, 0.0]],
                    profile: BoundaryProfile::DroneReference {
                        initial_velocity: 1.0,
                        amplitude: 0.5,
                        frequency: 1.0,
                        offset: -0.25,
                        min_velocity: 0.5,
                    },
                    kind,
                }
            }
            Physics::Microgrid(_) => Self {
                sharing: Sharing::Single,
                dt: 0.01,
                train_box: vec![[-3.0, 3.0], [-3.0, 3.0]],
                test_init_box: vec![[-2.0, 2.0], [-3.0, 3.0]],
                actuation_bounds: vec![[-5.0, 5.0], [-5.0, 5.0]],
                vertices: vec![Vec::new()],
                profile: BoundaryProfile::Constant,
                kind,
            },
        }
    }

    /// Per-step reward constant: 100 for formations of ≥ 100 drones, 5 otherwise.
    fn reward_offset(&self, n: usize) -> f64 {
        if self.kind == EnvKind::PlanarDrone && n >= 100 {
            100.0
        } else {
            5.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn platoon() -> EnvironmentModel {
        EnvConfig::platoon(5).build().unwrap()
    }

    #[test]
    fn defaults_resolve_and_roundtrip() {
        for cfg in [EnvConfig::platoon(5), EnvConfig::drone(2, 2), EnvConfig::microgrid(5)] {
            let env = cfg.build().unwrap();
            let again = env.to_config().build().unwrap();
            assert_eq!(env, again);
            let text = serde_json::to_string(&env.to_config()).unwrap();
            assert_eq!(EnvConfig::from_json(&text).unwrap().build().unwrap(), env);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = EnvConfig::platoon(5);
        cfg.dt = Some(0.0);
        assert!(cfg.build().is_err());
        let mut cfg = EnvConfig::platoon(5);
        cfg.train_box = Some(vec![[0.0, 2.0], [2.0, 2.0], [0.0, 4.0]]);
        assert!(cfg.build().is_err());
        let mut cfg = EnvConfig::platoon(5);
        cfg.uncertainty_vertices = Some(vec![]);
        assert!(cfg.build().is_err());
        assert!(EnvConfig::from_json(r#"{"kind":"platoon","bogus":1}"#).is_err());
        assert!(EnvConfig::from_json(r#"{"kind":"platoon","rows":3}"#).unwrap().build().is_err());
    }

    #[test]
    fn platoon_distances() {
        let env = platoon();
        assert_eq!(env.dist_to_goal(0, &[1.0, 1.0, 3.7]), 0.0);
        assert!((env.dist_to_goal(0, &[2.0, 0.0, 1.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn microgrid_point_distance() {
        let env = EnvConfig::microgrid(5).build().unwrap();
        let f = env.goal_frame(2);
        let x = [f.anchor[0] + 3.0, f.anchor[1] + 4.0];
        assert!((env.dist_to_goal(2, &x) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn euler_step_of_platoon() {
        let env = platoon();
        let state = NetworkState {
            nodes: vec![vec![1.0, 1.0, 2.0]; 5],
            boundary: vec![2.0, 2.0],
            t: 0.0,
            step: 0,
        };
        let zero = vec![vec![0.0]; 5];
        let next = env.step_euler(&state, &zero, &BoundaryProfile::Constant).unwrap();
        assert_eq!(next.state.nodes, state.nodes);
        assert_eq!(next.state.t, 0.01);
        assert_eq!(next.state.step, 1);

        // single truck with front 3, behind 1: dx = [1, 1, 0.5]
        let env1 = EnvConfig::platoon(1).build().unwrap();
        let s1 = NetworkState {
            nodes: vec![vec![1.0, 1.0, 2.0]],
            boundary: vec![3.0, 1.0],
            t: 0.0,
            step: 0,
        };
        let n1 = env1.step_euler(&s1, &[vec![0.5]], &BoundaryProfile::Constant).unwrap();
        let dx: Vec<f64> = n1.state.nodes[0].iter().zip(&s1.nodes[0]).map(|(a, b)| a - b).collect();
        assert!((dx[0] - 0.01).abs() < 1e-15 && (dx[1] - 0.01).abs() < 1e-15 && (dx[2] - 0.005).abs() < 1e-15);
    }

    #[test]
    fn out_of_bound_controls_are_clamped() {
        let env = platoon();
        let state = NetworkState {
            nodes: vec![vec![1.0, 0.5, 2.0]; 5],
            boundary: vec![2.0, 2.0],
            t: 0.0,
            step: 0,
        };
        let wild = env.step_euler(&state, &vec![vec![40.0]; 5], &env.profile).unwrap();
        let tame = env.step_euler(&state, &vec![vec![5.0]; 5], &env.profile).unwrap();
        assert_eq!(wild.state, tame.state);
        assert!(wild.clamped && !tame.clamped);
    }

    #[test]
    fn non_finite_state_aborts_with_step() {
        let env = platoon();
        let mut state = NetworkState {
            nodes: vec![vec![1.0, 1.0, 2.0]; 5],
            boundary: vec![2.0, 2.0],
            t: 0.5,
            step: 50,
        };
        state.nodes[3][2] = f64::INFINITY;
        let err = env.step_euler(&state, &vec![vec![0.0]; 5], &env.profile).unwrap_err();
        assert!(matches!(err, Error::Abort { step: 50, .. }));
    }

    #[test]
    fn goal_projection_is_orthogonal() {
        let env = EnvConfig::drone(2, 2).build().unwrap();
        let f = env.goal_frame(0);
        let x = [0.3, 1.7, 2.0, 0.4, 0.2, 1.0, -0.5, 0.7];
        let p = f.project(&x);
        assert!(f.distance(&p) < 1e-12);
        let r: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a - b).collect();
        // residual is orthogonal to any direction inside the goal set
        let mut tangent = p.clone();
        tangent[5] += 1.0;
        tangent[0] += 0.5;
        tangent[1] += 0.5;
        let dir: Vec<f64> = tangent.iter().zip(&p).map(|(a, b)| a - b).collect();
        let dot: f64 = r.iter().zip(&dir).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn resize_keeps_physics() {
        let env = platoon();
        let big = env.resized(100, Sharing::PerRole).unwrap();
        assert_eq!(big.n(), 100);
        assert_eq!(big.dt, env.dt);
        assert_eq!(big.topology.n_groups(), 3);
        let drone = EnvConfig::drone(2, 2).build().unwrap().resized(10, Sharing::Single).unwrap();
        assert_eq!(drone.n(), 100);
        assert_eq!(drone.reward_offset, 100.0);
        assert!(EnvConfig::microgrid(5).build().unwrap().resized(10, Sharing::Single).is_err());
    }
}
