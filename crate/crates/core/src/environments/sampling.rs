use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::model::{EnvKind, EnvironmentModel, NetworkState};
use crate::error::Result;

/// Column-major view of many network states: one `count × d` matrix per node.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBatch {
    pub nodes: Vec<Array2<f64>>,
    pub boundary: Array2<f64>,
}

impl StateBatch {
    pub fn len(&self) -> usize {
        self.boundary.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state(&self, b: usize) -> NetworkState {
        NetworkState {
            nodes: self.nodes.iter().map(|x| x.row(b).to_vec()).collect(),
            boundary: self.boundary.row(b).to_vec(),
            t: 0.0,
            step: 0,
        }
    }

    pub fn states(&self) -> Vec<NetworkState> {
        (0..self.len()).map(|b| self.state(b)).collect()
    }

    /// Builds a batch from states of one network.
    pub fn from_states(states: &[NetworkState]) -> Self {
        let count = states.len();
        let n = states.first().map_or(0, |s| s.nodes.len());
        let nodes = (0..n)
            .map(|i| {
                let d = states[0].nodes[i].len();
                Array2::from_shape_fn((count, d), |(b, k)| states[b].nodes[i][k])
            })
            .collect();
        let nb = states.first().map_or(0, |s| s.boundary.len());
        let boundary = Array2::from_shape_fn((count, nb), |(b, k)| states[b].boundary[k]);
        Self { nodes, boundary }
    }

    /// Per-node row slices of sample `b`.
    pub fn node_rows(&self, b: usize) -> Vec<&[f64]> {
        self.nodes
            .iter()
            .map(|x| x.row(b).to_slice().expect("standard layout"))
            .collect()
    }

    pub fn boundary_row(&self, b: usize) -> &[f64] {
        self.boundary.row(b).to_slice().expect("standard layout")
    }
}

/// Uniform convex weights over the vertices (Dirichlet(1)) applied to the
/// uncertainty vertex set.
pub fn sample_beta<R: Rng + ?Sized>(env: &EnvironmentModel, rng: &mut R) -> Vec<f64> {
    let verts = &env.uncertainty_vertices;
    if verts.len() == 1 {
        return verts[0].clone();
    }
    let w: Vec<f64> = verts.iter().map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    let mut beta = vec![0.0; env.beta_dim()];
    for (wk, v) in w.iter().zip(verts) {
        for (b, x) in beta.iter_mut().zip(v) {
            *b += wk / total * x;
        }
    }
    beta
}

fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn fill_box<R: Rng + ?Sized>(x: &mut [f64], bx: &[[f64; 2]], rng: &mut R) {
    for (v, [lo, hi]) in x.iter_mut().zip(bx) {
        *v = uniform_in(rng, *lo, *hi);
    }
}

/// `count` i.i.d. network states, every node uniform in the train box. The
/// boundary comes from `beta` when given, else from β drawn over the hull.
pub fn sample_batch<R: Rng + ?Sized>(
    env: &EnvironmentModel,
    count: usize,
    beta: Option<&[f64]>,
    rng: &mut R,
) -> Result<StateBatch> {
    let n = env.n();
    let d = env.state_dim();
    let mut nodes = vec![Array2::zeros((count, d)); n];
    let mut boundary = Array2::zeros((count, env.boundary_dim()));
    let mut x = vec![0.0; d];
    for b in 0..count {
        for node in nodes.iter_mut() {
            fill_box(&mut x, &env.train_box, rng);
            node.row_mut(b).assign(&ndarray::ArrayView1::from(&x[..]));
        }
        let bt = match beta {
            Some(v) => env.boundary_from_beta(v)?,
            None => env.boundary_from_beta(&sample_beta(env, rng))?,
        };
        boundary.row_mut(b).assign(&ndarray::ArrayView1::from(&bt[..]));
    }
    Ok(StateBatch { nodes, boundary })
}

pub fn sample_states<R: Rng + ?Sized>(env: &EnvironmentModel, count: usize, rng: &mut R) -> Result<Vec<NetworkState>> {
    Ok(sample_batch(env, count, None, rng)?.states())
}

/// Like [`sample_batch`] with every node moved onto its goal set.
pub fn sample_goal_batch<R: Rng + ?Sized>(env: &EnvironmentModel, count: usize, rng: &mut R) -> Result<StateBatch> {
    let mut batch = sample_batch(env, count, None, rng)?;
    for (i, node) in batch.nodes.iter_mut().enumerate() {
        for mut row in node.rows_mut() {
            env.impose_goal(i, row.as_slice_mut().expect("standard layout"));
        }
    }
    Ok(batch)
}

pub fn sample_goal_states<R: Rng + ?Sized>(env: &EnvironmentModel, count: usize, rng: &mut R) -> Result<Vec<NetworkState>> {
    Ok(sample_goal_batch(env, count, rng)?.states())
}

/// Initial state of a rollout: nodes uniform in `init_box`, then shared gaps
/// made consistent (a truck's `p_b` is the next truck's `p_f`; a drone's
/// right/up gaps are its neighbors' left/down gaps).
pub fn sample_initial_state<R: Rng + ?Sized>(
    env: &EnvironmentModel,
    init_box: &[[f64; 2]],
    boundary: Vec<f64>,
    rng: &mut R,
) -> NetworkState {
    let d = env.state_dim();
    let mut nodes: Vec<Vec<f64>> = (0..env.n())
        .map(|_| {
            let mut x = vec![0.0; d];
            fill_box(&mut x, init_box, rng);
            x
        })
        .collect();
    match env.kind {
        EnvKind::Platoon => {
            for i in 0..env.n().saturating_sub(1) {
                nodes[i][1] = nodes[i + 1][0];
            }
        }
        EnvKind::PlanarDrone => {
            let (rows, cols) = env.grid.unwrap_or((1, env.n()));
            for r in 0..rows {
                for c in 0..cols {
                    let i = r * cols + c;
                    if c + 1 < cols {
                        nodes[i][1] = nodes[i + 1][0];
                    }
                    if r + 1 < rows {
                        nodes[i][2] = nodes[i + cols][3];
                    }
                }
            }
        }
        EnvKind::Microgrid => {}
    }
    NetworkState {
        nodes,
        boundary,
        t: 0.0,
        step: 0,
    }
}
