//! Exhaustive enumeration of an axis-aligned grid of network states.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check::evaluate_state;
use crate::certificates::CertificateBundle;
use crate::environments::{EnvironmentModel, NetworkState, StateBatch};
use crate::error::{dim_check, Error, Result};

pub const MAX_GRID_POINTS: usize = 1_000_000;

/// Points per state coordinate, node-major (`n·d` entries). One point puts
/// the axis at the box midpoint; more points span the box edge to edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_axis: Vec<usize>,
    /// Uncertainty parameter for every grid state; the first vertex when
    /// absent.
    pub beta: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn uniform(env: &EnvironmentModel, points: usize) -> Self {
        Self {
            points_per_axis: vec![points; env.n() * env.state_dim()],
            beta: None,
        }
    }

    pub fn total_points(&self) -> usize {
        self.points_per_axis.iter().fold(1usize, |acc, &p| acc.saturating_mul(p))
    }
}

fn axis_value(lo: f64, hi: f64, k: usize, points: usize) -> f64 {
    if points == 1 {
        0.5 * (lo + hi)
    } else {
        lo + (hi - lo) * k as f64 / (points - 1) as f64
    }
}

/// The `index`-th grid state (last axis fastest).
pub fn grid_state(env: &EnvironmentModel, spec: &GridSpec, boundary: &[f64], mut index: usize) -> NetworkState {
    let d = env.state_dim();
    let mut flat = vec![0.0; spec.points_per_axis.len()];
    for a in (0..flat.len()).rev() {
        let p = spec.points_per_axis[a];
        let [lo, hi] = env.train_box[a % d];
        flat[a] = axis_value(lo, hi, index % p, p);
        index /= p;
    }
    NetworkState {
        nodes: flat.chunks(d).map(|c| c.to_vec()).collect(),
        boundary: boundary.to_vec(),
        t: 0.0,
        step: 0,
    }
}

fn grid_boundary(env: &EnvironmentModel, spec: &GridSpec) -> Result<Vec<f64>> {
    dim_check("grid axes", env.n() * env.state_dim(), spec.points_per_axis.len())?;
    if spec.points_per_axis.contains(&0) {
        return Err(Error::Config("every grid axis needs at least one point".into()));
    }
    let total: u128 = spec.points_per_axis.iter().map(|&p| p as u128).product();
    if total > MAX_GRID_POINTS as u128 {
        return Err(Error::GridTooLarge {
            points: total,
            limit: MAX_GRID_POINTS as u128,
        });
    }
    let beta = spec.beta.clone().unwrap_or_else(|| env.uncertainty_vertices[0].clone());
    env.boundary_from_beta(&beta)
}

/// All grid states, in enumeration order.
pub fn grid_states(env: &EnvironmentModel, spec: &GridSpec) -> Result<StateBatch> {
    let boundary = grid_boundary(env, spec)?;
    let states: Vec<NetworkState> = (0..spec.total_points()).map(|k| grid_state(env, spec, &boundary, k)).collect();
    Ok(StateBatch::from_states(&states))
}

/// Every `(grid index, node)` violating the implication at margins
/// `(m_A, m_B)`, evaluating each grid state on its own.
pub fn implication_oracle(
    bundle: &CertificateBundle,
    env: &EnvironmentModel,
    spec: &GridSpec,
    margin_a: f64,
    margin_b: f64,
) -> Result<Vec<(usize, usize)>> {
    bundle.check_env(env)?;
    let boundary = grid_boundary(env, spec)?;
    let per_point: Vec<Vec<(usize, usize)>> = (0..spec.total_points())
        .into_par_iter()
        .map(|k| {
            let state = grid_state(env, spec, &boundary, k);
            let verdicts = evaluate_state(bundle, env, &state, margin_a, margin_b)?;
            Ok(verdicts
                .iter()
                .enumerate()
                .filter(|(_, v)| v.violated)
                .map(|(i, _)| (k, i))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_point.into_iter().flatten().collect())
}
