//! Checks at the vertices of the uncertainty set and at interior points.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::check::{check_certificate, CheckOptions, CheckReport};
use crate::certificates::CertificateBundle;
use crate::environments::{sample_states, EnvironmentModel};
use crate::error::Result;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustReport {
    pub vertex_reports: Vec<CheckReport>,
    pub interior_reports: Vec<CheckReport>,
    /// Largest node conditional rate over the vertex checks.
    pub max_vertex_rate: f64,
    /// Largest node conditional rate over the interior checks.
    pub max_interior_rate: f64,
    /// `max ‖f(λβ₁+(1−λ)β₂) − λf(β₁) − (1−λ)f(β₂)‖` over sampled states,
    /// inputs, vertex pairs and λ.
    pub affineness_residual: f64,
    pub notice: Option<String>,
}

/// Convex combination of the vertices with weights `w`.
pub fn combine_vertices(env: &EnvironmentModel, w: &[f64]) -> Vec<f64> {
    let mut beta = vec![0.0; env.beta_dim()];
    for (wk, v) in w.iter().zip(&env.uncertainty_vertices) {
        for (b, x) in beta.iter_mut().zip(v) {
            *b += wk * x;
        }
    }
    beta
}

/// Largest deviation of the vector field from affineness in β.
pub fn affineness_residual(env: &EnvironmentModel, n_states: usize, seed: u64) -> Result<f64> {
    let verts = &env.uncertainty_vertices;
    let mut rng = stream_rng(seed, Stream::Interior);
    let states = sample_states(env, n_states, &mut rng)?;
    let mut worst = 0.0f64;
    for s in &states {
        let refs = s.node_refs();
        let u: Vec<f64> = env.actuation_bounds.iter().map(|[lo, hi]| rng.random_range(*lo..=*hi)).collect();
        for a in 0..verts.len() {
            for b in (a + 1)..verts.len() {
                let lam: f64 = rng.random();
                let mixed: Vec<f64> = verts[a].iter().zip(&verts[b]).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
                let (ba, bb, bm) = (
                    env.boundary_from_beta(&verts[a])?,
                    env.boundary_from_beta(&verts[b])?,
                    env.boundary_from_beta(&mixed)?,
                );
                for i in 0..env.n() {
                    let fa = env.node_derivative(i, &refs, &ba, &u);
                    let fb = env.node_derivative(i, &refs, &bb, &u);
                    let fm = env.node_derivative(i, &refs, &bm, &u);
                    let r = fm
                        .iter()
                        .zip(fa.iter().zip(&fb))
                        .map(|(m, (x, y))| (m - lam * x - (1.0 - lam) * y).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(r);
                }
            }
        }
    }
    Ok(worst)
}

/// Runs [`check_certificate`] with β pinned at every vertex and at
/// `n_interior` random convex combinations, all with the same seed.
pub fn check_robust_vertices(
    bundle: &CertificateBundle,
    env: &EnvironmentModel,
    opts: &CheckOptions,
    n_interior: usize,
) -> Result<RobustReport> {
    let verts = &env.uncertainty_vertices;
    if verts.len() < 2 {
        let r = check_certificate(bundle, env, opts)?;
        return Ok(RobustReport {
            max_vertex_rate: r.max_violation_rate(),
            max_interior_rate: 0.0,
            vertex_reports: vec![r],
            interior_reports: Vec::new(),
            affineness_residual: 0.0,
            notice: Some("single uncertainty vertex: plain certificate check".into()),
        });
    }
    let at = |beta: Vec<f64>| {
        check_certificate(
            bundle,
            env,
            &CheckOptions {
                beta: Some(beta),
                ..opts.clone()
            },
        )
    };
    let vertex_reports: Vec<CheckReport> = verts.iter().map(|v| at(v.clone())).collect::<Result<_>>()?;
    let mut rng = stream_rng(opts.seed, Stream::Interior);
    let interior_reports: Vec<CheckReport> = (0..n_interior)
        .map(|_| {
            let w: Vec<f64> = verts.iter().map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / total).collect();
            at(combine_vertices(env, &w))
        })
        .collect::<Result<_>>()?;
    let max_of = |rs: &[CheckReport]| rs.iter().map(|r| r.max_violation_rate()).fold(0.0, f64::max);
    Ok(RobustReport {
        max_vertex_rate: max_of(&vertex_reports),
        max_interior_rate: max_of(&interior_reports),
        vertex_reports,
        interior_reports,
        affineness_residual: affineness_residual(env, 1000, opts.seed)?,
        notice: None,
    })
}
