//! Runtime monitor for the composed function `V(x) = max_i V_i(x_i)`.

use serde::{Deserialize, Serialize};

use crate::certificates::CertificateBundle;
use crate::error::{Error, Result};
use crate::evaluation::RolloutTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub composed: Vec<f64>,
    /// Steps whose tracking error is above the goal tube.
    pub steps_considered: usize,
    /// Fraction of considered steps with `V(x_{t+1}) ≤ V(x_t)·(1 + tol)`.
    pub decrease_fraction: f64,
    /// `−slope` of a least-squares line through `ln V(x_t)` against time.
    pub decay_rate: f64,
    pub max_increase: f64,
    /// Largest gap between recomputed per-node values and those stored in
    /// the trace (0 when the trace has none).
    pub cross_check_error: f64,
}

/// `eta` is the goal-tube radius as a fraction of the initial tracking error.
pub fn monitor_composed_v(trace: &RolloutTrace, bundle: &CertificateBundle, tol: f64, eta: f64) -> Result<MonitorReport> {
    if trace.states.len() < 2 {
        return Err(Error::TraceTooShort(trace.states.len()));
    }
    let mut per_node = Vec::with_capacity(trace.states.len());
    for s in &trace.states {
        per_node.push((0..bundle.n()).map(|i| bundle.v_node(i, &s.nodes[i])).collect::<Result<Vec<f64>>>()?);
    }
    let composed = composed_from_values(&per_node);
    let cross_check_error = match &trace.v_values {
        Some(stored) => stored
            .iter()
            .zip(&per_node)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max),
        None => 0.0,
    };
    let errors = trace.tracking_error();
    let tube = eta * errors[0];
    let mut considered = 0;
    let mut decreasing = 0;
    let mut max_increase = f64::NEG_INFINITY;
    for t in 0..composed.len() - 1 {
        max_increase = max_increase.max(composed[t + 1] - composed[t]);
        if errors[t] <= tube {
            continue;
        }
        considered += 1;
        if composed[t + 1] <= composed[t] * (1.0 + tol) {
            decreasing += 1;
        }
    }
    let pts: Vec<(f64, f64)> = composed
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(t, v)| (t as f64 * trace.dt, v.ln()))
        .collect();
    let decay_rate = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
        let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        -sxy / sxx
    } else {
        f64::NAN
    };
    Ok(MonitorReport {
        composed,
        steps_considered: considered,
        decrease_fraction: if considered == 0 { 1.0 } else { decreasing as f64 / considered as f64 },
        decay_rate,
        max_increase,
        cross_check_error,
    })
}

/// `max_i V_i` for each step of per-node values.
pub fn composed_from_values(per_node: &[Vec<f64>]) -> Vec<f64> {
    per_node
        .iter()
        .map(|v| v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{BoundaryProfile, EnvConfig, NetworkState, Scenario};
    use crate::evaluation::rollout_from;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn max_composition() {
        let c = composed_from_values(&[vec![3.0, 1.0], vec![2.0, 2.0], vec![1.0, 0.0]]);
        assert_eq!(c, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn goal_trace_counts_as_decreasing() {
        let env = EnvConfig::platoon(3).build().unwrap();
        let b = CertificateBundle::init(&env, &[8], 1.0, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let init = NetworkState {
            nodes: vec![vec![1.0, 1.0, 2.0]; 3],
            boundary: vec![2.0, 2.0],
            t: 0.0,
            step: 0,
        };
        struct Hold;
        impl crate::evaluation::Controller for Hold {
            fn control(&self, _: &crate::environments::EnvironmentModel, _: usize, _: &NetworkState) -> Result<Vec<f64>> {
                Ok(vec![0.0])
            }
        }
        let sc = Scenario {
            profile: BoundaryProfile::Constant,
            init_box: env.test_init_box.clone(),
            seed: 0,
        };
        let tr = rollout_from(&env, &Hold, init, &sc, 20).unwrap();
        let r = monitor_composed_v(&tr, &b, 1e-3, 0.05).unwrap();
        assert!(r.composed.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(r.decrease_fraction, 1.0);
        let short = RolloutTrace {
            states: tr.states[..1].to_vec(),
            ..tr
        };
        assert!(matches!(monitor_composed_v(&short, &b, 1e-3, 0.05), Err(Error::TraceTooShort(1))));
    }

    #[test]
    fn stored_values_agree_with_recomputation() {
        let env = EnvConfig::platoon(5).build().unwrap();
        let b = CertificateBundle::init(&env, &[8], 1.0, true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let tr = crate::evaluation::rollout(&env, &b, &env.scenario(0), None, Some(50)).unwrap();
        let r = monitor_composed_v(&tr, &b, 1e-3, 0.05).unwrap();
        assert_eq!(r.cross_check_error, 0.0);
        let stored = composed_from_values(tr.v_values.as_ref().unwrap());
        assert_eq!(stored, r.composed);
    }
}
