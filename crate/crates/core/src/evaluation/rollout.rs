use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baseline::NominalController;
use crate::certificates::CertificateBundle;
use crate::environments::{sample_initial_state, EnvironmentModel, NetworkState, Scenario};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Number of trailing steps used by the steady-state error average.
pub const TAIL_STEPS: usize = 100;

/// Anything that maps a network state to per-node inputs.
pub trait Controller: Sync {
    fn control(&self, env: &EnvironmentModel, i: usize, state: &NetworkState) -> Result<Vec<f64>>;

    /// Per-node certificate values, when the controller carries a certificate.
    fn certificate_values(&self, _state: &NetworkState) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }
}

impl Controller for CertificateBundle {
    fn control(&self, _env: &EnvironmentModel, i: usize, state: &NetworkState) -> Result<Vec<f64>> {
        CertificateBundle::control(self, i, &state.nodes[i])
    }

    fn certificate_values(&self, state: &NetworkState) -> Result<Option<Vec<f64>>> {
        let v = (0..self.n())
            .map(|i| self.v_node(i, &state.nodes[i]))
            .collect::<Result<_>>()?;
        Ok(Some(v))
    }
}

impl Controller for NominalController {
    fn control(&self, env: &EnvironmentModel, i: usize, state: &NetworkState) -> Result<Vec<f64>> {
        let refs = state.node_refs();
        let obs = env.local_obs(i, &refs, &state.boundary);
        Ok(NominalController::control(self, i, &state.nodes[i], &obs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    /// `steps + 1` states, the initial one first (fewer after an abort).
    pub states: Vec<NetworkState>,
    /// Clamped inputs applied at each step.
    pub controls: Vec<Vec<Vec<f64>>>,
    /// Per-node goal distance for every recorded state.
    pub distances: Vec<Vec<f64>>,
    /// Per-node certificate values for every recorded state, if available.
    pub v_values: Option<Vec<Vec<f64>>>,
    /// `c_env − tracking_error` after every step.
    pub rewards: Vec<f64>,
    pub dt: f64,
    /// Step at which the state became non-finite.
    pub abort_step: Option<usize>,
}

impl RolloutTrace {
    pub fn aborted(&self) -> bool {
        self.abort_step.is_some()
    }

    /// Summed goal distance per recorded state.
    pub fn tracking_error(&self) -> Vec<f64> {
        self.distances.iter().map(|d| d.iter().sum()).collect()
    }
}

/// Simulates `steps` Euler steps (the environment horizon when `None`) from
/// an initial state drawn with the scenario seed. The boundary starts from
/// the scenario profile, else from `beta`, else from the first vertex.
pub fn rollout<C: Controller + ?Sized>(
    env: &EnvironmentModel,
    controller: &C,
    scenario: &Scenario,
    beta: Option<&[f64]>,
    steps: Option<usize>,
) -> Result<RolloutTrace> {
    let steps = steps.unwrap_or(env.horizon);
    let boundary = match (scenario.profile.initial_boundary(), beta) {
        (Some(b), _) => b,
        (None, Some(beta)) => env.boundary_from_beta(beta)?,
        (None, None) => env.boundary_from_beta(&env.uncertainty_vertices[0])?,
    };
    let mut rng = stream_rng(scenario.seed, Stream::Rollout);
    let init = sample_initial_state(env, &scenario.init_box, boundary, &mut rng);
    rollout_from(env, controller, init, scenario, steps)
}

/// Like [`rollout`] from a given initial state.
pub fn rollout_from<C: Controller + ?Sized>(
    env: &EnvironmentModel,
    controller: &C,
    init: NetworkState,
    scenario: &Scenario,
    steps: usize,
) -> Result<RolloutTrace> {
    let distances_of = |s: &NetworkState| -> Vec<f64> { (0..env.n()).map(|i| env.dist_to_goal(i, &s.nodes[i])).collect() };
    let mut trace = RolloutTrace {
        distances: vec![distances_of(&init)],
        v_values: controller.certificate_values(&init)?.map(|v| vec![v]),
        states: vec![init],
        controls: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        dt: env.dt,
        abort_step: None,
    };
    for k in 0..steps {
        let state = trace.states.last().expect("non-empty");
        let controls: Vec<Vec<f64>> = (0..env.n())
            .map(|i| controller.control(env, i, state).map(|u| env.clamp_control(&u).0))
            .collect::<Result<_>>()?;
        if controls.iter().flatten().any(|u| !u.is_finite()) {
            trace.abort_step = Some(k);
            break;
        }
        let next = match env.step_euler(state, &controls, &scenario.profile) {
            Ok(r) => r.state,
            Err(Error::Abort { step, .. }) => {
                trace.abort_step = Some(step);
                break;
            }
            Err(e) => return Err(e),
        };
        let dist = distances_of(&next);
        trace.rewards.push(env.reward_offset - dist.iter().sum::<f64>());
        trace.distances.push(dist);
        if let (Some(vs), Some(v)) = (trace.v_values.as_mut(), controller.certificate_values(&next)?) {
            vs.push(v);
        }
        trace.controls.push(controls);
        trace.states.push(next);
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tracking_error: Vec<f64>,
    pub cumulative_reward: f64,
    pub final_error: f64,
    /// Mean tracking error over the whole trace.
    pub mean_error: f64,
    /// Mean tracking error over the last [`TAIL_STEPS`] steps.
    pub tail_error: f64,
    pub aborted: bool,
}

pub fn metrics(trace: &RolloutTrace) -> Result<Metrics> {
    let e = trace.tracking_error();
    if e.is_empty() {
        return Err(Error::TraceTooShort(0));
    }
    let tail = &e[e.len().saturating_sub(TAIL_STEPS)..];
    Ok(Metrics {
        cumulative_reward: trace.rewards.iter().sum(),
        final_error: *e.last().expect("non-empty"),
        mean_error: e.iter().sum::<f64>() / e.len() as f64,
        tail_error: tail.iter().sum::<f64>() / tail.len() as f64,
        aborted: trace.aborted(),
        tracking_error: e,
    })
}

/// One controller on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub controller: String,
    pub seed: u64,
    pub cumulative_reward: f64,
    pub mean_error: f64,
    pub final_error: f64,
    pub tail_error: f64,
    pub failed: bool,
}

/// Mean ± std over seeds for one controller, plus per-step error curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub controller: String,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub error_mean: f64,
    pub error_std: f64,
    pub error_curve_mean: Vec<f64>,
    pub error_curve_std: Vec<f64>,
    pub failed_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub entries: Vec<ComparisonEntry>,
    pub rows: Vec<ComparisonRow>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    (m, var.sqrt())
}

/// Rolls out every controller on every seed (in parallel; each rollout has
/// its own seed-derived stream) and aggregates.
pub fn compare(
    env: &EnvironmentModel,
    controllers: &[(&str, &dyn Controller)],
    seeds: &[u64],
    steps: Option<usize>,
) -> Result<Comparison> {
    if controllers.is_empty() || seeds.is_empty() {
        return Err(Error::Config("compare needs at least one controller and one seed".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..controllers.len()).flat_map(|c| seeds.iter().map(move |&s| (c, s))).collect();
    let results: Vec<(ComparisonEntry, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(c, seed)| -> Result<_> {
            let (name, ctrl) = controllers[c];
            let trace = rollout(env, ctrl, &env.scenario(seed), None, steps)?;
            let m = metrics(&trace)?;
            Ok((
                ComparisonEntry {
                    controller: name.to_string(),
                    seed,
                    cumulative_reward: m.cumulative_reward,
                    mean_error: m.mean_error,
                    final_error: m.final_error,
                    tail_error: m.tail_error,
                    failed: m.aborted,
                },
                m.tracking_error,
            ))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(controllers.len());
    for (c, (name, _)) in controllers.iter().enumerate() {
        let mine: Vec<&(ComparisonEntry, Vec<f64>)> = results[c * seeds.len()..(c + 1) * seeds.len()].iter().collect();
        let ok: Vec<&(ComparisonEntry, Vec<f64>)> = mine.iter().copied().filter(|(e, _)| !e.failed).collect();
        let rewards: Vec<f64> = ok.iter().map(|(e, _)| e.cumulative_reward).collect();
        let errors: Vec<f64> = ok.iter().map(|(e, _)| e.mean_error).collect();
        let len = ok.iter().map(|(_, c)| c.len()).min().unwrap_or(0);
        let (curve_mean, curve_std): (Vec<f64>, Vec<f64>) = (0..len)
            .map(|t| mean_std(&ok.iter().map(|(_, c)| c[t]).collect::<Vec<_>>()))
            .unzip();
        let (reward_mean, reward_std) = mean_std(&rewards);
        let (error_mean, error_std) = mean_std(&errors);
        rows.push(ComparisonRow {
            controller: name.to_string(),
            reward_mean,
            reward_std,
            error_mean,
            error_std,
            error_curve_mean: curve_mean,
            error_curve_std: curve_std,
            failed_runs: mine.len() - ok.len(),
        });
    }
    Ok(Comparison {
        entries: results.into_iter().map(|(e, _)| e).collect(),
        rows,
    })
}

/// Columns: `step, time, dist_0 … dist_{n−1}, total_error, reward`. The
/// initial state has an empty reward.
pub fn write_trace_csv<W: Write>(out: W, trace: &RolloutTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = trace.distances.first().map_or(0, |d| d.len());
    let mut header = vec!["step".to_string(), "time".to_string()];
    header.extend((0..n).map(|i| format!("dist_{i}")));
    header.push("total_error".into());
    header.push("reward".into());
    w.write_record(&header)?;
    for (t, d) in trace.distances.iter().enumerate() {
        let mut rec = vec![t.to_string(), (t as f64 * trace.dt).to_string()];
        rec.extend(d.iter().map(|v| v.to_string()));
        rec.push(d.iter().sum::<f64>().to_string());
        rec.push(if t == 0 { String::new() } else { trace.rewards[t - 1].to_string() });
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: `controller, seed, cumulative_reward, mean_error, final_error`.
pub fn write_comparison_csv<W: Write>(out: W, cmp: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["controller", "seed", "cumulative_reward", "mean_error", "final_error"])?;
    for e in &cmp.entries {
        w.write_record([
            e.controller.clone(),
            e.seed.to_string(),
            e.cumulative_reward.to_string(),
            e.mean_error.to_string(),
            e.final_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environments::{BoundaryProfile, EnvConfig};
    use crate::evaluation::BaselineSpec;

    struct Hold;

    impl Controller for Hold {
        fn control(&self, env: &EnvironmentModel, _i: usize, _s: &NetworkState) -> Result<Vec<f64>> {
            Ok(vec![0.0; env.control_dim()])
        }
    }

    #[test]
    fn constant_trace_on_goal_has_full_reward() {
        // trucks at equal gaps moving with the boundary: f = 0
        let env = EnvConfig::platoon(3).build().unwrap();
        let init = NetworkState {
            nodes: vec![vec![1.0, 1.0, 2.0]; 3],
            boundary: vec![2.0, 2.0],
            t: 0.0,
            step: 0,
        };
        let sc = Scenario {
            profile: BoundaryProfile::Constant,
            init_box: env.test_init_box.clone(),
            seed: 0,
        };
        let mut env100 = env.clone();
        env100.reward_offset = 100.0;
        let tr = rollout_from(&env100, &Hold, init.clone(), &sc, 500).unwrap();
        assert_eq!(tr.states.len(), 501);
        assert!(tr.states.iter().all(|s| s.nodes == init.nodes));
        let m = metrics(&tr).unwrap();
        assert_eq!(m.cumulative_reward, 50000.0);
        assert!(m.tracking_error.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn lead_velocity_follows_paper_profile() {
        let env = EnvConfig::platoon(5).build().unwrap();
        let tr = rollout(&env, &Hold, &env.scenario(0), None, Some(300)).unwrap();
        let mut v = 2.0;
        for (k, s) in tr.states.iter().enumerate() {
            assert_eq!(s.boundary[0], v);
            v += env.dt * (5.0 * (k as f64 * env.dt)).sin();
        }
    }

    #[test]
    fn rollouts_are_deterministic_and_compare_aggregates() {
        let env = EnvConfig::platoon(5).build().unwrap();
        let lqr = NominalController::build(&env, &BaselineSpec::Nominal).unwrap();
        let a = rollout(&env, &lqr, &env.scenario(3), None, None).unwrap();
        let b = rollout(&env, &lqr, &env.scenario(3), None, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states.len(), env.horizon + 1);

        let one = compare(&env, &[("lqr", &lqr)], &[3], None).unwrap();
        let m = metrics(&a).unwrap();
        assert_eq!(one.rows[0].reward_mean, m.cumulative_reward);
        assert_eq!(one.rows[0].reward_std, 0.0);

        let two = compare(&env, &[("a", &lqr), ("b", &lqr)], &[0, 1, 2, 3], None).unwrap();
        assert_eq!(two.entries.len(), 8);
        let (ra, rb) = (&two.rows[0], &two.rows[1]);
        assert_eq!((ra.reward_mean, ra.error_mean, &ra.error_curve_mean), (rb.reward_mean, rb.error_mean, &rb.error_curve_mean));
        for e in &two.entries {
            let seq = metrics(&rollout(&env, &lqr, &env.scenario(e.seed), None, None).unwrap()).unwrap();
            assert_eq!(e.cumulative_reward, seq.cumulative_reward);
        }
        assert!(compare(&env, &[], &[0], None).is_err());
    }

    #[test]
    fn reward_order_reverses_error_order() {
        let env = EnvConfig::platoon(5).build().unwrap();
        let lqr = NominalController::build(&env, &BaselineSpec::Nominal).unwrap();
        let mut runs = Vec::new();
        for seed in 0..3 {
            for c in [&lqr as &dyn Controller, &Hold] {
                let tr = rollout(&env, c, &env.scenario(seed), None, None).unwrap();
                let summed: f64 = tr.tracking_error()[1..].iter().sum();
                runs.push((metrics(&tr).unwrap().cumulative_reward, summed));
            }
        }
        for x in &runs {
            for y in &runs {
                assert_eq!(x.0 > y.0, x.1 < y.1);
            }
        }
    }

    #[test]
    fn csv_columns() {
        let env = EnvConfig::platoon(2).build().unwrap();
        let tr = rollout(&env, &Hold, &env.scenario(0), None, Some(3)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "step,time,dist_0,dist_1,total_error,reward");
        assert_eq!(text.lines().count(), 5);
    }
}
