//! Sampled checking of the implication
//! `V_i ≥ max_j χ_i(V_j) ⇒ ∇V_i·f_i ≤ −α_i V_i` and of the goal conditions.

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::CertificateBundle;
use crate::environments::{sample_batch, sample_goal_batch, EnvironmentModel, Neighbor, NetworkState, StateBatch};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Samples per parallel shard.
const SHARD: usize = 4096;

/// Outcome of the implication test for one node at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub premise: bool,
    /// `∇V_i·f_i + α_i V_i`; the conclusion holds when this is `≤ m_B`.
    pub residual: f64,
    pub violated: bool,
}

/// The implication predicate shared by every checker.
pub fn classify(v: f64, max_term: f64, v_dot: f64, alpha: f64, margin_a: f64, margin_b: f64) -> Verdict {
    let premise = v >= max_term - margin_a;
    let residual = v_dot + alpha * v;
    Verdict {
        premise,
        residual,
        violated: premise && residual > margin_b,
    }
}

/// Per-node values entering the predicate, for a batch of states.
#[derive(Debug, Clone)]
pub struct NodeValues {
    pub v: Vec<Array1<f64>>,
    pub v_dot: Vec<Array1<f64>>,
    pub max_term: Vec<Array1<f64>>,
}

/// `V_i`, `∇V_i·f_i(x, π(x))` and `χ_i(max_j V_j)` (0 without node
/// neighbors) for every node and state of `batch`.
pub fn node_values(bundle: &CertificateBundle, env: &EnvironmentModel, batch: &StateBatch) -> Result<NodeValues> {
    let n = env.n();
    let count = batch.len();
    let mut v = Vec::with_capacity(n);
    let mut v_dot = Vec::with_capacity(n);
    for i in 0..n {
        let x = &batch.nodes[i];
        let u = bundle.policy(i).eval_batch(x.view())?;
        let mut f = ndarray::Array2::zeros((count, env.state_dim()));
        for b in 0..count {
            let rows = batch.node_rows(b);
            let (ub, _) = env.clamp_control(u.row(b).as_slice().expect("standard layout"));
            let fb = env.node_derivative(i, &rows, batch.boundary_row(b), &ub);
            f.row_mut(b).assign(&ndarray::ArrayView1::from(&fb[..]));
        }
        let (vi, vdi, _) = bundle.certificate(i).forward_jvp(x.view(), f.view())?;
        v.push(vi);
        v_dot.push(vdi);
    }
    let max_term = (0..n)
        .map(|i| {
            let cert = bundle.certificate(i);
            Array1::from_shape_fn(count, |b| {
                env.topology.neighbors[i]
                    .iter()
                    .filter_map(|nb| match nb {
                        Neighbor::Node(j) => Some(v[*j][b]),
                        Neighbor::Boundary(_) => None,
                    })
                    .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
                    .map_or(0.0, |m| cert.gain(m))
            })
        })
        .collect();
    Ok(NodeValues { v, v_dot, max_term })
}

/// Verdicts for one state, evaluated on its own (batch of one).
pub fn evaluate_state(
    bundle: &CertificateBundle,
    env: &EnvironmentModel,
    state: &NetworkState,
    margin_a: f64,
    margin_b: f64,
) -> Result<Vec<Verdict>> {
    let batch = StateBatch::from_states(std::slice::from_ref(state));
    let vals = node_values(bundle, env, &batch)?;
    Ok((0..env.n())
        .map(|i| {
            let alpha = bundle.certificate(i).alpha;
            classify(vals.v[i][0], vals.max_term[i][0], vals.v_dot[i][0], alpha, margin_a, margin_b)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub node: usize,
    pub state: NetworkState,
    pub residual: f64,
    pub v: f64,
    pub max_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRates {
    pub node: usize,
    pub premise_count: usize,
    pub violation_count: usize,
    /// Violations among samples where the premise holds.
    pub conditional_rate: f64,
    /// Violations among all samples.
    pub unconditional_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub n_samples: usize,
    pub n_goal_samples: usize,
    pub margin_a: f64,
    pub margin_b: f64,
    pub delta_off: f64,
    pub seed: u64,
    /// Uncertainty parameter pinned for all samples; drawn per sample when
    /// absent.
    pub beta: Option<Vec<f64>>,
    pub max_counterexamples: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            n_goal_samples: 10_000,
            margin_a: 0.0,
            margin_b: 0.0,
            delta_off: 1e-2,
            seed: 0,
            beta: None,
            max_counterexamples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub n_samples: usize,
    pub margin_a: f64,
    pub margin_b: f64,
    pub beta: Option<Vec<f64>>,
    /// Mean `|V_i|` over goal samples and nodes.
    pub goal_zero_mean: f64,
    pub goal_zero_per_node: Vec<f64>,
    /// Smallest `V_i` over samples farther than `delta_off` from the goal.
    pub positivity_min: f64,
    pub delta_off: f64,
    pub nodes: Vec<NodeRates>,
    /// Conditional rate per node.
    pub implication_violation_rate: Vec<f64>,
    pub unconditional_violation_rate: Vec<f64>,
    /// Largest-residual violations, worst first.
    pub counterexamples: Vec<Counterexample>,
    pub unchecked_assumptions: Vec<String>,
}

impl CheckReport {
    pub fn max_violation_rate(&self) -> f64 {
        self.implication_violation_rate.iter().copied().fold(0.0, f64::max)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "samples {}  margins m_A={} m_B={}\ngoal |V| mean {:.3e}  min V off goal (>{}) {:.3e}\n",
            self.n_samples, self.margin_a, self.margin_b, self.goal_zero_mean, self.delta_off, self.positivity_min
        );
        for r in &self.nodes {
            s += &format!(
                "node {:>3}: premise {:>7}  violations {:>6}  rate {:.4} (unconditional {:.4})\n",
                r.node, r.premise_count, r.violation_count, r.conditional_rate, r.unconditional_rate
            );
        }
        s
    }
}

/// Violation counts and worst cases over a batch.
#[derive(Debug, Clone, Default)]
pub struct Tally {
    pub premise: Vec<usize>,
    pub violations: Vec<usize>,
    /// `(state index, node)` of every violation, in index order.
    pub violating: Vec<(usize, usize)>,
    pub worst: Vec<(f64, usize, usize)>,
    pub samples: usize,
}

impl Tally {
    fn new(n: usize) -> Self {
        Self {
            premise: vec![0; n],
            violations: vec![0; n],
            ..Default::default()
        }
    }

    fn merge(&mut self, other: Tally, offset: usize) {
        for (a, b) in self.premise.iter_mut().zip(&other.premise) {
            *a += b;
        }
        for (a, b) in self.violations.iter_mut().zip(&other.violations) {
            *a += b;
        }
        self.violating.extend(other.violating.iter().map(|&(s, i)| (s + offset, i)));
        self.worst.extend(other.worst.iter().map(|&(r, s, i)| (r, s + offset, i)));
        self.samples += other.samples;
    }
}

/// Classifies every node of every state in `batch`.
pub fn check_batch(
    bundle: &CertificateBundle,
    env: &EnvironmentModel,
    batch: &StateBatch,
    margin_a: f64,
    margin_b: f64,
) -> Result<Tally> {
    let vals = node_values(bundle, env, batch)?;
    let n = env.n();
    let mut t = Tally::new(n);
    t.samples = batch.len();
    for b in 0..batch.len() {
        for i in 0..n {
            let alpha = bundle.certificate(i).alpha;
            let vd = classify(vals.v[i][b], vals.max_term[i][b], vals.v_dot[i][b], alpha, margin_a, margin_b);
            if vd.premise {
                t.premise[i] += 1;
            }
            if vd.violated {
                t.violations[i] += 1;
                t.violating.push((b, i));
                t.worst.push((vd.residual, b, i));
            }
        }
    }
    Ok(t)
}

fn shards(total: usize) -> Vec<usize> {
    let mut out = vec![SHARD; total / SHARD];
    if total % SHARD > 0 {
        out.push(total % SHARD);
    }
    out
}

/// Checks the implication on `n_samples` fresh network states plus goal and
/// off-goal conditions. Never fails on violations; they are reported.
pub fn check_certificate(bundle: &CertificateBundle, env: &EnvironmentModel, opts: &CheckOptions) -> Result<CheckReport> {
    bundle.check_env(env)?;
    if opts.n_samples == 0 {
        return Err(Error::Config("n_samples must be >= 1".into()));
    }
    if !(opts.margin_a >= 0.0 && opts.margin_b >= 0.0) {
        return Err(Error::Config("margins must be >= 0".into()));
    }
    let n = env.n();
    let mut rng = stream_rng(opts.seed, Stream::Verify);
    let batches: Vec<StateBatch> = shards(opts.n_samples)
        .into_iter()
        .map(|c| sample_batch(env, c, opts.beta.as_deref(), &mut rng))
        .collect::<Result<_>>()?;
    let goal_batches: Vec<StateBatch> = shards(opts.n_goal_samples)
        .into_iter()
        .map(|c| sample_goal_batch(env, c, &mut rng))
        .collect::<Result<_>>()?;

    let tallies: Vec<Tally> = batches
        .par_iter()
        .map(|b| check_batch(bundle, env, b, opts.margin_a, opts.margin_b))
        .collect::<Result<_>>()?;
    let mut tally = Tally::new(n);
    let mut offsets = Vec::with_capacity(batches.len());
    for t in tallies {
        let offset = tally.samples;
        offsets.push(offset);
        tally.merge(t, offset);
    }

    let mut positivity_min = f64::INFINITY;
    for b in &batches {
        for i in 0..n {
            let v = bundle.certificate(i).eval_batch(b.nodes[i].view())?;
            for (k, row) in b.nodes[i].rows().into_iter().enumerate() {
                if env.dist_to_goal(i, row.as_slice().expect("standard layout")) > opts.delta_off {
                    positivity_min = positivity_min.min(v[k]);
                }
            }
        }
    }

    let mut goal_sum = vec![0.0; n];
    for b in &goal_batches {
        for (i, acc) in goal_sum.iter_mut().enumerate() {
            *acc += bundle.certificate(i).eval_batch(b.nodes[i].view())?.iter().map(|v| v.abs()).sum::<f64>();
        }
    }
    let goal_zero_per_node: Vec<f64> = goal_sum.iter().map(|s| s / opts.n_goal_samples.max(1) as f64).collect();
    let goal_zero_mean = goal_zero_per_node.iter().sum::<f64>() / n as f64;

    tally.worst.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    tally.worst.truncate(opts.max_counterexamples);
    let mut counterexamples = Vec::with_capacity(tally.worst.len());
    for &(residual, s, i) in &tally.worst {
        let shard = offsets.partition_point(|&o| o <= s) - 1;
        let state = batches[shard].state(s - offsets[shard]);
        let vals = node_values(bundle, env, &StateBatch::from_states(std::slice::from_ref(&state)))?;
        counterexamples.push(Counterexample {
            node: i,
            residual,
            v: vals.v[i][0],
            max_term: vals.max_term[i][0],
            state,
        });
    }

    let nodes: Vec<NodeRates> = (0..n)
        .map(|i| NodeRates {
            node: i,
            premise_count: tally.premise[i],
            violation_count: tally.violations[i],
            conditional_rate: if tally.premise[i] == 0 {
                0.0
            } else {
                tally.violations[i] as f64 / tally.premise[i] as f64
            },
            unconditional_rate: tally.violations[i] as f64 / opts.n_samples as f64,
        })
        .collect();
    Ok(CheckReport {
        n_samples: opts.n_samples,
        margin_a: opts.margin_a,
        margin_b: opts.margin_b,
        beta: opts.beta.clone(),
        goal_zero_mean,
        goal_zero_per_node,
        positivity_min,
        delta_off: opts.delta_off,
        implication_violation_rate: nodes.iter().map(|r| r.conditional_rate).collect(),
        unconditional_violation_rate: nodes.iter().map(|r| r.unconditional_rate).collect(),
        nodes,
        counterexamples,
        unchecked_assumptions: vec![
            "class-K-infinity bounds on each V_i (only V = 0 on goal and V > 0 off goal are sampled)".into(),
            "samples cover the training box only; no bound holds between samples".into(),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::IssCertificate;
    use crate::environments::EnvConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_bundle(env: &EnvironmentModel) -> CertificateBundle {
        let mut b = CertificateBundle::init(env, &[8], 1.0, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for g in &mut b.groups {
            g.certificate = IssCertificate::zeros(g.certificate.goal.clone(), &[8], 1.0).unwrap();
        }
        b
    }

    fn small(n: usize) -> CheckOptions {
        CheckOptions {
            n_samples: n,
            n_goal_samples: 500,
            ..Default::default()
        }
    }

    #[test]
    fn zero_certificate_never_violates() {
        let env = EnvConfig::platoon(5).build().unwrap();
        let r = check_certificate(&zero_bundle(&env), &env, &small(2000)).unwrap();
        assert!(r.implication_violation_rate.iter().all(|&x| x == 0.0));
        assert!(r.nodes.iter().all(|n| n.premise_count == 2000));
        assert_eq!(r.goal_zero_mean, 0.0);
        assert!(!r.unchecked_assumptions.is_empty());
    }

    #[test]
    fn constant_increase_violates_where_premise_holds() {
        // q(x) = ReLU(x_v) gives ∇V·f = u at node 0 if only q is nonzero.
        let env = EnvConfig::platoon(1).build().unwrap();
        let mut b = zero_bundle(&env);
        let c = &mut b.groups[0].certificate;
        c.alpha = 1e-12;
        // q = ReLU(1) constant: V = 1, ∇V = 0, residual = αV ≈ 1e-12 > 0
        c.q_net.layers.last_mut().unwrap().bias[0] = 1.0;
        let r = check_certificate(&b, &env, &small(300)).unwrap();
        assert_eq!(r.implication_violation_rate, vec![1.0]);
        assert_eq!(r.nodes[0].premise_count, 300);
        let mut m = small(300);
        m.margin_b = 1e-6;
        assert_eq!(check_certificate(&b, &env, &m).unwrap().implication_violation_rate, vec![0.0]);
    }

    #[test]
    fn counterexamples_reproduce() {
        let env = EnvConfig::platoon(5).build().unwrap();
        let b = CertificateBundle::init(&env, &[16, 16], 1.0, true, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let r = check_certificate(&b, &env, &small(5000)).unwrap();
        assert!(!r.counterexamples.is_empty());
        for w in r.counterexamples.windows(2) {
            assert!(w[0].residual >= w[1].residual);
        }
        for cx in &r.counterexamples {
            let v = evaluate_state(&b, &env, &cx.state, 0.0, 0.0).unwrap();
            assert!(v[cx.node].violated);
            assert!((v[cx.node].residual - cx.residual).abs() <= 1e-12 * cx.residual.abs().max(1.0));
        }
    }

    #[test]
    fn margins_are_monotone() {
        let env = EnvConfig::platoon(3).build().unwrap();
        let b = CertificateBundle::init(&env, &[16], 1.0, true, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut prev = f64::INFINITY;
        for mb in [0.0, 0.5, 1.0, 5.0] {
            let mut o = small(2000);
            o.margin_b = mb;
            let r = check_certificate(&b, &env, &o).unwrap();
            let total: usize = r.nodes.iter().map(|n| n.violation_count).sum();
            assert!(total as f64 <= prev);
            prev = total as f64;
        }
    }
}
