//! Training losses and their gradients.
//!
//! Every term is averaged over the batch for each node and then summed over
//! nodes. Gradients are exact reverse-mode gradients of the weighted sum,
//! accumulated per share group in node order.

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use super::config::{GradMode, TrainConfig};
use crate::certificates::{sigmoid, CertGrads, CertJvpTape, CertTape, CertificateBundle, PolicyTape};
use crate::diffcore::MlpGrads;
use crate::environments::{EnvironmentModel, Neighbor, StateBatch};
use crate::error::{Error, Result};
use crate::evaluation::NominalController;

/// Multipliers of the four loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub goal: f64,
    pub a: f64,
    pub b: f64,
    pub ctrl: f64,
}

impl LossWeights {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            goal: cfg.mu_goal,
            a: cfg.mu_a,
            b: cfg.mu_b,
            ctrl: cfg.mu_ctrl,
        }
    }

    fn combine(&self, goal: f64, a: f64, b: f64, ctrl: f64) -> f64 {
        self.goal * goal + self.a * a + self.b * b + self.ctrl * ctrl
    }
}

/// Loss terms summed over nodes, with `total` weighted by the configured μ.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub goal: f64,
    pub loss_a: f64,
    pub loss_b: f64,
    pub ctrl: f64,
    pub total: f64,
    pub per_group: Vec<f64>,
}

/// Which parameter sets receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Updates {
    pub certificate: bool,
    pub policy: bool,
    pub gain: bool,
}

impl Updates {
    pub const ALL: Updates = Updates {
        certificate: true,
        policy: true,
        gain: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupGrads {
    pub certificate: CertGrads,
    pub gain_k: f64,
    pub policy: MlpGrads,
}

/// Gradient request: the weights defining the objective and the parameter
/// sets to differentiate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradRequest {
    pub weights: LossWeights,
    pub updates: Updates,
}

enum DecreaseTape {
    Analytic(CertJvpTape),
    OneStep { now: CertTape, next: CertTape },
}

struct NodeForward {
    u: Array2<f64>,
    u_nom: Array2<f64>,
    policy_tape: PolicyTape,
    /// Row-major `d × p` input matrix per sample.
    gmat: Vec<Vec<f64>>,
    v: Array1<f64>,
    v_dot: Array1<f64>,
    decrease_tape: DecreaseTape,
    v_goal: Array1<f64>,
    goal_tape: CertTape,
}

struct NodeUpstream {
    g_v: Array1<f64>,
    g_vdot: Array1<f64>,
    g_goal: Array1<f64>,
    g_u: Array2<f64>,
}

/// Shared inputs of one loss evaluation.
pub struct LossContext<'a> {
    pub env: &'a EnvironmentModel,
    /// Without a nominal controller the control term is 0.
    pub nominal: Option<&'a NominalController>,
    pub eps_a: f64,
    pub eps_b: f64,
    pub grad_mode: GradMode,
    pub weights: LossWeights,
}

impl<'a> LossContext<'a> {
    pub fn new(env: &'a EnvironmentModel, nominal: &'a NominalController, cfg: &TrainConfig) -> Self {
        Self {
            env,
            nominal: Some(nominal),
            eps_a: cfg.eps_a,
            eps_b: cfg.eps_b,
            grad_mode: cfg.grad_mode,
            weights: LossWeights::from_config(cfg),
        }
    }

    fn node_forward(&self, bundle: &CertificateBundle, i: usize, batch: &StateBatch, goal: &StateBatch) -> Result<NodeForward> {
        let env = self.env;
        let count = batch.len();
        let x = &batch.nodes[i];
        let (u, policy_tape) = bundle.policy(i).forward(x.view())?;
        let d = env.state_dim();
        let p = env.control_dim();
        let mut u_nom = Array2::zeros((count, p));
        let mut f = Array2::zeros((count, d));
        let mut gmat = Vec::with_capacity(count);
        for b in 0..count {
            let rows = batch.node_rows(b);
            let boundary = batch.boundary_row(b);
            let ub = u.row(b).to_vec();
            match self.nominal {
                Some(nominal) => {
                    let obs = env.local_obs(i, &rows, boundary);
                    let (nom, _) = env.clamp_control(&nominal.control(i, rows[i], &obs));
                    u_nom.row_mut(b).assign(&ArrayView1::from(&nom[..]));
                }
                None => u_nom.row_mut(b).assign(&u.row(b)),
            }
            let fb = env.node_derivative(i, &rows, boundary, &ub);
            if let Some(k) = fb.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("dynamics of node {i}, sample {b}, component {k}")));
            }
            f.row_mut(b).assign(&ArrayView1::from(&fb[..]));
            gmat.push(env.node_control_matrix(i, rows[i]));
        }
        let cert = bundle.certificate(i);
        let (v, v_dot, decrease_tape) = match self.grad_mode {
            GradMode::Analytic => {
                let (v, v_dot, tape) = cert.forward_jvp(x.view(), f.view())?;
                (v, v_dot, DecreaseTape::Analytic(tape))
            }
            GradMode::OneStep => {
                let dt = env.dt;
                let x_next = x + &(&f * dt);
                let (v, now) = cert.forward(x.view())?;
                let (v_next, next) = cert.forward(x_next.view())?;
                let v_dot = (&v_next - &v) / dt;
                (v, v_dot, DecreaseTape::OneStep { now, next })
            }
        };
        let (v_goal, goal_tape) = cert.forward(goal.nodes[i].view())?;
        Ok(NodeForward {
            u,
            u_nom,
            policy_tape,
            gmat,
            v,
            v_dot,
            decrease_tape,
            v_goal,
            goal_tape,
        })
    }

    /// Loss terms at `bundle` (evaluated as stored, no normalization) and,
    /// when `request` is given, gradients of `request.weights`-combined loss
    /// per share group.
    pub fn evaluate(
        &self,
        bundle: &CertificateBundle,
        batch: &StateBatch,
        goal: &StateBatch,
        request: Option<GradRequest>,
    ) -> Result<(LossBreakdown, Option<Vec<GroupGrads>>)> {
        let env = self.env;
        bundle.check_env(env)?;
        if batch.is_empty() || goal.is_empty() {
            return Err(Error::Config("loss evaluation needs non-empty batches".into()));
        }
        let n = env.n();
        let count = batch.len() as f64;
        let goal_count = goal.len() as f64;

        let fwd: Vec<NodeForward> = (0..n)
            .into_par_iter()
            .map(|i| self.node_forward(bundle, i, batch, goal))
            .collect::<Result<_>>()?;

        let w = request.map(|r| r.weights).unwrap_or(LossWeights {
            goal: 0.0,
            a: 0.0,
            b: 0.0,
            ctrl: 0.0,
        });
        let mut up: Vec<NodeUpstream> = fwd
            .iter()
            .map(|nf| NodeUpstream {
                g_v: Array1::zeros(nf.v.len()),
                g_vdot: Array1::zeros(nf.v.len()),
                g_goal: Array1::zeros(nf.v_goal.len()),
                g_u: Array2::zeros(nf.u.dim()),
            })
            .collect();
        let mut g_k = vec![0.0; bundle.groups.len()];
        let mut terms = vec![[0.0; 4]; n];

        for i in 0..n {
            let nf = &fwd[i];
            let cert = bundle.certificate(i);

            let goal_term = nf.v_goal.iter().map(|v| v.abs()).sum::<f64>() / goal_count;
            up[i].g_goal = nf.v_goal.mapv(|v| w.goal * sign(v) / goal_count);

            let diff = &nf.u - &nf.u_nom;
            let ctrl_term = diff.iter().map(|e| e * e).sum::<f64>() / count;
            up[i].g_u = &diff * (2.0 * w.ctrl / count);

            let alpha = cert.alpha;
            let mut b_term = 0.0;
            for b in 0..nf.v.len() {
                let h = nf.v_dot[b] + alpha * nf.v[b] + self.eps_b;
                if h > 0.0 {
                    b_term += h;
                    up[i].g_vdot[b] += w.b / count;
                    up[i].g_v[b] += w.b * alpha / count;
                }
            }
            b_term /= count;

            let nbs: Vec<usize> = env.topology.neighbors[i]
                .iter()
                .filter_map(|nb| match nb {
                    Neighbor::Node(j) => Some(*j),
                    Neighbor::Boundary(_) => None,
                })
                .collect();
            let chi = sigmoid(cert.gain_k);
            let dchi = chi * (1.0 - chi);
            let group = bundle.node_group[i];
            let mut a_term = 0.0;
            for b in 0..nf.v.len() {
                let mut arg: Option<usize> = None;
                let mut m = 0.0;
                for &j in &nbs {
                    let vj = fwd[j].v[b];
                    if arg.is_none() || vj > m {
                        m = vj;
                        arg = Some(j);
                    }
                }
                let h = nf.v[b] - chi * m + self.eps_a;
                if h > 0.0 {
                    a_term += h;
                    up[i].g_v[b] += w.a / count;
                    if let Some(j) = arg {
                        up[j].g_v[b] -= w.a * chi / count;
                        g_k[group] -= w.a * m * dchi / count;
                    }
                }
            }
            a_term /= count;

            terms[i] = [goal_term, a_term, b_term, ctrl_term];
            for (t, name) in terms[i].iter().zip(["goal", "A", "B", "ctrl"]) {
                if !t.is_finite() {
                    return Err(Error::NonFinite(format!("loss term {name} at node {i}")));
                }
            }
        }

        let mu = self.weights;
        let sum_term = |k: usize| terms.iter().map(|t| t[k]).sum::<f64>();
        let (goal_sum, a_sum, b_sum, ctrl_sum) = (sum_term(0), sum_term(1), sum_term(2), sum_term(3));
        let mut per_group = vec![0.0; bundle.groups.len()];
        for (i, t) in terms.iter().enumerate() {
            per_group[bundle.node_group[i]] += mu.combine(t[0], t[1], t[2], t[3]);
        }
        let breakdown = LossBreakdown {
            goal: goal_sum,
            loss_a: a_sum,
            loss_b: b_sum,
            ctrl: ctrl_sum,
            total: mu.combine(goal_sum, a_sum, b_sum, ctrl_sum),
            per_group,
        };

        let Some(req) = request else {
            return Ok((breakdown, None));
        };

        let dt = env.dt;
        let p = env.control_dim();
        let d = env.state_dim();
        let node_grads: Vec<(Option<CertGrads>, Option<MlpGrads>)> = fwd
            .into_par_iter()
            .zip(up.into_par_iter())
            .enumerate()
            .map(|(i, (nf, mut upn))| -> Result<_> {
                let cert = bundle.certificate(i);
                let need_tangent = req.updates.policy;
                let mut cert_grads = None;
                let mut g_f: Option<Array2<f64>> = None;
                if req.updates.certificate || need_tangent {
                    let (mut cg, gf) = match nf.decrease_tape {
                        DecreaseTape::Analytic(tape) => {
                            let (cg, _gx, gt) = cert.backprop_jvp(tape, &upn.g_v, &upn.g_vdot)?;
                            (cg, gt)
                        }
                        DecreaseTape::OneStep { now, next } => {
                            let g_next = &upn.g_vdot / dt;
                            let g_now = &upn.g_v - &g_next;
                            let (mut cg, _) = cert.backprop(now, &g_now)?;
                            let (cg_next, gx_next) = cert.backprop(next, &g_next)?;
                            cg.add_assign(&cg_next);
                            (cg, gx_next * dt)
                        }
                    };
                    let (cg_goal, _) = cert.backprop(nf.goal_tape, &upn.g_goal)?;
                    cg.add_assign(&cg_goal);
                    cert_grads = req.updates.certificate.then_some(cg);
                    g_f = Some(gf);
                }
                let mut policy_grads = None;
                if req.updates.policy {
                    if let Some(gf) = g_f {
                        for (b, gm) in nf.gmat.iter().enumerate() {
                            for c in 0..p {
                                let mut acc = 0.0;
                                for r in 0..d {
                                    acc += gm[r * p + c] * gf[[b, r]];
                                }
                                upn.g_u[[b, c]] += acc;
                            }
                        }
                    }
                    let (pg, _) = bundle.policy(i).backprop(nf.policy_tape, upn.g_u.view())?;
                    policy_grads = Some(pg);
                }
                Ok((cert_grads, policy_grads))
            })
            .collect::<Result<_>>()?;

        let mut grads: Vec<GroupGrads> = bundle
            .groups
            .iter()
            .zip(&g_k)
            .map(|(g, &k)| GroupGrads {
                certificate: CertGrads::zeros_like(&g.certificate),
                gain_k: if req.updates.gain { k } else { 0.0 },
                policy: MlpGrads::zeros_like(&g.policy.net),
            })
            .collect();
        for (i, (cg, pg)) in node_grads.into_iter().enumerate() {
            let g = &mut grads[bundle.node_group[i]];
            if let Some(cg) = cg {
                g.certificate.add_assign(&cg);
            }
            if let Some(pg) = pg {
                g.policy.add_assign(&pg);
            }
        }
        Ok((breakdown, Some(grads)))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `Σ_i mean_b |V_i(x_i^goal)|`.
pub fn loss_goal(bundle: &CertificateBundle, goal: &StateBatch) -> Result<f64> {
    if goal.is_empty() {
        return Err(Error::Config("goal batch is empty".into()));
    }
    let mut total = 0.0;
    for i in 0..bundle.n() {
        let v = bundle.certificate(i).eval_batch(goal.nodes[i].view())?;
        total += v.iter().map(|x| x.abs()).sum::<f64>() / goal.len() as f64;
    }
    Ok(total)
}

/// `Σ_i mean_b ReLU(V_i − χ_i(max_j V_j) + ε_A)` over node neighbors only.
pub fn loss_a(bundle: &CertificateBundle, env: &EnvironmentModel, batch: &StateBatch, eps_a: f64) -> Result<f64> {
    bundle.check_env(env)?;
    if batch.is_empty() {
        return Err(Error::Config("state batch is empty".into()));
    }
    let v: Vec<Array1<f64>> = (0..env.n())
        .map(|i| bundle.certificate(i).eval_batch(batch.nodes[i].view()))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    for i in 0..env.n() {
        let cert = bundle.certificate(i);
        let mut acc = 0.0;
        for b in 0..batch.len() {
            let m = env.topology.neighbors[i]
                .iter()
                .filter_map(|nb| match nb {
                    Neighbor::Node(j) => Some(v[*j][b]),
                    Neighbor::Boundary(_) => None,
                })
                .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
                .unwrap_or(0.0);
            acc += (v[i][b] - cert.gain(m) + eps_a).max(0.0);
        }
        total += acc / batch.len() as f64;
    }
    Ok(total)
}

/// `Σ_i mean_b ReLU(∇V_i·f_i + α V_i + ε_B)` with the closed-loop input `π_i(x_i)`.
pub fn loss_b(
    bundle: &CertificateBundle,
    env: &EnvironmentModel,
    batch: &StateBatch,
    eps_b: f64,
    grad_mode: GradMode,
) -> Result<f64> {
    let ctx = LossContext {
        env,
        nominal: None,
        eps_a: 0.0,
        eps_b,
        grad_mode,
        weights: LossWeights {
            goal: 0.0,
            a: 0.0,
            b: 1.0,
            ctrl: 0.0,
        },
    };
    Ok(ctx.evaluate(bundle, batch, batch, None)?.0.loss_b)
}

/// `Σ_i mean_b ‖π_i(x_i) − u_i^nominal‖²` with the nominal input clamped to
/// the actuation box.
pub fn loss_ctrl(
    bundle: &CertificateBundle,
    env: &EnvironmentModel,
    batch: &StateBatch,
    nominal: &NominalController,
) -> Result<f64> {
    bundle.check_env(env)?;
    if batch.is_empty() {
        return Err(Error::Config("state batch is empty".into()));
    }
    let mut total = 0.0;
    for i in 0..env.n() {
        let u = bundle.policy(i).eval_batch(batch.nodes[i].view())?;
        let mut acc = 0.0;
        for b in 0..batch.len() {
            let rows = batch.node_rows(b);
            let obs = env.local_obs(i, &rows, batch.boundary_row(b));
            let (nom, _) = env.clamp_control(&nominal.control(i, rows[i], &obs));
            acc += u.row(b).iter().zip(&nom).map(|(a, c)| (a - c) * (a - c)).sum::<f64>();
        }
        total += acc / batch.len() as f64;
    }
    Ok(total)
}

/// Flattens gradients in the order of [`CertificateBundle::parameters`].
pub fn flatten_grads(grads: &[GroupGrads]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        for blk in g.certificate.blocks() {
            out.extend_from_slice(blk);
        }
        out.push(g.gain_k);
        for blk in g.policy.blocks() {
            out.extend_from_slice(blk);
        }
    }
    out
}
