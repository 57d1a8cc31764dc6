use std::io::Write;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::loss::{GradRequest, GroupGrads, LossBreakdown, LossContext, LossWeights, Updates};
use crate::certificates::CertificateBundle;
use crate::diffcore::{AdamState, Mlp, SpectralCache};
use crate::environments::{sample_batch, sample_goal_batch, EnvironmentModel};
use crate::error::{Error, Result};
use crate::evaluation::NominalController;
use crate::rng::{stream_rng, Stream};

/// Power iterations used when exporting normalized weights.
pub const EXPORT_POWER_ITERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Controller,
    Lyapunov,
    Joint,
}

impl Phase {
    fn updates(self) -> Updates {
        match self {
            Phase::Controller => Updates {
                certificate: false,
                policy: true,
                gain: false,
            },
            Phase::Lyapunov => Updates {
                certificate: true,
                policy: false,
                gain: false,
            },
            Phase::Joint => Updates::ALL,
        }
    }

    fn weights(self, cfg: &TrainConfig) -> LossWeights {
        match self {
            Phase::Controller => LossWeights {
                goal: 0.0,
                a: 0.0,
                b: 0.0,
                ctrl: 1.0,
            },
            Phase::Lyapunov => LossWeights {
                goal: cfg.mu_goal,
                a: 0.0,
                b: cfg.mu_b,
                ctrl: 0.0,
            },
            Phase::Joint => LossWeights::from_config(cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub phase: Phase,
    pub goal: f64,
    pub loss_a: f64,
    pub loss_b: f64,
    pub ctrl: f64,
    pub total: f64,
}

impl HistoryRow {
    fn new(iteration: usize, phase: Phase, b: &LossBreakdown) -> Self {
        Self {
            iteration,
            phase,
            goal: b.goal,
            loss_a: b.loss_a,
            loss_b: b.loss_b,
            ctrl: b.ctrl,
            total: b.total,
        }
    }
}

/// Writes `iteration,goal,A,B,ctrl,total`.
pub fn write_history_csv<W: Write>(out: W, history: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "goal", "A", "B", "ctrl", "total"])?;
    for r in history {
        w.write_record([
            r.iteration.to_string(),
            r.goal.to_string(),
            r.loss_a.to_string(),
            r.loss_b.to_string(),
            r.ctrl.to_string(),
            r.total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
struct GroupOptim {
    v: AdamState,
    pi: AdamState,
    k: AdamState,
}

struct GroupCaches {
    p: SpectralCache,
    q: SpectralCache,
    policy: SpectralCache,
}

/// Normalizes a net for one step. Frozen nets are normalized from a copy so
/// their stored power-iteration vectors, and hence their effective weights,
/// stay fixed.
fn normalize(net: &mut Mlp, iters: usize, frozen: bool) -> (Mlp, SpectralCache) {
    if frozen {
        net.clone().spectral_normalize(iters)
    } else {
        net.spectral_normalize(iters)
    }
}

/// Owns the raw parameters and optimizer state of one training run.
pub struct Trainer<'e> {
    env: &'e EnvironmentModel,
    cfg: TrainConfig,
    nominal: NominalController,
    bundle: CertificateBundle,
    optim: Vec<GroupOptim>,
    batch_rng: ChaCha8Rng,
    goal_rng: ChaCha8Rng,
    history: Vec<HistoryRow>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Exported bundle with normalized weights baked in.
    pub bundle: CertificateBundle,
    pub history: Vec<HistoryRow>,
}

impl<'e> Trainer<'e> {
    pub fn new(env: &'e EnvironmentModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(cfg.seed, Stream::Init);
        let bundle = CertificateBundle::init(env, &cfg.hidden, cfg.alpha, cfg.spectral_norm, &mut rng)?;
        Self::from_bundle(env, cfg, bundle)
    }

    /// Continues from existing raw parameters with fresh optimizer state.
    pub fn from_bundle(env: &'e EnvironmentModel, cfg: TrainConfig, bundle: CertificateBundle) -> Result<Self> {
        cfg.validate()?;
        bundle.check_env(env)?;
        let nominal = NominalController::build(env, &cfg.nominal)?;
        let optim = bundle
            .groups
            .iter()
            .map(|g| {
                Ok(GroupOptim {
                    v: AdamState::new(cfg.lr_v, cfg.weight_decay, &g.certificate.block_lens())?,
                    pi: AdamState::new(cfg.lr_pi, cfg.weight_decay, &g.policy.net.clone().blocks_mut().iter().map(|b| b.len()).collect::<Vec<_>>())?,
                    k: AdamState::new(cfg.lr_k, 0.0, &[1])?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            env,
            batch_rng: stream_rng(cfg.seed, Stream::TrainBatch),
            goal_rng: stream_rng(cfg.seed, Stream::GoalBatch),
            cfg,
            nominal,
            bundle,
            optim,
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn nominal(&self) -> &NominalController {
        &self.nominal
    }

    /// Raw parameters, including un-normalized weights and power-iteration
    /// state.
    pub fn raw_bundle(&self) -> &CertificateBundle {
        &self.bundle
    }

    pub fn history(&self) -> &[HistoryRow] {
        &self.history
    }

    pub fn loss_context(&self) -> LossContext<'_> {
        LossContext::new(self.env, &self.nominal, &self.cfg)
    }

    fn effective(&mut self, upd: Updates, iters: usize) -> (CertificateBundle, Vec<GroupCaches>) {
        let mut eff = self.bundle.clone();
        let mut caches = Vec::with_capacity(self.bundle.groups.len());
        for (raw, out) in self.bundle.groups.iter_mut().zip(eff.groups.iter_mut()) {
            let (p, pc) = normalize(&mut raw.certificate.p_net, iters, !upd.certificate);
            let (q, qc) = normalize(&mut raw.certificate.q_net, iters, !upd.certificate);
            let (pi, pic) = normalize(&mut raw.policy.net, iters, !upd.policy);
            out.certificate.p_net = p;
            out.certificate.q_net = q;
            out.policy.net = pi;
            caches.push(GroupCaches {
                p: pc,
                q: qc,
                policy: pic,
            });
        }
        (eff, caches)
    }

    /// The bundle used for checking and rollouts: normalized weights
    /// computed with [`EXPORT_POWER_ITERS`] iterations, no spectral flags.
    /// Training state is not touched.
    pub fn export(&self) -> CertificateBundle {
        let mut raw = self.bundle.clone();
        let mut out = raw.clone();
        for (r, o) in raw.groups.iter_mut().zip(out.groups.iter_mut()) {
            o.certificate.p_net = r.certificate.p_net.spectral_normalize(EXPORT_POWER_ITERS).0;
            o.certificate.q_net = r.certificate.q_net.spectral_normalize(EXPORT_POWER_ITERS).0;
            o.policy.net = r.policy.net.spectral_normalize(EXPORT_POWER_ITERS).0;
        }
        out
    }

    fn apply(&mut self, upd: Updates, grads: Vec<GroupGrads>, caches: Vec<GroupCaches>) -> Result<()> {
        for (((grp, opt), g), c) in self.bundle.groups.iter_mut().zip(&mut self.optim).zip(grads).zip(caches) {
            if upd.certificate {
                let mut cg = g.certificate;
                cg.p = c.p.pullback(&grp.certificate.p_net, cg.p);
                cg.q = c.q.pullback(&grp.certificate.q_net, cg.q);
                opt.v.step(&mut grp.certificate.blocks_mut(), &cg.blocks())?;
            }
            if upd.policy {
                let pg = c.policy.pullback(&grp.policy.net, g.policy);
                opt.pi.step(&mut grp.policy.net.blocks_mut(), &pg.blocks())?;
            }
            if upd.gain {
                opt.k.step(&mut [std::slice::from_mut(&mut grp.certificate.gain_k)], &[&[g.gain_k]])?;
            }
        }
        Ok(())
    }

    /// One iteration of `phase` on fresh batches. On error the parameters
    /// are left as they were before the step.
    pub fn step(&mut self, phase: Phase) -> Result<LossBreakdown> {
        let iteration = self.history.len();
        let upd = phase.updates();
        let (eff, caches) = self.effective(upd, 1);
        let batch = sample_batch(self.env, self.cfg.batch_size, None, &mut self.batch_rng)?;
        let goal = sample_goal_batch(self.env, self.cfg.batch_size, &mut self.goal_rng)?;
        let request = GradRequest {
            weights: phase.weights(&self.cfg),
            updates: upd,
        };
        let ctx = LossContext::new(self.env, &self.nominal, &self.cfg);
        let (breakdown, grads) = ctx.evaluate(&eff, &batch, &goal, Some(request)).map_err(|e| match e {
            Error::NonFinite(detail) => Error::Diverged { iteration, detail },
            other => other,
        })?;
        let grads = grads.expect("gradients requested");
        let snapshot = self.bundle.clone();
        let optim = self.optim.clone();
        if let Err(e) = self.apply(upd, grads, caches) {
            self.bundle = snapshot;
            self.optim = optim;
            return Err(match e {
                Error::NonFinite(detail) => Error::Diverged {
                    iteration,
                    detail: format!("gradient: {detail}"),
                },
                other => other,
            });
        }
        self.history.push(HistoryRow::new(iteration, phase, &breakdown));
        Ok(breakdown)
    }

    fn run_phase(&mut self, phase: Phase, iters: usize) -> Result<()> {
        for _ in 0..iters {
            self.step(phase)?;
        }
        Ok(())
    }

    /// Fits the controllers to the nominal controller.
    pub fn pretrain_controller(&mut self) -> Result<()> {
        self.run_phase(Phase::Controller, self.cfg.pretrain_ctrl_iters)
    }

    /// Fits the certificates with the controllers and gains frozen.
    pub fn pretrain_lyapunov(&mut self) -> Result<()> {
        self.run_phase(Phase::Lyapunov, self.cfg.pretrain_lyap_iters)
    }

    /// Joint phase. `on_checkpoint` receives the exported bundle every
    /// `checkpoint_every` iterations and once at the end.
    pub fn train_joint<F>(&mut self, mut on_checkpoint: F) -> Result<()>
    where
        F: FnMut(usize, &CertificateBundle) -> Result<()>,
    {
        let every = self.cfg.checkpoint_every;
        for it in 1..=self.cfg.joint_iters {
            self.step(Phase::Joint)?;
            if every > 0 && it % every == 0 && it != self.cfg.joint_iters {
                on_checkpoint(it, &self.export())?;
            }
        }
        on_checkpoint(self.cfg.joint_iters, &self.export())
    }

    pub fn into_outcome(self) -> TrainOutcome {
        TrainOutcome {
            bundle: self.export(),
            history: self.history,
        }
    }
}

/// Runs all three phases from a fresh initialization.
pub fn train(env: &EnvironmentModel, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut t = Trainer::new(env, cfg.clone())?;
    t.pretrain_controller()?;
    t.pretrain_lyapunov()?;
    t.train_joint(|_, _| Ok(()))?;
    Ok(t.into_outcome())
}
