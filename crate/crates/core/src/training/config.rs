use serde::{Deserialize, Serialize};

use crate::environments::EnvKind;
use crate::error::{Error, Result};
use crate::evaluation::BaselineSpec;

/// How `∇V·f` enters the decrease loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    /// Exact directional derivative through the certificate.
    Analytic,
    /// `(V(x + dt·f) − V(x)) / dt`.
    OneStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub eps_a: f64,
    pub eps_b: f64,
    pub mu_goal: f64,
    pub mu_a: f64,
    pub mu_b: f64,
    pub mu_ctrl: f64,
    pub batch_size: usize,
    pub pretrain_ctrl_iters: usize,
    pub pretrain_lyap_iters: usize,
    pub joint_iters: usize,
    pub lr_v: f64,
    pub lr_pi: f64,
    pub lr_k: f64,
    pub weight_decay: f64,
    pub grad_mode: GradMode,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub spectral_norm: bool,
    /// Save a checkpoint every this many joint iterations (0: only at the end).
    pub checkpoint_every: usize,
    pub nominal: BaselineSpec,
}

impl TrainConfig {
    /// Per-environment hyperparameters with the full-scale schedule
    /// (batch 2048, 10000 iterations).
    pub fn for_kind(kind: EnvKind) -> Self {
        let (alpha, mu_goal, mu_a, mu_b, mu_ctrl) = match kind {
            EnvKind::Platoon => (1.0, 100.0, 0.1, 50.0, 0.001),
            EnvKind::PlanarDrone => (0.2, 100.0, 0.01, 3.0, 0.2),
            EnvKind::Microgrid => (0.5, 10.0, 0.1, 50.0, 0.0),
        };
        Self {
            alpha,
            eps_a: 1.0,
            eps_b: 1.0,
            mu_goal,
            mu_a,
            mu_b,
            mu_ctrl,
            batch_size: 2048,
            pretrain_ctrl_iters: 500,
            pretrain_lyap_iters: 500,
            joint_iters: 9000,
            lr_v: 3e-4,
            lr_pi: 5e-4,
            lr_k: 1e-3,
            weight_decay: 1e-3,
            grad_mode: GradMode::Analytic,
            seed: 0,
            hidden: vec![64, 64],
            spectral_norm: true,
            checkpoint_every: 0,
            nominal: BaselineSpec::Nominal,
        }
    }

    /// Reduced budget: batch 512, 3000 iterations in total.
    pub fn desk(kind: EnvKind) -> Self {
        Self {
            batch_size: 512,
            joint_iters: 2000,
            ..Self::for_kind(kind)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn total_iters(&self) -> usize {
        self.pretrain_ctrl_iters + self.pretrain_lyap_iters + self.joint_iters
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("mu_goal", self.mu_goal),
            ("mu_a", self.mu_a),
            ("mu_b", self.mu_b),
            ("mu_ctrl", self.mu_ctrl),
            ("eps_a", self.eps_a),
            ("eps_b", self.eps_b),
            ("weight_decay", self.weight_decay),
        ];
        for (name, v) in weights {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("lr_v", self.lr_v), ("lr_pi", self.lr_pi), ("lr_k", self.lr_k)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}
