//! Adam with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Moments are sized from `block_lens`, one entry per parameter block.
    pub fn new(learning_rate: f64, weight_decay: f64, block_lens: &[usize]) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be > 0, got {learning_rate}")));
        }
        if !(weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay must be >= 0, got {weight_decay}")));
        }
        Ok(Self {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first_moment: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: block_lens.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    /// One bias-corrected Adam step. Decay is applied as
    /// `θ ← θ·(1 − lr·wd)` before the adaptive update.
    ///
    /// Gradients are validated before anything is mutated, so a rejected step
    /// leaves both the state and the parameters untouched.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        dim_check("adam parameter blocks", self.first_moment.len(), params.len())?;
        dim_check("adam gradient blocks", self.first_moment.len(), grads.len())?;
        for (b, (p, g)) in params.iter().zip(grads).enumerate() {
            dim_check(&format!("adam block {b} gradient"), p.len(), g.len())?;
            dim_check(&format!("adam block {b} moments"), self.first_moment[b].len(), p.len())?;
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient block {b}, entry {j}")));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.learning_rate * self.weight_decay;
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[b];
            let v = &mut self.second_moment[b];
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] = p[j] * decay - self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut st = AdamState::new(1e-3, 0.0, &[1]).unwrap();
        let mut p = [0.5];
        st.step(&mut [&mut p], &[&[1.0]]).unwrap();
        assert!(((0.5 - p[0]) - 1e-3).abs() < 1e-6);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut st = AdamState::new(1e-2, 0.0, &[3]).unwrap();
        let mut p = [0.1, -2.0, 3.5];
        for _ in 0..10 {
            st.step(&mut [&mut p], &[&[0.0, 0.0, 0.0]]).unwrap();
        }
        assert_eq!(p, [0.1, -2.0, 3.5]);
    }

    #[test]
    fn decoupled_decay() {
        let mut st = AdamState::new(3e-4, 1e-3, &[1]).unwrap();
        let mut p = [1.0];
        st.step(&mut [&mut p], &[&[0.0]]).unwrap();
        assert!((p[0] - (1.0 - 3e-7)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_the_block() {
        let mut st = AdamState::new(1e-3, 0.0, &[1, 2]).unwrap();
        let mut a = [0.0];
        let mut b = [0.0, 0.0];
        let err = st.step(&mut [&mut a, &mut b], &[&[0.0], &[1.0, f64::NAN]]).unwrap_err();
        assert!(err.to_string().contains("block 1"));
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(AdamState::new(0.0, 0.0, &[1]).is_err());
        assert!(AdamState::new(1e-3, -1.0, &[1]).is_err());
    }
}
