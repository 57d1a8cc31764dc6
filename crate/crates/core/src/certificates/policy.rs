use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{HiddenActivation, Mlp, MlpGrads, OutputActivation, Tape};
use crate::error::{dim_check, Error, Result};

/// Per-subsystem controller `u = mid + half·tanh(net(x))`, which maps the
/// network output into the actuation box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecentralizedPolicy {
    pub net: Mlp,
    pub bounds: Vec<[f64; 2]>,
}

#[derive(Debug)]
pub struct PolicyTape {
    squashed: Array2<f64>,
    net_tape: Tape,
}

impl DecentralizedPolicy {
    pub fn init<R: Rng + ?Sized>(state_dim: usize, bounds: Vec<[f64; 2]>, hidden: &[usize], spectral: bool, rng: &mut R) -> Result<Self> {
        let mut w = vec![state_dim];
        w.extend_from_slice(hidden);
        w.push(bounds.len());
        let net = Mlp::with_rng(&w, HiddenActivation::Tanh, OutputActivation::None, spectral, rng)?;
        Self::new(net, bounds)
    }

    pub fn new(net: Mlp, bounds: Vec<[f64; 2]>) -> Result<Self> {
        dim_check("policy output vs bounds", bounds.len(), net.output_dim())?;
        if bounds.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::Config("policy bounds need lower < upper".into()));
        }
        Ok(Self { net, bounds })
    }

    fn mid_half(&self) -> (Array1<f64>, Array1<f64>) {
        let mid = self.bounds.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect();
        let half = self.bounds.iter().map(|[lo, hi]| 0.5 * (hi - lo)).collect();
        (mid, half)
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, PolicyTape)> {
        let (raw, net_tape) = self.net.forward_batch(x)?;
        let squashed = raw.mapv(f64::tanh);
        let (mid, half) = self.mid_half();
        let u = &squashed * &half.insert_axis(Axis(0)) + &mid.insert_axis(Axis(0));
        Ok((u, PolicyTape { squashed, net_tape }))
    }

    pub fn eval_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let raw = self.net.eval_batch(x)?;
        let (mid, half) = self.mid_half();
        Ok(raw.mapv(f64::tanh) * &half.insert_axis(Axis(0)) + &mid.insert_axis(Axis(0)))
    }

    /// Reverse pass from `∂L/∂u` to parameter gradients and `∂L/∂x`.
    pub fn backprop(&self, tape: PolicyTape, g_u: ArrayView2<'_, f64>) -> Result<(MlpGrads, Array2<f64>)> {
        dim_check("policy upstream rows", tape.squashed.nrows(), g_u.nrows())?;
        dim_check("policy upstream width", self.bounds.len(), g_u.ncols())?;
        let (_, half) = self.mid_half();
        let mut g_raw = g_u.to_owned() * &half.insert_axis(Axis(0));
        g_raw.zip_mut_with(&tape.squashed, |g, &s| *g *= 1.0 - s * s);
        self.net.backprop_batch(tape.net_tape, g_raw.view())
    }

    pub fn policy_eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xb = ArrayView2::from_shape((1, x.len()), x).map_err(|_| Error::Config("bad policy input".into()))?;
        Ok(self.eval_batch(xb)?.row(0).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::finite_diff_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_gives_midpoint() {
        let net = Mlp::zeros(&[3, 4, 2], HiddenActivation::Tanh, OutputActivation::None).unwrap();
        let p = DecentralizedPolicy::new(net, vec![[-5.0, 5.0], [0.0, 19.62]]).unwrap();
        assert_eq!(p.policy_eval(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 9.81]);
    }

    #[test]
    fn saturated_output_stays_in_bounds() {
        let mut net = Mlp::zeros(&[1, 2, 1], HiddenActivation::Tanh, OutputActivation::None).unwrap();
        net.layers[1].bias[0] = 1e3;
        let p = DecentralizedPolicy::new(net, vec![[-5.0, 5.0]]).unwrap();
        let u = p.policy_eval(&[0.0]).unwrap()[0];
        assert!(u.abs() <= 5.0);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = DecentralizedPolicy::init(3, vec![[-5.0, 5.0]], &[8, 8], false, &mut rng).unwrap();
        let x = [0.3, -0.2, 1.5];
        let (_, tape) = p.forward(ArrayView2::from_shape((1, 3), &x[..]).unwrap()).unwrap();
        let (_, gx) = p.backprop(tape, ndarray::array![[1.0]].view()).unwrap();
        let fd = finite_diff_grad(|x| p.policy_eval(x).unwrap()[0], &x, 1e-6).unwrap();
        for k in 0..3 {
            assert!((gx[[0, k]] - fd[k]).abs() < 1e-7);
        }
        assert_eq!(p.policy_eval(&x).unwrap(), p.policy_eval(&x).unwrap());
    }
}
