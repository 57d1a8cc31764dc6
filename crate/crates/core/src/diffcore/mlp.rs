//! Dense feed-forward networks with hand-written reverse-mode passes.
//!
//! Two forward modes are recorded:
//! - a plain forward pass (`Mlp::forward_batch`) whose [`Tape`] backpropagates
//!   into parameters and inputs;
//! - a forward pass carrying a tangent direction (`Mlp::forward_jvp`), which
//!   yields the directional derivative `J(x) t` alongside `y`. Its
//!   [`JvpTape`] backpropagates through both the primal and the tangent, which
//!   is what a loss on `∇V(x)·f` needs.
//!
//! Batches are row-major: one sample per row.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HiddenActivation {
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputActivation {
    None,
    Relu,
}

/// One affine layer. `weight` has shape `(out, in)`.
///
/// `power_u` is the persistent left singular vector estimate used by spectral
/// normalization; `None` means the layer is not normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub power_u: Option<Array1<f64>>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "MlpRecord", try_from = "MlpRecord")]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden: HiddenActivation,
    pub output: OutputActivation,
}

/// Parameter gradients with the same layout as [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * c);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * c);
        }
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().into_iter().flatten().copied().collect()
    }
}

/// Recorded primal values of one plain forward pass.
#[derive(Debug)]
pub struct Tape {
    /// Input to every layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    /// Mask of strictly positive pre-activations for a ReLU output layer.
    relu_mask: Option<Array2<f64>>,
    widths: Vec<usize>,
}

/// Recorded primal and tangent values of one forward-with-tangent pass.
#[derive(Debug)]
pub struct JvpTape {
    inputs: Vec<Array2<f64>>,
    tangents: Vec<Array2<f64>>,
    /// Pre-activation tangents of hidden layers.
    z_dots: Vec<Array2<f64>>,
    relu_mask: Option<Array2<f64>>,
    widths: Vec<usize>,
}

impl Mlp {
    /// Builds a network with weights uniform in `±1/sqrt(fan_in)` and zero
    /// biases. Every hidden layer is flagged for spectral normalization when
    /// `spectral` is set.
    pub fn new(
        widths: &[usize],
        hidden: HiddenActivation,
        output: OutputActivation,
        spectral: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::with_rng(widths, hidden, output, spectral, &mut rng)
    }

    pub fn with_rng<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: HiddenActivation,
        output: OutputActivation,
        spectral: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least 2 widths, got {}",
                widths.len()
            )));
        }
        if widths.contains(&0) {
            return Err(Error::Config("MLP widths must be positive".into()));
        }
        let n_layers = widths.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-bound..=bound));
            let power_u = if spectral && l + 1 < n_layers {
                let mut u: Array1<f64> = Array1::from_shape_fn(fan_out, |_| rng.random_range(-1.0..1.0));
                let norm = u.dot(&u).sqrt();
                if norm < 1e-12 {
                    u.fill(0.0);
                    u[0] = 1.0;
                } else {
                    u /= norm;
                }
                Some(u)
            } else {
                None
            };
            layers.push(Dense {
                weight,
                bias: Array1::zeros(fan_out),
                power_u,
            });
        }
        Ok(Self {
            layers,
            hidden,
            output,
        })
    }

    /// A network with every weight and bias equal to zero.
    pub fn zeros(widths: &[usize], hidden: HiddenActivation, output: OutputActivation) -> Result<Self> {
        let mut net = Self::new(widths, hidden, output, false, 0)?;
        for layer in &mut net.layers {
            layer.weight.fill(0.0);
        }
        Ok(net)
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(Dense::out_dim));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Overwrites all weights and biases from a flat vector laid out as in
    /// [`Mlp::flatten`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        dim_check("Mlp::set_flat", self.n_params(), flat.len())?;
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w = it.next().unwrap_or_default();
            }
            for b in l.bias.iter_mut() {
                *b = it.next().unwrap_or_default();
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>, what: &str) -> Result<()> {
        dim_check(what, self.input_dim(), x.ncols())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what} input")));
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        let xb = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        let (y, tape) = self.forward_batch(xb.view())?;
        Ok((y.row(0).to_vec(), tape))
    }

    /// Evaluates without recording.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.0)
    }

    pub fn eval_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x, "Mlp::eval_batch")?;
        let n = self.layers.len();
        let mut a = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            if l + 1 < n {
                z.mapv_inplace(f64::tanh);
            } else if self.output == OutputActivation::Relu {
                z.mapv_inplace(relu);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(&x, "Mlp::forward")?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut a = x.to_owned();
        let mut relu_mask = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            inputs.push(a);
            if l + 1 < n {
                z.mapv_inplace(f64::tanh);
            } else if self.output == OutputActivation::Relu {
                let mask = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                z *= &mask;
                relu_mask = Some(mask);
            }
            a = z;
        }
        Ok((
            a,
            Tape {
                inputs,
                relu_mask,
                widths: self.widths(),
            },
        ))
    }

    /// Single-sample reverse pass; see [`Mlp::backprop_batch`].
    pub fn backprop(&self, tape: Tape, upstream: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let g = Array2::from_shape_vec((1, upstream.len()), upstream.to_vec()).expect("row vector");
        let (grads, gx) = self.backprop_batch(tape, g.view())?;
        Ok((grads, gx.row(0).to_vec()))
    }

    /// Exact reverse-mode derivatives of the recorded forward map. Parameter
    /// gradients are summed over the batch.
    pub fn backprop_batch(&self, tape: Tape, upstream: ArrayView2<'_, f64>) -> Result<(MlpGrads, Array2<f64>)> {
        if tape.widths != self.widths() {
            return Err(Error::TapeMismatch(format!(
                "tape widths {:?}, network widths {:?}",
                tape.widths,
                self.widths()
            )));
        }
        let batch = tape.inputs[0].nrows();
        dim_check("backprop upstream width", self.output_dim(), upstream.ncols())?;
        dim_check("backprop upstream rows", batch, upstream.nrows())?;

        let n = self.layers.len();
        let mut grads = MlpGrads::zeros_like(self);
        let mut g = upstream.to_owned();
        if let Some(mask) = &tape.relu_mask {
            g *= mask;
        }
        for l in (0..n).rev() {
            let a = &tape.inputs[l];
            grads.weights[l].assign(&g.t().dot(a));
            grads.biases[l] = g.sum_axis(Axis(0));
            let mut ga = g.dot(&self.layers[l].weight);
            if l > 0 {
                // a = tanh(z_{l-1})
                ga.zip_mut_with(a, |gv, &av| *gv *= 1.0 - av * av);
            }
            g = ga;
        }
        Ok((grads, g))
    }

    /// Forward pass that also pushes the tangent `t` through the network,
    /// returning `(y, J(x) t)`.
    pub fn forward_jvp(
        &self,
        x: ArrayView2<'_, f64>,
        t: ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, Array2<f64>, JvpTape)> {
        self.check_input(&x, "Mlp::forward_jvp")?;
        self.check_input(&t, "Mlp::forward_jvp tangent")?;
        dim_check("forward_jvp tangent rows", x.nrows(), t.nrows())?;
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut tangents = Vec::with_capacity(n);
        let mut z_dots = Vec::with_capacity(n.saturating_sub(1));
        let mut a = x.to_owned();
        let mut a_dot = t.to_owned();
        let mut relu_mask = None;
        for (l, layer) in self.layers.iter().enumerate() {
            let wt = layer.weight.t();
            let mut z = a.dot(&wt);
            z += &layer.bias;
            let mut z_dot = a_dot.dot(&wt);
            inputs.push(a);
            tangents.push(a_dot);
            if l + 1 < n {
                z.mapv_inplace(f64::tanh);
                let mut h_dot = z_dot.clone();
                h_dot.zip_mut_with(&z, |d, &h| *d *= 1.0 - h * h);
                z_dots.push(z_dot);
                a = z;
                a_dot = h_dot;
            } else {
                if self.output == OutputActivation::Relu {
                    let mask = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    z *= &mask;
                    z_dot *= &mask;
                    relu_mask = Some(mask);
                }
                a = z;
                a_dot = z_dot;
            }
        }
        Ok((
            a,
            a_dot,
            JvpTape {
                inputs,
                tangents,
                z_dots,
                relu_mask,
                widths: self.widths(),
            },
        ))
    }

    /// Reverse pass through a forward-with-tangent evaluation. Returns
    /// parameter gradients, the gradient w.r.t. `x`, and the gradient w.r.t.
    /// the tangent input `t`.
    pub fn backprop_jvp(
        &self,
        tape: JvpTape,
        g_y: ArrayView2<'_, f64>,
        g_ydot: ArrayView2<'_, f64>,
    ) -> Result<(MlpGrads, Array2<f64>, Array2<f64>)> {
        if tape.widths != self.widths() {
            return Err(Error::TapeMismatch(format!(
                "tape widths {:?}, network widths {:?}",
                tape.widths,
                self.widths()
            )));
        }
        let batch = tape.inputs[0].nrows();
        dim_check("backprop_jvp upstream width", self.output_dim(), g_y.ncols())?;
        dim_check("backprop_jvp upstream rows", batch, g_y.nrows())?;
        dim_check("backprop_jvp tangent upstream width", self.output_dim(), g_ydot.ncols())?;
        dim_check("backprop_jvp tangent upstream rows", batch, g_ydot.nrows())?;

        let n = self.layers.len();
        let mut grads = MlpGrads::zeros_like(self);
        // Adjoints of the current layer's pre-activation z and its tangent.
        let mut gz = g_y.to_owned();
        let mut gz_dot = g_ydot.to_owned();
        if let Some(mask) = &tape.relu_mask {
            gz *= mask;
            gz_dot *= mask;
        }
        for l in (0..n).rev() {
            let a = &tape.inputs[l];
            let a_dot = &tape.tangents[l];
            let w = &self.layers[l].weight;
            let mut gw = gz.t().dot(a);
            gw += &gz_dot.t().dot(a_dot);
            grads.weights[l].assign(&gw);
            grads.biases[l] = gz.sum_axis(Axis(0));
            let ga = gz.dot(w);
            let ga_dot = gz_dot.dot(w);
            if l == 0 {
                return Ok((grads, ga, ga_dot));
            }
            // a = h = tanh(z_prev), a_dot = s * z_dot_prev with s = 1 - h^2.
            let h = a;
            let z_dot_prev = &tape.z_dots[l - 1];
            let mut next_gz = Array2::zeros(h.dim());
            let mut next_gz_dot = Array2::zeros(h.dim());
            ndarray::Zip::from(&mut next_gz)
                .and(&mut next_gz_dot)
                .and(h)
                .and(z_dot_prev)
                .and(&ga)
                .and(&ga_dot)
                .for_each(|ngz, ngzd, &hv, &zd, &gav, &gadv| {
                    let s = 1.0 - hv * hv;
                    *ngzd = gadv * s;
                    let gh = gav + gadv * zd * (-2.0 * hv);
                    *ngz = gh * s;
                });
            gz = next_gz;
            gz_dot = next_gz_dot;
        }
        unreachable!("network has at least one layer")
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Flat serialized form of an [`Mlp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpRecord {
    pub widths: Vec<usize>,
    pub hidden: HiddenActivation,
    pub output: OutputActivation,
    /// Row-major `(out, in)` weight matrices.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub power_u: Vec<Option<Vec<f64>>>,
}

impl From<Mlp> for MlpRecord {
    fn from(net: Mlp) -> Self {
        Self {
            widths: net.widths(),
            hidden: net.hidden,
            output: net.output,
            weights: net.layers.iter().map(|l| l.weight.iter().copied().collect()).collect(),
            biases: net.layers.iter().map(|l| l.bias.to_vec()).collect(),
            power_u: net.layers.iter().map(|l| l.power_u.as_ref().map(|u| u.to_vec())).collect(),
        }
    }
}

impl TryFrom<MlpRecord> for Mlp {
    type Error = Error;

    fn try_from(rec: MlpRecord) -> Result<Self> {
        if rec.widths.len() < 2 {
            return Err(Error::Config("MLP record needs at least 2 widths".into()));
        }
        let n = rec.widths.len() - 1;
        dim_check("MLP record weights", n, rec.weights.len())?;
        dim_check("MLP record biases", n, rec.biases.len())?;
        dim_check("MLP record power vectors", n, rec.power_u.len())?;
        let mut layers = Vec::with_capacity(n);
        for l in 0..n {
            let (fan_in, fan_out) = (rec.widths[l], rec.widths[l + 1]);
            let weight = Array2::from_shape_vec((fan_out, fan_in), rec.weights[l].clone()).map_err(|_| Error::Dimension {
                context: format!("MLP record layer {l} weight"),
                expected: fan_in * fan_out,
                got: rec.weights[l].len(),
            })?;
            dim_check("MLP record bias", fan_out, rec.biases[l].len())?;
            let power_u = match &rec.power_u[l] {
                Some(u) => {
                    dim_check("MLP record power vector", fan_out, u.len())?;
                    Some(Array1::from(u.clone()))
                }
                None => None,
            };
            layers.push(Dense {
                weight,
                bias: Array1::from(rec.biases[l].clone()),
                power_u,
            });
        }
        Ok(Self {
            layers,
            hidden: rec.hidden,
            output: rec.output,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::finite_diff_grad;
    use ndarray::array;

    fn affine_1x1() -> Mlp {
        let mut net = Mlp::zeros(&[1, 1], HiddenActivation::Tanh, OutputActivation::None).unwrap();
        net.layers[0].weight[[0, 0]] = 2.0;
        net.layers[0].bias[0] = 1.0;
        net
    }

    #[test]
    fn init_is_deterministic() {
        let a = Mlp::new(&[2, 64, 64, 1], HiddenActivation::Tanh, OutputActivation::None, true, 0).unwrap();
        let b = Mlp::new(&[2, 64, 64, 1], HiddenActivation::Tanh, OutputActivation::None, true, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_rejects_single_width() {
        assert!(matches!(
            Mlp::new(&[3], HiddenActivation::Tanh, OutputActivation::None, false, 0),
            Err(Error::Config(_))
        ));
        assert!(Mlp::new(&[], HiddenActivation::Tanh, OutputActivation::None, false, 0).is_err());
    }

    #[test]
    fn init_shapes() {
        let net = Mlp::new(&[2, 4, 1], HiddenActivation::Tanh, OutputActivation::None, true, 3).unwrap();
        assert_eq!(net.layers[0].weight.dim(), (4, 2));
        assert_eq!(net.layers[1].weight.dim(), (1, 4));
        assert_eq!(net.layers[0].bias.len(), 4);
        assert_eq!(net.layers[1].bias.len(), 1);
        // hidden layers carry unit power vectors, the output layer none
        let u = net.layers[0].power_u.as_ref().unwrap();
        assert!((u.dot(u).sqrt() - 1.0).abs() < 1e-9);
        assert!(net.layers[1].power_u.is_none());
    }

    #[test]
    fn zero_network_outputs_zero() {
        for act in [OutputActivation::None, OutputActivation::Relu] {
            let net = Mlp::zeros(&[3, 8, 8, 2], HiddenActivation::Tanh, act).unwrap();
            let y = net.eval(&[0.3, -1.2, 7.0]).unwrap();
            assert_eq!(y, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn affine_forward_and_backprop() {
        let net = affine_1x1();
        let (y, tape) = net.forward(&[3.0]).unwrap();
        assert_eq!(y, vec![7.0]);
        let (g, gx) = net.backprop(tape, &[1.0]).unwrap();
        assert_eq!(gx, vec![2.0]);
        assert_eq!(g.weights[0][[0, 0]], 3.0);
        assert_eq!(g.biases[0][0], 1.0);
    }

    #[test]
    fn single_sample_gradients_flatten_row_major() {
        let net = Mlp::new(&[2, 3], HiddenActivation::Tanh, OutputActivation::None, false, 4).unwrap();
        let x = [0.5, -2.0];
        let c = [1.0, 2.0, 3.0];
        let (_, tape) = net.forward(&x).unwrap();
        let (g, _) = net.backprop(tape, &c).unwrap();
        let mut want: Vec<f64> = c.iter().flat_map(|ci| x.iter().map(move |xj| ci * xj)).collect();
        want.extend(c);
        assert_eq!(g.flatten(), want);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Mlp::new(&[3, 8, 8, 2], HiddenActivation::Tanh, OutputActivation::None, false, 1).unwrap();
        let (_, tape) = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let (g, gx) = net.backprop(tape, &[0.0, 0.0]).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = affine_1x1();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Dimension { .. })));
        assert!(matches!(net.forward(&[f64::NAN]), Err(Error::NonFinite(_))));
    }

    #[test]
    fn backprop_rejects_foreign_tape_and_bad_upstream() {
        let a = Mlp::new(&[2, 4, 1], HiddenActivation::Tanh, OutputActivation::None, false, 0).unwrap();
        let b = Mlp::new(&[2, 5, 1], HiddenActivation::Tanh, OutputActivation::None, false, 0).unwrap();
        let (_, tape) = a.forward(&[0.1, 0.2]).unwrap();
        assert!(matches!(b.backprop(tape, &[1.0]), Err(Error::TapeMismatch(_))));
        let (_, tape) = a.forward(&[0.1, 0.2]).unwrap();
        assert!(matches!(a.backprop(tape, &[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn backprop_input_gradient_matches_finite_differences() {
        let net = Mlp::new(&[3, 16, 16, 2], HiddenActivation::Tanh, OutputActivation::None, false, 7).unwrap();
        let x = [0.4, -1.1, 1.7];
        let w = [0.7, -1.3];
        let (_, tape) = net.forward(&x).unwrap();
        let (_, gx) = net.backprop(tape, &w).unwrap();
        let fd = finite_diff_grad(
            |z| {
                let y = net.eval(z).unwrap();
                w[0] * y[0] + w[1] * y[1]
            },
            &x,
            1e-5,
        )
        .unwrap();
        for (a, b) in gx.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-7 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn jvp_tangent_is_directional_derivative() {
        let net = Mlp::new(&[3, 8, 8, 2], HiddenActivation::Tanh, OutputActivation::Relu, false, 11).unwrap();
        let x = array![[0.2, -0.5, 1.0]];
        let t = array![[1.5, 0.3, -0.7]];
        let (y, ydot, _) = net.forward_jvp(x.view(), t.view()).unwrap();
        let y_plain = net.eval_batch(x.view()).unwrap();
        assert_eq!(y, y_plain);
        let h = 1e-6;
        let xp = &x + &(&t * h);
        let xm = &x - &(&t * h);
        let fd = (net.eval_batch(xp.view()).unwrap() - net.eval_batch(xm.view()).unwrap()) / (2.0 * h);
        for (a, b) in ydot.iter().zip(fd.iter()) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
    }

    #[test]
    fn jvp_backprop_matches_finite_differences() {
        // scalar objective L = c·y + d·ydot as a function of parameters, x and t
        let net = Mlp::new(&[2, 6, 6, 1], HiddenActivation::Tanh, OutputActivation::None, false, 5).unwrap();
        let x = array![[0.3, -0.8]];
        let t = array![[0.9, 0.4]];
        let (c, d) = (0.6, -1.4);
        let objective = |net: &Mlp, x: &Array2<f64>, t: &Array2<f64>| {
            let (y, yd, _) = net.forward_jvp(x.view(), t.view()).unwrap();
            c * y[[0, 0]] + d * yd[[0, 0]]
        };
        let (_, _, tape) = net.forward_jvp(x.view(), t.view()).unwrap();
        let (g, gx, gt) = net
            .backprop_jvp(tape, array![[c]].view(), array![[d]].view())
            .unwrap();
        let flat = net.flatten();
        let fd_params = finite_diff_grad(
            |p| {
                let mut n2 = net.clone();
                n2.set_flat(p).unwrap();
                objective(&n2, &x, &t)
            },
            &flat,
            1e-5,
        )
        .unwrap();
        for (a, b) in g.flatten().iter().zip(&fd_params) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
        let fd_x = finite_diff_grad(
            |z| objective(&net, &Array2::from_shape_vec((1, 2), z.to_vec()).unwrap(), &t),
            x.as_slice().unwrap(),
            1e-5,
        )
        .unwrap();
        let fd_t = finite_diff_grad(
            |z| objective(&net, &x, &Array2::from_shape_vec((1, 2), z.to_vec()).unwrap()),
            t.as_slice().unwrap(),
            1e-5,
        )
        .unwrap();
        for (a, b) in gx.iter().zip(&fd_x).chain(gt.iter().zip(&fd_t)) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn record_roundtrip() {
        let net = Mlp::new(&[3, 5, 2], HiddenActivation::Tanh, OutputActivation::Relu, true, 9).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: Mlp = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);
    }
}
