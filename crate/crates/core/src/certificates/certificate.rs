use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{HiddenActivation, JvpTape, Mlp, MlpGrads, OutputActivation, Tape};
use crate::environments::GoalFrame;
use crate::error::{dim_check, Error, Result};

pub fn sigmoid(k: f64) -> f64 {
    if k >= 0.0 {
        1.0 / (1.0 + (-k).exp())
    } else {
        let e = k.exp();
        e / (1.0 + e)
    }
}

/// Gain function `χ(a) = sigmoid(k)·a`.
pub fn gain_eval(gain_k: f64, a: f64) -> f64 {
    sigmoid(gain_k) * a
}

/// ISS Lyapunov function `V(x) = ‖S r‖² + ‖p(x)‖² + q(x)` with
/// `r = R (x − anchor)` the goal residual, plus the gain parameter `k` and
/// decrease rate `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CertificateRecord", try_from = "CertificateRecord")]
pub struct IssCertificate {
    pub s: Array2<f64>,
    pub p_net: Mlp,
    pub q_net: Mlp,
    pub gain_k: f64,
    pub alpha: f64,
    pub goal: GoalFrame,
}

/// Gradients of the certificate parameters other than `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CertGrads {
    pub s: Array2<f64>,
    pub p: MlpGrads,
    pub q: MlpGrads,
}

impl CertGrads {
    pub fn zeros_like(cert: &IssCertificate) -> Self {
        Self {
            s: Array2::zeros(cert.s.dim()),
            p: MlpGrads::zeros_like(&cert.p_net),
            q: MlpGrads::zeros_like(&cert.q_net),
        }
    }

    pub fn add_assign(&mut self, other: &CertGrads) {
        self.s += &other.s;
        self.p.add_assign(&other.p);
        self.q.add_assign(&other.q);
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut out = vec![self.s.as_slice().expect("standard layout")];
        out.extend(self.p.blocks());
        out.extend(self.q.blocks());
        out
    }
}

/// Recorded values of a batched `V` evaluation (plain or with tangent).
#[derive(Debug)]
pub struct CertTape {
    r: Array2<f64>,
    sr: Array2<f64>,
    p: Array2<f64>,
    p_tape: Tape,
    q_tape: Tape,
}

#[derive(Debug)]
pub struct CertJvpTape {
    r: Array2<f64>,
    r_dot: Array2<f64>,
    sr: Array2<f64>,
    sr_dot: Array2<f64>,
    p: Array2<f64>,
    p_dot: Array2<f64>,
    p_tape: JvpTape,
    q_tape: JvpTape,
}

impl IssCertificate {
    /// Random certificate: `S` uniform in `±1/sqrt(d)`, `p` and `q` MLPs with
    /// the given hidden widths and spectral normalization on hidden layers.
    pub fn init<R: Rng + ?Sized>(goal: GoalFrame, hidden: &[usize], alpha: f64, spectral: bool, rng: &mut R) -> Result<Self> {
        let d = goal.dim;
        if !(alpha > 0.0) {
            return Err(Error::Config(format!("decrease rate alpha must be > 0, got {alpha}")));
        }
        let bound = 1.0 / (d as f64).sqrt();
        let s = Array2::from_shape_fn((d, d), |_| rng.random_range(-bound..=bound));
        let mut pw = vec![d];
        pw.extend_from_slice(hidden);
        pw.push(d);
        let mut qw = pw.clone();
        *qw.last_mut().expect("non-empty") = 1;
        let p_net = Mlp::with_rng(&pw, HiddenActivation::Tanh, OutputActivation::None, spectral, rng)?;
        let q_net = Mlp::with_rng(&qw, HiddenActivation::Tanh, OutputActivation::Relu, spectral, rng)?;
        Ok(Self {
            s,
            p_net,
            q_net,
            gain_k: 0.0,
            alpha,
            goal,
        })
    }

    /// All-zero certificate (`V ≡ 0`).
    pub fn zeros(goal: GoalFrame, hidden: &[usize], alpha: f64) -> Result<Self> {
        let d = goal.dim;
        let mut pw = vec![d];
        pw.extend_from_slice(hidden);
        pw.push(d);
        let mut qw = pw.clone();
        *qw.last_mut().expect("non-empty") = 1;
        Ok(Self {
            s: Array2::zeros((d, d)),
            p_net: Mlp::zeros(&pw, HiddenActivation::Tanh, OutputActivation::None)?,
            q_net: Mlp::zeros(&qw, HiddenActivation::Tanh, OutputActivation::Relu)?,
            gain_k: 0.0,
            alpha,
            goal,
        })
    }

    pub fn dim(&self) -> usize {
        self.goal.dim
    }

    pub fn gain(&self, a: f64) -> f64 {
        gain_eval(self.gain_k, a)
    }

    fn residuals(&self, x: &ArrayView2<'_, f64>) -> Array2<f64> {
        let anchor = Array1::from(self.goal.anchor.clone());
        let shifted = x - &anchor.insert_axis(Axis(0));
        // R is symmetric
        shifted.dot(&self.goal.matrix())
    }

    fn check(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        dim_check("certificate input", self.dim(), x.ncols())
    }

    /// `V` for each row of `x`.
    pub fn eval_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        self.check(&x)?;
        let sr = self.residuals(&x).dot(&self.s.t());
        let p = self.p_net.eval_batch(x)?;
        let q = self.q_net.eval_batch(x)?;
        Ok((&sr * &sr).sum_axis(Axis(1)) + (&p * &p).sum_axis(Axis(1)) + q.column(0))
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array1<f64>, CertTape)> {
        self.check(&x)?;
        let r = self.residuals(&x);
        let sr = r.dot(&self.s.t());
        let (p, p_tape) = self.p_net.forward_batch(x)?;
        let (q, q_tape) = self.q_net.forward_batch(x)?;
        let v = (&sr * &sr).sum_axis(Axis(1)) + (&p * &p).sum_axis(Axis(1)) + q.column(0);
        Ok((
            v,
            CertTape {
                r,
                sr,
                p,
                p_tape,
                q_tape,
            },
        ))
    }

    /// Reverse pass for [`IssCertificate::forward`]: parameter gradients
    /// (summed over the batch) and `∂/∂x` per row.
    pub fn backprop(&self, tape: CertTape, g_v: &Array1<f64>) -> Result<(CertGrads, Array2<f64>)> {
        dim_check("certificate upstream", tape.r.nrows(), g_v.len())?;
        let gcol = g_v.view().insert_axis(Axis(1));
        let g_sr = &tape.sr * &gcol * 2.0;
        let gs = g_sr.t().dot(&tape.r);
        let gr = g_sr.dot(&self.s);
        let mut gx = gr.dot(&self.goal.matrix());
        let g_p = &tape.p * &gcol * 2.0;
        let (gp, gx_p) = self.p_net.backprop_batch(tape.p_tape, g_p.view())?;
        let (gq, gx_q) = self.q_net.backprop_batch(tape.q_tape, gcol)?;
        gx += &gx_p;
        gx += &gx_q;
        Ok((CertGrads { s: gs, p: gp, q: gq }, gx))
    }

    /// `V(x)` and the directional derivative `∇V(x)·t` for each row.
    pub fn forward_jvp(&self, x: ArrayView2<'_, f64>, t: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array1<f64>, CertJvpTape)> {
        self.check(&x)?;
        self.check(&t)?;
        let r = self.residuals(&x);
        let r_dot = t.dot(&self.goal.matrix());
        let sr = r.dot(&self.s.t());
        let sr_dot = r_dot.dot(&self.s.t());
        let (p, p_dot, p_tape) = self.p_net.forward_jvp(x, t)?;
        let (q, q_dot, q_tape) = self.q_net.forward_jvp(x, t)?;
        let v = (&sr * &sr).sum_axis(Axis(1)) + (&p * &p).sum_axis(Axis(1)) + q.column(0);
        let v_dot = (&sr * &sr_dot).sum_axis(Axis(1)) * 2.0 + (&p * &p_dot).sum_axis(Axis(1)) * 2.0 + q_dot.column(0);
        Ok((
            v,
            v_dot,
            CertJvpTape {
                r,
                r_dot,
                sr,
                sr_dot,
                p,
                p_dot,
                p_tape,
                q_tape,
            },
        ))
    }

    /// Reverse pass for [`IssCertificate::forward_jvp`] with upstream
    /// gradients on `V` and on `∇V·t`. Returns parameter gradients, `∂/∂x`
    /// and `∂/∂t`.
    pub fn backprop_jvp(
        &self,
        tape: CertJvpTape,
        g_v: &Array1<f64>,
        g_vdot: &Array1<f64>,
    ) -> Result<(CertGrads, Array2<f64>, Array2<f64>)> {
        dim_check("certificate upstream", tape.r.nrows(), g_v.len())?;
        dim_check("certificate tangent upstream", tape.r.nrows(), g_vdot.len())?;
        let gv = g_v.view().insert_axis(Axis(1));
        let gvd = g_vdot.view().insert_axis(Axis(1));
        let rm = self.goal.matrix();

        let g_sr = (&tape.sr * &gv + &tape.sr_dot * &gvd) * 2.0;
        let g_sr_dot = &tape.sr * &gvd * 2.0;
        let gs = g_sr.t().dot(&tape.r) + g_sr_dot.t().dot(&tape.r_dot);
        let mut gx = g_sr.dot(&self.s).dot(&rm);
        let mut gt = g_sr_dot.dot(&self.s).dot(&rm);

        let g_p = (&tape.p * &gv + &tape.p_dot * &gvd) * 2.0;
        let g_p_dot = &tape.p * &gvd * 2.0;
        let (gp, gx_p, gt_p) = self.p_net.backprop_jvp(tape.p_tape, g_p.view(), g_p_dot.view())?;
        let (gq, gx_q, gt_q) = self.q_net.backprop_jvp(tape.q_tape, gv, gvd)?;
        gx += &gx_p;
        gx += &gx_q;
        gt += &gt_p;
        gt += &gt_q;
        Ok((CertGrads { s: gs, p: gp, q: gq }, gx, gt))
    }

    /// Single-point `V(x)`.
    pub fn v_eval(&self, x: &[f64]) -> Result<f64> {
        dim_check("certificate input", self.dim(), x.len())?;
        let xb = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.eval_batch(xb)?[0])
    }

    /// Single-point `∇V(x)` by reverse mode.
    pub fn v_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        dim_check("certificate input", self.dim(), x.len())?;
        let xb = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        let (_, tape) = self.forward(xb)?;
        let (_, gx) = self.backprop(tape, &Array1::ones(1))?;
        Ok(gx.row(0).to_vec())
    }

    /// Parameter blocks updated by the `V` optimizer (`S`, then `p`, then `q`).
    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.s.as_slice_mut().expect("standard layout")];
        out.extend(self.p_net.blocks_mut());
        out.extend(self.q_net.blocks_mut());
        out
    }

    pub fn block_lens(&self) -> Vec<usize> {
        let mut c = self.clone();
        c.blocks_mut().iter().map(|b| b.len()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CertificateRecord {
    dim: usize,
    /// Row-major `S`.
    s: Vec<f64>,
    p_net: Mlp,
    q_net: Mlp,
    gain_k: f64,
    alpha: f64,
    goal: GoalFrame,
}

impl From<IssCertificate> for CertificateRecord {
    fn from(c: IssCertificate) -> Self {
        Self {
            dim: c.s.nrows(),
            s: c.s.iter().copied().collect(),
            p_net: c.p_net,
            q_net: c.q_net,
            gain_k: c.gain_k,
            alpha: c.alpha,
            goal: c.goal,
        }
    }
}

impl TryFrom<CertificateRecord> for IssCertificate {
    type Error = Error;

    fn try_from(r: CertificateRecord) -> Result<Self> {
        let d = r.dim;
        dim_check("certificate S", d * d, r.s.len())?;
        dim_check("certificate goal frame", d, r.goal.dim)?;
        dim_check("certificate p input", d, r.p_net.input_dim())?;
        dim_check("certificate p output", d, r.p_net.output_dim())?;
        dim_check("certificate q input", d, r.q_net.input_dim())?;
        dim_check("certificate q output", 1, r.q_net.output_dim())?;
        Ok(Self {
            s: Array2::from_shape_vec((d, d), r.s).expect("checked length"),
            p_net: r.p_net,
            q_net: r.q_net,
            gain_k: r.gain_k,
            alpha: r.alpha,
            goal: r.goal,
        })
    }
}
