//! Spectral normalization of hidden layers by power iteration.

use ndarray::{Array1, Array2};

use super::mlp::{Mlp, MlpGrads};

/// Below this estimate a layer is treated as zero and left untouched.
const SIGMA_FLOOR: f64 = 1e-12;

/// Per-layer quantities needed to pull gradients back through `W / σ(W)`.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    layers: Vec<Option<LayerSigma>>,
}

#[derive(Debug, Clone)]
struct LayerSigma {
    sigma: f64,
    u: Array1<f64>,
    v: Array1<f64>,
}

fn normalize(mut x: Array1<f64>) -> Option<Array1<f64>> {
    let n = x.dot(&x).sqrt();
    if n < SIGMA_FLOOR || !n.is_finite() {
        return None;
    }
    x /= n;
    Some(x)
}

/// Runs `iters` power iterations starting from `u`. Returns `(σ, u, v)`, or
/// `None` for a (numerically) zero matrix.
fn power_iterate(w: &Array2<f64>, u0: &Array1<f64>, iters: usize) -> Option<(f64, Array1<f64>, Array1<f64>)> {
    let mut u = u0.clone();
    let mut v = normalize(w.t().dot(&u))?;
    for k in 0..iters.max(1) {
        if k > 0 {
            v = normalize(w.t().dot(&u))?;
        }
        u = normalize(w.dot(&v))?;
    }
    let sigma = u.dot(&w.dot(&v));
    (sigma > SIGMA_FLOOR).then_some((sigma, u, v))
}

impl Mlp {
    /// Advances the persistent power-iteration vectors by `n_power_iters`
    /// steps and returns the normalized network: every flagged layer divided
    /// by its largest-singular-value estimate. The returned network has no
    /// spectral flags and evaluates with the normalized weights as stored.
    pub fn spectral_normalize(&mut self, n_power_iters: usize) -> (Mlp, SpectralCache) {
        let mut effective = self.clone();
        let mut cache = Vec::with_capacity(self.layers.len());
        for (raw, eff) in self.layers.iter_mut().zip(effective.layers.iter_mut()) {
            eff.power_u = None;
            let Some(u0) = raw.power_u.as_ref() else {
                cache.push(None);
                continue;
            };
            match power_iterate(&raw.weight, u0, n_power_iters) {
                Some((sigma, u, v)) => {
                    eff.weight = &raw.weight / sigma;
                    raw.power_u = Some(u.clone());
                    cache.push(Some(LayerSigma { sigma, u, v }));
                }
                None => cache.push(None),
            }
        }
        (effective, SpectralCache { layers: cache })
    }
}

impl SpectralCache {
    /// Maps gradients w.r.t. the normalized weights to gradients w.r.t. the
    /// raw weights, holding the singular vectors fixed:
    /// `∂L/∂W = G/σ − ⟨G, W⟩/σ² · u vᵀ`.
    pub fn pullback(&self, raw: &Mlp, mut grads: MlpGrads) -> MlpGrads {
        for ((entry, layer), g) in self.layers.iter().zip(&raw.layers).zip(grads.weights.iter_mut()) {
            let Some(LayerSigma { sigma, u, v }) = entry else { continue };
            let inner: f64 = g.iter().zip(layer.weight.iter()).map(|(a, b)| a * b).sum();
            let coef = inner / (sigma * sigma);
            let rows = u.len();
            let cols = v.len();
            for i in 0..rows {
                for j in 0..cols {
                    g[[i, j]] = g[[i, j]] / sigma - coef * u[i] * v[j];
                }
            }
        }
        grads
    }
}

/// Largest singular value via the symmetric eigenproblem of `WᵀW`.
pub fn spectral_norm_exact(w: &Array2<f64>) -> f64 {
    let m = nalgebra::DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| w[[i, j]]);
    let gram = m.transpose() * &m;
    let eig = gram.symmetric_eigenvalues();
    eig.iter().copied().fold(0.0f64, f64::max).sqrt()
}
