//! Small differentiable kernel: MLPs with hand-written reverse mode, spectral
//! normalization, Adam, and a central-difference gradient oracle.

mod adam;
mod mlp;
mod spectral;

pub use adam::AdamState;
pub use mlp::{Dense, HiddenActivation, JvpTape, Mlp, MlpGrads, MlpRecord, OutputActivation, Tape};
pub use spectral::{spectral_norm_exact, SpectralCache};

use crate::error::{Error, Result};

/// Central differences `(f(x + h e_j) − f(x − h e_j)) / 2h` per coordinate.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let orig = probe[j];
        probe[j] = orig + h;
        let fp = f(&probe);
        probe[j] = orig - h;
        let fm = f(&probe);
        probe[j] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {j}")));
        }
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}
