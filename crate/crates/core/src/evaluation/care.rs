//! Continuous-time algebraic Riccati equation
//! `AᵀP + PA − PBR⁻¹BᵀP + Q = 0`.
//!
//! The stabilizing solution comes from the matrix sign function of the
//! Hamiltonian, then a few Newton–Kleinman steps polish it to the residual
//! bound.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const CARE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub residual: f64,
}

pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let rinv = r.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(r.nrows(), r.ncols(), f64::NAN));
    let res = a.transpose() * p + p * a - p * b * rinv * b.transpose() * p + q;
    res.norm()
}

fn sign_function(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n2 = h.nrows();
    let mut z = h.clone();
    for _ in 0..100 {
        let det = z.determinant();
        if !det.is_finite() || det == 0.0 {
            return Err(Error::Riccati("Hamiltonian has eigenvalues on the imaginary axis".into()));
        }
        let c = det.abs().powf(-1.0 / n2 as f64);
        let zi = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Riccati("singular iterate in sign function".into()))?;
        let next = (&z * c + zi / c) * 0.5;
        let change = (&next - &z).norm() / next.norm().max(1.0);
        z = next;
        if change < 1e-13 {
            return Ok(z);
        }
    }
    Err(Error::Riccati("sign iteration did not converge".into()))
}

/// Solves `X Mᵀ + M X + C = 0` for `X` via the Kronecker form.
fn lyapunov(m: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(m) + m.kronecker(&eye);
    let rhs = DMatrix::from_column_slice(n * n, 1, (-c).as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Riccati("singular Lyapunov operator".into()))?;
    Ok(DMatrix::from_column_slice(n, n, sol.as_slice()))
}

fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    m.complex_eigenvalues().iter().all(|l| l.re < 0.0)
}

/// Stabilizing solution `P` and gain `K = R⁻¹BᵀP`. Fails unless the residual
/// reaches [`CARE_TOLERANCE`] and `A − BK` is Hurwitz.
pub fn care_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<CareSolution> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Riccati("inconsistent matrix shapes".into()));
    }
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Riccati("R is singular".into()))?;
    if r.clone().cholesky().is_none() {
        return Err(Error::Riccati("R must be positive definite".into()));
    }
    let g = b * &rinv * b.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let w = sign_function(&h)?;
    let eye = DMatrix::<f64>::identity(n, n);
    let w11 = w.view((0, 0), (n, n)).into_owned();
    let w12 = w.view((0, n), (n, n)).into_owned();
    let w21 = w.view((n, 0), (n, n)).into_owned();
    let w22 = w.view((n, n), (n, n)).into_owned();
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let mut p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Riccati(format!("stable subspace solve failed: {e}")))?;
    p = (&p + p.transpose()) * 0.5;

    for _ in 0..20 {
        let k = &rinv * b.transpose() * &p;
        let acl = a - b * &k;
        if !is_hurwitz(&acl) {
            break;
        }
        let c = q + k.transpose() * r * &k;
        let next = lyapunov(&acl.transpose(), &c)?;
        let next = (&next + next.transpose()) * 0.5;
        let done = (&next - &p).norm() <= 1e-15 * p.norm().max(1.0);
        p = next;
        if done {
            break;
        }
    }
    let residual = care_residual(a, b, q, r, &p);
    let k = &rinv * b.transpose() * &p;
    if !(residual <= CARE_TOLERANCE) {
        return Err(Error::Riccati(format!("residual {residual:e} above tolerance (pair not stabilizable?)")));
    }
    if !is_hurwitz(&(a - b * &k)) {
        return Err(Error::Riccati("closed loop is not Hurwitz".into()));
    }
    Ok(CareSolution { p, k, residual })
}
