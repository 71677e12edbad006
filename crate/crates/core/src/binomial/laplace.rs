use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::scalar::Scalar;

use super::{LatentGaussian, ProbitModel};

/// Laplace approximation at the conditional mode of the location-level field.
pub(crate) struct LaplaceMode<T> {
    /// `K⁻¹ ŝ`, also the gradient of the conditional log-likelihood at the mode.
    pub(crate) a: Vec<T>,
    pub(crate) s: Vec<T>,
    pub(crate) w: Vec<T>,
    /// Factor of `I + W^½ K W^½`.
    pub(crate) chol_b: Cholesky<T>,
    pub(crate) log_marginal: T,
    pub(crate) iterations: usize,
}

impl<T: Scalar> LaplaceMode<T> {
    pub(crate) fn sqrt_w(&self) -> Vec<T> {
        self.w.iter().map(|&v| v.max(T::zero()).sqrt()).collect()
    }

    pub(crate) fn into_gaussian(self, m: usize) -> LatentGaussian<T> {
        LatentGaussian {
            points: (0..m).collect(),
            sqrt_w: self.sqrt_w(),
            b: self.a,
            chol_b: self.chol_b,
        }
    }
}

pub(crate) fn b_matrix<T: Scalar>(k: &Matrix<T>, sw: &[T]) -> Matrix<T> {
    let m = sw.len();
    let mut b = Matrix::from_fn(m, m, |i, j| sw[i] * k[(i, j)] * sw[j]);
    b.add_to_diag(T::one());
    b
}

/// Newton iteration for the mode of `g(s) − ½ sᵀK⁻¹s`, parametrized by
/// `a = K⁻¹s` so that a singular `K` needs no inverse. Steps are halved until
/// the objective does not decrease.
pub(crate) fn laplace_mode<T: Scalar>(
    model: &ProbitModel<'_, T>,
    off: &[T],
    k: &Matrix<T>,
    warm_a: Option<&[T]>,
    tol: T,
    max_iter: usize,
) -> Result<LaplaceMode<T>> {
    let m = model.m;
    let half = T::lit(0.5);
    let mut a = match warm_a {
        Some(w) if w.len() == m => w.to_vec(),
        _ => vec![T::zero(); m],
    };
    let mut s = k.matvec(&a);
    let psi = |val: T, a: &[T], s: &[T]| val - half * dot(a, s);
    let (val, mut g, mut w) = model.terms(off, &s);
    let mut obj = psi(val, &a, &s);
    let mut iterations = 0;
    loop {
        if iterations >= max_iter {
            return Err(Error::Numerical(format!(
                "Laplace mode search did not converge in {max_iter} Newton steps"
            )));
        }
        iterations += 1;
        let sw: Vec<T> = w.iter().map(|&v| v.max(T::zero()).sqrt()).collect();
        let chol = Cholesky::with_jitter(&b_matrix(k, &sw), "Laplace curvature matrix")?;
        let b: Vec<T> = (0..m).map(|i| w[i] * s[i] + g[i]).collect();
        let kb = k.matvec(&b);
        let c = chol.solve_lower(&sw.iter().zip(&kb).map(|(&x, &y)| x * y).collect::<Vec<_>>());
        let d = chol.solve_upper(&c);
        let a_new: Vec<T> = (0..m).map(|i| b[i] - sw[i] * d[i]).collect();

        let mut t = T::one();
        let mut step = None;
        for _ in 0..30 {
            let a_t: Vec<T> = a.iter().zip(&a_new).map(|(&x, &y)| x + t * (y - x)).collect();
            let s_t = k.matvec(&a_t);
            let (v_t, g_t, w_t) = model.terms(off, &s_t);
            let o_t = psi(v_t, &a_t, &s_t);
            if o_t.is_finite() && o_t >= obj - T::lit(1e-12) * obj.abs().max(T::one()) {
                step = Some((a_t, s_t, g_t, w_t, o_t));
                break;
            }
            t = t * half;
        }
        let Some((a_t, s_t, g_t, w_t, o_t)) = step else {
            return Err(Error::Numerical("Laplace Newton step failed to increase the objective".into()));
        };
        let moved = s_t.iter().zip(&s).fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()));
        a = a_t;
        s = s_t;
        g = g_t;
        w = w_t;
        obj = o_t;
        if moved < tol {
            break;
        }
    }
    let sw: Vec<T> = w.iter().map(|&v| v.max(T::zero()).sqrt()).collect();
    let chol_b = Cholesky::with_jitter(&b_matrix(k, &sw), "Laplace curvature matrix")?;
    let log_marginal = obj - half * chol_b.log_det();
    Ok(LaplaceMode { a, s, w, chol_b, log_marginal, iterations })
}

/// Covariance of the Laplace Gaussian, `K − K W^½ B⁻¹ W^½ K`.
pub(crate) fn laplace_covariance<T: Scalar>(k: &Matrix<T>, mode: &LaplaceMode<T>) -> Matrix<T> {
    let m = k.rows();
    let sw = mode.sqrt_w();
    let swk = Matrix::from_fn(m, m, |i, j| sw[i] * k[(i, j)]);
    let v = mode.chol_b.solve_lower_matrix(&swk);
    let mut out = k.sub(&v.transpose().matmul(&v));
    out.symmetrize();
    out
}
