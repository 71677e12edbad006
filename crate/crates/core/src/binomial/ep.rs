use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::scalar::{inv_mills, log_norm_cdf, Scalar};

use super::laplace::b_matrix;
use super::{LatentGaussian, ProbitModel};

/// Gaussian site approximations, one per individual, in natural parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EpSites<T> {
    pub precision: Vec<T>,
    pub shift: Vec<T>,
}

pub(crate) struct EpState<T> {
    pub(crate) log_marginal: T,
    pub(crate) sites: EpSites<T>,
    pub(crate) sweeps: usize,
    pub(crate) sqrt_w: Vec<T>,
    /// Factor of `I + S^½ K S^½`.
    pub(crate) chol_b: Cholesky<T>,
    /// `K⁻¹ μ`; the posterior mean is `K b`.
    pub(crate) b: Vec<T>,
}

impl<T: Scalar> EpState<T> {
    pub(crate) fn into_gaussian(self, loc: &[usize]) -> LatentGaussian<T> {
        LatentGaussian { points: loc.to_vec(), sqrt_w: self.sqrt_w, b: self.b, chol_b: self.chol_b }
    }

    /// Gradient of the log marginal in the offsets and in the covariance
    /// parameters, `½ (bᵀ ∂K b − tr(S^½ B⁻¹ S^½ ∂K))`. Valid at a fixed point,
    /// where the dependence through the sites drops out.
    pub(crate) fn gradient(&self, dk: &[&Matrix<T>]) -> (Vec<T>, Vec<T>) {
        let n = self.b.len();
        let binv = self.chol_b.inverse();
        let half = T::lit(0.5);
        let hyper = dk
            .iter()
            .map(|d| {
                let mut quad = T::zero();
                let mut trace = T::zero();
                for k in 0..n {
                    let row = d.row(k);
                    let bk = binv.row(k);
                    let mut qk = T::zero();
                    let mut tk = T::zero();
                    for l in 0..n {
                        qk = qk + row[l] * self.b[l];
                        tk = tk + bk[l] * self.sqrt_w[l] * row[l];
                    }
                    quad = quad + self.b[k] * qk;
                    trace = trace + self.sqrt_w[k] * tk;
                }
                half * (quad - trace)
            })
            .collect();
        (self.b.clone(), hyper)
    }
}

/// Individual-level latent covariance: individuals at one location share a value.
pub(crate) fn individual_covariance<T: Scalar>(k: &Matrix<T>, loc: &[usize]) -> Matrix<T> {
    Matrix::from_fn(loc.len(), loc.len(), |a, b| k[(loc[a], loc[b])])
}

struct Posterior<T> {
    sigma: Matrix<T>,
    mu: Vec<T>,
    sqrt_w: Vec<T>,
    chol: Cholesky<T>,
}

fn posterior<T: Scalar>(k: &Matrix<T>, sites: &EpSites<T>) -> Result<Posterior<T>> {
    let n = k.rows();
    let sqrt_w: Vec<T> = sites.precision.iter().map(|&t| t.max(T::zero()).sqrt()).collect();
    let chol = Cholesky::with_jitter(&b_matrix(k, &sqrt_w), "EP curvature matrix")?;
    let swk = Matrix::from_fn(n, n, |i, j| sqrt_w[i] * k[(i, j)]);
    let v = chol.solve_lower_matrix(&swk);
    let mut sigma = k.sub(&v.transpose().matmul(&v));
    sigma.symmetrize();
    let mu = sigma.matvec(&sites.shift);
    Ok(Posterior { sigma, mu, sqrt_w, chol })
}

/// Expectation propagation for `∫ N(f; 0, K) Π Φ(±(oᵢ + fᵢ)) df` with
/// sequential site updates. Stops when the log marginal changes by less than
/// `tol` between sweeps.
pub(crate) fn expectation_propagation<T: Scalar>(
    model: &ProbitModel<'_, T>,
    off: &[T],
    kf: &Matrix<T>,
    warm: Option<&EpSites<T>>,
    tol: T,
    max_sweeps: usize,
) -> Result<EpState<T>> {
    let n = kf.rows();
    let mut sites = match warm {
        Some(w) if w.precision.len() == n => w.clone(),
        _ => EpSites { precision: vec![T::zero(); n], shift: vec![T::zero(); n] },
    };
    let mut post = posterior(kf, &sites)?;
    let mut sigma = post.sigma.clone();
    let mut mu = post.mu.clone();
    let mut last = T::neg_infinity();
    for sweep in 1..=max_sweeps {
        for i in 0..n {
            let sii = sigma[(i, i)];
            let tau_c = sii.recip() - sites.precision[i];
            if !(sii > T::zero() && tau_c > T::zero()) {
                continue;
            }
            let nu_c = mu[i] / sii - sites.shift[i];
            let (mh, vh) = tilted_moments(model.y[i], off[i], nu_c / tau_c, tau_c.recip());
            let new_prec = (vh.recip() - tau_c).max(T::zero());
            let new_shift = mh / vh - nu_c;
            let dt = new_prec - sites.precision[i];
            let dn = new_shift - sites.shift[i];
            sites.precision[i] = new_prec;
            sites.shift[i] = new_shift;
            let si: Vec<T> = sigma.row(i).to_vec();
            let c = dt / (T::one() + dt * sii);
            let mean_step = dn * (T::one() - c * sii) - c * mu[i];
            for a in 0..n {
                let ca = c * si[a];
                mu[a] = mu[a] + mean_step * si[a];
                for (r, &sb) in sigma.row_mut(a).iter_mut().zip(&si) {
                    *r = *r - ca * sb;
                }
            }
        }
        // recompute from scratch to keep rounding from accumulating
        post = posterior(kf, &sites)?;
        let lz = log_marginal(model, off, &post, &sites);
        if !lz.is_finite() {
            return Err(Error::Numerical("EP log marginal likelihood is not finite".into()));
        }
        if (lz - last).abs() < tol {
            let kn = kf.matvec(&sites.shift);
            let swkn: Vec<T> = post.sqrt_w.iter().zip(&kn).map(|(&a, &b)| a * b).collect();
            let r = post.chol.solve(&swkn);
            let b = (0..n).map(|i| sites.shift[i] - post.sqrt_w[i] * r[i]).collect();
            return Ok(EpState {
                log_marginal: lz,
                sites,
                sweeps: sweep,
                sqrt_w: post.sqrt_w,
                chol_b: post.chol,
                b,
            });
        }
        last = lz;
        sigma = post.sigma.clone();
        mu = post.mu.clone();
    }
    Err(Error::Numerical(format!("EP did not converge in {max_sweeps} sweeps")))
}

fn log_marginal<T: Scalar>(model: &ProbitModel<'_, T>, off: &[T], post: &Posterior<T>, sites: &EpSites<T>) -> T {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut total = half * dot(&sites.shift, &post.mu) - half * post.chol.log_det();
    for i in 0..post.mu.len() {
        let sii = post.sigma[(i, i)];
        let (tt, tn) = (sites.precision[i], sites.shift[i]);
        let tau_c = sii.recip() - tt;
        let nu_c = post.mu[i] / sii - tn;
        let sgn = if model.y[i] { T::one() } else { -T::one() };
        let z = sgn * (off[i] + nu_c / tau_c) / (T::one() + tau_c.recip()).sqrt();
        total = total + log_norm_cdf(z) + half * (tt / tau_c).ln_1p() - (nu_c + tn) * (nu_c + tn) / (two * (tau_c + tt))
            + nu_c * nu_c / (two * tau_c);
    }
    total
}

/// Mean and variance of the normalized `N(f; m, v) Φ(±(o + f))`.
fn tilted_moments<T: Scalar>(y: bool, o: T, m: T, v: T) -> (T, T) {
    let sgn = if y { T::one() } else { -T::one() };
    let s = (T::one() + v).sqrt();
    let z = sgn * (o + m) / s;
    let r = inv_mills(z);
    (m + sgn * v * r / s, v - v * v * r * (z + r) / (T::one() + v))
}
