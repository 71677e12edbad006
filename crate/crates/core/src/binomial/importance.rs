use rand::Rng as _;

use crate::error::Result;
use crate::linalg::{dot, Cholesky, Matrix};
use crate::quadrature::Halton;
use crate::rng::{self, purpose};
use crate::scalar::{norm_quantile, Scalar};

use super::laplace::{laplace_covariance, LaplaceMode};
use super::{log_mean_exp, ProbitModel};

/// Mixture weight of the wide proposal component.
const WIDE_SHARE: f64 = 0.5;

/// Importance sampling with a defensive two-component proposal centred at the
/// Laplace mode: the Laplace Gaussian `N(ŝ, V)` mixed with `N(ŝ, K + V)`.
pub(crate) fn importance_sample<T: Scalar>(
    model: &ProbitModel<'_, T>,
    off: &[T],
    k: &Matrix<T>,
    mode: &LaplaceMode<T>,
    n: usize,
    seed: u64,
) -> Result<T> {
    let half = T::lit(0.5);
    let chol_k = Cholesky::with_jitter(k, "latent covariance")?;
    let v = laplace_covariance(k, mode);
    let chol_v = Cholesky::with_jitter(&v, "Laplace covariance")?;
    let chol_w = Cholesky::with_jitter(&v.add(k), "wide proposal covariance")?;
    let (ln_narrow, ln_wide) = (T::lit(1.0 - WIDE_SHARE).ln(), T::lit(WIDE_SHARE).ln());
    // log densities up to the shared −(m/2) ln 2π
    let lq = |chol: &Cholesky<T>, share: T, dev: &[T]| {
        let u = chol.solve_lower(dev);
        share - half * dot(&u, &u) - half * chol.log_det()
    };
    let mix_density = |dev: &[T]| {
        let (a, b) = (lq(&chol_v, ln_narrow, dev), lq(&chol_w, ln_wide, dev));
        let mx = a.max(b);
        mx + ((a - mx).exp() + (b - mx).exp()).ln()
    };
    let log_target = |dev: &[T]| {
        let s: Vec<T> = mode.s.iter().zip(dev).map(|(&a, &b)| a + b).collect();
        let u = chol_k.solve_lower(&s);
        model.loglik(off, &s) - half * dot(&u, &u) - half * chol_k.log_det()
    };
    // Each normal vector goes through both components and the two weights use
    // the full mixture density (deterministic mixture).
    let mut draws = ProposalDraws::new(model.m, seed);
    let mut logw = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let z: Vec<T> = draws.next();
        for (chol, share) in [(&chol_v, ln_narrow), (&chol_w, ln_wide)] {
            let dev = chol.lower_mul(&z);
            logw.push(share + log_target(&dev) - mix_density(&dev));
        }
    }
    Ok(log_mean_exp(&logw) + T::lit(2.0).ln())
}

/// Standard normal vectors for the sampler: a randomly shifted Halton
/// sequence through `Φ⁻¹` in low dimensions, antithetic pseudo-random pairs
/// otherwise.
struct ProposalDraws {
    dim: usize,
    rng: rng::Rng,
    halton: Option<(Halton, Vec<f64>)>,
    last: Vec<f64>,
    count: usize,
}

impl ProposalDraws {
    const MAX_QMC_DIM: usize = 12;

    fn new(dim: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, purpose::IMPORTANCE);
        let halton = (dim <= Self::MAX_QMC_DIM).then(|| {
            let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            (Halton::new(dim), shift)
        });
        Self { dim, rng, halton, last: vec![0.0; dim], count: 0 }
    }

    fn next<T: Scalar>(&mut self) -> Vec<T> {
        if let Some((h, shift)) = &mut self.halton {
            h.fill(&mut self.last);
            for (u, s) in self.last.iter_mut().zip(shift.iter()) {
                let v = (*u + s).fract();
                *u = norm_quantile(v.clamp(1e-300, 1.0 - f64::EPSILON / 2.0));
            }
        } else if self.count.is_multiple_of(2) {
            self.last = rng::std_normal_vec(&mut self.rng, self.dim);
        } else {
            self.last.iter_mut().for_each(|v| *v = -*v);
        }
        self.count += 1;
        self.last.iter().map(|&v| T::lit(v)).collect()
    }
}
