//! Maximum likelihood for the probit geostatistical model.
//!
//! The latent field is integrated out by a Laplace approximation around the
//! conditional mode (optionally refined by importance sampling) or by
//! expectation propagation. For up to three locations the integral can also
//! be computed by tensor Gauss–Hermite quadrature, which serves as the
//! reference.

mod ep;
mod importance;
mod laplace;

use crate::error::{Error, Result};
use crate::fit::{coefficient_names, wald, wald_log, Estimate, FitResult, ModelKind, Scale};
use crate::geo::{distance, max_pairwise_distance, PrevalenceParams, SurveyDataset};
use crate::linalg::{Cholesky, Matrix};
use crate::optim::{fd_gradient, fd_hessian, fd_jacobian, max_norm, maximize, QuasiNewtonOptions};
use crate::quadrature::GaussHermite;
use crate::scalar::{probit_log_lik_derivs, Scalar};

pub use ep::EpSites;

/// Probabilities are kept inside `[P_MIN, 1 − P_MIN]` before taking logs.
pub const P_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMode {
    Laplace,
    LaplaceIs,
    /// Expectation propagation with one Gaussian site per individual.
    Ep,
}

#[derive(Debug, Clone)]
pub struct LatentIntegrationSettings<T> {
    pub mode: IntegrationMode,
    pub is_samples: usize,
    /// Newton stops when no latent value moves by more than this.
    pub inner_tol: T,
    pub max_newton: usize,
    pub quadrature_order: usize,
    /// Seed of the importance-sampling draws; the same draws are reused at
    /// every parameter value.
    pub seed: u64,
    /// EP stops when the log marginal changes by less than this over a sweep.
    pub ep_tol: T,
    pub ep_max_sweeps: usize,
}

impl<T: Scalar> Default for LatentIntegrationSettings<T> {
    fn default() -> Self {
        Self {
            mode: IntegrationMode::Laplace,
            is_samples: 5000,
            inner_tol: T::lit(1e-10),
            max_newton: 100,
            quadrature_order: 40,
            seed: 0,
            ep_tol: T::lit(1e-9),
            ep_max_sweeps: 200,
        }
    }
}

impl<T: Scalar> LatentIntegrationSettings<T> {
    pub fn with_mode(mode: IntegrationMode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == IntegrationMode::LaplaceIs && self.is_samples < 100 {
            return Err(Error::ParameterDomain(format!(
                "importance sampling needs at least 100 draws, got {}",
                self.is_samples
            )));
        }
        if self.quadrature_order < 20 {
            return Err(Error::ParameterDomain(format!(
                "quadrature order must be at least 20, got {}",
                self.quadrature_order
            )));
        }
        if !(self.inner_tol > T::zero()) || self.max_newton == 0 {
            return Err(Error::ParameterDomain("Newton tolerance and iteration cap must be positive".into()));
        }
        if !(self.ep_tol > T::zero()) || self.ep_max_sweeps == 0 {
            return Err(Error::ParameterDomain("EP tolerance and sweep cap must be positive".into()));
        }
        Ok(())
    }
}

/// Clamped probit log-probability and its derivatives in the linear predictor.
/// Inside the clamped region the derivatives are zero.
#[inline]
pub(crate) fn probit_term<T: Scalar>(y: bool, eta: T) -> (T, T, T) {
    let lo = T::lit(P_MIN.ln());
    let hi = T::lit((-P_MIN).ln_1p());
    let (v, d1, d2) = probit_log_lik_derivs(y, eta);
    if v < lo {
        (lo, T::zero(), T::zero())
    } else if v > hi {
        (hi, d1, d2)
    } else {
        (v, d1, d2)
    }
}

/// `g(ỹ | s̃) = Σ ỹ log p + (1 − ỹ) log(1 − p)` with `Φ⁻¹(p_ij) = μ̃_ij + s̃_i`.
pub fn conditional_binary_loglik<T: Scalar>(
    params: &PrevalenceParams<T>,
    dataset: &SurveyDataset<T>,
    s_t: &[T],
) -> Result<T> {
    let model = ProbitModel::new(dataset)?;
    model.check(params)?;
    if s_t.len() != model.m {
        return Err(Error::Schema(format!("{} latent values for {} locations", s_t.len(), model.m)));
    }
    let off = model.offsets(&params.coefficients());
    Ok(model.loglik(&off, s_t))
}

/// Data-side quantities of the probit model.
pub(crate) struct ProbitModel<'a, T> {
    pub(crate) y: &'a [bool],
    pub(crate) loc: &'a [usize],
    pub(crate) x: Matrix<T>,
    pub(crate) m: usize,
    /// Inter-location distances.
    pub(crate) dist: Matrix<T>,
}

impl<'a, T: Scalar> ProbitModel<'a, T> {
    pub(crate) fn new(dataset: &'a SurveyDataset<T>) -> Result<Self> {
        let locs = dataset.locations();
        Ok(Self {
            y: dataset.binary()?,
            loc: dataset.location_of(),
            x: dataset.design_matrix(),
            m: dataset.n_locations(),
            dist: Matrix::from_fn(locs.len(), locs.len(), |i, j| distance(&locs[i], &locs[j])),
        })
    }

    pub(crate) fn check(&self, params: &PrevalenceParams<T>) -> Result<()> {
        params.validate(true)?;
        let q = params.beta_gamma_t.len() + 1;
        if q != self.x.cols() {
            return Err(Error::Schema(format!(
                "{q} regression coefficients for a design with {} columns",
                self.x.cols()
            )));
        }
        Ok(())
    }

    pub(crate) fn offsets(&self, coef: &[T]) -> Vec<T> {
        self.x.matvec(coef)
    }

    /// Location-level latent covariance `σ̃² ρ`.
    pub(crate) fn covariance(&self, sigma2_t: T, phi: T) -> Matrix<T> {
        let inv = phi.recip();
        self.dist.map(|d| sigma2_t * (-d * inv).exp())
    }

    pub(crate) fn loglik(&self, off: &[T], s: &[T]) -> T {
        self.y
            .iter()
            .zip(off)
            .zip(self.loc)
            .map(|((&y, &o), &i)| probit_term(y, o + s[i]).0)
            .sum()
    }

    /// Total value plus per-location gradient and negative curvature.
    pub(crate) fn terms(&self, off: &[T], s: &[T]) -> (T, Vec<T>, Vec<T>) {
        let mut g = vec![T::zero(); self.m];
        let mut w = vec![T::zero(); self.m];
        let mut v = T::zero();
        for ((&y, &o), &i) in self.y.iter().zip(off).zip(self.loc) {
            let (a, b, c) = probit_term(y, o + s[i]);
            v = v + a;
            g[i] = g[i] + b;
            w[i] = w[i] - c;
        }
        (v, g, w)
    }
}

/// Gaussian approximation to the latent field given the outcomes, written as
/// a prior `N(0, K)` updated by Gaussian pseudo-observations at `points`
/// (location indices) with precisions `sqrt_w²`. The mean at any set of
/// locations with cross-covariance `K*` is `K* b`.
pub struct LatentGaussian<T> {
    pub(crate) points: Vec<usize>,
    pub(crate) sqrt_w: Vec<T>,
    pub(crate) b: Vec<T>,
    pub(crate) chol_b: Cholesky<T>,
}

impl<T: Scalar> LatentGaussian<T> {
    fn expand(&self, cross: &Matrix<T>) -> Matrix<T> {
        Matrix::from_fn(cross.rows(), self.points.len(), |r, j| cross[(r, self.points[j])])
    }

    /// Conditional mean at targets; `cross` is targets × data locations.
    pub fn mean(&self, cross: &Matrix<T>) -> Vec<T> {
        self.expand(cross).matvec(&self.b)
    }

    /// Conditional covariance at targets given their prior covariance.
    pub fn covariance(&self, cross: &Matrix<T>, prior: &Matrix<T>) -> Matrix<T> {
        let kx = self.expand(cross);
        let n = self.points.len();
        let swk = Matrix::from_fn(n, kx.rows(), |j, r| self.sqrt_w[j] * kx[(r, j)]);
        let v = self.chol_b.solve_lower_matrix(&swk);
        let mut out = prior.sub(&v.transpose().matmul(&v));
        out.symmetrize();
        out
    }
}

/// Gaussian approximation of the latent field at the data locations: the
/// Laplace Gaussian for the Laplace modes, the EP posterior for EP.
pub fn latent_approximation<T: Scalar>(
    params: &PrevalenceParams<T>,
    dataset: &SurveyDataset<T>,
    settings: &LatentIntegrationSettings<T>,
) -> Result<LatentGaussian<T>> {
    settings.validate()?;
    let model = ProbitModel::new(dataset)?;
    model.check(params)?;
    let off = model.offsets(&params.coefficients());
    let k = model.covariance(params.sigma2_t, params.phi);
    Ok(match settings.mode {
        IntegrationMode::Ep => {
            let kf = ep::individual_covariance(&k, model.loc);
            ep::expectation_propagation(&model, &off, &kf, None, settings.ep_tol, settings.ep_max_sweeps)?
                .into_gaussian(model.loc)
        }
        _ => laplace::laplace_mode(&model, &off, &k, None, settings.inner_tol, settings.max_newton)?
            .into_gaussian(model.m),
    })
}

/// State carried between nearby evaluations to shorten the inner iterations.
#[derive(Debug, Clone)]
pub enum WarmStart<T> {
    /// `K⁻¹ ŝ` at the previous Laplace mode.
    Laplace(Vec<T>),
    Ep(EpSites<T>),
}

/// Diagnostics of one integrated-likelihood evaluation.
#[derive(Debug, Clone)]
pub struct IntegratedLoglik<T> {
    pub value: T,
    /// Plain Laplace value, when a Laplace mode was computed.
    pub laplace: Option<T>,
    /// Newton steps or EP sweeps.
    pub inner_iterations: usize,
    pub warm: Option<WarmStart<T>>,
    /// Gradient in `(coefficients, ln σ̃², ln φ)`, available for EP.
    pub gradient: Option<Vec<T>>,
}

/// Approximate log of the marginal likelihood of the binary outcomes.
pub fn integrated_loglik<T: Scalar>(
    params: &PrevalenceParams<T>,
    dataset: &SurveyDataset<T>,
    settings: &LatentIntegrationSettings<T>,
) -> Result<T> {
    integrated_loglik_detail(params, dataset, settings, None).map(|r| r.value)
}

pub fn integrated_loglik_detail<T: Scalar>(
    params: &PrevalenceParams<T>,
    dataset: &SurveyDataset<T>,
    settings: &LatentIntegrationSettings<T>,
    warm: Option<&WarmStart<T>>,
) -> Result<IntegratedLoglik<T>> {
    settings.validate()?;
    let model = ProbitModel::new(dataset)?;
    model.check(params)?;
    integrate(&model, params, settings, warm, true)
}

fn integrate<T: Scalar>(
    model: &ProbitModel<'_, T>,
    params: &PrevalenceParams<T>,
    settings: &LatentIntegrationSettings<T>,
    warm: Option<&WarmStart<T>>,
    want_grad: bool,
) -> Result<IntegratedLoglik<T>> {
    let off = model.offsets(&params.coefficients());
    if params.sigma2_t == T::zero() {
        let value = model.loglik(&off, &vec![T::zero(); model.m]);
        return Ok(IntegratedLoglik { value, laplace: Some(value), inner_iterations: 0, warm: None, gradient: None });
    }
    let k = model.covariance(params.sigma2_t, params.phi);
    let out = if settings.mode == IntegrationMode::Ep {
        let kf = ep::individual_covariance(&k, model.loc);
        let sites = match warm {
            Some(WarmStart::Ep(s)) => Some(s),
            _ => None,
        };
        let state = ep::expectation_propagation(model, &off, &kf, sites, settings.ep_tol, settings.ep_max_sweeps)?;
        let gradient = want_grad.then(|| {
            let inv = params.phi.recip();
            let dk_phi = Matrix::from_fn(kf.rows(), kf.rows(), |a, b| {
                kf[(a, b)] * model.dist[(model.loc[a], model.loc[b])] * inv
            });
            let (d_off, hyper) = state.gradient(&[&kf, &dk_phi]);
            let mut g = model.x.t_matvec(&d_off);
            g.extend(hyper);
            g
        });
        IntegratedLoglik {
            value: state.log_marginal,
            laplace: None,
            inner_iterations: state.sweeps,
            warm: Some(WarmStart::Ep(state.sites)),
            gradient,
        }
    } else {
        let warm_a = match warm {
            Some(WarmStart::Laplace(a)) => Some(a.as_slice()),
            _ => None,
        };
        let mode = laplace::laplace_mode(model, &off, &k, warm_a, settings.inner_tol, settings.max_newton)?;
        let laplace = mode.log_marginal;
        let value = match settings.mode {
            IntegrationMode::LaplaceIs => {
                importance::importance_sample(model, &off, &k, &mode, settings.is_samples, settings.seed)?
            }
            _ => laplace,
        };
        IntegratedLoglik {
            value,
            laplace: Some(laplace),
            inner_iterations: mode.iterations,
            warm: Some(WarmStart::Laplace(mode.a)),
            gradient: None,
        }
    };
    if !out.value.is_finite() {
        return Err(Error::Numerical("integrated log-likelihood is not finite".into()));
    }
    Ok(out)
}

pub(crate) fn log_mean_exp<T: Scalar>(v: &[T]) -> T {
    let mx = v.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    if !mx.is_finite() {
        return mx;
    }
    let s: T = v.iter().map(|&x| (x - mx).exp()).sum();
    mx + (s / T::lit(v.len() as f64)).ln()
}

/// Reference value of the marginal log-likelihood for `m ≤ 3` by tensor
/// Gauss–Hermite quadrature after whitening with the factor of `Σ̃`.
pub fn exact_loglik_smallm<T: Scalar>(params: &PrevalenceParams<T>, dataset: &SurveyDataset<T>, order: usize) -> Result<T> {
    let model = ProbitModel::new(dataset)?;
    model.check(params)?;
    let m = model.m;
    if m > 3 {
        return Err(Error::UnsupportedSize(format!("quadrature reference supports m ≤ 3, got m = {m}")));
    }
    if order == 0 {
        return Err(Error::ParameterDomain("quadrature order must be positive".into()));
    }
    let off = model.offsets(&params.coefficients());
    if params.sigma2_t == T::zero() {
        return Ok(model.loglik(&off, &vec![T::zero(); m]));
    }
    let k = model.covariance(params.sigma2_t, params.phi);
    let chol = Cholesky::with_jitter(&k, "latent covariance")?;
    let gh = GaussHermite::<T>::new(order);
    let lw: Vec<T> = gh.weights.iter().map(|w| w.ln()).collect();
    let total = order.pow(m as u32);
    let mut terms = Vec::with_capacity(total);
    let mut idx = vec![0usize; m];
    for _ in 0..total {
        let z: Vec<T> = idx.iter().map(|&i| gh.nodes[i]).collect();
        let s = chol.lower_mul(&z);
        let w: T = idx.iter().map(|&i| lw[i]).sum();
        terms.push(w + model.loglik(&off, &s));
        for d in idx.iter_mut() {
            *d += 1;
            if *d < order {
                break;
            }
            *d = 0;
        }
    }
    // weights already sum to one, so the mean of exp(terms) times `total` is the sum
    Ok(log_mean_exp(&terms) + T::lit(total as f64).ln())
}

#[derive(Debug, Clone)]
pub struct BinomialFitOptions<T> {
    pub max_iter: usize,
    pub grad_tol: T,
    /// Central-difference step on the working scale, used when the
    /// integration mode has no analytic gradient.
    pub fd_step: T,
    pub fix_phi: bool,
    pub skip_info: bool,
    /// Upper end of the search region for `σ̃²`. A fit that ends within a
    /// factor of two of it is reported as a boundary fit (`converged = false`).
    pub max_sigma2_t: T,
}

impl<T: Scalar> Default for BinomialFitOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: T::lit(1e-4),
            fd_step: T::lit(1e-4),
            fix_phi: false,
            skip_info: false,
            max_sigma2_t: T::lit(100.0),
        }
    }
}

/// Starting values: non-spatial probit regression, inflated by `√(1 + σ̃²)`
/// to undo the attenuation of marginal coefficients, with `σ̃² = 0.5` and `φ`
/// a tenth of the largest inter-location distance.
pub fn default_binomial_init<T: Scalar>(dataset: &SurveyDataset<T>) -> Result<PrevalenceParams<T>> {
    let model = ProbitModel::new(dataset)?;
    let q = model.x.cols();
    let zero_s = vec![T::zero(); model.m];
    let mut b = vec![T::zero(); q];
    let mut cur = model.loglik(&model.offsets(&b), &zero_s);
    for _ in 0..50 {
        let off = model.offsets(&b);
        let mut grad = vec![T::zero(); q];
        let mut info = Matrix::zeros(q, q);
        for (k, (&y, &o)) in model.y.iter().zip(&off).enumerate() {
            let (_, d1, d2) = probit_term(y, o);
            let row = model.x.row(k);
            for i in 0..q {
                grad[i] = grad[i] + d1 * row[i];
                for j in 0..q {
                    info[(i, j)] = info[(i, j)] - d2 * row[i] * row[j];
                }
            }
        }
        let Some(c) = Cholesky::new(&info) else { break };
        let step = c.solve(&grad);
        let mut t = T::one();
        let mut improved = false;
        for _ in 0..30 {
            let nb: Vec<T> = b.iter().zip(&step).map(|(&x, &d)| x + t * d).collect();
            let v = model.loglik(&model.offsets(&nb), &zero_s);
            if v >= cur {
                b = nb;
                improved = v > cur;
                cur = v;
                break;
            }
            t = t * T::lit(0.5);
        }
        if !improved || max_norm(&step) < T::lit(1e-10) {
            break;
        }
    }
    let sigma2_t = T::lit(0.5);
    let inflate = (T::one() + sigma2_t).sqrt();
    let b: Vec<T> = b.iter().map(|&v| (v * inflate).max(T::lit(-10.0)).min(T::lit(10.0))).collect();
    let mut phi = T::lit(0.1) * max_pairwise_distance(dataset.locations());
    if !(phi > T::zero()) {
        phi = T::one();
    }
    PrevalenceParams::new(b[0], b[1..].to_vec(), sigma2_t, phi)
}

/// Maximum-likelihood fit of the probit model over
/// `(α̃, β̃, γ̃, ln σ̃², ln φ)`.
pub fn fit_binomial<T: Scalar>(
    dataset: &SurveyDataset<T>,
    init: &PrevalenceParams<T>,
    settings: &LatentIntegrationSettings<T>,
    opts: &BinomialFitOptions<T>,
) -> Result<FitResult<T>> {
    settings.validate()?;
    init.validate(false)?;
    let model = ProbitModel::new(dataset)?;
    model.check(init)?;
    let q = model.x.cols();

    let mut working = init.coefficients();
    working.push(init.sigma2_t.ln());
    working.push(init.phi.ln());
    let mut free = vec![true; q + 2];
    free[q + 1] = !opts.fix_phi;
    let idx: Vec<usize> = (0..q + 2).filter(|&i| free[i]).collect();
    let mut working_names = coefficient_names("beta", q, "_t");
    working_names.extend(["ln_sigma2_t", "ln_phi"].map(String::from));

    let unpack = |z: &[T]| {
        let mut w = working.clone();
        for (k, &i) in idx.iter().enumerate() {
            w[i] = z[k];
        }
        w
    };
    let to_params = |w: &[T]| PrevalenceParams {
        alpha_t: w[0],
        beta_gamma_t: w[1..q].to_vec(),
        sigma2_t: w[q].exp(),
        phi: w[q + 1].exp(),
    };

    let y = model.y;
    if y.iter().all(|&v| v == y[0]) {
        let value = integrate(&model, init, settings, None, false).map(|r| r.value).unwrap_or(T::nan());
        return Ok(FitResult {
            kind: ModelKind::Binomial,
            continuous: None,
            prevalence: Some(init.clone()),
            estimates: binomial_estimates(init, None),
            working,
            working_names,
            free,
            loglik: value,
            obs_info: None,
            converged: false,
            iterations: 0,
            grad_max: T::nan(),
            message: "all outcomes identical: intercept not identifiable (separation)".into(),
            trace: Vec::new(),
        });
    }

    if !(opts.max_sigma2_t > init.sigma2_t) {
        return Err(Error::ParameterDomain(format!(
            "initial sigma2_t {} is not below the search bound {}",
            init.sigma2_t, opts.max_sigma2_t
        )));
    }
    let ln_cap = opts.max_sigma2_t.ln();
    let analytic = settings.mode == IntegrationMode::Ep;
    let mut warm: Option<WarmStart<T>> = None;
    let mut evaluate = |z: &[T], want_grad: bool| -> Result<(T, Option<Vec<T>>)> {
        let w = unpack(z);
        if w[..q].iter().any(|c| c.abs() > T::lit(1e3)) || w[q] > ln_cap || w[q] < T::lit(-30.0) {
            return Err(Error::Numerical("parameters left the admissible region".into()));
        }
        let r = integrate(&model, &to_params(&w), settings, warm.as_ref(), want_grad)?;
        warm = r.warm;
        let grad = r.gradient.map(|g| idx.iter().map(|&i| g[i]).collect());
        Ok((r.value, grad))
    };
    let z0: Vec<T> = idx.iter().map(|&i| working[i]).collect();
    let h = opts.fd_step;
    let value_and_grad = |z: &[T]| -> Result<(T, Vec<T>)> {
        if analytic {
            let (v, g) = evaluate(z, true)?;
            return Ok((v, g.expect("EP provides a gradient")));
        }
        let v = evaluate(z, false)?.0;
        let g = fd_gradient(&mut |p: &[T]| evaluate(p, false).map(|r| r.0), z, h)?;
        Ok((v, g))
    };
    let qn = QuasiNewtonOptions {
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol,
        ..QuasiNewtonOptions::default()
    };
    let opt = maximize(value_and_grad, &z0, &qn)?;
    let best = unpack(&opt.x);
    let params = to_params(&best);
    params.validate(false)?;

    let at_bound = best[q] > ln_cap - T::lit(2.0).ln();
    let obs_info = if opts.skip_info || at_bound {
        None
    } else {
        let mut warm: Option<WarmStart<T>> = None;
        let mut eval = |z: &[T], want_grad: bool| -> Result<IntegratedLoglik<T>> {
            let r = integrate(&model, &to_params(&unpack(z)), settings, warm.as_ref(), want_grad)?;
            warm = r.warm.clone();
            Ok(r)
        };
        let mut hm = if analytic {
            let steps: Vec<T> = opt.x.iter().map(|&v| T::lit(1e-4) * (T::one() + v.abs())).collect();
            let mut g = |z: &[T]| -> Result<Vec<T>> {
                let full = eval(z, true)?.gradient.expect("EP provides a gradient");
                Ok(idx.iter().map(|&i| full[i]).collect())
            };
            fd_jacobian(&mut g, &opt.x, &steps)?
        } else {
            let steps: Vec<T> = opt.x.iter().map(|&v| T::lit(1e-3) * (T::one() + v.abs())).collect();
            fd_hessian(&mut |z: &[T]| eval(z, false).map(|r| r.value), &opt.x, &steps)?
        }
        .scale(-T::one());
        hm.symmetrize();
        Some(hm)
    };

    let grad_max = opt.grad_max();
    let (converged, message) = if at_bound {
        (
            false,
            format!(
                "sigma2_t = {} is at the search bound: the likelihood keeps increasing towards the noise-free limit",
                params.sigma2_t
            ),
        )
    } else {
        (opt.converged, opt.message)
    };
    let mut result = FitResult {
        kind: ModelKind::Binomial,
        continuous: None,
        prevalence: Some(params.clone()),
        estimates: Vec::new(),
        working: best,
        working_names,
        free,
        loglik: opt.value,
        obs_info,
        converged,
        iterations: opt.iterations,
        grad_max,
        message,
        trace: opt.trace,
    };
    let cov = result.working_covariance();
    result.estimates = binomial_estimates(&params, cov.as_ref());
    Ok(result)
}

fn binomial_estimates<T: Scalar>(params: &PrevalenceParams<T>, cov: Option<&Matrix<T>>) -> Vec<Estimate<T>> {
    let coef = params.coefficients();
    let q = coef.len();
    let var = |i: usize| cov.map(|c| c[(i, i)]);
    let mut out: Vec<Estimate<T>> = coefficient_names("beta", q, "_t")
        .into_iter()
        .enumerate()
        .map(|(j, name)| Estimate {
            name,
            scale: Scale::Prevalence,
            value: coef[j],
            ci95: var(j).and_then(|v| wald(coef[j], v)),
        })
        .collect();
    for (name, value, i) in [("sigma2_t", params.sigma2_t, q), ("phi", params.phi, q + 1)] {
        out.push(Estimate {
            name: name.into(),
            scale: Scale::Prevalence,
            value,
            ci95: var(i).and_then(|v| wald_log(value, v)),
        });
    }
    out
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{Location, Outcomes, SurveyDesign};

    fn two_point(y: Vec<bool>, d: f64) -> SurveyDataset<f64> {
        let locs = vec![Location::new(0.0, 0.0, "a"), Location::new(d, 0.0, "b")];
        SurveyDataset::new(SurveyDesign::one_per_location(locs).unwrap(), Outcomes::Binary(y)).unwrap()
    }

    #[test]
    fn conditional_loglik_examples() {
        let ds = two_point(vec![true, false], 1.0);
        let p = PrevalenceParams::new(0.0, vec![], 1.0, 0.1).unwrap();
        let v = conditional_binary_loglik(&p, &ds, &[0.0, 0.0]).unwrap();
        assert!((v - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        let v = conditional_binary_loglik(&p, &ds, &[0.0, 3.0]).unwrap();
        assert!((v - (0.5f64.ln() - 6.607_726_221_510_349)).abs() < 1e-9);
        // deep in the tail the probability is clamped
        let v = conditional_binary_loglik(&p, &ds, &[-50.0, 0.0]).unwrap();
        assert!((v - (P_MIN.ln() + 0.5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn single_location_symmetry() {
        let locs = vec![Location::new(0.0, 0.0, "a")];
        let ds = SurveyDataset::new(SurveyDesign::one_per_location(locs).unwrap(), Outcomes::Binary(vec![true])).unwrap();
        let p = PrevalenceParams::new(0.0, vec![], 1.0, 0.1).unwrap();
        let v = exact_loglik_smallm(&p, &ds, 40).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_field_gives_bernoulli_sum() {
        let ds = two_point(vec![true, false], 0.3);
        let p = PrevalenceParams::degenerate(0.4, vec![], 0.0, 0.1).unwrap();
        let want = crate::scalar::log_norm_cdf(0.4) + crate::scalar::log_norm_cdf(-0.4);
        for mode in [IntegrationMode::Laplace, IntegrationMode::LaplaceIs] {
            let s = LatentIntegrationSettings { mode, ..Default::default() };
            assert!((integrated_loglik(&p, &ds, &s).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn importance_sampling_matches_quadrature() {
        let ds = two_point(vec![true, true], 0.07);
        let p = PrevalenceParams::new(0.2, vec![], 1.0, 0.1).unwrap();
        let exact = exact_loglik_smallm(&p, &ds, 60).unwrap();
        let s = LatentIntegrationSettings { mode: IntegrationMode::LaplaceIs, seed: 7, ..Default::default() };
        let is = integrated_loglik(&p, &ds, &s).unwrap();
        assert!(((is - exact) / exact).abs() < 1e-3, "{is} vs {exact}");
    }

    #[test]
    fn separation_is_reported_not_fatal() {
        let ds = two_point(vec![true, true], 0.5);
        let init = PrevalenceParams::new(0.0, vec![], 0.5, 0.05).unwrap();
        let fit = fit_binomial(&ds, &init, &LatentIntegrationSettings::default(), &BinomialFitOptions::default()).unwrap();
        assert!(!fit.converged);
    }

    #[test]
    fn settings_validation() {
        let s = LatentIntegrationSettings::<f64> { mode: IntegrationMode::LaplaceIs, is_samples: 50, ..Default::default() };
        assert!(s.validate().is_err());
        let s = LatentIntegrationSettings::<f64> { quadrature_order: 10, ..Default::default() };
        assert!(s.validate().is_err());
    }

    fn three_point(y: Vec<bool>, x: Vec<f64>) -> SurveyDataset<f64> {
        let locs = vec![Location::new(0.0, 0.0, "a"), Location::new(0.1, 0.0, "b"), Location::new(0.0, 0.2, "c")];
        let design = SurveyDesign::new(locs, vec![0, 1, 2], x.iter().map(|&v| vec![v]).collect(), None).unwrap();
        SurveyDataset::new(design, Outcomes::Binary(y)).unwrap()
    }

    #[test]
    fn ep_is_close_to_quadrature() {
        let ds = three_point(vec![true, false, true], vec![0.3, -1.0, 0.5]);
        let p = PrevalenceParams::new(0.2, vec![0.7], 2.0, 0.15).unwrap();
        let exact = exact_loglik_smallm(&p, &ds, 60).unwrap();
        let ep = integrated_loglik(&p, &ds, &LatentIntegrationSettings::with_mode(IntegrationMode::Ep)).unwrap();
        let lap = integrated_loglik(&p, &ds, &LatentIntegrationSettings::default()).unwrap();
        assert!((ep - exact).abs() < 2e-3, "{ep} vs {exact}");
        assert!((ep - exact).abs() < (lap - exact).abs());
    }

    #[test]
    fn ep_gradient_matches_differences() {
        let ds = three_point(vec![true, false, false], vec![0.3, -1.0, 0.5]);
        let s = LatentIntegrationSettings { mode: IntegrationMode::Ep, ep_tol: 1e-13, ..Default::default() };
        let w = [0.2, 0.7, 1.5f64.ln(), 0.15f64.ln()];
        let to_p = |w: &[f64]| PrevalenceParams::new(w[0], vec![w[1]], w[2].exp(), w[3].exp()).unwrap();
        let g = integrated_loglik_detail(&to_p(&w), &ds, &s, None).unwrap().gradient.unwrap();
        let fd = fd_gradient(&mut |z: &[f64]| integrated_loglik(&to_p(z), &ds, &s), &w, 1e-5).unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6, "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn latent_mean_at_data_locations_is_laplace_mode() {
        let ds = three_point(vec![true, false, true], vec![0.3, -1.0, 0.5]);
        let p = PrevalenceParams::new(0.2, vec![0.7], 1.0, 0.15).unwrap();
        let model = ProbitModel::new(&ds).unwrap();
        let k = model.covariance(1.0, 0.15);
        let off = model.offsets(&p.coefficients());
        let mode = laplace::laplace_mode(&model, &off, &k, None, 1e-12, 50).unwrap();
        let lg = latent_approximation(&p, &ds, &LatentIntegrationSettings::default()).unwrap();
        for (a, b) in lg.mean(&k).iter().zip(&mode.s) {
            assert!((a - b).abs() < 1e-10);
        }
        let v = lg.covariance(&k, &k);
        let want = laplace::laplace_covariance(&k, &mode);
        assert!(v.sub(&want).max_abs() < 1e-12);
        assert!(mode.iterations <= 50);
    }
}

