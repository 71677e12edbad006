//! Exact Gaussian maximum likelihood for the linear geostatistical model.
//!
//! Working scale: regression coefficients, then `ln σ²`, `ln τ²`, `ln φ`. The
//! regression block is profiled out by generalized least squares at every
//! covariance evaluation, so the optimizer only moves the three covariance
//! parameters.

use crate::error::{Error, Result};
use crate::fit::{coefficient_names, delta_var, wald, wald_log, Estimate, FitResult, ModelKind, Scale};
use crate::geo::{
    distance, max_pairwise_distance, to_prevalence_scale, to_prevalence_scale_varying, ModelParams,
    PrevalenceParams, SurveyDataset,
};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::optim::{fd_jacobian, max_norm, maximize, QuasiNewtonOptions};
use crate::scalar::Scalar;

/// How the prevalence-scale view of a linear fit is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrevalenceThreshold<T> {
    /// Dichotomization at one threshold `c`.
    Common(T),
    /// Per-individual thresholds entering the probit predictor as the last
    /// covariate (coefficient `1/τ`).
    Varying,
}

#[derive(Debug, Clone)]
pub struct LinearFitOptions<T> {
    pub max_iter: usize,
    pub grad_tol: T,
    pub fix_sigma2: bool,
    pub fix_tau2: bool,
    pub fix_phi: bool,
    /// Overrides the threshold carried by the dataset.
    pub threshold: Option<PrevalenceThreshold<T>>,
    /// Skip the observed information (and with it the intervals).
    pub skip_info: bool,
}

impl<T: Scalar> Default for LinearFitOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: T::lit(1e-6),
            fix_sigma2: false,
            fix_tau2: false,
            fix_phi: false,
            threshold: None,
            skip_info: false,
        }
    }
}

struct Evaluation<T> {
    value: T,
    coef: Vec<T>,
    /// Gradient over (coefficients, ln σ², ln τ², ln φ).
    grad: Vec<T>,
}

/// Likelihood machinery with the data-dependent pieces precomputed.
struct GaussianModel<'a, T> {
    x: Matrix<T>,
    y: &'a [T],
    loc: &'a [usize],
    dist: Matrix<T>,
}

impl<'a, T: Scalar> GaussianModel<'a, T> {
    fn new(dataset: &'a SurveyDataset<T>) -> Result<Self> {
        let y = dataset.continuous()?;
        let locs = dataset.locations();
        let dist = Matrix::from_fn(locs.len(), locs.len(), |i, j| distance(&locs[i], &locs[j]));
        Ok(Self {
            x: dataset.design_matrix(),
            y,
            loc: dataset.location_of(),
            dist,
        })
    }

    fn n_coef(&self) -> usize {
        self.x.cols()
    }

    /// Evaluates at natural-scale covariance parameters. With `coef = None`
    /// the coefficients are set to their GLS estimate.
    fn eval(&self, coef: Option<&[T]>, sigma2: T, tau2: T, phi: T, want_grad: bool) -> Result<Evaluation<T>> {
        let n = self.y.len();
        let inv_phi = phi.recip();
        let mut cov = Matrix::from_fn(n, n, |k, l| {
            sigma2 * (-self.dist[(self.loc[k], self.loc[l])] * inv_phi).exp()
        });
        cov.add_to_diag(tau2);
        let chol = Cholesky::with_jitter(&cov, "outcome covariance")?;

        let coef = match coef {
            Some(c) => c.to_vec(),
            None => gls(&chol, &self.x, self.y)?,
        };
        let mu = self.x.matvec(&coef);
        let r: Vec<T> = self.y.iter().zip(&mu).map(|(&y, &m)| y - m).collect();
        let a = chol.solve(&r);
        let ln2pi = (T::PI() + T::PI()).ln();
        let value = -T::lit(0.5) * (T::lit(n as f64) * ln2pi + chol.log_det() + dot(&r, &a));
        if !value.is_finite() {
            return Err(Error::Numerical("Gaussian log-likelihood is not finite".into()));
        }
        if !want_grad {
            return Ok(Evaluation { value, coef, grad: Vec::new() });
        }

        let mut grad = self.x.t_matvec(&a);
        let inv = chol.inverse();
        let half = T::lit(0.5);
        let (mut q_s, mut t_s, mut q_p, mut t_p, mut q_t, mut t_t) =
            (T::zero(), T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
        for k in 0..n {
            q_t = q_t + a[k] * a[k];
            t_t = t_t + inv[(k, k)];
            for l in 0..n {
                let u = self.dist[(self.loc[k], self.loc[l])];
                let c = sigma2 * (-u * inv_phi).exp();
                let cu = c * u * inv_phi;
                let aa = a[k] * a[l];
                let s = inv[(k, l)];
                q_s = q_s + aa * c;
                t_s = t_s + s * c;
                q_p = q_p + aa * cu;
                t_p = t_p + s * cu;
            }
        }
        grad.push(half * (q_s - t_s));
        grad.push(half * tau2 * (q_t - t_t));
        grad.push(half * (q_p - t_p));
        Ok(Evaluation { value, coef, grad })
    }
}

fn gls<T: Scalar>(chol: &Cholesky<T>, x: &Matrix<T>, y: &[T]) -> Result<Vec<T>> {
    let six = chol.solve_matrix(x);
    let xtsx = x.transpose().matmul(&six);
    let xtsy = six.t_matvec(y);
    let c = Cholesky::new(&xtsx)
        .ok_or_else(|| Error::Schema("design matrix is rank deficient (collinear covariates?)".into()))?;
    Ok(c.solve(&xtsy))
}

/// Log-likelihood of the continuous outcomes and its analytic gradient with
/// respect to `(α, β, γ, ln σ², ln τ², ln φ)`. Zero variances are accepted
/// (the matching gradient entry is then zero).
pub fn gaussian_loglik<T: Scalar>(params: &ModelParams<T>, dataset: &SurveyDataset<T>) -> Result<(T, Vec<T>)> {
    params.validate(true)?;
    let model = GaussianModel::new(dataset)?;
    let coef = params.coefficients();
    if coef.len() != model.n_coef() {
        return Err(Error::Schema(format!(
            "{} regression coefficients for a design with {} columns",
            coef.len(),
            model.n_coef()
        )));
    }
    let e = model.eval(Some(&coef), params.sigma2, params.tau2, params.phi, true)?;
    Ok((e.value, e.grad))
}

/// Default starting point: OLS coefficients, half the residual variance each
/// for `σ²` and `τ²`, and `φ` at a tenth of the largest inter-location distance.
pub fn default_linear_init<T: Scalar>(dataset: &SurveyDataset<T>) -> Result<ModelParams<T>> {
    let y = dataset.continuous()?;
    let x = dataset.design_matrix();
    let xtx = x.transpose().matmul(&x);
    let c = Cholesky::new(&xtx)
        .ok_or_else(|| Error::Schema("design matrix is rank deficient (collinear covariates?)".into()))?;
    let b = c.solve(&x.t_matvec(y));
    let fitted = x.matvec(&b);
    let rss: T = y.iter().zip(&fitted).map(|(&a, &f)| (a - f) * (a - f)).sum();
    let dof = (y.len().saturating_sub(b.len())).max(1);
    let mut v = rss / T::lit(dof as f64);
    if !(v > T::zero()) {
        v = T::one();
    }
    let mut phi = T::lit(0.1) * max_pairwise_distance(dataset.locations());
    if !(phi > T::zero()) {
        // a single location leaves φ unidentified; any positive value will do
        phi = T::one();
    }
    let half = T::lit(0.5);
    ModelParams::new(b[0], b[1..].to_vec(), half * v, half * v, phi)
}

fn resolve_threshold<T: Scalar>(
    dataset: &SurveyDataset<T>,
    opts: &LinearFitOptions<T>,
) -> Option<PrevalenceThreshold<T>> {
    if opts.threshold.is_some() {
        return opts.threshold;
    }
    dataset.thresholds().map(|_| match dataset.common_threshold() {
            Some(c) => PrevalenceThreshold::Common(c),
            None => PrevalenceThreshold::Varying,
        })
}

/// Maximum-likelihood fit of the linear model.
pub fn fit_linear<T: Scalar>(
    dataset: &SurveyDataset<T>,
    init: &ModelParams<T>,
    opts: &LinearFitOptions<T>,
) -> Result<FitResult<T>> {
    init.validate(false)?;
    let model = GaussianModel::new(dataset)?;
    let q = model.n_coef();
    if init.coefficients().len() != q {
        return Err(Error::Schema(format!(
            "initial values carry {} coefficients, design has {q}",
            init.coefficients().len()
        )));
    }
    let n = dataset.n_individuals();
    if n < q + 3 {
        return Err(Error::Schema(format!(
            "{n} observations cannot identify {q} regression coefficients and 3 covariance parameters"
        )));
    }

    let theta0 = [init.sigma2.ln(), init.tau2.ln(), init.phi.ln()];
    let fixed = [opts.fix_sigma2, opts.fix_tau2, opts.fix_phi];
    let free_idx: Vec<usize> = (0..3).filter(|&i| !fixed[i]).collect();
    let expand = |z: &[T]| {
        let mut th = theta0;
        for (k, &i) in free_idx.iter().enumerate() {
            th[i] = z[k];
        }
        th
    };

    let profile = |z: &[T]| -> Result<(T, Vec<T>)> {
        let th = expand(z);
        let e = model.eval(None, th[0].exp(), th[1].exp(), th[2].exp(), true)?;
        Ok((e.value, free_idx.iter().map(|&i| e.grad[q + i]).collect()))
    };
    let z0: Vec<T> = free_idx.iter().map(|&i| theta0[i]).collect();
    let qn = QuasiNewtonOptions {
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol,
        ..QuasiNewtonOptions::default()
    };
    let opt = maximize(profile, &z0, &qn)?;
    let th = expand(&opt.x);
    let (sigma2, tau2, phi) = (th[0].exp(), th[1].exp(), th[2].exp());
    let best = model.eval(None, sigma2, tau2, phi, true)?;

    let mut working = best.coef.clone();
    working.extend_from_slice(&th);
    let mut free = vec![true; q];
    free.extend(fixed.iter().map(|f| !f));
    let grad_max = max_norm(&best.grad.iter().zip(&free).filter(|(_, &f)| f).map(|(&g, _)| g).collect::<Vec<_>>());

    let obs_info = if opts.skip_info {
        None
    } else {
        Some(observed_information(&model, &working, &free)?)
    };

    let params = ModelParams::new(best.coef[0], best.coef[1..].to_vec(), sigma2, tau2, phi)?;
    let threshold = resolve_threshold(dataset, opts);
    let prevalence = match threshold {
        Some(PrevalenceThreshold::Common(c)) => Some(to_prevalence_scale(&params, c)?),
        Some(PrevalenceThreshold::Varying) => Some(to_prevalence_scale_varying(&params)?),
        None => None,
    };

    let mut working_names = coefficient_names("beta", q, "");
    working_names.extend(["ln_sigma2", "ln_tau2", "ln_phi"].map(String::from));

    let mut result = FitResult {
        kind: ModelKind::Linear,
        continuous: Some(params.clone()),
        prevalence: prevalence.clone(),
        estimates: Vec::new(),
        working,
        working_names,
        free,
        loglik: best.value,
        obs_info,
        converged: opt.converged,
        iterations: opt.iterations,
        grad_max,
        message: opt.message,
        trace: opt.trace,
    };
    let cov = result.working_covariance();
    result.estimates = linear_estimates(&params, prevalence.as_ref(), threshold, cov.as_ref());
    Ok(result)
}

/// Negative finite-difference Jacobian of the analytic gradient over the free
/// working coordinates, symmetrized.
fn observed_information<T: Scalar>(model: &GaussianModel<'_, T>, working: &[T], free: &[bool]) -> Result<Matrix<T>> {
    let q = model.n_coef();
    let idx: Vec<usize> = (0..working.len()).filter(|&i| free[i]).collect();
    let z0: Vec<T> = idx.iter().map(|&i| working[i]).collect();
    let steps: Vec<T> = z0.iter().map(|&v| T::lit(1e-4) * (T::one() + v.abs())).collect();
    let mut grad = |z: &[T]| -> Result<Vec<T>> {
        let mut w = working.to_vec();
        for (k, &i) in idx.iter().enumerate() {
            w[i] = z[k];
        }
        let e = model.eval(Some(&w[..q]), w[q].exp(), w[q + 1].exp(), w[q + 2].exp(), true)?;
        Ok(idx.iter().map(|&i| e.grad[i]).collect())
    };
    let mut h = fd_jacobian(&mut grad, &z0, &steps)?.scale(-T::one());
    h.symmetrize();
    Ok(h)
}

fn linear_estimates<T: Scalar>(
    params: &ModelParams<T>,
    prevalence: Option<&PrevalenceParams<T>>,
    threshold: Option<PrevalenceThreshold<T>>,
    cov: Option<&Matrix<T>>,
) -> Vec<Estimate<T>> {
    let coef = params.coefficients();
    let q = coef.len();
    let (is, it, ip) = (q, q + 1, q + 2);
    let var = |i: usize| cov.map(|c| c[(i, i)]);
    let mut out = Vec::new();
    for (j, name) in coefficient_names("beta", q, "").into_iter().enumerate() {
        out.push(Estimate {
            name,
            scale: Scale::Continuous,
            value: coef[j],
            ci95: var(j).and_then(|v| wald(coef[j], v)),
        });
    }
    for (name, value, i) in [("sigma2", params.sigma2, is), ("tau2", params.tau2, it), ("phi", params.phi, ip)] {
        out.push(Estimate {
            name: name.into(),
            scale: Scale::Continuous,
            value,
            ci95: var(i).and_then(|v| wald_log(value, v)),
        });
    }

    let Some(prev) = prevalence else { return out };
    let n = q + 3;
    let grad_of = |entries: &[(usize, T)]| {
        let mut g = vec![T::zero(); n];
        for &(i, v) in entries {
            g[i] = v;
        }
        g
    };
    let dvar = |g: Vec<T>| cov.map(|c| delta_var(c, &g));
    let inv_tau = params.tau().recip();
    let half = T::lit(0.5);
    let prev_coef = prev.coefficients();
    let names = coefficient_names("beta", prev_coef.len(), "_t");
    for (j, name) in names.into_iter().enumerate() {
        let value = prev_coef[j];
        let ci95 = if j < q {
            // α̃ = (c − α)/τ, β̃ = −β/τ; d/d ln τ² = −value/2 in both cases
            dvar(grad_of(&[(j, -inv_tau), (it, -half * value)])).and_then(|v| wald(value, v))
        } else {
            // threshold coefficient 1/τ: ln of it is −½ ln τ²
            debug_assert!(matches!(threshold, Some(PrevalenceThreshold::Varying)));
            var(it).and_then(|v| wald_log(value, v * half * half))
        };
        out.push(Estimate { name, scale: Scale::Prevalence, value, ci95 });
    }
    let v_s2t = var(is).zip(var(it)).zip(cov).map(|((a, b), c)| a + b - T::lit(2.0) * c[(is, it)]);
    out.push(Estimate {
        name: "sigma2_t".into(),
        scale: Scale::Prevalence,
        value: prev.sigma2_t,
        ci95: v_s2t.and_then(|v| wald_log(prev.sigma2_t, v)),
    });
    out.push(Estimate {
        name: "phi".into(),
        scale: Scale::Prevalence,
        value: prev.phi,
        ci95: var(ip).and_then(|v| wald_log(prev.phi, v)),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{simulate_survey, Location, SurveyDesign};

    fn grid(m: usize, seed: u64) -> Vec<Location<f64>> {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, 99);
        (0..m)
            .map(|i| Location::new(rng.random::<f64>(), rng.random::<f64>(), format!("l{i}")))
            .collect()
    }

    fn dataset(m: usize, seed: u64, params: &ModelParams<f64>) -> SurveyDataset<f64> {
        let design = SurveyDesign::one_per_location(grid(m, seed)).unwrap();
        simulate_survey(&design, params, seed).unwrap()
    }

    #[test]
    fn independence_limit_is_sum_of_univariate_densities() {
        let locs = vec![Location::new(0.0, 0.0, "a")];
        let design = SurveyDesign::replicated(locs, 5).unwrap();
        let ys = vec![0.3, -1.0, 2.0, 0.5, 0.1];
        let ds = SurveyDataset::new(design, crate::geo::Outcomes::Continuous(ys.clone())).unwrap();
        let p = ModelParams::degenerate(0.2, vec![], 0.0, 1.5, 0.1).unwrap();
        let (v, g) = gaussian_loglik(&p, &ds).unwrap();
        let want: f64 = ys
            .iter()
            .map(|y| -0.5 * (2.0 * std::f64::consts::PI * 1.5).ln() - (y - 0.2) * (y - 0.2) / 3.0)
            .sum();
        assert!((v - want).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn intercept_mle_is_sample_mean_at_one_location() {
        let locs = vec![Location::new(0.0, 0.0, "a")];
        let design = SurveyDesign::replicated(locs, 8).unwrap();
        let ys = vec![0.3, -1.0, 2.0, 0.5, 0.1, 1.1, -0.4, 0.9];
        let ds = SurveyDataset::new(design, crate::geo::Outcomes::Continuous(ys.clone())).unwrap();
        let init = ModelParams::new(0.0, vec![], 0.5, 0.5, 0.3).unwrap();
        let opts = LinearFitOptions { fix_phi: true, ..Default::default() };
        let fit = fit_linear(&ds, &init, &opts).unwrap();
        let mean = ys.iter().sum::<f64>() / 8.0;
        assert!((fit.continuous.unwrap().alpha - mean).abs() < 1e-10);
    }

    #[test]
    fn fit_recovers_parameters_and_trace_increases() {
        let truth = ModelParams::new(0.5, vec![], 1.0, 0.5, 0.2).unwrap();
        let ds = dataset(150, 3, &truth);
        let init = default_linear_init(&ds).unwrap();
        let fit = fit_linear(&ds, &init, &LinearFitOptions::default()).unwrap();
        assert!(fit.converged, "{}", fit.message);
        assert!(fit.grad_max < 1e-6);
        assert!(fit.trace.windows(2).all(|w| w[1] >= w[0]));
        let info = fit.obs_info.as_ref().unwrap();
        assert!(info.max_asymmetry() == 0.0);
        for e in &fit.estimates {
            let (lo, hi) = e.ci95.unwrap();
            assert!(lo < e.value && e.value < hi, "{}", e.name);
        }
        let p = fit.continuous.unwrap();
        assert!((p.tau2 - 0.5).abs() < 0.3 && (p.sigma2 - 1.0).abs() < 0.8);
    }

    #[test]
    fn too_few_observations_rejected() {
        let truth = ModelParams::new(0.0, vec![], 1.0, 0.5, 0.2).unwrap();
        let ds = dataset(3, 1, &truth);
        assert!(matches!(
            fit_linear(&ds, &truth, &LinearFitOptions::default()),
            Err(Error::Schema(_))
        ));
    }
}
