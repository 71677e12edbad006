//! Information lost by dichotomizing: the expected-information ratio for the
//! intercept at two locations, and the composite-likelihood dispersion for
//! the regression block of a full survey.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geo::{build_covariance, distance, ModelParams, PrevalenceParams, SurveyDataset, SurveyDesign};
use crate::linalg::{Cholesky, Matrix};
use crate::optim::{fd_gradient, fd_jacobian};
use crate::quadrature::{GaussHermite, Halton};
use crate::rng::{self, purpose};
use crate::scalar::{norm_cdf, norm_pdf, norm_quantile, probit_log_lik_derivs, Scalar};

/// How the expectation over the binary outcomes is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeExpectation {
    /// Exact sum over the four outcome pairs.
    Enumerate,
    /// Average over `n_outcome_draws` simulated outcome pairs.
    Sample,
}

#[derive(Debug, Clone)]
pub struct EfiSettings<T> {
    pub expectation: OutcomeExpectation,
    pub n_outcome_draws: usize,
    /// Initial number of Halton nodes for the inner integrals; doubled until
    /// the information moves by less than `rel_tol`.
    pub qmc_points: usize,
    pub max_qmc_points: usize,
    pub rel_tol: T,
    pub rho_grid: Vec<T>,
    pub alpha_grid: Vec<T>,
    pub seed: u64,
}

impl<T: Scalar> Default for EfiSettings<T> {
    fn default() -> Self {
        Self {
            expectation: OutcomeExpectation::Enumerate,
            n_outcome_draws: 10_000,
            qmc_points: 4096,
            max_qmc_points: 1 << 20,
            rel_tol: T::lit(1e-3),
            rho_grid: (1..=7).map(|i| T::lit(i as f64 / 10.0)).collect(),
            alpha_grid: (0..=30).map(|i| T::lit(i as f64 / 10.0)).collect(),
            seed: 0,
        }
    }
}

impl<T: Scalar> EfiSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if self.qmc_points < 1024 || self.max_qmc_points < self.qmc_points {
            return Err(Error::ParameterDomain(format!(
                "need at least 1024 QMC points (and a cap no smaller), got {} / {}",
                self.qmc_points, self.max_qmc_points
            )));
        }
        if self.expectation == OutcomeExpectation::Sample && self.n_outcome_draws == 0 {
            return Err(Error::ParameterDomain("outcome sampling needs at least one draw".into()));
        }
        if let Some(r) = self.rho_grid.iter().find(|r| !(**r >= T::zero() && **r < T::one())) {
            return Err(Error::ParameterDomain(format!("correlation {r} outside [0, 1)")));
        }
        if self.alpha_grid.iter().any(|a| !a.is_finite()) {
            return Err(Error::ParameterDomain("non-finite prevalence intercept in grid".into()));
        }
        if !(self.rel_tol > T::zero()) {
            return Err(Error::ParameterDomain("QMC tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// One cell of an information-loss curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfoLossReport<T> {
    pub alpha_t: T,
    pub rho: T,
    pub tau2: T,
    pub i_y: T,
    pub i_yt: T,
    pub r: T,
}

/// Expected information for the prevalence intercept from continuous
/// outcomes, `τ² 1ᵀ Σ_Y⁻¹ 1`, for an intercept-only design.
pub fn efi_linear<T: Scalar>(design: &SurveyDesign<T>, params: &ModelParams<T>) -> Result<T> {
    if design.n_covariates() != 0 || !params.beta_gamma.is_empty() {
        return Err(Error::Schema("expected information is defined for intercept-only models".into()));
    }
    let cov = build_covariance(design, params)?;
    Ok(params.tau2 * ones_quadratic(&cov)?)
}

/// [`efi_linear`] for two locations with correlation `rho`.
pub fn efi_linear_two_points<T: Scalar>(sigma2: T, tau2: T, rho: T) -> Result<T> {
    let v = sigma2 + tau2;
    let cov = Matrix::from_rows(&[vec![v, sigma2 * rho], vec![sigma2 * rho, v]]);
    Ok(tau2 * ones_quadratic(&cov)?)
}

fn ones_quadratic<T: Scalar>(cov: &Matrix<T>) -> Result<T> {
    let chol = Cholesky::with_jitter(cov, "outcome covariance")?;
    let u = chol.solve_lower(&vec![T::one(); cov.rows()]);
    Ok(u.iter().map(|&v| v * v).sum())
}

/// Per-configuration likelihood and observed information for two binary
/// outcomes, from one set of inner-integral nodes.
struct PairMoments<T> {
    /// Indexed by `2·ỹ₁ + ỹ₂`.
    lik: [T; 4],
    info: [T; 4],
}

fn pair_moments<T: Scalar>(alpha_t: T, sigma2_t: T, rho: T, nodes: &[[T; 2]]) -> Result<PairMoments<T>> {
    let sd = sigma2_t.sqrt();
    let c = (T::one() - rho * rho).max(T::zero()).sqrt();
    // L, dL/dα̃ and d²L/dα̃² per configuration
    let mut acc = [[T::zero(); 3]; 4];
    for z in nodes {
        let s = [sd * z[0], sd * (rho * z[0] + c * z[1])];
        let d: Vec<[(T, T, T); 2]> = [false, true]
            .iter()
            .map(|&y| [probit_log_lik_derivs(y, alpha_t + s[0]), probit_log_lik_derivs(y, alpha_t + s[1])])
            .collect();
        for (cfg, a) in acc.iter_mut().enumerate() {
            let (y1, y2) = (cfg >> 1, cfg & 1);
            let (v1, g1, h1) = d[y1][0];
            let (v2, g2, h2) = d[y2][1];
            let f = (v1 + v2).exp();
            let g = g1 + g2;
            a[0] = a[0] + f;
            a[1] = a[1] + f * g;
            a[2] = a[2] + f * (g * g + h1 + h2);
        }
    }
    let n = T::lit(nodes.len() as f64);
    let mut lik = [T::zero(); 4];
    let mut info = [T::zero(); 4];
    for cfg in 0..4 {
        let [l, l1, l2] = acc[cfg].map(|v| v / n);
        if !(l.is_finite() && l1.is_finite() && l2.is_finite()) || !(l > T::zero()) {
            return Err(Error::Numerical("inner integral of the two-point likelihood is not finite".into()));
        }
        lik[cfg] = l;
        // d² log L = L''/L − (L'/L)²
        info[cfg] = -(l2 / l - (l1 / l) * (l1 / l));
    }
    Ok(PairMoments { lik, info })
}

fn halton_nodes<T: Scalar>(h: &mut Halton, n: usize, out: &mut Vec<[T; 2]>) {
    let mut p = [0.0; 2];
    for _ in 0..n {
        h.fill(&mut p);
        out.push([T::lit(norm_quantile(p[0])), T::lit(norm_quantile(p[1]))]);
    }
}

/// Converged per-configuration moments: nodes are doubled until the
/// enumerated information stabilizes.
fn converged_moments<T: Scalar>(alpha_t: T, sigma2_t: T, rho: T, settings: &EfiSettings<T>) -> Result<PairMoments<T>> {
    let enumerate = |m: &PairMoments<T>| (0..4).map(|k| m.lik[k] * m.info[k]).sum::<T>();
    let mut halton = Halton::new(2);
    let mut nodes = Vec::with_capacity(settings.qmc_points);
    halton_nodes(&mut halton, settings.qmc_points, &mut nodes);
    let mut cur = pair_moments(alpha_t, sigma2_t, rho, &nodes)?;
    while nodes.len() < settings.max_qmc_points {
        let extra = nodes.len();
        halton_nodes(&mut halton, extra, &mut nodes);
        let next = pair_moments(alpha_t, sigma2_t, rho, &nodes)?;
        let (a, b) = (enumerate(&cur), enumerate(&next));
        cur = next;
        if ((b - a) / b).abs() < settings.rel_tol {
            break;
        }
    }
    Ok(cur)
}

/// Expected information `I_Ỹ(α̃)` for the prevalence intercept from two
/// binary outcomes whose latent values have variance `σ̃²` and correlation `ρ`.
pub fn efi_binary_two_points<T: Scalar>(alpha_t: T, sigma2_t: T, rho: T, settings: &EfiSettings<T>) -> Result<T> {
    settings.validate()?;
    if !(sigma2_t >= T::zero() && sigma2_t.is_finite()) || !(rho >= -T::one() && rho <= T::one()) || !alpha_t.is_finite() {
        return Err(Error::ParameterDomain(format!(
            "invalid two-point configuration α̃ = {alpha_t}, σ̃² = {sigma2_t}, ρ = {rho}"
        )));
    }
    let m = converged_moments(alpha_t, sigma2_t, rho, settings)?;
    match settings.expectation {
        OutcomeExpectation::Enumerate => Ok((0..4).map(|k| m.lik[k] * m.info[k]).sum()),
        OutcomeExpectation::Sample => {
            let mut rng = rng::stream(settings.seed, purpose::OUTCOMES);
            let sd = sigma2_t.sqrt();
            let c = (T::one() - rho * rho).max(T::zero()).sqrt();
            let mut total = T::zero();
            for _ in 0..settings.n_outcome_draws {
                let z: Vec<T> = rng::std_normal_vec(&mut rng, 2);
                let s = [sd * z[0], sd * (rho * z[0] + c * z[1])];
                let y1 = rng.random::<f64>() < norm_cdf(alpha_t + s[0]).to_f64().unwrap_or(0.5);
                let y2 = rng.random::<f64>() < norm_cdf(alpha_t + s[1]).to_f64().unwrap_or(0.5);
                total = total + m.info[2 * usize::from(y1) + usize::from(y2)];
            }
            Ok(total / T::lit(settings.n_outcome_draws as f64))
        }
    }
}

/// `R = 1 − i_yt / i_y`.
pub fn loss_ratio<T: Scalar>(i_y: T, i_yt: T) -> Result<T> {
    if !(i_y > T::zero()) {
        return Err(Error::ParameterDomain(format!("continuous information must be positive, got {i_y}")));
    }
    Ok(T::one() - i_yt / i_y)
}

/// Loss ratio without a spatial field: one probit observation carries
/// `φ(α̃)² / (Φ(α̃)(1 − Φ(α̃)))` against unit information from the
/// continuous outcome.
pub fn loss_no_spatial<T: Scalar>(alpha_t: T) -> T {
    let p = norm_cdf(alpha_t);
    let q = norm_cdf(-alpha_t);
    let d = norm_pdf(alpha_t);
    T::one() - d * d / (p * q)
}

/// Loss curves over `alpha_grid × rho_grid × tau2_grid` with `σ² = sigma2`,
/// evaluated in parallel; records come back in grid order.
pub fn info_loss_curves<T: Scalar>(sigma2: T, tau2_grid: &[T], settings: &EfiSettings<T>) -> Result<Vec<InfoLossReport<T>>> {
    settings.validate()?;
    let cells: Vec<(T, T, T)> = tau2_grid
        .iter()
        .flat_map(|&t| settings.rho_grid.iter().flat_map(move |&r| settings.alpha_grid.iter().map(move |&a| (t, r, a))))
        .collect();
    cells
        .par_iter()
        .map(|&(tau2, rho, alpha_t)| {
            if !(tau2 > T::zero()) {
                return Err(Error::ParameterDomain(format!("tau2 must be positive, got {tau2}")));
            }
            let i_y = efi_linear_two_points(sigma2, tau2, rho)?;
            let i_yt = efi_binary_two_points(alpha_t, sigma2 / tau2, rho, settings)?;
            Ok(InfoLossReport { alpha_t, rho, tau2, i_y, i_yt, r: loss_ratio(i_y, i_yt)? })
        })
        .collect()
}

/// Pairwise composite log-likelihood of binary outcomes: every pair of
/// locations contributes the log of its bivariate marginal, integrated by
/// tensor Gauss–Hermite over the two latent values.
pub fn pairwise_composite_loglik<T: Scalar>(params: &PrevalenceParams<T>, dataset: &SurveyDataset<T>, order: usize) -> Result<T> {
    let pc = PairComposite::new(dataset, order)?;
    params.validate(true)?;
    let x = dataset.design_matrix();
    if x.cols() != params.beta_gamma_t.len() + 1 {
        return Err(Error::Schema(format!(
            "{} regression coefficients for a design with {} columns",
            params.beta_gamma_t.len() + 1,
            x.cols()
        )));
    }
    pc.eval(&x.matvec(&params.coefficients()), params.sigma2_t, params.phi)
}

struct PairComposite<'a, T> {
    y: &'a [bool],
    members: Vec<&'a [usize]>,
    locs: Vec<(T, T)>,
    gh: GaussHermite<T>,
}

impl<'a, T: Scalar> PairComposite<'a, T> {
    fn new(dataset: &'a SurveyDataset<T>, order: usize) -> Result<Self> {
        let m = dataset.n_locations();
        if m < 2 {
            return Err(Error::UnsupportedSize("composite likelihood needs at least two locations".into()));
        }
        if order < 2 {
            return Err(Error::ParameterDomain(format!("quadrature order must be at least 2, got {order}")));
        }
        let design = dataset.design();
        Ok(Self {
            y: dataset.binary()?,
            members: (0..m).map(|i| design.members(i)).collect(),
            locs: design.locations().iter().map(|l| (l.x, l.y)).collect(),
            gh: GaussHermite::new(order),
        })
    }

    /// Log conditional probability of location `i`'s outcomes given latent value `s`.
    fn location_term(&self, off: &[T], i: usize, s: T) -> T {
        self.members[i].iter().map(|&k| crate::binomial::probit_term(self.y[k], off[k] + s).0).sum()
    }

    fn eval(&self, off: &[T], sigma2_t: T, phi: T) -> Result<T> {
        let m = self.locs.len();
        let n = self.gh.order();
        let sd = sigma2_t.sqrt();
        let lw: Vec<T> = self.gh.weights.iter().map(|w| w.ln()).collect();
        // the first latent value of every pair sits on the same nodes
        let first: Vec<Vec<T>> = (0..m)
            .map(|i| self.gh.nodes.iter().map(|&z| self.location_term(off, i, sd * z)).collect())
            .collect();
        let per_location: Vec<T> = (0..m - 1)
            .into_par_iter()
            .map(|h| {
                let (xh, yh) = self.locs[h];
                let mut total = T::zero();
                let mut terms = vec![T::zero(); n * n];
                for k in h + 1..m {
                    let (xk, yk) = self.locs[k];
                    let rho = (-(xh - xk).hypot(yh - yk) / phi).exp();
                    let c = (T::one() - rho * rho).max(T::zero()).sqrt();
                    for a in 0..n {
                        let za = self.gh.nodes[a];
                        for b in 0..n {
                            let sk = sd * (rho * za + c * self.gh.nodes[b]);
                            terms[a * n + b] = lw[a] + lw[b] + first[h][a] + self.location_term(off, k, sk);
                        }
                    }
                    total = total + log_sum_exp(&terms);
                }
                total
            })
            .collect();
        let value: T = per_location.into_iter().sum();
        if !value.is_finite() {
            return Err(Error::Numerical("composite log-likelihood is not finite".into()));
        }
        Ok(value)
    }
}

fn log_sum_exp<T: Scalar>(v: &[T]) -> T {
    let mx = v.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    if !mx.is_finite() {
        return mx;
    }
    mx + v.iter().map(|&x| (x - mx).exp()).sum::<T>().ln()
}

/// Default tensor order for the pair integrals.
pub const COMPOSITE_ORDER: usize = 20;

/// Hessian of [`pairwise_composite_loglik`] over the regression coefficients
/// with the covariance parameters held fixed.
pub fn composite_hessian_binary<T: Scalar>(theta: &PrevalenceParams<T>, dataset: &SurveyDataset<T>, order: usize) -> Result<Matrix<T>> {
    let pc = PairComposite::new(dataset, order)?;
    theta.validate(true)?;
    let x = dataset.design_matrix();
    if x.cols() != theta.beta_gamma_t.len() + 1 {
        return Err(Error::Schema("coefficient count does not match the design".into()));
    }
    hessian_with_offsets(&pc, &x, &vec![T::zero(); x.rows()], &theta.coefficients(), theta.sigma2_t, theta.phi)
}

/// Nested central differences, `h = 1e−4 (1 + |θ_j|)` in both layers.
fn hessian_with_offsets<T: Scalar>(
    pc: &PairComposite<'_, T>,
    x: &Matrix<T>,
    base: &[T],
    coef: &[T],
    sigma2_t: T,
    phi: T,
) -> Result<Matrix<T>> {
    let step = |v: T| T::lit(1e-4) * (T::one() + v.abs());
    let mut f = |b: &[T]| {
        let off: Vec<T> = x.matvec(b).iter().zip(base).map(|(&a, &o)| a + o).collect();
        pc.eval(&off, sigma2_t, phi)
    };
    let mut grad = |b: &[T]| -> Result<Vec<T>> {
        // one step for every coordinate keeps the inner difference simple
        let h = b.iter().fold(T::zero(), |acc, &v| acc.max(step(v)));
        fd_gradient(&mut f, b, h)
    };
    let steps: Vec<T> = coef.iter().map(|&v| step(v)).collect();
    let mut hm = fd_jacobian(&mut grad, coef, &steps)?;
    let scale = hm.max_abs().max(T::min_positive_value());
    if hm.max_asymmetry() > T::lit(1e-4) * scale {
        return Err(Error::Numerical(format!(
            "composite Hessian is not symmetric (asymmetry {} at scale {scale})",
            hm.max_asymmetry()
        )));
    }
    hm.symmetrize();
    Ok(hm)
}

/// `τ² Dᵀ Σ⁻¹ D` for one pair of locations, with `D` the stacked design rows
/// of the pair's individuals and `Σ` their joint outcome covariance.
pub fn pair_information<T: Scalar>(tau2: T, sigma_hk: &Matrix<T>, d_hk: &Matrix<T>) -> Result<Matrix<T>> {
    let chol = Cholesky::with_jitter(sigma_hk, "pair outcome covariance")?;
    let w = chol.solve_lower_matrix(d_hk);
    Ok(w.transpose().matmul(&w).scale(tau2))
}

/// Closed-form Hessian of the continuous pairwise composite log-likelihood
/// over the prevalence-scale regression coefficients,
/// `−τ² Σ_{h<k} D_hkᵀ Σ_hk⁻¹ D_hk`.
pub fn composite_hessian_continuous<T: Scalar>(theta: &ModelParams<T>, design: &SurveyDesign<T>) -> Result<Matrix<T>> {
    theta.validate(true)?;
    let m = design.n_locations();
    if m < 2 {
        return Err(Error::UnsupportedSize("composite likelihood needs at least two locations".into()));
    }
    let x = design.design_matrix();
    let q = x.cols();
    let locs = design.locations();
    let parts: Vec<Result<Matrix<T>>> = (0..m - 1)
        .into_par_iter()
        .map(|h| {
            let mut acc = Matrix::zeros(q, q);
            for k in h + 1..m {
                let idx: Vec<usize> = design.members(h).iter().chain(design.members(k)).copied().collect();
                let rho = (-distance(&locs[h], &locs[k]) / theta.phi).exp();
                let nh = design.members(h).len();
                let sigma = Matrix::from_fn(idx.len(), idx.len(), |a, b| {
                    let same = (a < nh) == (b < nh);
                    let s = if same { theta.sigma2 } else { theta.sigma2 * rho };
                    if a == b { s + theta.tau2 } else { s }
                });
                let d = Matrix::from_fn(idx.len(), q, |r, j| x[(idx[r], j)]);
                acc = acc.add(&pair_information(theta.tau2, &sigma, &d)?);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Matrix::zeros(q, q);
    for p in parts {
        total = total.add(&p?);
    }
    Ok(total.scale(-T::one()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CldReport<T> {
    pub logdet_continuous: T,
    pub logdet_binary: T,
    pub cld: T,
}

/// `log det(−H_Y) − log det(−H_Ỹ)` from two composite Hessians.
pub fn cld_from_hessians<T: Scalar>(h_y: &Matrix<T>, h_yt: &Matrix<T>) -> Result<CldReport<T>> {
    let logdet = |h: &Matrix<T>, name: &str| -> Result<T> {
        Cholesky::new(&h.scale(-T::one())).map(|c| c.log_det()).ok_or_else(|| {
            Error::Numerical(format!("negative {name} composite Hessian is not positive definite"))
        })
    };
    let logdet_continuous = logdet(h_y, "continuous")?;
    let logdet_binary = logdet(h_yt, "binary")?;
    Ok(CldReport { logdet_continuous, logdet_binary, cld: logdet_continuous - logdet_binary })
}

/// Composite-likelihood dispersion at the linear-model estimate. The binary
/// Hessian is taken over `θ̃ = −θ/τ` (intercept included) with the
/// thresholds entering as fixed offsets `c_ij/τ`, so common and
/// individual thresholds are handled alike.
pub fn cld<T: Scalar>(theta_lm: &ModelParams<T>, binary: &SurveyDataset<T>, order: usize) -> Result<CldReport<T>> {
    theta_lm.validate(false)?;
    let c = binary
        .design()
        .thresholds()
        .ok_or_else(|| Error::Schema("binary dataset carries no thresholds".into()))?;
    let x = binary.design_matrix();
    if x.cols() != theta_lm.beta_gamma.len() + 1 {
        return Err(Error::Schema("coefficient count does not match the design".into()));
    }
    let tau = theta_lm.tau();
    let base: Vec<T> = c.iter().map(|&v| v / tau).collect();
    let coef: Vec<T> = theta_lm.coefficients().iter().map(|&b| -b / tau).collect();
    let pc = PairComposite::new(binary, order)?;
    let h_yt = hessian_with_offsets(&pc, &x, &base, &coef, theta_lm.sigma2 / theta_lm.tau2, theta_lm.phi)?;
    let h_y = composite_hessian_continuous(theta_lm, binary.design())?;
    cld_from_hessians(&h_y, &h_yt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binomial::exact_loglik_smallm;
    use crate::geo::{Location, Outcomes};

    fn quick() -> EfiSettings<f64> {
        EfiSettings { qmc_points: 4096, ..Default::default() }
    }

    #[test]
    fn linear_information_examples() {
        assert!((efi_linear_two_points::<f64>(1.0, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((efi_linear_two_points::<f64>(1.0, 1.0, 0.5).unwrap() - 0.8).abs() < 1e-14);
        let d = SurveyDesign::one_per_location(vec![Location::new(0.0, 0.0, "a")]).unwrap();
        let p = ModelParams::<f64>::new(0.0, vec![], 1.0, 2.0, 0.1).unwrap();
        assert!((efi_linear(&d, &p).unwrap() - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn binary_information_independent_limit() {
        let v = efi_binary_two_points(0.0, 0.0, 0.0, &quick()).unwrap();
        assert!((v - 4.0 / std::f64::consts::PI).abs() < 1e-10, "{v}");
    }

    #[test]
    fn binary_information_is_symmetric() {
        let a = efi_binary_two_points(0.8, 1.0, 0.4, &quick()).unwrap();
        let b = efi_binary_two_points(-0.8, 1.0, 0.4, &quick()).unwrap();
        assert!((a - b).abs() < 1e-3 * a, "{a} vs {b}");
    }

    #[test]
    fn sampling_agrees_with_enumeration() {
        let e = efi_binary_two_points(0.5, 1.0, 0.3, &quick()).unwrap();
        let s = EfiSettings { expectation: OutcomeExpectation::Sample, ..quick() };
        let v = efi_binary_two_points(0.5, 1.0, 0.3, &s).unwrap();
        assert!((v - e).abs() < 0.05 * e, "{v} vs {e}");
    }

    #[test]
    fn loss_ratio_examples() {
        assert_eq!(loss_ratio(1.0, 1.0).unwrap(), 0.0);
        assert!((loss_ratio(1.0f64, 0.25).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(loss_ratio(2.0, 0.5).unwrap(), 0.75);
        assert!(loss_ratio(0.0, 0.5).is_err());
    }

    #[test]
    fn no_spatial_loss() {
        assert!((loss_no_spatial(0.0f64) - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-14);
        assert!(loss_no_spatial(3.0f64) > 0.9);
        for a in [0.5f64, 1.0, 2.0] {
            assert!((loss_no_spatial(a) - loss_no_spatial(-a)).abs() < 1e-12);
        }
    }

    fn binary_pair(y: Vec<bool>) -> SurveyDataset<f64> {
        let locs = vec![Location::new(0.0, 0.0, "a"), Location::new(0.05, 0.0, "b")];
        SurveyDataset::new(SurveyDesign::one_per_location(locs).unwrap(), Outcomes::Binary(y)).unwrap()
    }

    #[test]
    fn composite_equals_full_likelihood_for_one_pair() {
        let ds = binary_pair(vec![true, false]);
        let p = PrevalenceParams::new(0.3, vec![], 1.2, 0.1).unwrap();
        let a = pairwise_composite_loglik(&p, &ds, 40).unwrap();
        let b = exact_loglik_smallm(&p, &ds, 40).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn continuous_hessian_single_pair() {
        let locs = vec![Location::new(0.0, 0.0, "a"), Location::new(0.05, 0.0, "b")];
        let d = SurveyDesign::one_per_location(locs).unwrap();
        let p = ModelParams::<f64>::new(0.0, vec![], 1.0, 0.5, 0.1).unwrap();
        let h = composite_hessian_continuous(&p, &d).unwrap();
        let cov = build_covariance(&d, &p).unwrap();
        let want = -0.5 * ones_quadratic(&cov).unwrap();
        assert!((h[(0, 0)] - want).abs() < 1e-12);
    }

    #[test]
    fn self_comparison_is_zero() {
        let h = Matrix::from_rows(&[vec![-3.0, 0.5], vec![0.5, -2.0]]);
        assert_eq!(cld_from_hessians(&h, &h).unwrap().cld, 0.0);
        assert!(cld_from_hessians(&h.scale(-1.0), &h).is_err());
    }
}
