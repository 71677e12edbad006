//! Plug-in prediction of the latent field and of prevalence surfaces.

use rayon::prelude::*;
use serde::Serialize;

use crate::binomial::{latent_approximation, LatentGaussian, LatentIntegrationSettings};
use crate::error::{Error, Result};
use crate::fit::{FitResult, ModelKind};
use crate::geo::{cross_correlation, location_correlation, ModelParams, PrevalenceParams, SurveyDataset};
use crate::geo::Location;
use crate::linalg::{semidefinite_factor, Cholesky, Matrix};
use crate::rng::{self, purpose};
use crate::scalar::{norm_cdf, Scalar};

/// Largest number of grid points sampled jointly.
pub const MAX_TILE: usize = 2500;

/// Gaussian conditional distribution of the prevalence-scale latent field
/// `S̃` given the data, evaluable at any set of locations.
pub enum LatentField<T> {
    /// Exact kriging under the linear model; `S̃ = −S/τ`.
    Kriging {
        params: ModelParams<T>,
        locations: Vec<Location<T>>,
        location_of: Vec<usize>,
        chol: Cholesky<T>,
        /// `Σ_Y⁻¹ (y − Xβ)`.
        weights: Vec<T>,
    },
    /// Gaussian approximation under the probit model.
    Approximate {
        sigma2_t: T,
        phi: T,
        locations: Vec<Location<T>>,
        gaussian: LatentGaussian<T>,
    },
}

impl<T: Scalar> LatentField<T> {
    pub fn linear(params: &ModelParams<T>, dataset: &SurveyDataset<T>) -> Result<Self> {
        params.validate(true)?;
        let y = dataset.continuous()?;
        let x = dataset.design_matrix();
        if x.cols() != params.beta_gamma.len() + 1 {
            return Err(Error::Schema("coefficient count does not match the design".into()));
        }
        let cov = crate::geo::build_covariance(dataset.design(), params)?;
        let chol = Cholesky::with_jitter(&cov, "outcome covariance")?;
        let mu = x.matvec(&params.coefficients());
        let r: Vec<T> = y.iter().zip(&mu).map(|(&a, &b)| a - b).collect();
        Ok(Self::Kriging {
            params: params.clone(),
            locations: dataset.locations().to_vec(),
            location_of: dataset.location_of().to_vec(),
            weights: chol.solve(&r),
            chol,
        })
    }

    pub fn binomial(
        params: &PrevalenceParams<T>,
        dataset: &SurveyDataset<T>,
        settings: &LatentIntegrationSettings<T>,
    ) -> Result<Self> {
        Ok(Self::Approximate {
            sigma2_t: params.sigma2_t,
            phi: params.phi,
            locations: dataset.locations().to_vec(),
            gaussian: latent_approximation(params, dataset, settings)?,
        })
    }

    /// Field of a fitted model; `settings` is used for binomial fits only.
    pub fn from_fit(fit: &FitResult<T>, dataset: &SurveyDataset<T>, settings: &LatentIntegrationSettings<T>) -> Result<Self> {
        if !fit.converged {
            return Err(Error::ParameterDomain(format!("prediction needs a converged fit ({})", fit.message)));
        }
        match fit.kind {
            ModelKind::Linear => {
                let p = fit.continuous.as_ref().ok_or_else(|| Error::Schema("linear fit without parameters".into()))?;
                if !(p.tau2 > T::zero()) {
                    return Err(Error::ParameterDomain("the prevalence scale needs tau2 > 0".into()));
                }
                Self::linear(p, dataset)
            }
            ModelKind::Binomial => {
                let p = fit.prevalence.as_ref().ok_or_else(|| Error::Schema("binomial fit without parameters".into()))?;
                Self::binomial(p, dataset, settings)
            }
        }
    }

    /// Conditional mean and covariance of `S̃` at `targets`.
    pub fn at(&self, targets: &[Location<T>]) -> Result<(Vec<T>, Matrix<T>)> {
        match self {
            Self::Kriging { params, .. } => {
                let (m, c) = self.kriging(targets)?;
                let tau = params.tau();
                Ok((m.iter().map(|&v| -v / tau).collect(), c.scale(params.tau2.recip())))
            }
            Self::Approximate { sigma2_t, phi, locations, gaussian } => {
                let cross = cross_correlation(targets, locations, *phi)?.scale(*sigma2_t);
                let prior = location_correlation(targets, *phi)?.scale(*sigma2_t);
                Ok((gaussian.mean(&cross), gaussian.covariance(&cross, &prior)))
            }
        }
    }

    /// Conditional means and variances only.
    pub fn marginal_at(&self, targets: &[Location<T>]) -> Result<(Vec<T>, Vec<T>)> {
        // chunks keep the cost linear in the grid size
        let mut means = Vec::with_capacity(targets.len());
        let mut vars = Vec::with_capacity(targets.len());
        for t in targets.chunks(256) {
            let (m, c) = self.at(t)?;
            means.extend(m);
            vars.extend(c.diag().into_iter().map(|v| v.max(T::zero())));
        }
        Ok((means, vars))
    }

    /// Kriging of `S` itself (linear model only).
    fn kriging(&self, targets: &[Location<T>]) -> Result<(Vec<T>, Matrix<T>)> {
        let Self::Kriging { params, locations, location_of, chol, weights } = self else {
            return Err(Error::Schema("kriging needs a linear-model field".into()));
        };
        let rho = cross_correlation(targets, locations, params.phi)?;
        let n = location_of.len();
        let cross = Matrix::from_fn(targets.len(), n, |g, k| params.sigma2 * rho[(g, location_of[k])]);
        let mean = cross.matvec(weights);
        let v = chol.solve_lower_matrix(&cross.transpose());
        let mut cov = location_correlation(targets, params.phi)?.scale(params.sigma2).sub(&v.transpose().matmul(&v));
        cov.symmetrize();
        Ok((mean, cov))
    }
}

/// Kriging mean and covariance of `S` (continuous scale) at `targets`.
pub fn krige<T: Scalar>(params: &ModelParams<T>, dataset: &SurveyDataset<T>, targets: &[Location<T>]) -> Result<(Vec<T>, Matrix<T>)> {
    LatentField::linear(params, dataset)?.kriging(targets)
}

/// Conditional mean and covariance of `S̃` at `grid` for a fitted model.
pub fn conditional_latent<T: Scalar>(
    fit: &FitResult<T>,
    dataset: &SurveyDataset<T>,
    grid: &[Location<T>],
    settings: &LatentIntegrationSettings<T>,
) -> Result<(Vec<T>, Matrix<T>)> {
    LatentField::from_fit(fit, dataset, settings)?.at(grid)
}

#[derive(Debug, Clone)]
pub struct PredictionOptions<T> {
    pub n_cond_samples: usize,
    pub seed: u64,
    pub exceedance_thresholds: Vec<T>,
    pub tile_size: usize,
}

impl<T: Scalar> Default for PredictionOptions<T> {
    fn default() -> Self {
        Self { n_cond_samples: 2000, seed: 0, exceedance_thresholds: Vec::new(), tile_size: MAX_TILE }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictionGrid<T> {
    pub grid_locations: Vec<Location<T>>,
    /// Covariate values (without the intercept) used for every grid point.
    pub covariate_profile: Vec<T>,
    pub prevalence_mean: Vec<T>,
    pub exceedance_thresholds: Vec<T>,
    /// One vector per threshold.
    pub exceedance: Vec<Vec<T>>,
    pub n_cond_samples: usize,
}

/// `μ̃` for a covariate profile.
pub fn profile_mean<T: Scalar>(params: &PrevalenceParams<T>, profile: &[T]) -> Result<T> {
    if profile.len() != params.beta_gamma_t.len() {
        return Err(Error::Schema(format!(
            "covariate profile has {} entries, the model has {} covariates",
            profile.len(),
            params.beta_gamma_t.len()
        )));
    }
    Ok(params.alpha_t + params.beta_gamma_t.iter().zip(profile).map(|(&b, &x)| b * x).sum::<T>())
}

/// Prevalence surface of a fitted model by conditional simulation.
pub fn predict_prevalence<T: Scalar>(
    fit: &FitResult<T>,
    dataset: &SurveyDataset<T>,
    grid: &[Location<T>],
    profile: &[T],
    settings: &LatentIntegrationSettings<T>,
    opts: &PredictionOptions<T>,
) -> Result<PredictionGrid<T>> {
    let params = fit
        .prevalence
        .as_ref()
        .ok_or_else(|| Error::Schema("fit has no prevalence-scale parameters (no threshold known)".into()))?;
    let field = LatentField::from_fit(fit, dataset, settings)?;
    predict_from_field(params, profile, &field, grid, opts)
}

/// Shared prediction path: draws `S̃` tile by tile from `field` and maps the
/// draws through `Φ(μ̃ + S̃)`.
pub fn predict_from_field<T: Scalar>(
    params: &PrevalenceParams<T>,
    profile: &[T],
    field: &LatentField<T>,
    grid: &[Location<T>],
    opts: &PredictionOptions<T>,
) -> Result<PredictionGrid<T>> {
    let mu = profile_mean(params, profile)?;
    if opts.n_cond_samples == 0 || opts.tile_size == 0 || opts.tile_size > MAX_TILE {
        return Err(Error::ParameterDomain(format!(
            "need at least one sample and a tile size in 1..={MAX_TILE}"
        )));
    }
    for &t in &opts.exceedance_thresholds {
        check_threshold(t)?;
    }
    let tiles: Vec<(usize, &[Location<T>])> = grid.chunks(opts.tile_size).enumerate().collect();
    // per tile: prevalence means and one exceedance vector per threshold
    type TileOut<T> = Result<(Vec<T>, Vec<Vec<T>>)>;
    let parts: Vec<TileOut<T>> = tiles
        .par_iter()
        .map(|&(index, tile)| {
            let (mean, cov) = field.at(tile)?;
            let samples = draw_prevalence(mu, &mean, &cov, opts.n_cond_samples, opts.seed, index as u64);
            let n = T::lit(opts.n_cond_samples as f64);
            let pm = (0..tile.len())
                .map(|j| (0..samples.rows()).map(|r| samples[(r, j)]).sum::<T>() / n)
                .collect();
            let ex = opts
                .exceedance_thresholds
                .iter()
                .map(|&t| exceedance_prob(&samples, t))
                .collect::<Result<Vec<_>>>()?;
            Ok((pm, ex))
        })
        .collect();
    let mut prevalence_mean = Vec::with_capacity(grid.len());
    let mut exceedance = vec![Vec::with_capacity(grid.len()); opts.exceedance_thresholds.len()];
    for p in parts {
        let (pm, ex) = p?;
        prevalence_mean.extend(pm);
        for (acc, e) in exceedance.iter_mut().zip(ex) {
            acc.extend(e);
        }
    }
    Ok(PredictionGrid {
        grid_locations: grid.to_vec(),
        covariate_profile: profile.to_vec(),
        prevalence_mean,
        exceedance_thresholds: opts.exceedance_thresholds.clone(),
        exceedance,
        n_cond_samples: opts.n_cond_samples,
    })
}

/// `n` draws of `Φ(μ̃ + S̃)` (rows) at the tile's points (columns).
pub fn draw_prevalence<T: Scalar>(mu: T, mean: &[T], cov: &Matrix<T>, n: usize, seed: u64, tile: u64) -> Matrix<T> {
    let l = semidefinite_factor(cov, T::lit(1e-12));
    let mut rng = rng::stream(rng::derive_seed(seed, tile), purpose::PREDICTION);
    let k = mean.len();
    let mut out = Matrix::zeros(n, k);
    for r in 0..n {
        let z: Vec<T> = rng::std_normal_vec(&mut rng, k);
        for i in 0..k {
            let s = mean[i] + crate::linalg::dot(&l.row(i)[..=i], &z[..=i]);
            out[(r, i)] = norm_cdf(mu + s);
        }
    }
    out
}

fn check_threshold<T: Scalar>(t: T) -> Result<()> {
    if !(t > T::zero() && t < T::one()) {
        return Err(Error::ParameterDomain(format!("exceedance threshold must lie in (0, 1), got {t}")));
    }
    Ok(())
}

/// Fraction of draws (rows) whose prevalence exceeds `t`, per point (column).
pub fn exceedance_prob<T: Scalar>(samples: &Matrix<T>, t: T) -> Result<Vec<T>> {
    check_threshold(t)?;
    if samples.rows() == 0 {
        return Err(Error::ParameterDomain("no prevalence samples".into()));
    }
    let n = T::lit(samples.rows() as f64);
    Ok((0..samples.cols())
        .map(|j| T::lit((0..samples.rows()).filter(|&r| samples[(r, j)] > t).count() as f64) / n)
        .collect())
}

/// Exact `E[Φ(μ̃ + S̃)]` for Gaussian `S̃` with the given means and variances.
pub fn prevalence_mean_exact<T: Scalar>(mu: T, mean: &[T], var: &[T]) -> Vec<T> {
    mean.iter().zip(var).map(|(&m, &v)| norm_cdf((mu + m) / (T::one() + v).sqrt())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{Outcomes, SurveyDesign};
    use crate::quadrature::GaussHermite;

    fn toy(y: Vec<f64>) -> SurveyDataset<f64> {
        let locs = vec![
            Location::new(0.0, 0.0, "a"),
            Location::new(0.3, 0.1, "b"),
            Location::new(0.1, 0.4, "c"),
        ];
        SurveyDataset::new(SurveyDesign::one_per_location(locs).unwrap(), Outcomes::Continuous(y)).unwrap()
    }

    #[test]
    fn noise_free_kriging_interpolates() {
        let ds = toy(vec![0.5, -0.2, 1.0]);
        let p = ModelParams::degenerate(0.1, vec![], 1.0, 0.0, 0.2).unwrap();
        let (m, c) = krige(&p, &ds, &ds.locations()[..1]).unwrap();
        assert!((m[0] - 0.4).abs() < 1e-8);
        assert!(c[(0, 0)].abs() < 1e-8);
    }

    #[test]
    fn far_field_reverts_to_prior() {
        let ds = toy(vec![0.5, -0.2, 1.0]);
        let p = ModelParams::new(0.1, vec![], 1.0, 0.5, 0.2).unwrap();
        let field = LatentField::linear(&p, &ds).unwrap();
        let (m, c) = field.at(&[Location::new(1e3, 1e3, "far")]).unwrap();
        assert!(m[0].abs() < 1e-12);
        assert!((c[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sampled_mean_matches_quadrature() {
        let ds = toy(vec![0.5, -0.2, 1.0]);
        let p = ModelParams::new(0.1, vec![], 1.0, 0.5, 0.2).unwrap();
        let field = LatentField::linear(&p, &ds).unwrap();
        let grid = vec![Location::new(0.2, 0.2, "g1"), Location::new(0.6, 0.6, "g2")];
        let prev = crate::geo::to_prevalence_scale(&p, 0.3).unwrap();
        let opts = PredictionOptions { n_cond_samples: 4000, seed: 3, ..Default::default() };
        let out = predict_from_field(&prev, &[], &field, &grid, &opts).unwrap();
        let (m, c) = field.at(&grid).unwrap();
        let gh = GaussHermite::<f64>::new(60);
        for j in 0..2 {
            let sd = c[(j, j)].sqrt();
            let f = |z: f64| norm_cdf(prev.alpha_t + m[j] + sd * z);
            let e: f64 = gh.nodes.iter().zip(&gh.weights).map(|(&z, &w)| w * f(z)).sum();
            let e2: f64 = gh.nodes.iter().zip(&gh.weights).map(|(&z, &w)| w * f(z) * f(z)).sum();
            let se = ((e2 - e * e) / 4000.0).sqrt();
            assert!((out.prevalence_mean[j] - e).abs() < 3.0 * se, "{} vs {e}", out.prevalence_mean[j]);
            assert!((prevalence_mean_exact(prev.alpha_t, &m[j..=j], &[c[(j, j)]])[0] - e).abs() < 1e-10);
        }
    }

    #[test]
    fn exceedance_limits_and_errors() {
        let s = Matrix::from_rows(&[vec![0.2, 0.9], vec![0.4, 0.95]]);
        assert_eq!(exceedance_prob(&s, 1e-9).unwrap(), vec![1.0, 1.0]);
        assert_eq!(exceedance_prob(&s, 1.0 - 1e-9).unwrap(), vec![0.0, 0.0]);
        assert_eq!(exceedance_prob(&s, 0.3).unwrap(), vec![0.5, 1.0]);
        assert!(exceedance_prob(&s, 1.0).is_err());
    }
}
