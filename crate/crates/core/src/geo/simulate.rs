use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky};
use crate::rng::{self, purpose};
use crate::scalar::Scalar;

use super::bridge::ModelParams;
use super::covariance::location_correlation;
use super::dataset::{Location, Outcomes, SurveyDataset, SurveyDesign, Thresholds};

/// Draws the zero-mean Gaussian process at `locations` as `L z` with `L` the
/// Cholesky factor of `σ²ρ` and `z` standard normal. Deterministic in `seed`.
/// Duplicate coordinates are handled by the jitter policy and yield (numerically)
/// equal values.
pub fn simulate_gp<T: Scalar>(locations: &[Location<T>], sigma2: T, phi: T, seed: u64) -> Result<Vec<T>> {
    if !(sigma2 >= T::zero() && sigma2.is_finite()) {
        return Err(Error::ParameterDomain(format!("sigma2 = {sigma2} out of domain")));
    }
    let m = locations.len();
    let mut rng = rng::stream(seed, purpose::FIELD);
    let z: Vec<T> = rng::std_normal_vec(&mut rng, m);
    if sigma2 == T::zero() {
        location_correlation(locations, phi)?;
        return Ok(vec![T::zero(); m]);
    }
    let cov = location_correlation(locations, phi)?.scale(sigma2);
    let chol = Cholesky::with_jitter(&cov, "spatial covariance for simulation")?;
    Ok(chol.lower_mul(&z))
}

/// Simulates continuous outcomes `y = μ + S(x_i) + Z` for the design and returns
/// them with the latent field at each location.
pub fn simulate_survey_with_field<T: Scalar>(
    design: &SurveyDesign<T>,
    params: &ModelParams<T>,
    seed: u64,
) -> Result<(SurveyDataset<T>, Vec<T>)> {
    params.validate(true)?;
    if params.beta_gamma.len() != design.n_covariates() {
        return Err(Error::Schema(format!(
            "{} regression coefficients for {} covariates",
            params.beta_gamma.len(),
            design.n_covariates()
        )));
    }
    let field = simulate_gp(design.locations(), params.sigma2, params.phi, seed)?;
    let mut noise_rng = rng::stream(seed, purpose::NOISE);
    let tau = params.tau2.sqrt();
    let cov = design.covariates();
    let y = design
        .location_of()
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let mu = params.alpha + dot(cov.row(k), &params.beta_gamma);
            let z: T = rng::std_normal(&mut noise_rng);
            mu + field[i] + tau * z
        })
        .collect();
    Ok((SurveyDataset::new(design.clone(), Outcomes::Continuous(y))?, field))
}

pub fn simulate_survey<T: Scalar>(design: &SurveyDesign<T>, params: &ModelParams<T>, seed: u64) -> Result<SurveyDataset<T>> {
    simulate_survey_with_field(design, params, seed).map(|(d, _)| d)
}

/// Dichotomizes continuous outcomes: positive (`true`) when `y < c`. The
/// thresholds are kept on the returned design so they can later enter the
/// probit linear predictor.
pub fn dichotomize<T: Scalar>(dataset: &SurveyDataset<T>, thresholds: &Thresholds<T>) -> Result<SurveyDataset<T>> {
    let y = dataset.continuous()?;
    let c: Vec<T> = match thresholds {
        Thresholds::Scalar(c) => vec![*c; y.len()],
        Thresholds::PerIndividual(c) => {
            if c.len() != y.len() {
                return Err(Error::Schema(format!(
                    "{} thresholds for {} individuals",
                    c.len(),
                    y.len()
                )));
            }
            c.clone()
        }
    };
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Schema("non-finite threshold".into()));
    }
    let yt = y.iter().zip(&c).map(|(&v, &t)| v < t).collect();
    let design = dataset.design().clone().with_thresholds(Some(c));
    SurveyDataset::new(design, Outcomes::Binary(yt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn square(k: usize) -> Vec<Location<f64>> {
        (0..k * k)
            .map(|i| Location::new((i % k) as f64 * 0.1, (i / k) as f64 * 0.1, format!("p{i}")))
            .collect()
    }

    #[test]
    fn zero_signal_gives_zero_field() {
        assert_eq!(simulate_gp(&square(2), 0.0, 0.1, 3).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn deterministic_for_seed() {
        let a = simulate_gp(&square(3), 1.0, 0.2, 11).unwrap();
        let b = simulate_gp(&square(3), 1.0, 0.2, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_gp(&square(3), 1.0, 0.2, 12).unwrap());
    }

    fn empirical_cov(draws: &[Vec<f64>]) -> Matrix<f64> {
        let n = draws.len() as f64;
        let d = draws[0].len();
        let mean: Vec<f64> = (0..d).map(|i| draws.iter().map(|v| v[i]).sum::<f64>() / n).collect();
        Matrix::from_fn(d, d, |i, j| {
            draws.iter().map(|v| (v[i] - mean[i]) * (v[j] - mean[j])).sum::<f64>() / (n - 1.0)
        })
    }

    #[test]
    fn field_covariance_monte_carlo() {
        let locs = square(2);
        let draws: Vec<Vec<f64>> = (0..10_000).map(|s| simulate_gp(&locs, 1.0, 0.2, s).unwrap()).collect();
        let emp = empirical_cov(&draws);
        let truth = location_correlation(&locs, 0.2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let rel = (emp[(i, j)] - truth[(i, j)]).abs() / truth[(i, j)];
                assert!(rel < 0.05, "({i},{j}) emp {} truth {}", emp[(i, j)], truth[(i, j)]);
            }
        }
    }

    #[test]
    fn outcome_covariance_monte_carlo() {
        let design = SurveyDesign::one_per_location(square(2)).unwrap();
        let params = ModelParams::new(0.3, vec![], 1.0, 0.5, 0.2).unwrap();
        let draws: Vec<Vec<f64>> = (0..10_000)
            .map(|s| simulate_survey(&design, &params, s).unwrap().continuous().unwrap().to_vec())
            .collect();
        let emp = empirical_cov(&draws);
        let truth = crate::geo::build_covariance(&design, &params).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let rel = (emp[(i, j)] - truth[(i, j)]).abs() / truth[(i, j)];
                assert!(rel < 0.05);
            }
        }
    }

    #[test]
    fn noiseless_constant_mean() {
        let design = SurveyDesign::replicated(square(2), 2).unwrap();
        let params = ModelParams::degenerate(0.3, vec![], 0.0, 0.0, 0.2).unwrap();
        let d = simulate_survey(&design, &params, 5).unwrap();
        assert!(d.continuous().unwrap().iter().all(|&y| y == 0.3));
    }

    #[test]
    fn shared_field_without_noise() {
        let design = SurveyDesign::replicated(vec![Location::new(0.0, 0.0, "a"), Location::new(1.0, 0.0, "b")], 2).unwrap();
        let params = ModelParams::degenerate(0.0, vec![], 1.0, 0.0, 0.2).unwrap();
        let y = simulate_survey(&design, &params, 9).unwrap().continuous().unwrap().to_vec();
        assert_eq!(y[0], y[1]);
        assert_eq!(y[2], y[3]);
    }

    #[test]
    fn coefficient_count_checked() {
        let design = SurveyDesign::one_per_location(square(2)).unwrap();
        let params = ModelParams::new(0.0, vec![1.0], 1.0, 1.0, 0.2).unwrap();
        assert!(matches!(simulate_survey(&design, &params, 1), Err(Error::Schema(_))));
    }

    fn with_y(y: Vec<f64>) -> SurveyDataset<f64> {
        let n = y.len();
        let locs = (0..n).map(|i| Location::new(i as f64, 0.0, format!("l{i}"))).collect();
        SurveyDataset::new(SurveyDesign::one_per_location(locs).unwrap(), Outcomes::Continuous(y)).unwrap()
    }

    #[test]
    fn dichotomize_strict_rule() {
        let d = dichotomize(&with_y(vec![-1.0, 0.0, 2.0]), &Thresholds::Scalar(0.0)).unwrap();
        assert_eq!(d.binary().unwrap(), &[true, false, false]);
        assert_eq!(d.thresholds().unwrap(), &[0.0, 0.0, 0.0]);
        let d = dichotomize(&with_y(vec![-1.0, -2.0]), &Thresholds::Scalar(0.0)).unwrap();
        assert!(d.binary().unwrap().iter().all(|&b| b));
    }

    #[test]
    fn dichotomize_missing_threshold() {
        let err = dichotomize(&with_y(vec![1.0, 2.0]), &Thresholds::PerIndividual(vec![1.0])).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn dichotomized_standard_normal_is_balanced() {
        let mut rng = crate::rng::stream(2024, 0);
        let y: Vec<f64> = crate::rng::std_normal_vec(&mut rng, 10_000);
        let d = dichotomize(&with_y(y), &Thresholds::Scalar(0.0)).unwrap();
        let mean = d.binary().unwrap().iter().filter(|&&b| b).count() as f64 / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02);
    }
}
