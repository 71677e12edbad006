use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

use super::bridge::ModelParams;
use super::dataset::{Location, SurveyDesign};

/// Euclidean distance between two locations.
#[inline]
pub fn distance<T: Scalar>(a: &Location<T>, b: &Location<T>) -> T {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Exponential correlation `exp(-u / phi)`.
pub fn exp_correlation<T: Scalar>(u: T, phi: T) -> Result<T> {
    if !(phi.is_finite() && phi > T::zero()) {
        return Err(Error::ParameterDomain(format!("correlation scale must be finite and positive, got {phi}")));
    }
    if !(u >= T::zero()) {
        return Err(Error::ParameterDomain(format!("distance must be non-negative, got {u}")));
    }
    Ok((-u / phi).exp())
}

/// Location-level correlation matrix `ρ(‖x_i − x_j‖)`.
pub fn location_correlation<T: Scalar>(locations: &[Location<T>], phi: T) -> Result<Matrix<T>> {
    cross_correlation(locations, locations, phi)
}

/// Correlations between two location sets.
pub fn cross_correlation<T: Scalar>(a: &[Location<T>], b: &[Location<T>], phi: T) -> Result<Matrix<T>> {
    exp_correlation(T::zero(), phi)?;
    let inv = phi.recip();
    Ok(Matrix::from_fn(a.len(), b.len(), |i, j| (-distance(&a[i], &b[j]) * inv).exp()))
}

/// Individual-level covariance `σ²ρ(‖x_i − x_j‖) + τ²·1[k = l]` of the outcomes.
///
/// Individuals at the same location get exactly `σ²` off the diagonal. Zero
/// variances are accepted here so that degenerate limits can be exercised.
pub fn build_covariance<T: Scalar>(design: &SurveyDesign<T>, params: &ModelParams<T>) -> Result<Matrix<T>> {
    params.validate(true)?;
    let corr = location_correlation(design.locations(), params.phi)?;
    let loc = design.location_of();
    let n = loc.len();
    let mut cov = Matrix::from_fn(n, n, |k, l| params.sigma2 * corr[(loc[k], loc[l])]);
    cov.add_to_diag(params.tau2);
    Ok(cov)
}

pub fn max_pairwise_distance<T: Scalar>(locations: &[Location<T>]) -> T {
    let mut best = T::zero();
    for (i, a) in locations.iter().enumerate() {
        for b in &locations[..i] {
            best = best.max(distance(a, b));
        }
    }
    best
}

/// Equirectangular projection of longitude/latitude (degrees) to kilometres,
/// centred on latitude `lat0`.
pub fn project_equirectangular<T: Scalar>(lon: T, lat: T, lat0: T) -> (T, T) {
    const EARTH_RADIUS_KM: f64 = 6371.0;
    let r = T::lit(EARTH_RADIUS_KM);
    let rad = T::PI() / T::lit(180.0);
    (r * lon * rad * (lat0 * rad).cos(), r * lat * rad)
}
