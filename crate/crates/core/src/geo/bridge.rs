use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parameters of the linear geostatistical model for a continuous outcome:
/// `Y_ij = α + (β,γ)ᵀx_ij + S(x_i) + Z_ij` with `Var S = σ²`, `Var Z = τ²`
/// and correlation `exp(-u/φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub alpha: T,
    pub beta_gamma: Vec<T>,
    pub sigma2: T,
    pub tau2: T,
    pub phi: T,
}

impl<T: Scalar> ModelParams<T> {
    /// Validated constructor: all variance and scale parameters strictly positive.
    pub fn new(alpha: T, beta_gamma: Vec<T>, sigma2: T, tau2: T, phi: T) -> Result<Self> {
        let p = Self { alpha, beta_gamma, sigma2, tau2, phi };
        p.validate(false)?;
        Ok(p)
    }

    /// Simulation/test-mode constructor that also admits `σ² = 0` or `τ² = 0`.
    pub fn degenerate(alpha: T, beta_gamma: Vec<T>, sigma2: T, tau2: T, phi: T) -> Result<Self> {
        let p = Self { alpha, beta_gamma, sigma2, tau2, phi };
        p.validate(true)?;
        Ok(p)
    }

    /// Checks the parameter domain; `allow_zero_variance` is for test mode only.
    pub fn validate(&self, allow_zero_variance: bool) -> Result<()> {
        let ok_var = |v: T| v.is_finite() && (v > T::zero() || (allow_zero_variance && v == T::zero()));
        if !ok_var(self.sigma2) {
            return Err(Error::ParameterDomain(format!("sigma2 = {} out of domain", self.sigma2)));
        }
        if !ok_var(self.tau2) {
            return Err(Error::ParameterDomain(format!("tau2 = {} out of domain", self.tau2)));
        }
        if !(self.phi.is_finite() && self.phi > T::zero()) {
            return Err(Error::ParameterDomain(format!("phi = {} out of domain", self.phi)));
        }
        if !self.alpha.is_finite() || self.beta_gamma.iter().any(|b| !b.is_finite()) {
            return Err(Error::ParameterDomain("non-finite regression coefficient".into()));
        }
        Ok(())
    }

    pub fn tau(&self) -> T {
        self.tau2.sqrt()
    }

    /// Regression coefficients with the intercept first.
    pub fn coefficients(&self) -> Vec<T> {
        std::iter::once(self.alpha).chain(self.beta_gamma.iter().copied()).collect()
    }

    /// Inverse of the intercept map: `α = c − τ α̃`.
    pub fn intercept_from_prevalence(alpha_t: T, c: T, tau2: T) -> T {
        c - tau2.sqrt() * alpha_t
    }
}

/// Parameters of the probit geostatistical model for the dichotomized outcome:
/// `Φ⁻¹(p_ij) = α̃ + (β̃,γ̃)ᵀx_ij + S̃(x_i)` with `Var S̃ = σ̃²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceParams<T> {
    pub alpha_t: T,
    pub beta_gamma_t: Vec<T>,
    pub sigma2_t: T,
    pub phi: T,
}

impl<T: Scalar> PrevalenceParams<T> {
    pub fn new(alpha_t: T, beta_gamma_t: Vec<T>, sigma2_t: T, phi: T) -> Result<Self> {
        let p = Self { alpha_t, beta_gamma_t, sigma2_t, phi };
        p.validate(false)?;
        Ok(p)
    }

    /// Test-mode constructor admitting `σ̃² = 0`.
    pub fn degenerate(alpha_t: T, beta_gamma_t: Vec<T>, sigma2_t: T, phi: T) -> Result<Self> {
        let p = Self { alpha_t, beta_gamma_t, sigma2_t, phi };
        p.validate(true)?;
        Ok(p)
    }

    pub fn validate(&self, allow_zero_variance: bool) -> Result<()> {
        let v = self.sigma2_t;
        if !(v.is_finite() && (v > T::zero() || (allow_zero_variance && v == T::zero()))) {
            return Err(Error::ParameterDomain(format!("sigma2_t = {v} out of domain")));
        }
        if !(self.phi.is_finite() && self.phi > T::zero()) {
            return Err(Error::ParameterDomain(format!("phi = {} out of domain", self.phi)));
        }
        if !self.alpha_t.is_finite() || self.beta_gamma_t.iter().any(|b| !b.is_finite()) {
            return Err(Error::ParameterDomain("non-finite regression coefficient".into()));
        }
        Ok(())
    }

    pub fn coefficients(&self) -> Vec<T> {
        std::iter::once(self.alpha_t).chain(self.beta_gamma_t.iter().copied()).collect()
    }

    pub fn with_coefficients(&self, coef: &[T]) -> Self {
        Self {
            alpha_t: coef[0],
            beta_gamma_t: coef[1..].to_vec(),
            sigma2_t: self.sigma2_t,
            phi: self.phi,
        }
    }
}

fn require_tau<T: Scalar>(params: &ModelParams<T>) -> Result<T> {
    if !(params.tau2.is_finite() && params.tau2 > T::zero()) {
        return Err(Error::ParameterDomain(format!(
            "prevalence scale needs tau2 > 0, got {}",
            params.tau2
        )));
    }
    Ok(params.tau2.sqrt())
}

/// Maps continuous-model parameters to the probit model implied by
/// dichotomizing at a common threshold `c`.
pub fn to_prevalence_scale<T: Scalar>(params: &ModelParams<T>, c: T) -> Result<PrevalenceParams<T>> {
    let tau = require_tau(params)?;
    Ok(PrevalenceParams {
        alpha_t: (c - params.alpha) / tau,
        beta_gamma_t: params.beta_gamma.iter().map(|&b| -b / tau).collect(),
        sigma2_t: params.sigma2 / params.tau2,
        phi: params.phi,
    })
}

/// Same map when thresholds vary by individual and enter the probit linear
/// predictor as a trailing covariate; its coefficient is `1/τ`.
pub fn to_prevalence_scale_varying<T: Scalar>(params: &ModelParams<T>) -> Result<PrevalenceParams<T>> {
    let mut p = to_prevalence_scale(params, T::zero())?;
    p.beta_gamma_t.push(params.tau().recip());
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bridge_examples() {
        let p = ModelParams::new(0.0, vec![], 1.0, 1.0, 0.1).unwrap();
        let q = to_prevalence_scale(&p, 0.0).unwrap();
        assert_eq!((q.alpha_t, q.sigma2_t), (0.0, 1.0));

        let p = ModelParams::new(2.0, vec![], 1.0, 1.0, 0.1).unwrap();
        assert_eq!(to_prevalence_scale(&p, 0.0).unwrap().alpha_t, -2.0);

        let p = ModelParams::new(0.1_f64, vec![0.5], 1.0, 2.0, 0.3).unwrap();
        let q = to_prevalence_scale(&p, 0.4).unwrap();
        let tau = 2.0_f64.sqrt();
        assert!((q.sigma2_t - 0.5).abs() < 1e-15);
        assert!((q.beta_gamma_t[0] - (-0.5 / tau)).abs() < 1e-15);
        assert!((q.beta_gamma_t[0] - (-0.3536)).abs() < 1e-4);
        assert!((q.alpha_t - 0.2121).abs() < 1e-4);
        assert_eq!(q.phi, 0.3);
    }

    #[test]
    fn zero_nugget_rejected() {
        let p = ModelParams::degenerate(0.0, vec![], 1.0, 0.0, 0.1).unwrap();
        assert!(matches!(to_prevalence_scale(&p, 0.0), Err(Error::ParameterDomain(_))));
        assert!(ModelParams::new(0.0, vec![], 1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn varying_thresholds_append_inverse_tau() {
        let p = ModelParams::new(1.0, vec![2.0], 1.0, 4.0, 0.1).unwrap();
        let q = to_prevalence_scale_varying(&p).unwrap();
        assert_eq!(q.alpha_t, -0.5);
        assert_eq!(q.beta_gamma_t, vec![-1.0, 0.5]);
    }

    proptest! {
        #[test]
        fn intercept_round_trip(alpha in -5.0f64..5.0, c in -3.0f64..3.0, tau2 in 0.01f64..10.0) {
            let p = ModelParams::new(alpha, vec![], 1.0, tau2, 0.2).unwrap();
            let q = to_prevalence_scale(&p, c).unwrap();
            let back = ModelParams::intercept_from_prevalence(q.alpha_t, c, tau2);
            prop_assert!((back - alpha).abs() < 1e-12);
        }
    }
}
