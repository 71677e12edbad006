//! Fit results shared by the linear and probit models.

use serde::Serialize;

use crate::geo::{ModelParams, PrevalenceParams};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Scalar;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Continuous,
    Prevalence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub name: String,
    pub scale: Scale,
    pub value: T,
    /// Wald interval; `None` when the parameter was held fixed or the
    /// observed information is not positive definite.
    pub ci95: Option<(T, T)>,
}

#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub kind: ModelKind,
    /// Continuous-scale parameters (linear model only).
    pub continuous: Option<ModelParams<T>>,
    /// Prevalence-scale parameters; for the linear model this is the image
    /// under the threshold map and is absent when no threshold is known.
    pub prevalence: Option<PrevalenceParams<T>>,
    pub estimates: Vec<Estimate<T>>,
    /// Optimum on the unconstrained working scale.
    pub working: Vec<T>,
    pub working_names: Vec<String>,
    /// Which working coordinates were estimated (others held at their start value).
    pub free: Vec<bool>,
    pub loglik: T,
    /// Negative Hessian over the free working coordinates.
    pub obs_info: Option<Matrix<T>>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_max: T,
    pub message: String,
    /// Objective value after each accepted optimizer iteration.
    pub trace: Vec<T>,
}

impl<T: Scalar> FitResult<T> {
    pub fn estimate(&self, name: &str, scale: Scale) -> Option<&Estimate<T>> {
        self.estimates.iter().find(|e| e.name == name && e.scale == scale)
    }

    /// Covariance of the working-scale estimator expanded to all working
    /// coordinates (fixed coordinates get zero rows and columns).
    pub fn working_covariance(&self) -> Option<Matrix<T>> {
        let info = self.obs_info.as_ref()?;
        let inv = Cholesky::new(info)?.inverse();
        let idx: Vec<usize> = (0..self.free.len()).filter(|&i| self.free[i]).collect();
        let n = self.free.len();
        let mut full = Matrix::zeros(n, n);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                full[(i, j)] = inv[(a, b)];
            }
        }
        Some(full)
    }
}

pub(crate) fn coefficient_names(prefix: &str, n_coef: usize, suffix: &str) -> Vec<String> {
    (0..n_coef)
        .map(|j| if j == 0 { format!("alpha{suffix}") } else { format!("{prefix}{suffix}_{j}") })
        .collect()
}

/// Symmetric Wald interval.
pub(crate) fn wald<T: Scalar>(value: T, var: T) -> Option<(T, T)> {
    let se = var.max(T::zero()).sqrt();
    (var > T::zero() && se.is_finite()).then(|| (value - T::lit(Z95) * se, value + T::lit(Z95) * se))
}

/// Interval built on the log scale and exponentiated; `var` is the variance of `ln value`.
pub(crate) fn wald_log<T: Scalar>(value: T, var: T) -> Option<(T, T)> {
    wald(value.ln(), var).map(|(lo, hi)| (lo.exp(), hi.exp()))
}

/// `gᵀ V g` for a gradient `g` of a derived quantity.
pub(crate) fn delta_var<T: Scalar>(cov: &Matrix<T>, g: &[T]) -> T {
    let vg = cov.matvec(g);
    g.iter().zip(&vg).map(|(&a, &b)| a * b).sum()
}
