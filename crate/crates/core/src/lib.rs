//! Geostatistical inference for prevalence surveys with continuous or
//! dichotomized outcomes.

pub mod binomial;
pub mod error;
pub mod fit;
pub mod geo;
pub mod info_loss;
pub mod linalg;
pub mod linear;
pub mod optim;
pub mod predict;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision instantiations of the generic types.
pub mod f64 {
    pub type Matrix = crate::linalg::Matrix<f64>;
    pub type Location = crate::geo::Location<f64>;
    pub type SurveyDesign = crate::geo::SurveyDesign<f64>;
    pub type SurveyDataset = crate::geo::SurveyDataset<f64>;
    pub type ModelParams = crate::geo::ModelParams<f64>;
    pub type PrevalenceParams = crate::geo::PrevalenceParams<f64>;
    pub type FitResult = crate::fit::FitResult<f64>;
    pub type LatentIntegrationSettings = crate::binomial::LatentIntegrationSettings<f64>;
    pub type PredictionGrid = crate::predict::PredictionGrid<f64>;
}

/// Single-precision instantiations of the generic types.
pub mod f32 {
    pub type Matrix = crate::linalg::Matrix<f32>;
    pub type Location = crate::geo::Location<f32>;
    pub type SurveyDesign = crate::geo::SurveyDesign<f32>;
    pub type SurveyDataset = crate::geo::SurveyDataset<f32>;
    pub type ModelParams = crate::geo::ModelParams<f32>;
    pub type PrevalenceParams = crate::geo::PrevalenceParams<f32>;
    pub type FitResult = crate::fit::FitResult<f32>;
    pub type LatentIntegrationSettings = crate::binomial::LatentIntegrationSettings<f32>;
    pub type PredictionGrid = crate::predict::PredictionGrid<f32>;
}
