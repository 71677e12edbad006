//! Survey data model, spatial covariance, simulation and the map between the
//! continuous-outcome and prevalence parameterizations.

mod bridge;
mod covariance;
mod dataset;
mod simulate;
mod spline;

pub use bridge::{to_prevalence_scale, to_prevalence_scale_varying, ModelParams, PrevalenceParams};
pub use covariance::{
    build_covariance, cross_correlation, distance, exp_correlation, location_correlation,
    max_pairwise_distance, project_equirectangular,
};
pub use dataset::{Location, Outcomes, SurveyDataset, SurveyDesign, Thresholds};
pub use simulate::{dichotomize, simulate_gp, simulate_survey, simulate_survey_with_field};
pub use spline::{spline_basis, SplineSpec};
