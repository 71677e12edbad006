//! Run configuration (TOML) and its validation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dichogeo::binomial::IntegrationMode;
use dichogeo::geo::SplineSpec;
use dichogeo::info_loss::OutcomeExpectation;
use dichogeo::sim::GridKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Simulate,
    FitLinear,
    FitBinomial,
    InfoCurve,
    Cld,
    Predict,
    SimStudy,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::FitLinear => "fit-linear",
            Task::FitBinomial => "fit-binomial",
            Task::InfoCurve => "info-curve",
            Task::Cld => "cld",
            Task::Predict => "predict",
            Task::SimStudy => "sim-study",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must agree with the task named on the command line when present.
    pub task: Option<Task>,
    #[serde(default)]
    pub seed: u64,
    pub workers: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: Option<DataConfig>,
    pub threshold: Option<ThresholdRule>,
    #[serde(default)]
    pub linear: LinearConfig,
    #[serde(default)]
    pub binomial: BinomialConfig,
    pub predict: Option<PredictConfig>,
    #[serde(default)]
    pub info_curve: InfoCurveConfig,
    #[serde(default)]
    pub cld: CldConfig,
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub sim_study: SimStudyConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeType {
    #[default]
    Continuous,
    /// 0/1 outcomes (1 = positive); only the binomial model applies.
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// `x`, `y` are already planar coordinates.
    #[default]
    None,
    /// `x`, `y` are longitude/latitude in degrees, projected to km.
    Equirectangular,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplineConfig {
    pub column: String,
    pub knots: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub survey: PathBuf,
    #[serde(default = "default_outcome")]
    pub outcome: String,
    #[serde(default)]
    pub outcome_type: OutcomeType,
    #[serde(default)]
    pub log_outcome: bool,
    /// Linear covariate columns.
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Linear-spline covariates; their bases come before `covariates`.
    #[serde(default)]
    pub splines: Vec<SplineConfig>,
    #[serde(default)]
    pub projection: Projection,
}

fn default_outcome() -> String {
    "outcome".into()
}

impl DataConfig {
    /// Raw columns a covariate profile must supply.
    pub fn raw_covariates(&self) -> Vec<String> {
        self.splines.iter().map(|s| s.column.clone()).chain(self.covariates.iter().cloned()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinTable {
    /// Severe-anaemia haemoglobin cut-offs (g/dL) by age, sex and pregnancy.
    WhoSevereAnaemia,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgeUnit {
    #[default]
    Years,
    Months,
}

/// How each individual's dichotomization threshold is found. `log` maps the
/// threshold through `ln` to match a log-transformed outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdRule {
    Scalar {
        value: f64,
        #[serde(default)]
        log: bool,
    },
    Column {
        column: String,
        #[serde(default)]
        log: bool,
    },
    Table {
        /// Threshold-table CSV; exclusive with `builtin`.
        table: Option<PathBuf>,
        builtin: Option<BuiltinTable>,
        #[serde(default = "default_age_column")]
        age_column: String,
        #[serde(default)]
        age_unit: AgeUnit,
        #[serde(default = "default_sex_column")]
        sex_column: String,
        pregnant_column: Option<String>,
        #[serde(default)]
        log: bool,
    },
}

fn default_age_column() -> String {
    "age".into()
}

fn default_sex_column() -> String {
    "sex".into()
}

impl ThresholdRule {
    pub fn log(&self) -> bool {
        match self {
            ThresholdRule::Scalar { log, .. } | ThresholdRule::Column { log, .. } | ThresholdRule::Table { log, .. } => *log,
        }
    }

    /// Survey columns the rule reads.
    pub fn columns(&self) -> Vec<String> {
        match self {
            ThresholdRule::Scalar { .. } => vec![],
            ThresholdRule::Column { column, .. } => vec![column.clone()],
            ThresholdRule::Table { age_column, sex_column, pregnant_column, .. } => {
                let mut c = vec![age_column.clone(), sex_column.clone()];
                c.extend(pregnant_column.clone());
                c
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub skip_info: bool,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-6, skip_info: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BinomialConfig {
    pub mode: IntegrationMode,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub max_sigma2_t: f64,
    pub is_samples: usize,
    pub skip_info: bool,
}

impl Default for BinomialConfig {
    fn default() -> Self {
        Self { mode: IntegrationMode::Ep, max_iter: 200, grad_tol: 1e-4, max_sigma2_t: 100.0, is_samples: 5000, skip_info: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Linear,
    Binomial,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// Grid CSV with `x`, `y` columns.
    pub grid: PathBuf,
    #[serde(default = "both_models")]
    pub models: Vec<ModelChoice>,
    #[serde(default = "default_cond_samples")]
    pub n_cond_samples: usize,
    #[serde(default = "default_exceedance")]
    pub exceedance: Vec<f64>,
    /// Raw covariate values shared by every grid point.
    #[serde(default)]
    pub profile: BTreeMap<String, f64>,
    /// Threshold for the profile (before any `log`); needed when thresholds vary.
    pub profile_threshold: Option<f64>,
}

fn both_models() -> Vec<ModelChoice> {
    vec![ModelChoice::Linear, ModelChoice::Binomial]
}

fn default_cond_samples() -> usize {
    2000
}

fn default_exceedance() -> Vec<f64> {
    vec![0.2]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InfoCurveConfig {
    pub sigma2: f64,
    pub tau2: Vec<f64>,
    pub rho: Vec<f64>,
    pub alpha_t: Vec<f64>,
    pub expectation: OutcomeExpectation,
    pub n_outcome_draws: usize,
    pub qmc_points: usize,
    pub rel_tol: f64,
}

impl Default for InfoCurveConfig {
    fn default() -> Self {
        Self {
            sigma2: 1.0,
            tau2: vec![0.5, 1.0, 2.0],
            rho: (0..=7).map(|i| i as f64 / 10.0).collect(),
            alpha_t: (0..=30).map(|i| i as f64 / 10.0).collect(),
            expectation: OutcomeExpectation::Enumerate,
            n_outcome_draws: 10_000,
            qmc_points: 4096,
            rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CldConfig {
    pub quadrature_order: usize,
}

impl Default for CldConfig {
    fn default() -> Self {
        Self { quadrature_order: dichogeo::info_loss::COMPOSITE_ORDER }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "one")]
    pub sigma2: f64,
    pub tau2: f64,
    pub phi: f64,
    #[serde(default = "unit_grid")]
    pub grid: GridKind,
    #[serde(default = "one_usize")]
    pub n_per_location: usize,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn unit_grid() -> GridKind {
    GridKind::Unit225
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub tau2: f64,
    pub phi: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimStudyConfig {
    pub n_reps: usize,
    pub grid: GridKind,
    /// Defaults to the 18 standard cells.
    pub cells: Option<Vec<CellConfig>>,
    pub allow_override: bool,
    /// Defaults to `<output_dir>/checkpoints`.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for SimStudyConfig {
    fn default() -> Self {
        Self { n_reps: dichogeo::sim::DEFAULT_REPS, grid: GridKind::Unit225, cells: None, allow_override: false, checkpoint_dir: None }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(d) = &mut self.data {
            fix(&mut d.survey);
        }
        if let Some(ThresholdRule::Table { table: Some(t), .. }) = &mut self.threshold {
            fix(t);
        }
        if let Some(p) = &mut self.predict {
            fix(&mut p.grid);
        }
        if let Some(c) = &mut self.sim_study.checkpoint_dir {
            fix(c);
        }
    }

    /// Input files the task reads.
    pub fn inputs(&self, task: Task) -> Vec<PathBuf> {
        let mut out = Vec::new();
        if matches!(task, Task::FitLinear | Task::FitBinomial | Task::Cld | Task::Predict) {
            if let Some(d) = &self.data {
                out.push(d.survey.clone());
            }
            if let Some(ThresholdRule::Table { table: Some(t), .. }) = &self.threshold {
                out.push(t.clone());
            }
        }
        if task == Task::Predict {
            if let Some(p) = &self.predict {
                out.push(p.grid.clone());
            }
        }
        out
    }

    /// Checks everything that can be checked before any computation,
    /// including input headers.
    pub fn validate(&self, task: Task) -> CliResult<()> {
        if let Some(t) = self.task {
            if t != task {
                return Err(config_err(format!("config is for task '{}', command line asks for '{}'", t.name(), task.name())));
            }
        }
        if self.workers == Some(0) {
            return Err(config_err("workers must be at least 1"));
        }
        let needs_data = matches!(task, Task::FitLinear | Task::FitBinomial | Task::Cld | Task::Predict);
        if needs_data {
            let data = self.data.as_ref().ok_or_else(|| config_err(format!("task '{}' needs a [data] section", task.name())))?;
            self.validate_data(task, data)?;
        }
        match task {
            Task::FitLinear => self.validate_linear()?,
            Task::FitBinomial => self.validate_binomial()?,
            Task::Cld => {
                self.validate_linear()?;
                if self.cld.quadrature_order < 2 {
                    return Err(config_err("cld.quadrature_order must be at least 2"));
                }
            }
            Task::Predict => self.validate_predict()?,
            Task::InfoCurve => self.validate_info_curve()?,
            Task::Simulate => {
                let s = self.simulate.as_ref().ok_or_else(|| config_err("task 'simulate' needs a [simulate] section"))?;
                dichogeo::geo::ModelParams::degenerate(s.alpha, vec![], s.sigma2, s.tau2, s.phi)?;
                if s.n_per_location == 0 {
                    return Err(config_err("simulate.n_per_location must be at least 1"));
                }
            }
            Task::SimStudy => {
                for spec in self.scenarios() {
                    spec.validate()?;
                }
            }
        }
        Ok(())
    }

    fn validate_data(&self, task: Task, data: &DataConfig) -> CliResult<()> {
        for s in &data.splines {
            SplineSpec::new(s.knots.clone()).map_err(|e| config_err(format!("spline on '{}': {e}", s.column)))?;
        }
        let mut seen = std::collections::HashSet::new();
        for c in data.raw_covariates() {
            if !seen.insert(c.clone()) {
                return Err(config_err(format!("covariate column '{c}' listed twice")));
            }
        }
        let binary = data.outcome_type == OutcomeType::Binary;
        if binary && matches!(task, Task::FitLinear | Task::Cld) {
            return Err(config_err(format!("task '{}' needs a continuous outcome", task.name())));
        }
        if binary && data.log_outcome {
            return Err(config_err("log_outcome applies to continuous outcomes only"));
        }
        if task == Task::Predict && binary {
            if let Some(p) = &self.predict {
                if p.models.contains(&ModelChoice::Linear) {
                    return Err(config_err("the linear model needs a continuous outcome"));
                }
            }
        }
        let needs_threshold = match task {
            Task::FitBinomial => !binary,
            Task::Cld => true,
            Task::Predict => !binary,
            _ => false,
        };
        if needs_threshold && self.threshold.is_none() {
            return Err(config_err(format!("task '{}' needs a [threshold] rule", task.name())));
        }
        if let Some(ThresholdRule::Table { table, builtin, .. }) = &self.threshold {
            if table.is_some() == builtin.is_some() {
                return Err(config_err("a table threshold rule needs exactly one of 'table' and 'builtin'"));
            }
        }
        if let Some(ThresholdRule::Scalar { value, log }) = &self.threshold {
            if !value.is_finite() || (*log && *value <= 0.0) {
                return Err(config_err(format!("threshold value {value} is not usable")));
            }
        }
        // header check: every referenced column must exist
        let header = crate::data::read_header(&data.survey)?;
        let mut needed = vec!["loc_id".to_string(), "x".into(), "y".into(), data.outcome.clone()];
        needed.extend(data.raw_covariates());
        if let Some(rule) = &self.threshold {
            needed.extend(rule.columns());
        }
        for c in needed {
            if !header.contains(&c) {
                return Err(CliError::input(&data.survey, format!("missing column '{c}'")));
            }
        }
        if let Some(ThresholdRule::Table { table: Some(t), .. }) = &self.threshold {
            crate::data::ThresholdTable::load(t)?;
        }
        Ok(())
    }

    fn validate_linear(&self) -> CliResult<()> {
        if self.linear.max_iter == 0 || !(self.linear.grad_tol > 0.0) {
            return Err(config_err("linear.max_iter and linear.grad_tol must be positive"));
        }
        Ok(())
    }

    fn validate_binomial(&self) -> CliResult<()> {
        let b = &self.binomial;
        if b.max_iter == 0 || !(b.grad_tol > 0.0) || !(b.max_sigma2_t > 0.0) {
            return Err(config_err("binomial.max_iter, grad_tol and max_sigma2_t must be positive"));
        }
        self.latent_settings().validate()?;
        Ok(())
    }

    fn validate_predict(&self) -> CliResult<()> {
        let p = self.predict.as_ref().ok_or_else(|| config_err("task 'predict' needs a [predict] section"))?;
        if p.models.is_empty() {
            return Err(config_err("predict.models is empty"));
        }
        if p.models.contains(&ModelChoice::Linear) {
            self.validate_linear()?;
        }
        if p.models.contains(&ModelChoice::Binomial) {
            self.validate_binomial()?;
        }
        if p.n_cond_samples == 0 {
            return Err(config_err("predict.n_cond_samples must be positive"));
        }
        if let Some(t) = p.exceedance.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(config_err(format!("exceedance threshold {t} outside (0, 1)")));
        }
        let data = self.data.as_ref().expect("checked by the caller");
        let raw = data.raw_covariates();
        for k in p.profile.keys() {
            if !raw.contains(k) {
                return Err(config_err(format!("profile names '{k}', which is not a model covariate")));
            }
        }
        if let Some(k) = raw.iter().find(|k| !p.profile.contains_key(*k)) {
            return Err(config_err(format!("profile lacks a value for covariate '{k}'")));
        }
        if let Some(v) = p.profile.values().find(|v| !v.is_finite()) {
            return Err(config_err(format!("non-finite profile value {v}")));
        }
        if matches!(self.threshold, Some(ThresholdRule::Column { .. } | ThresholdRule::Table { .. })) && p.profile_threshold.is_none() {
            return Err(config_err("per-individual thresholds need predict.profile_threshold"));
        }
        let header = crate::data::read_header(&p.grid)?;
        for c in ["x", "y"] {
            if !header.iter().any(|h| h == c) {
                return Err(CliError::input(&p.grid, format!("missing column '{c}'")));
            }
        }
        Ok(())
    }

    fn validate_info_curve(&self) -> CliResult<()> {
        let c = &self.info_curve;
        if !(c.sigma2 > 0.0) || c.tau2.is_empty() || c.tau2.iter().any(|t| !(*t > 0.0)) {
            return Err(config_err("info_curve needs sigma2 > 0 and a non-empty list of positive tau2"));
        }
        self.efi_settings().validate()?;
        Ok(())
    }

    pub fn latent_settings(&self) -> dichogeo::binomial::LatentIntegrationSettings<f64> {
        dichogeo::binomial::LatentIntegrationSettings {
            is_samples: self.binomial.is_samples,
            seed: dichogeo::rng::derive_seed(self.seed, dichogeo::rng::purpose::IMPORTANCE),
            ..dichogeo::binomial::LatentIntegrationSettings::with_mode(self.binomial.mode)
        }
    }

    pub fn efi_settings(&self) -> dichogeo::info_loss::EfiSettings<f64> {
        let c = &self.info_curve;
        dichogeo::info_loss::EfiSettings {
            expectation: c.expectation,
            n_outcome_draws: c.n_outcome_draws,
            qmc_points: c.qmc_points,
            max_qmc_points: (1 << 20).max(c.qmc_points),
            rel_tol: c.rel_tol,
            rho_grid: c.rho.clone(),
            alpha_grid: c.alpha_t.clone(),
            seed: dichogeo::rng::derive_seed(self.seed, dichogeo::rng::purpose::OUTCOMES),
        }
    }

    pub fn scenarios(&self) -> Vec<dichogeo::sim::ScenarioSpec> {
        let s = &self.sim_study;
        let mut specs = match &s.cells {
            None => dichogeo::sim::standard_scenarios(s.n_reps, self.seed),
            Some(cells) => cells
                .iter()
                .map(|c| dichogeo::sim::ScenarioSpec::new(c.tau2, c.phi, c.c, s.n_reps, self.seed))
                .collect(),
        };
        for spec in &mut specs {
            spec.grid = s.grid;
            spec.allow_override = s.allow_override;
        }
        specs
    }
}
