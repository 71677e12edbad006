//! Simulation study: scenario grid, replicate execution with checkpoints and
//! bias/MSE aggregation for the continuous (C) and binomial (B) fits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binomial::{default_binomial_init, fit_binomial, BinomialFitOptions, IntegrationMode, LatentIntegrationSettings};
use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::geo::{dichotomize, simulate_gp, Location, ModelParams, Outcomes, SurveyDataset, SurveyDesign, Thresholds};
use crate::linear::{default_linear_init, fit_linear, LinearFitOptions, PrevalenceThreshold};
use crate::predict::{prevalence_mean_exact, LatentField};
use crate::rng::{self, purpose};
use crate::scalar::norm_cdf;

pub const TAU2_SET: [f64; 3] = [0.5, 1.0, 2.0];
pub const PHI_SET: [f64; 2] = [0.1, 0.2];
pub const C_SET: [f64; 3] = [0.0, 0.2, 0.4];
pub const DEFAULT_REPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// 15 × 15 points with spacing 1/14 on the unit square.
    Unit225,
    /// `Unit225` plus its translate by `(1 + 1/14, 0)`.
    Extended450,
}

pub fn generate_grid(kind: GridKind) -> Vec<Location<f64>> {
    let block = |dx: f64, tag: &str| -> Vec<Location<f64>> {
        (0..15)
            .flat_map(|j| (0..15).map(move |i| (i, j)))
            .map(|(i, j)| Location::new(dx + i as f64 / 14.0, j as f64 / 14.0, format!("{tag}{i}_{j}")))
            .collect()
    };
    let mut grid = block(0.0, "g");
    if kind == GridKind::Extended450 {
        grid.extend(block(1.0 + 1.0 / 14.0, "e"));
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub tau2: f64,
    pub phi: f64,
    pub c: f64,
    pub alpha: f64,
    pub sigma2: f64,
    /// Prediction grid; data are always sampled on `Unit225`.
    pub grid: GridKind,
    pub n_reps: usize,
    pub seed: u64,
    /// Admit values outside the standard scenario sets.
    #[serde(default)]
    pub allow_override: bool,
}

impl ScenarioSpec {
    pub fn new(tau2: f64, phi: f64, c: f64, n_reps: usize, seed: u64) -> Self {
        Self { tau2, phi, c, alpha: 0.0, sigma2: 1.0, grid: GridKind::Unit225, n_reps, seed, allow_override: false }
    }

    pub fn validate(&self) -> Result<()> {
        ModelParams::new(self.alpha, vec![], self.sigma2, self.tau2, self.phi)?;
        if !self.c.is_finite() {
            return Err(Error::ParameterDomain("threshold must be finite".into()));
        }
        if !self.allow_override {
            let member = |v: f64, set: &[f64]| set.iter().any(|&s| (s - v).abs() < 1e-12);
            if !member(self.tau2, &TAU2_SET) || !member(self.phi, &PHI_SET) || !member(self.c, &C_SET) {
                return Err(Error::ParameterDomain(format!(
                    "scenario (tau2={}, phi={}, c={}) is outside the standard set; set allow_override",
                    self.tau2, self.phi, self.c
                )));
            }
            if self.alpha != 0.0 || self.sigma2 != 1.0 {
                return Err(Error::ParameterDomain("standard scenarios use alpha = 0 and sigma2 = 1".into()));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!("tau2={}_phi={}_c={}", self.tau2, self.phi, self.c)
    }

    /// `(α̃, σ̃², φ)` on the prevalence scale.
    pub fn prevalence_truth(&self) -> [f64; 3] {
        let tau = self.tau2.sqrt();
        [(self.c - self.alpha) / tau, self.sigma2 / self.tau2, self.phi]
    }
}

/// The 18 standard cells, ordered by τ², φ, then c.
pub fn standard_scenarios(n_reps: usize, seed: u64) -> Vec<ScenarioSpec> {
    let mut out = Vec::new();
    for &tau2 in &TAU2_SET {
        for &phi in &PHI_SET {
            for &c in &C_SET {
                out.push(ScenarioSpec::new(tau2, phi, c, n_reps, seed));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SimSettings {
    pub latent: LatentIntegrationSettings<f64>,
    pub binomial: BinomialFitOptions<f64>,
    pub linear: LinearFitOptions<f64>,
    /// One JSON file per finished replicate; existing files are reused.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            latent: LatentIntegrationSettings::with_mode(IntegrationMode::Ep),
            binomial: BinomialFitOptions { skip_info: true, ..Default::default() },
            linear: LinearFitOptions { skip_info: true, ..Default::default() },
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    Failed,
    /// σ̃² ended on (or, for the linear model, beyond half of) the bound
    /// on the prevalence-scale field variance.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub status: FitStatus,
    pub message: String,
    /// `(α̃, σ̃², φ)`; empty unless the fit produced parameters.
    pub estimates: Vec<f64>,
    /// Grid average of `p̂ − p`.
    pub pred_bias: Option<f64>,
    /// Grid average of `(p̂ − p)²`.
    pub pred_sq: Option<f64>,
}

impl ModelOutcome {
    fn failed(message: String) -> Self {
        Self { status: FitStatus::Failed, message, estimates: vec![], pred_bias: None, pred_sq: None }
    }

    pub fn ok(&self) -> bool {
        self.status == FitStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub rep: usize,
    pub seed: u64,
    pub spec: ScenarioSpec,
    pub binomial: ModelOutcome,
    pub linear: ModelOutcome,
}

/// Runs one replicate: simulate, dichotomize, fit both models, predict.
pub fn run_replicate(spec: &ScenarioSpec, rep: usize, settings: &SimSettings) -> Result<ReplicateRecord> {
    let seed = rng::derive_seed(spec.seed, rep as u64);
    let grid = generate_grid(spec.grid);
    let data_locs = generate_grid(GridKind::Unit225);
    let field = simulate_gp(&grid, spec.sigma2, spec.phi, seed)?;
    let mut noise = rng::stream(seed, purpose::NOISE);
    let tau = spec.tau2.sqrt();
    let y: Vec<f64> = (0..data_locs.len()).map(|k| spec.alpha + field[k] + tau * rng::std_normal::<f64>(&mut noise)).collect();
    let design = SurveyDesign::one_per_location(data_locs)?;
    let cont = SurveyDataset::new(design, Outcomes::Continuous(y))?;
    let bin = dichotomize(&cont, &Thresholds::Scalar(spec.c))?;

    let alpha_t = spec.prevalence_truth()[0];
    let truth: Vec<f64> = field.iter().map(|&s| norm_cdf(alpha_t - s / tau)).collect();

    let binomial = match default_binomial_init(&bin)
        .and_then(|init| fit_binomial(&bin, &init, &settings.latent, &settings.binomial))
    {
        Ok(fit) => assess(&fit, &grid, &truth, settings.binomial.max_sigma2_t, |f| {
            LatentField::binomial(f.prevalence.as_ref().expect("binomial fit has parameters"), &bin, &settings.latent)
        }),
        Err(e) => ModelOutcome::failed(e.to_string()),
    };
    let lin_opts = LinearFitOptions { threshold: Some(PrevalenceThreshold::Common(spec.c)), ..settings.linear.clone() };
    let linear = match default_linear_init(&cont).and_then(|init| fit_linear(&cont, &init, &lin_opts)) {
        Ok(fit) => assess(&fit, &grid, &truth, settings.binomial.max_sigma2_t, |f| {
            LatentField::linear(f.continuous.as_ref().expect("linear fit has parameters"), &cont)
        }),
        Err(e) => ModelOutcome::failed(e.to_string()),
    };
    Ok(ReplicateRecord { rep, seed, spec: spec.clone(), binomial, linear })
}

fn assess(
    fit: &FitResult<f64>,
    grid: &[Location<f64>],
    truth: &[f64],
    sigma2_cap: f64,
    field: impl FnOnce(&FitResult<f64>) -> Result<LatentField<f64>>,
) -> ModelOutcome {
    let Some(p) = fit.prevalence.as_ref() else {
        return ModelOutcome::failed("fit has no prevalence-scale parameters".into());
    };
    let estimates = vec![p.alpha_t, p.sigma2_t, p.phi];
    if p.sigma2_t > 0.5 * sigma2_cap {
        let message = format!("sigma2_t = {} is beyond half the bound {sigma2_cap}", p.sigma2_t);
        return ModelOutcome { status: FitStatus::Boundary, message, estimates, pred_bias: None, pred_sq: None };
    }
    if !fit.converged {
        return ModelOutcome { status: FitStatus::Failed, message: fit.message.clone(), estimates, pred_bias: None, pred_sq: None };
    }
    let pred = field(fit).and_then(|f| f.marginal_at(grid));
    match pred {
        Ok((m, v)) => {
            let phat = prevalence_mean_exact(p.alpha_t, &m, &v);
            let n = grid.len() as f64;
            let bias = phat.iter().zip(truth).map(|(a, b)| a - b).sum::<f64>() / n;
            let sq = phat.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
            ModelOutcome { status: FitStatus::Ok, message: String::new(), estimates, pred_bias: Some(bias), pred_sq: Some(sq) }
        }
        Err(e) => ModelOutcome { status: FitStatus::Failed, message: e.to_string(), estimates, pred_bias: None, pred_sq: None },
    }
}

fn checkpoint_path(dir: &Path, spec: &ScenarioSpec, rep: usize) -> PathBuf {
    dir.join(format!("{}_seed={}_{:?}", spec.label(), spec.seed, spec.grid).to_lowercase())
        .join(format!("rep_{rep:05}.json"))
}

fn load_checkpoint(path: &Path, spec: &ScenarioSpec, rep: usize) -> Option<ReplicateRecord> {
    let text = fs::read_to_string(path).ok()?;
    let mut rec: ReplicateRecord = serde_json::from_str(&text).ok()?;
    // n_reps may grow between runs; everything else must match
    rec.spec.n_reps = spec.n_reps;
    (rec.rep == rep && rec.spec == *spec).then_some(rec)
}

/// Runs (or resumes) every replicate of a scenario and aggregates them.
pub fn run_scenario(spec: &ScenarioSpec, settings: &SimSettings) -> Result<CellReport> {
    spec.validate()?;
    if let Some(dir) = &settings.checkpoint_dir {
        fs::create_dir_all(checkpoint_path(dir, spec, 0).parent().expect("checkpoint file has a parent"))?;
    }
    let records: Vec<ReplicateRecord> = (0..spec.n_reps)
        .into_par_iter()
        .map(|rep| {
            let path = settings.checkpoint_dir.as_ref().map(|d| checkpoint_path(d, spec, rep));
            if let Some(rec) = path.as_deref().and_then(|p| load_checkpoint(p, spec, rep)) {
                return Ok(rec);
            }
            let rec = match run_replicate(spec, rep, settings) {
                Ok(r) => r,
                Err(e) => ReplicateRecord {
                    rep,
                    seed: rng::derive_seed(spec.seed, rep as u64),
                    spec: spec.clone(),
                    binomial: ModelOutcome::failed(e.to_string()),
                    linear: ModelOutcome::failed(e.to_string()),
                },
            };
            if let Some(p) = path {
                let tmp = p.with_extension("json.tmp");
                fs::write(&tmp, serde_json::to_string_pretty(&rec)?)?;
                fs::rename(&tmp, &p)?;
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;
    Ok(CellReport::aggregate(spec, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    B,
    C,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub model: Model,
    pub bias: f64,
    pub mse: f64,
    /// Monte Carlo standard error of the bias.
    pub mcse: f64,
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub spec: ScenarioSpec,
    pub rows: Vec<SummaryRow>,
    pub n_failed_b: usize,
    pub n_boundary_b: usize,
    pub n_failed_c: usize,
    pub n_boundary_c: usize,
    pub replicates: Vec<ReplicateRecord>,
}

pub const PARAMETERS: [&str; 4] = ["alpha_t", "sigma2_t", "phi", "prevalence"];

fn summarize(errors: &[f64], squares: Option<&[f64]>) -> (f64, f64, f64) {
    let n = errors.len() as f64;
    if errors.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let bias = errors.iter().sum::<f64>() / n;
    let mse = match squares {
        Some(s) => s.iter().sum::<f64>() / n,
        None => errors.iter().map(|e| e * e).sum::<f64>() / n,
    };
    let var = if errors.len() > 1 { errors.iter().map(|e| (e - bias).powi(2)).sum::<f64>() / (n - 1.0) } else { f64::NAN };
    (bias, mse, (var / n).sqrt())
}

impl CellReport {
    /// Deterministic fold over replicates in index order.
    pub fn aggregate(spec: &ScenarioSpec, mut replicates: Vec<ReplicateRecord>) -> Self {
        replicates.sort_by_key(|r| r.rep);
        let truth = spec.prevalence_truth();
        let mut rows = Vec::new();
        for model in [Model::B, Model::C] {
            let ok: Vec<&ModelOutcome> = replicates
                .iter()
                .map(|r| if model == Model::B { &r.binomial } else { &r.linear })
                .filter(|o| o.ok())
                .collect();
            for (k, name) in PARAMETERS.iter().enumerate() {
                let (bias, mse, mcse) = if k < 3 {
                    let e: Vec<f64> = ok.iter().map(|o| o.estimates[k] - truth[k]).collect();
                    summarize(&e, None)
                } else {
                    let e: Vec<f64> = ok.iter().filter_map(|o| o.pred_bias).collect();
                    let s: Vec<f64> = ok.iter().filter_map(|o| o.pred_sq).collect();
                    summarize(&e, Some(&s))
                };
                rows.push(SummaryRow { parameter: name.to_string(), model, bias, mse, mcse, n_ok: ok.len() });
            }
        }
        let count = |f: &dyn Fn(&ReplicateRecord) -> bool| replicates.iter().filter(|r| f(r)).count();
        Self {
            spec: spec.clone(),
            rows,
            n_failed_b: count(&|r| r.binomial.status == FitStatus::Failed),
            n_boundary_b: count(&|r| r.binomial.status == FitStatus::Boundary),
            n_failed_c: count(&|r| r.linear.status == FitStatus::Failed),
            n_boundary_c: count(&|r| r.linear.status == FitStatus::Boundary),
            replicates,
        }
    }

    pub fn row(&self, parameter: &str, model: Model) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.parameter == parameter && r.model == model)
    }
}

/// Six significant digits, for human-readable reports.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() || x == 0.0 {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.5e}");
    }
    format!("{:.*}", (5 - mag).max(0) as usize, x)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub cells: Vec<CellReport>,
}

impl SimReport {
    pub fn run(specs: &[ScenarioSpec], settings: &SimSettings) -> Result<Self> {
        let cells = specs.iter().map(|s| run_scenario(s, settings)).collect::<Result<_>>()?;
        Ok(Self { cells })
    }

    pub fn csv_header() -> &'static str {
        "cell,parameter,model,bias,mse,mcse,n_ok"
    }

    /// Full-precision summary CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for cell in &self.cells {
            for r in &cell.rows {
                writeln!(out, "{},{},{:?},{:e},{:e},{:e},{}", cell.spec.label(), r.parameter, r.model, r.bias, r.mse, r.mcse, r.n_ok)
                    .expect("writing to a string");
            }
        }
        out
    }

    /// Replicate-level estimates, one line per (replicate, model).
    pub fn replicates_csv(&self) -> String {
        let mut out = String::from("cell,rep,model,status,alpha_t,sigma2_t,phi,pred_bias,pred_sq\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for cell in &self.cells {
            for r in &cell.replicates {
                for (model, o) in [("B", &r.binomial), ("C", &r.linear)] {
                    let est = |k: usize| opt(o.estimates.get(k).copied());
                    writeln!(
                        out,
                        "{},{},{model},{:?},{},{},{},{},{}",
                        cell.spec.label(),
                        r.rep,
                        o.status,
                        est(0),
                        est(1),
                        est(2),
                        opt(o.pred_bias),
                        opt(o.pred_sq)
                    )
                    .expect("writing to a string");
                }
            }
        }
        out
    }

    /// Bias (MSE) table, one line per cell.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<5} {:<4} {:<4} | {:<5} {:>27} {:>27} {:>27} {:>27} | excluded",
            "tau2", "phi", "c", "model", "alpha_t", "sigma2_t", "phi", "prevalence"
        )
        .expect("writing to a string");
        for cell in &self.cells {
            for model in [Model::B, Model::C] {
                let s = &cell.spec;
                write!(out, "{:<5} {:<4} {:<4} | {:<5}", s.tau2, s.phi, s.c, format!("{model:?}")).expect("writing to a string");
                for p in PARAMETERS {
                    let r = cell.row(p, model).expect("every parameter is summarized");
                    write!(out, " {:>27}", format!("{} ({})", sig6(r.bias), sig6(r.mse))).expect("writing to a string");
                }
                let excl = match model {
                    Model::B => format!("{} failed, {} boundary", cell.n_failed_b, cell.n_boundary_b),
                    Model::C => format!("{} failed, {} boundary", cell.n_failed_c, cell.n_boundary_c),
                };
                writeln!(out, " | {excl}").expect("writing to a string");
            }
        }
        out
    }
}
