//! Task implementations. Each writes its primary outputs into the output
//! directory and returns their paths.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use dichogeo::binomial::{default_binomial_init, fit_binomial, BinomialFitOptions};
use dichogeo::fit::{Estimate, FitResult};
use dichogeo::geo::{
    dichotomize, simulate_survey_with_field, ModelParams, PrevalenceParams, SurveyDataset, SurveyDesign, Thresholds,
};
use dichogeo::info_loss::{cld, info_loss_curves};
use dichogeo::linear::{default_linear_init, fit_linear, LinearFitOptions};
use dichogeo::predict::{predict_prevalence, PredictionGrid, PredictionOptions};
use dichogeo::rng::{self, purpose};
use dichogeo::sim::{generate_grid, SimReport, SimSettings};
use serde::Serialize;

use crate::config::{ModelChoice, RunConfig, Task, ThresholdRule};
use crate::data::{self, covariate_row, load_grid, load_survey, write_csv, write_survey, write_text, Survey};
use crate::error::{CliError, CliResult};

/// Human-readable run log, echoed to stderr.
#[derive(Default)]
pub struct Log {
    pub lines: Vec<String>,
}

impl Log {
    pub fn info(&mut self, line: impl Into<String>) {
        let line = line.into();
        eprintln!("{line}");
        self.lines.push(line);
    }
}

pub fn run_task(task: Task, cfg: &RunConfig, log: &mut Log) -> CliResult<Vec<PathBuf>> {
    match task {
        Task::Simulate => simulate(cfg, log),
        Task::FitLinear => fit_linear_task(cfg, log),
        Task::FitBinomial => fit_binomial_task(cfg, log),
        Task::InfoCurve => info_curve(cfg, log),
        Task::Cld => cld_task(cfg, log),
        Task::Predict => predict(cfg, log),
        Task::SimStudy => sim_study(cfg, log),
    }
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn num(v: f64) -> String {
    v.to_string()
}

fn simulate(cfg: &RunConfig, log: &mut Log) -> CliResult<Vec<PathBuf>> {
    let s = cfg.simulate.as_ref().expect("validated");
    let params = ModelParams::degenerate(s.alpha, vec![], s.sigma2, s.tau2, s.phi)?;
    let design = SurveyDesign::replicated(generate_grid(s.grid), s.n_per_location)?;
    let (ds, field) = simulate_survey_with_field(&design, &params, cfg.seed)?;
    let survey = out(cfg, "survey.csv");
    write_survey(&ds, &[], &survey)?;
    let field_path = out(cfg, "field.csv");
    write_csv(
        &field_path,
        &["loc_id", "x", "y", "s"],
        design.locations().iter().zip(&field).map(|(l, &v)| vec![l.id.clone(), num(l.x), num(l.y), num(v)]),
    )?;
    log.info(format!("simulated {} individuals at {} locations", ds.n_individuals(), design.n_locations()));
    Ok(vec![survey, field_path])
}

#[derive(Serialize)]
struct FitSummary<'a> {
    model: &'static str,
    covariates: &'a [String],
    converged: bool,
    message: &'a str,
    iterations: usize,
    loglik: f64,
    grad_max: f64,
    continuous: Option<&'a ModelParams<f64>>,
    prevalence: Option<&'a PrevalenceParams<f64>>,
    estimates: &'a [Estimate<f64>],
}

fn write_fit(cfg: &RunConfig, fit: &FitResult<f64>, names: &[String], stem: &str, log: &mut Log) -> CliResult<Vec<PathBuf>> {
    let model = if stem == "linear" { "linear" } else { "binomial" };
    let summary = FitSummary {
        model,
        covariates: names,
        converged: fit.converged,
        message: &fit.message,
        iterations: fit.iterations,
        loglik: fit.loglik,
        grad_max: fit.grad_max,
        continuous: fit.continuous.as_ref(),
        prevalence: fit.prevalence.as_ref(),
        estimates: &fit.estimates,
    };
    let json = out(cfg, &format!("fit_{stem}.json"));
    write_text(&json, &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    let csv = out(cfg, &format!("estimates_{stem}.csv"));
    write_csv(
        &csv,
        &["name", "scale", "value", "ci_low", "ci_high"],
        fit.estimates.iter().map(|e| {
            let (lo, hi) = e.ci95.map_or((String::new(), String::new()), |(a, b)| (num(a), num(b)));
            vec![e.name.clone(), format!("{:?}", e.scale).to_lowercase(), num(e.value), lo, hi]
        }),
    )?;
    log.info(format!(
        "{model} fit: converged={} loglik={} iterations={} ({})",
        fit.converged, fit.loglik, fit.iterations, fit.message
    ));
    if !fit.converged {
        log.info(format!("warning: the {model} fit did not converge; estimates are reported as found"));
    }
    Ok(vec![json, csv])
}

fn linear_options(cfg: &RunConfig) -> LinearFitOptions<f64> {
    LinearFitOptions { max_iter: cfg.linear.max_iter, grad_tol: cfg.linear.grad_tol, skip_info: cfg.linear.skip_info, ..Default::default() }
}

fn binomial_options(cfg: &RunConfig) -> BinomialFitOptions<f64> {
    let b = &cfg.binomial;
    BinomialFitOptions { max_iter: b.max_iter, grad_tol: b.grad_tol, max_sigma2_t: b.max_sigma2_t, skip_info: b.skip_info, ..Default::default() }
}

fn survey(cfg: &RunConfig, log: &mut Log) -> CliResult<Survey> {
    let data = cfg.data.as_ref().expect("validated");
    let s = load_survey(data, cfg.threshold.as_ref())?;
    log.info(format!(
        "loaded {} individuals at {} locations from {}",
        s.dataset.n_individuals(),
        s.dataset.n_locations(),
        data.survey.display()
    ));
    Ok(s)
}

fn run_linear(cfg: &RunConfig, s: &Survey) -> CliResult<FitResult<f64>> {
    let init = default_linear_init(&s.dataset)?;
    Ok(fit_linear(&s.dataset, &init, &linear_options(cfg))?)
}

/// Binary dataset for the probit model; varying thresholds become the last
/// covariate.
fn binary_dataset(s: &Survey) -> CliResult<(SurveyDataset<f64>, Vec<String>)> {
    let mut ds = if s.dataset.binary().is_ok() {
        s.dataset.clone()
    } else {
        let c = s.dataset.design().thresholds().ok_or_else(|| CliError::Config("no thresholds to dichotomize at".into()))?;
        dichotomize(&s.dataset, &Thresholds::PerIndividual(c.to_vec()))?
    };
    let mut names = s.covariate_names.clone();
    if s.varying_thresholds {
        ds = ds.with_design(ds.design().with_threshold_covariate(|c| c)?)?;
        names.push("threshold".into());
    }
    Ok((ds, names))
}

fn run_binomial(cfg: &RunConfig, ds: &SurveyDataset<f64>) -> CliResult<FitResult<f64>> {
    let init = default_binomial_init(ds)?;
    Ok(fit_binomial(ds, &init, &cfg.latent_settings(), &binomial_options(cfg))?)
}

fn fit_linear_task(cfg: &RunConfig, log: &mut Log) -> CliResult<Vec<PathBuf>> {
    let s = survey(cfg, log)?;
    let fit = run_linear(cfg, &s)?;
    write_fit(cfg, &fit, &s.covariate_names, "linear", log)
}

fn fit_binomial_task(cfg: &RunConfig, log: &mut Log) -> CliResult<Vec<PathBuf>> {
    let s = survey(cfg, log)?;
    let (ds, names) = binary_dataset(&s)?;
    let fit = run_binomial(cfg, &ds)?;
    write_fit(cfg, &fit, &names, "binomial", log)
}

fn info_curve(cfg: &RunConfig, log: &mut Log) -> CliResult<Vec<PathBuf>> {
    let c = &cfg.info_curve;
    let rows = info_loss_curves(c.sigma2, &c.tau2, &cfg.efi_settings())?;
    let path = out(cfg, "info_curve.csv");
    write_csv(
        &path,
        &["alpha_t", "rho", "tau2", "i_y", "i_yt", "r"],
        rows.iter().map(|r| vec![num(r.alpha_t), num(r.rho), num(r.tau2), num(r.i_y), num(r.i_yt), num(r.r)]),
    )?;
    log.info(format!("information-loss curves: {} cells", rows.len()));
    Ok(vec![path])
}

fn cld_task(cfg: &RunConfig, log: &mut Log) -> CliResult<Vec<PathBuf>> {
    let s = survey(cfg, log)?;
    let fit = run_linear(cfg, &s)?;
    if !fit.converged {
        return Err(CliError::Model(dichogeo::Error::Numerical(format!("linear fit did not converge: {}", fit.message))));
    }
    let theta = fit.continuous.as_ref().expect("linear fit has parameters");
    let c = s.dataset.design().thresholds().expect("validated").to_vec();
    let binary = dichotomize(&s.dataset, &Thresholds::PerIndividual(c))?;
    let report = cld(theta, &binary, cfg.cld.quadrature_order)?;
    let path = out(cfg, "cld.csv");
    write_csv(
        &path,
        &["logdet_continuous", "logdet_binary", "cld"],
        [vec![num(report.logdet_continuous), num(report.logdet_binary), num(report.cld)]],
    )?;
    log.info(format!("CLD = {} at the linear-model estimate {theta:?}", report.cld));
    Ok(vec![path])
}

fn predict(cfg: &RunConfig, log: &mut Log) -> CliResult<Vec<PathBuf>> {
    let p = cfg.predict.as_ref().expect("validated");
    let data = cfg.data.as_ref().expect("validated");
    let s = survey(cfg, log)?;
    let grid_raw = data::RawTable::read(&p.grid)?;
    let grid = load_grid(&p.grid, s.lat0)?;
    let (cx, cy) = (grid_raw.column("x")?, grid_raw.column("y")?);
    let coords: Vec<(String, String)> = grid_raw.rows.iter().map(|r| (r[cx].clone(), r[cy].clone())).collect();

    let mut profile = covariate_row(data, |c| p.profile[c]);
    if s.varying_thresholds {
        let t = p.profile_threshold.ok_or_else(|| CliError::Config("per-individual thresholds need predict.profile_threshold".into()))?;
        let log_t = cfg.threshold.as_ref().is_some_and(ThresholdRule::log);
        if log_t && t <= 0.0 {
            return Err(CliError::Config(format!("cannot log-transform profile threshold {t}")));
        }
        profile.push(if log_t { t.ln() } else { t });
    }
    let opts = PredictionOptions {
        n_cond_samples: p.n_cond_samples,
        seed: rng::derive_seed(cfg.seed, purpose::PREDICTION),
        exceedance_thresholds: p.exceedance.clone(),
        ..Default::default()
    };
    let settings = cfg.latent_settings();

    let mut outputs = Vec::new();
    let mut maps: HashMap<ModelChoice, PredictionGrid<f64>> = HashMap::new();
    for &model in &p.models {
        let (fit, ds) = match model {
            ModelChoice::Linear => (run_linear(cfg, &s)?, s.dataset.clone()),
            ModelChoice::Binomial => {
                let (ds, _) = binary_dataset(&s)?;
                (run_binomial(cfg, &ds)?, ds)
            }
        };
        let stem = if model == ModelChoice::Linear { "linear" } else { "binomial" };
        log.info(format!("{stem} fit for prediction: converged={} ({})", fit.converged, fit.message));
        let map = predict_prevalence(&fit, &ds, &grid, &profile, &settings, &opts)?;
        let path = out(cfg, &format!("prediction_{stem}.csv"));
        write_map(&path, &coords, &map.prevalence_mean, &map.exceedance, &p.exceedance)?;
        outputs.push(path);
        maps.insert(model, map);
    }
    if let (Some(a), Some(b)) = (maps.get(&ModelChoice::Linear), maps.get(&ModelChoice::Binomial)) {
        let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| u - v).collect::<Vec<f64>>();
        let mean = diff(&a.prevalence_mean, &b.prevalence_mean);
        let exc: Vec<Vec<f64>> = a.exceedance.iter().zip(&b.exceedance).map(|(x, y)| diff(x, y)).collect();
        let path = out(cfg, "prediction_difference.csv");
        write_map(&path, &coords, &mean, &exc, &p.exceedance)?;
        outputs.push(path);
    }
    log.info(format!("predicted {} grid points with {} conditional samples", grid.len(), p.n_cond_samples));
    Ok(outputs)
}

fn write_map(path: &Path, coords: &[(String, String)], mean: &[f64], exceed: &[Vec<f64>], thresholds: &[f64]) -> CliResult<()> {
    let mut header = vec!["x".to_string(), "y".into(), "prev_mean".into()];
    if thresholds.len() == 1 {
        header.push("exceed_prob".into());
    } else {
        header.extend(thresholds.iter().map(|t| format!("exceed_prob_{t}")));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        path,
        &header,
        coords.iter().enumerate().map(|(i, (x, y))| {
            let mut r = vec![x.clone(), y.clone(), num(mean[i])];
            r.extend(exceed.iter().map(|e| num(e[i])));
            r
        }),
    )
}

fn sim_study(cfg: &RunConfig, log: &mut Log) -> CliResult<Vec<PathBuf>> {
    let settings = SimSettings {
        latent: cfg.latent_settings(),
        binomial: BinomialFitOptions { skip_info: true, ..binomial_options(cfg) },
        linear: LinearFitOptions { skip_info: true, ..linear_options(cfg) },
        checkpoint_dir: Some(cfg.sim_study.checkpoint_dir.clone().unwrap_or_else(|| out(cfg, "checkpoints"))),
    };
    let mut cells = Vec::new();
    for spec in cfg.scenarios() {
        let cell = dichogeo::sim::run_scenario(&spec, &settings)?;
        log.info(format!(
            "{}: B {} ok ({} failed, {} boundary), C {} ok ({} failed, {} boundary)",
            spec.label(),
            cell.replicates.len() - cell.n_failed_b - cell.n_boundary_b,
            cell.n_failed_b,
            cell.n_boundary_b,
            cell.replicates.len() - cell.n_failed_c - cell.n_boundary_c,
            cell.n_failed_c,
            cell.n_boundary_c
        ));
        cells.push(cell);
    }
    let report = SimReport { cells };
    let (summary, reps, table) = (out(cfg, "sim_summary.csv"), out(cfg, "sim_replicates.csv"), out(cfg, "sim_table.txt"));
    write_text(&summary, &report.to_csv())?;
    write_text(&reps, &report.replicates_csv())?;
    write_text(&table, &report.to_table())?;
    Ok(vec![summary, reps, table])
}
