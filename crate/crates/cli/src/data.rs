//! Survey, grid and threshold-table CSV files.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use dichogeo::geo::{project_equirectangular, spline_basis, Location, Outcomes, SplineSpec, SurveyDataset, SurveyDesign};

use crate::config::{AgeUnit, BuiltinTable, DataConfig, OutcomeType, Projection, ThresholdRule};
use crate::error::{CliError, CliResult};

/// A CSV file held as strings.
pub struct RawTable {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read(path: &Path) -> CliResult<Self> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut seen = HashSet::new();
        if let Some(h) = header.iter().find(|h| !seen.insert(h.as_str())) {
            return Err(CliError::input(path, format!("duplicate column '{h}'")));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Self { path: path.to_path_buf(), header, rows })
    }

    pub fn column(&self, name: &str) -> CliResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::input(&self.path, format!("missing column '{name}'")))
    }

    fn cell(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    fn err(&self, row: usize, col: usize, detail: impl Into<String>) -> CliError {
        CliError::Ingest { path: self.path.clone(), row: row + 1, column: self.header[col].clone(), detail: detail.into() }
    }

    /// Parses a required finite number.
    pub fn number(&self, row: usize, col: usize) -> CliResult<f64> {
        let s = self.cell(row, col);
        if s.is_empty() {
            return Err(self.err(row, col, "missing value"));
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(row, col, format!("'{s}' is not a finite number"))),
        }
    }
}

pub fn read_header(path: &Path) -> CliResult<Vec<String>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    Ok(rdr.headers()?.iter().map(str::to_string).collect())
}

/// A validated survey ready for fitting.
#[derive(Debug)]
pub struct Survey {
    pub dataset: SurveyDataset<f64>,
    /// Names of the covariate columns of the design (no intercept, no threshold).
    pub covariate_names: Vec<String>,
    /// Thresholds differ between individuals.
    pub varying_thresholds: bool,
    /// Reference latitude when coordinates were projected.
    pub lat0: Option<f64>,
}

/// Covariate row for raw values keyed by column name: spline bases first,
/// then the linear covariates.
pub fn covariate_row(data: &DataConfig, value: impl Fn(&str) -> f64) -> Vec<f64> {
    let mut row = Vec::new();
    for s in &data.splines {
        let spec = SplineSpec::new(s.knots.clone()).expect("knots validated with the config");
        row.extend(spline_basis(value(&s.column), &spec));
    }
    row.extend(data.covariates.iter().map(|c| value(c)));
    row
}

pub fn covariate_names(data: &DataConfig) -> Vec<String> {
    let mut names = Vec::new();
    for s in &data.splines {
        names.push(s.column.clone());
        names.extend(s.knots.iter().map(|k| format!("{}_over_{k}", s.column)));
    }
    names.extend(data.covariates.iter().cloned());
    names
}

pub fn load_survey(data: &DataConfig, rule: Option<&ThresholdRule>) -> CliResult<Survey> {
    let table = RawTable::read(&data.survey)?;
    if table.rows.is_empty() {
        return Err(CliError::input(&data.survey, "no data rows"));
    }
    let (c_loc, c_x, c_y, c_out) = (table.column("loc_id")?, table.column("x")?, table.column("y")?, table.column(&data.outcome)?);
    let raw_cols: Vec<(String, usize)> =
        data.raw_covariates().into_iter().map(|c| table.column(&c).map(|i| (c, i))).collect::<CliResult<_>>()?;
    if let Ok(c_id) = table.column("id") {
        let mut ids = HashSet::new();
        for r in 0..table.rows.len() {
            let id = table.cell(r, c_id);
            if !ids.insert(id.to_string()) {
                return Err(table.err(r, c_id, format!("duplicate individual id '{id}'")));
            }
        }
    }

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut coords: Vec<(String, f64, f64)> = Vec::new();
    let mut location_of = Vec::with_capacity(table.rows.len());
    let mut covariates = Vec::with_capacity(table.rows.len());
    let mut y = Vec::with_capacity(table.rows.len());
    let mut positive = Vec::with_capacity(table.rows.len());
    for r in 0..table.rows.len() {
        let id = table.cell(r, c_loc);
        if id.is_empty() {
            return Err(table.err(r, c_loc, "missing value"));
        }
        let (x, yy) = (table.number(r, c_x)?, table.number(r, c_y)?);
        let i = *index.entry(id.to_string()).or_insert_with(|| {
            coords.push((id.to_string(), x, yy));
            coords.len() - 1
        });
        if coords[i].1 != x || coords[i].2 != yy {
            return Err(table.err(r, c_x, format!("location '{id}' appears with different coordinates")));
        }
        location_of.push(i);
        let v = table.number(r, c_out)?;
        match data.outcome_type {
            OutcomeType::Continuous => {
                if data.log_outcome && v <= 0.0 {
                    return Err(table.err(r, c_out, format!("cannot log-transform {v}")));
                }
                y.push(if data.log_outcome { v.ln() } else { v });
            }
            OutcomeType::Binary => {
                if v != 0.0 && v != 1.0 {
                    return Err(table.err(r, c_out, format!("binary outcome must be 0 or 1, got {v}")));
                }
                positive.push(v == 1.0);
            }
        }
        let mut raw = HashMap::new();
        for (name, col) in &raw_cols {
            raw.insert(name.as_str(), table.number(r, *col)?);
        }
        covariates.push(covariate_row(data, |c| raw[c]));
    }

    let lat0 = match data.projection {
        Projection::None => None,
        Projection::Equirectangular => Some(coords.iter().map(|c| c.2).sum::<f64>() / coords.len() as f64),
    };
    let locations = coords
        .into_iter()
        .map(|(id, x, y)| {
            let (x, y) = match lat0 {
                Some(l) => project_equirectangular(x, y, l),
                None => (x, y),
            };
            Location::new(x, y, id)
        })
        .collect();
    let thresholds = rule.map(|r| resolve_thresholds(&table, r)).transpose()?;
    let varying_thresholds = thresholds.as_ref().is_some_and(|t| t.iter().any(|&c| c != t[0]));
    let design = SurveyDesign::new(locations, location_of, covariates, thresholds)?;
    let outcomes = match data.outcome_type {
        OutcomeType::Continuous => Outcomes::Continuous(y),
        OutcomeType::Binary => Outcomes::Binary(positive),
    };
    Ok(Survey {
        dataset: SurveyDataset::new(design, outcomes)?,
        covariate_names: covariate_names(data),
        varying_thresholds,
        lat0,
    })
}

/// Writes a survey in the loader's schema (`loc_id, x, y, outcome,
/// threshold?, covariates…`) at full precision.
pub fn write_survey(dataset: &SurveyDataset<f64>, covariate_names: &[String], path: &Path) -> CliResult<()> {
    let design = dataset.design();
    if covariate_names.len() != design.n_covariates() {
        return Err(CliError::input(path, "covariate names do not match the design"));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["loc_id".to_string(), "x".into(), "y".into(), "outcome".into()];
    if design.thresholds().is_some() {
        header.push("threshold".into());
    }
    header.extend(covariate_names.iter().cloned());
    w.write_record(&header)?;
    for k in 0..design.n_individuals() {
        let loc = &design.locations()[design.location_of()[k]];
        let mut rec = vec![loc.id.clone(), loc.x.to_string(), loc.y.to_string()];
        rec.push(match dataset.outcomes() {
            Outcomes::Continuous(v) => v[k].to_string(),
            Outcomes::Binary(v) => u8::from(v[k]).to_string(),
        });
        if let Some(t) = design.thresholds() {
            rec.push(t[k].to_string());
        }
        rec.extend(design.covariates().row(k).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Prediction grid: `x`, `y` and an optional `id` column.
pub fn load_grid(path: &Path, lat0: Option<f64>) -> CliResult<Vec<Location<f64>>> {
    let table = RawTable::read(path)?;
    let (cx, cy) = (table.column("x")?, table.column("y")?);
    let cid = table.column("id").ok();
    (0..table.rows.len())
        .map(|r| {
            let (x, y) = (table.number(r, cx)?, table.number(r, cy)?);
            let (px, py) = match lat0 {
                Some(l) => project_equirectangular(x, y, l),
                None => (x, y),
            };
            let id = cid.map_or_else(|| format!("p{r}"), |c| table.cell(r, c).to_string());
            Ok(Location::new(px, py, id))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sex {
    Female,
    Male,
}

fn parse_sex(s: &str) -> Option<Option<Sex>> {
    match s.to_ascii_lowercase().as_str() {
        "" | "any" => Some(None),
        "f" | "female" => Some(Some(Sex::Female)),
        "m" | "male" => Some(Some(Sex::Male)),
        _ => None,
    }
}

/// `Some(None)` is "unknown / any".
fn parse_flag(s: &str) -> Option<Option<bool>> {
    match s.to_ascii_lowercase().as_str() {
        "" | "any" | "na" => Some(None),
        "yes" | "true" | "1" | "y" => Some(Some(true)),
        "no" | "false" | "0" | "n" => Some(Some(false)),
        _ => None,
    }
}

/// One group of a threshold table; `None` predicates match everybody.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdGroup {
    pub sex: Option<Sex>,
    /// Ages in years, `age_min <= age < age_max`.
    pub age_min: f64,
    pub age_max: f64,
    pub pregnant: Option<bool>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    pub groups: Vec<ThresholdGroup>,
}

impl ThresholdTable {
    /// CSV with columns `sex, age_min, age_max, pregnant, threshold`; empty
    /// `sex`/`pregnant` match anyone, empty `age_max` is unbounded.
    pub fn load(path: &Path) -> CliResult<Self> {
        let t = RawTable::read(path)?;
        let cols = ["sex", "age_min", "age_max", "pregnant", "threshold"].map(|c| t.column(c));
        let [cs, cmin, cmax, cp, ct] = cols;
        let (cs, cmin, cmax, cp, ct) = (cs?, cmin?, cmax?, cp?, ct?);
        let mut groups = Vec::new();
        for r in 0..t.rows.len() {
            let sex = parse_sex(t.cell(r, cs)).ok_or_else(|| t.err(r, cs, "expected f, m or empty"))?;
            let pregnant = parse_flag(t.cell(r, cp)).ok_or_else(|| t.err(r, cp, "expected yes, no or empty"))?;
            let age_max = if t.cell(r, cmax).is_empty() { f64::INFINITY } else { t.number(r, cmax)? };
            let g = ThresholdGroup { sex, age_min: t.number(r, cmin)?, age_max, pregnant, threshold: t.number(r, ct)? };
            if !(g.age_min < g.age_max) {
                return Err(t.err(r, cmax, "age_max must exceed age_min"));
            }
            groups.push(g);
        }
        if groups.is_empty() {
            return Err(CliError::input(path, "threshold table has no rows"));
        }
        Ok(Self { groups })
    }

    /// Severe-anaemia haemoglobin cut-offs (g/dL). Ages 12–15 count as
    /// children up to the 15th birthday.
    pub fn builtin(which: BuiltinTable) -> Self {
        let g = |sex, age_min, age_max, pregnant, threshold| ThresholdGroup { sex, age_min, age_max, pregnant, threshold };
        match which {
            BuiltinTable::WhoSevereAnaemia => Self {
                groups: vec![
                    g(None, 0.5, 5.0, None, 7.0),
                    g(None, 5.0, 12.0, None, 8.0),
                    g(None, 12.0, 15.0, None, 8.0),
                    g(Some(Sex::Female), 15.0, f64::INFINITY, Some(true), 7.0),
                    g(Some(Sex::Female), 15.0, f64::INFINITY, Some(false), 8.0),
                    g(Some(Sex::Male), 15.0, f64::INFINITY, None, 8.0),
                ],
            },
        }
    }

    /// First matching group's threshold. An unknown pregnancy status only
    /// matches groups that ignore it.
    pub fn lookup(&self, sex: Sex, age_years: f64, pregnant: Option<bool>) -> Option<f64> {
        self.groups
            .iter()
            .find(|g| {
                g.sex.is_none_or(|s| s == sex)
                    && g.age_min <= age_years
                    && age_years < g.age_max
                    && g.pregnant.is_none_or(|p| pregnant == Some(p))
            })
            .map(|g| g.threshold)
    }
}

/// Per-individual thresholds for a survey table under `rule`.
pub fn resolve_thresholds(table: &RawTable, rule: &ThresholdRule) -> CliResult<Vec<f64>> {
    let n = table.rows.len();
    let raw: Vec<f64> = match rule {
        ThresholdRule::Scalar { value, .. } => vec![*value; n],
        ThresholdRule::Column { column, .. } => {
            let c = table.column(column)?;
            (0..n).map(|r| table.number(r, c)).collect::<CliResult<_>>()?
        }
        ThresholdRule::Table { table: path, builtin, age_column, age_unit, sex_column, pregnant_column, .. } => {
            let lookup = match (path, builtin) {
                (Some(p), None) => ThresholdTable::load(p)?,
                (None, Some(b)) => ThresholdTable::builtin(*b),
                _ => return Err(CliError::Config("a table rule needs exactly one of 'table' and 'builtin'".into())),
            };
            let (ca, cs) = (table.column(age_column)?, table.column(sex_column)?);
            let cp = pregnant_column.as_deref().map(|c| table.column(c)).transpose()?;
            let mut out = Vec::with_capacity(n);
            let mut unmatched = Vec::new();
            for r in 0..n {
                let age = table.number(r, ca)?;
                let age = if *age_unit == AgeUnit::Months { age / 12.0 } else { age };
                let sex = parse_sex(table.cell(r, cs)).flatten().ok_or_else(|| table.err(r, cs, "expected f or m"))?;
                let pregnant = match cp {
                    Some(c) => parse_flag(table.cell(r, c)).ok_or_else(|| table.err(r, c, "expected yes, no or empty"))?,
                    None => Some(false),
                };
                match lookup.lookup(sex, age, pregnant) {
                    Some(t) => out.push(t),
                    None => {
                        unmatched.push(format!("row {} (sex={sex:?}, age={age}, pregnant={pregnant:?})", r + 1));
                        out.push(f64::NAN);
                    }
                }
            }
            if !unmatched.is_empty() {
                let shown = unmatched.iter().take(10).cloned().collect::<Vec<_>>().join("; ");
                return Err(CliError::input(
                    &table.path,
                    format!("{} individuals match no threshold group: {shown}", unmatched.len()),
                ));
            }
            out
        }
    };
    if rule.log() {
        if let Some(r) = raw.iter().position(|&c| c <= 0.0) {
            return Err(CliError::input(&table.path, format!("row {}: cannot log-transform threshold {}", r + 1, raw[r])));
        }
        return Ok(raw.into_iter().map(f64::ln).collect());
    }
    Ok(raw)
}

/// Writes CSV rows of pre-formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_examples() {
        let t = ThresholdTable::builtin(BuiltinTable::WhoSevereAnaemia);
        assert_eq!(t.lookup(Sex::Female, 20.0, Some(false)), Some(8.0));
        assert_eq!(t.lookup(Sex::Female, 20.0, Some(true)), Some(7.0));
        assert_eq!(t.lookup(Sex::Male, 3.0, None), Some(7.0));
        assert_eq!(t.lookup(Sex::Male, 40.0, None), Some(8.0));
        assert_eq!(t.lookup(Sex::Female, 30.0, None), None);
        assert_eq!(t.lookup(Sex::Male, 0.2, None), None);
    }

    #[test]
    fn flags_and_sex() {
        assert_eq!(parse_flag("Yes"), Some(Some(true)));
        assert_eq!(parse_flag(""), Some(None));
        assert_eq!(parse_flag("maybe"), None);
        assert_eq!(parse_sex("F"), Some(Some(Sex::Female)));
        assert_eq!(parse_sex("x"), None);
    }
}
