use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// A sampled survey location. Coordinates are in arbitrary distance units,
/// shared by every location in a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location<T> {
    pub x: T,
    pub y: T,
    pub id: String,
}

impl<T: Scalar> Location<T> {
    pub fn new(x: T, y: T, id: impl Into<String>) -> Self {
        Self { x, y, id: id.into() }
    }
}

/// Outcome vector, one entry per individual.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcomes<T> {
    Continuous(Vec<T>),
    /// `true` marks a positive case.
    Binary(Vec<bool>),
}

impl<T> Outcomes<T> {
    pub fn len(&self) -> usize {
        match self {
            Outcomes::Continuous(v) => v.len(),
            Outcomes::Binary(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Dichotomization thresholds: one value for everybody or one per individual.
#[derive(Debug, Clone, PartialEq)]
pub enum Thresholds<T> {
    Scalar(T),
    PerIndividual(Vec<T>),
}

/// Everything about a survey except its outcomes: where individuals live,
/// their covariate rows and (optionally) their diagnostic thresholds.
///
/// Individuals are indexed `0..N`; `location_of[k]` names the location of
/// individual `k`. Several individuals may share a location, and distinct
/// location records may share coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDesign<T> {
    locations: Vec<Location<T>>,
    location_of: Vec<usize>,
    members: Vec<Vec<usize>>,
    covariates: Matrix<T>,
    thresholds: Option<Vec<T>>,
}

impl<T: Scalar> SurveyDesign<T> {
    /// Validates and assembles a design. Covariate rows exclude the intercept.
    pub fn new(
        locations: Vec<Location<T>>,
        location_of: Vec<usize>,
        covariates: Vec<Vec<T>>,
        thresholds: Option<Vec<T>>,
    ) -> Result<Self> {
        let m = locations.len();
        if m == 0 {
            return Err(Error::Schema("a survey needs at least one location".into()));
        }
        let mut ids = HashSet::with_capacity(m);
        for loc in &locations {
            if !loc.x.is_finite() || !loc.y.is_finite() {
                return Err(Error::Schema(format!("location '{}' has non-finite coordinates", loc.id)));
            }
            if !ids.insert(loc.id.as_str()) {
                return Err(Error::Schema(format!("duplicate location id '{}'", loc.id)));
            }
        }
        let n = location_of.len();
        if covariates.len() != n {
            return Err(Error::Schema(format!(
                "{} covariate rows for {n} individuals",
                covariates.len()
            )));
        }
        let p = covariates.first().map_or(0, Vec::len);
        if let Some(k) = covariates.iter().position(|r| r.len() != p) {
            return Err(Error::Schema(format!(
                "covariate row {k} has {} entries, expected {p}",
                covariates[k].len()
            )));
        }
        if covariates.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Schema("non-finite covariate value".into()));
        }
        if let Some(t) = &thresholds {
            if t.len() != n {
                return Err(Error::Schema(format!("{} thresholds for {n} individuals", t.len())));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema("non-finite threshold".into()));
            }
        }
        let mut members = vec![Vec::new(); m];
        for (k, &i) in location_of.iter().enumerate() {
            if i >= m {
                return Err(Error::Schema(format!("individual {k} refers to location {i} of {m}")));
            }
            members[i].push(k);
        }
        if let Some(i) = members.iter().position(Vec::is_empty) {
            return Err(Error::Schema(format!("location '{}' has no individuals", locations[i].id)));
        }
        Ok(Self {
            locations,
            location_of,
            members,
            covariates: Matrix::from_rows(&covariates),
            thresholds,
        })
    }

    /// One individual per location, no covariates.
    pub fn one_per_location(locations: Vec<Location<T>>) -> Result<Self> {
        let m = locations.len();
        Self::new(locations, (0..m).collect(), vec![Vec::new(); m], None)
    }

    /// `n_per_location` individuals at every location, no covariates.
    pub fn replicated(locations: Vec<Location<T>>, n_per_location: usize) -> Result<Self> {
        let m = locations.len();
        let location_of: Vec<usize> = (0..m).flat_map(|i| std::iter::repeat_n(i, n_per_location)).collect();
        let n = location_of.len();
        Self::new(locations, location_of, vec![Vec::new(); n], None)
    }

    pub fn locations(&self) -> &[Location<T>] {
        &self.locations
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn n_individuals(&self) -> usize {
        self.location_of.len()
    }

    pub fn location_of(&self) -> &[usize] {
        &self.location_of
    }

    /// Individuals at location `i`.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.members[i]
    }

    /// Covariate matrix without the intercept column (`N × p`).
    pub fn covariates(&self) -> &Matrix<T> {
        &self.covariates
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.cols()
    }

    pub fn thresholds(&self) -> Option<&[T]> {
        self.thresholds.as_deref()
    }

    /// The single threshold shared by every individual, if there is one.
    pub fn common_threshold(&self) -> Option<T> {
        let t = self.thresholds.as_ref()?;
        let first = *t.first()?;
        t.iter().all(|&c| c == first).then_some(first)
    }

    /// Regression design with a leading intercept column (`N × (1 + p)`).
    pub fn design_matrix(&self) -> Matrix<T> {
        let p = self.n_covariates();
        Matrix::from_fn(self.n_individuals(), p + 1, |k, j| {
            if j == 0 {
                T::one()
            } else {
                self.covariates[(k, j - 1)]
            }
        })
    }

    /// Copy with each individual's threshold appended as a final covariate,
    /// mapped through `transform` (identity or `ln`, matching the outcome scale).
    pub fn with_threshold_covariate(&self, transform: impl Fn(T) -> T) -> Result<Self> {
        let t = self
            .thresholds
            .as_ref()
            .ok_or_else(|| Error::Schema("no thresholds to append as a covariate".into()))?;
        let rows: Vec<Vec<T>> = (0..self.n_individuals())
            .map(|k| {
                let mut r = self.covariates.row(k).to_vec();
                r.push(transform(t[k]));
                r
            })
            .collect();
        Self::new(self.locations.clone(), self.location_of.clone(), rows, self.thresholds.clone())
    }

    pub(crate) fn with_thresholds(mut self, thresholds: Option<Vec<T>>) -> Self {
        self.thresholds = thresholds;
        self
    }

    /// Copy with the locations relabelled by `perm` (new index `i` holds old location `perm[i]`).
    pub fn permute_locations(&self, perm: &[usize]) -> Result<Self> {
        let m = self.n_locations();
        if perm.len() != m {
            return Err(Error::Schema("permutation length mismatch".into()));
        }
        let mut inverse = vec![usize::MAX; m];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let locations = perm.iter().map(|&o| self.locations[o].clone()).collect();
        let location_of = self.location_of.iter().map(|&o| inverse[o]).collect();
        let rows = (0..self.n_individuals()).map(|k| self.covariates.row(k).to_vec()).collect();
        Self::new(locations, location_of, rows, self.thresholds.clone())
    }
}

/// A survey design together with observed outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDataset<T> {
    design: SurveyDesign<T>,
    outcomes: Outcomes<T>,
}

impl<T: Scalar> SurveyDataset<T> {
    pub fn new(design: SurveyDesign<T>, outcomes: Outcomes<T>) -> Result<Self> {
        if outcomes.len() != design.n_individuals() {
            return Err(Error::Schema(format!(
                "{} outcomes for {} individuals",
                outcomes.len(),
                design.n_individuals()
            )));
        }
        if let Outcomes::Continuous(y) = &outcomes {
            if let Some(k) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("non-finite outcome for individual {k}")));
            }
        }
        Ok(Self { design, outcomes })
    }

    pub fn design(&self) -> &SurveyDesign<T> {
        &self.design
    }

    pub fn outcomes(&self) -> &Outcomes<T> {
        &self.outcomes
    }

    pub fn continuous(&self) -> Result<&[T]> {
        match &self.outcomes {
            Outcomes::Continuous(y) => Ok(y),
            Outcomes::Binary(_) => Err(Error::Schema("continuous outcomes required".into())),
        }
    }

    pub fn binary(&self) -> Result<&[bool]> {
        match &self.outcomes {
            Outcomes::Binary(y) => Ok(y),
            Outcomes::Continuous(_) => Err(Error::Schema("binary outcomes required".into())),
        }
    }

    /// Same outcomes on a modified design (e.g. with an extra covariate).
    pub fn with_design(&self, design: SurveyDesign<T>) -> Result<Self> {
        Self::new(design, self.outcomes.clone())
    }

    pub fn permute_locations(&self, perm: &[usize]) -> Result<Self> {
        Self::new(self.design.permute_locations(perm)?, self.outcomes.clone())
    }
}

impl<T> std::ops::Deref for SurveyDataset<T> {
    type Target = SurveyDesign<T>;

    fn deref(&self) -> &SurveyDesign<T> {
        &self.design
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn locs(n: usize) -> Vec<Location<f64>> {
        (0..n).map(|i| Location::new(i as f64, 0.0, format!("L{i}"))).collect()
    }

    #[test]
    fn rejects_empty_location_and_ragged_rows() {
        let err = SurveyDesign::new(locs(2), vec![0, 0], vec![vec![], vec![]], None).unwrap_err();
        assert!(err.to_string().contains("no individuals"));
        let err = SurveyDesign::new(locs(2), vec![0, 1], vec![vec![1.0], vec![]], None).unwrap_err();
        assert!(err.to_string().contains("covariate row 1"));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let mut l = locs(2);
        l[1].id = "L0".into();
        assert!(SurveyDesign::one_per_location(l).is_err());
    }

    #[test]
    fn groups_members_and_builds_design() {
        let d = SurveyDesign::new(locs(2), vec![1, 0, 1], vec![vec![2.0], vec![3.0], vec![4.0]], None).unwrap();
        assert_eq!(d.members(1), &[0, 2]);
        let x = d.design_matrix();
        assert_eq!(x.row(2), &[1.0, 4.0]);
    }

    #[test]
    fn threshold_covariate_and_common_value() {
        let d = SurveyDesign::new(locs(2), vec![0, 1], vec![vec![], vec![]], Some(vec![8.0, 7.0])).unwrap();
        assert_eq!(d.common_threshold(), None);
        let e = d.with_threshold_covariate(f64::ln).unwrap();
        assert_eq!(e.covariates().row(1), &[7.0_f64.ln()]);
        let same = d.clone().with_thresholds(Some(vec![0.4, 0.4]));
        assert_eq!(same.common_threshold(), Some(0.4));
    }

    #[test]
    fn binary_and_continuous_accessors() {
        let d = SurveyDesign::one_per_location(locs(2)).unwrap();
        let ds = SurveyDataset::new(d, Outcomes::Binary(vec![true, false])).unwrap();
        assert!(ds.continuous().is_err());
        assert_eq!(ds.binary().unwrap(), &[true, false]);
    }
}
