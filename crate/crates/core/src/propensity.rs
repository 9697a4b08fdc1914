//! Propensity scores for any scope vector.
//!
//! The overall-sample model uses one indicator per subgroup (no separate
//! intercept) plus the covariates; each subgroup model uses an intercept plus
//! the covariates on that subgroup's units. All fits are computed once in a
//! [`FitCache`]; scoring a scope vector is a gather.

use std::fmt;

use thiserror::Error;

use crate::data::{DataError, Dataset};
use crate::logistic::{self, DesignMatrix, FitOptions, LogisticCoefficients, LogisticError};
use crate::{clamp_prob, logit};

/// Per-subgroup choice of estimation sample: 1 = overall fit, 2 = subgroup fit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScopeVector(Vec<u8>);

impl ScopeVector {
    pub fn new(values: Vec<u8>) -> Result<Self, PropensityError> {
        if let Some(&bad) = values.iter().find(|&&v| v != 1 && v != 2) {
            return Err(PropensityError::ScopeValue(bad));
        }
        Ok(Self(values))
    }

    pub fn all_ones(r: usize) -> Self {
        Self(vec![1; r])
    }

    pub fn all_twos(r: usize) -> Self {
        Self(vec![2; r])
    }

    /// Decodes bit `r` of `mask` as `S_{r+1}` (bit set = subgroup fit).
    pub fn from_mask(mask: u64, r: usize) -> Self {
        Self((0..r).map(|j| if mask >> j & 1 == 1 { 2 } else { 1 }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    /// Zero-based accessor.
    pub fn uses_subgroup_fit(&self, r: usize) -> bool {
        self.0[r] == 2
    }

    pub fn set(&mut self, r: usize, subgroup_fit: bool) {
        self.0[r] = if subgroup_fit { 2 } else { 1 };
    }

    pub fn flip(&mut self, r: usize) {
        self.0[r] = 3 - self.0[r];
    }

    pub fn count_subgroup_fits(&self) -> usize {
        self.0.iter().filter(|&&v| v == 2).count()
    }
}

impl fmt::Display for ScopeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(u8::to_string).collect();
        f.write_str(&s.join(" "))
    }
}

/// Which fit a propensity score came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitScope {
    Overall,
    /// One-based subgroup label.
    Subgroup(usize),
    /// Supplied directly (e.g. true propensities in a simulation).
    Supplied,
}

impl fmt::Display for FitScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitScope::Overall => f.write_str("overall"),
            FitScope::Subgroup(r) => write!(f, "subgroup {r}"),
            FitScope::Supplied => f.write_str("supplied"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PropensityError {
    #[error("{scope} fit failed: {source}")]
    Fit { scope: FitScope, source: LogisticError },
    #[error("scope vector has length {got}, dataset has {expected} subgroups")]
    ScopeLength { got: usize, expected: usize },
    #[error("scope values must be 1 or 2, got {0}")]
    ScopeValue(u8),
    #[error("{got} probabilities supplied for {expected} units")]
    ProbabilityLength { got: usize, expected: usize },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Both candidate score vectors for every unit.
#[derive(Debug, Clone)]
pub struct FitCache {
    pub overall: LogisticCoefficients,
    pub subgroups: Vec<LogisticCoefficients>,
    /// Columns left out of each subgroup fit because they were constant or
    /// aliased within that subgroup.
    pub dropped_terms: Vec<Vec<String>>,
    overall_prob: Vec<f64>,
    subgroup_prob: Vec<f64>,
    overall_logit: Vec<f64>,
    subgroup_logit: Vec<f64>,
}

impl FitCache {
    pub fn n_groups(&self) -> usize {
        self.subgroups.len()
    }

    /// Clamped probabilities for every unit under one choice.
    pub fn probabilities(&self, subgroup_fit: bool) -> &[f64] {
        if subgroup_fit {
            &self.subgroup_prob
        } else {
            &self.overall_prob
        }
    }

    pub fn logits(&self, subgroup_fit: bool) -> &[f64] {
        if subgroup_fit {
            &self.subgroup_logit
        } else {
            &self.overall_logit
        }
    }

    pub fn quasi_separated(&self, r: usize, subgroup_fit: bool) -> bool {
        if subgroup_fit {
            self.subgroups[r].quasi_separated
        } else {
            self.overall.quasi_separated
        }
    }
}

/// Optional starting values for the fits (used to warm-start bootstrap refits).
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub overall: Option<Vec<f64>>,
    pub subgroups: Vec<Option<Vec<f64>>>,
}

impl WarmStart {
    pub fn from_cache(cache: &FitCache) -> Self {
        Self {
            overall: Some(cache.overall.beta.clone()),
            subgroups: cache
                .subgroups
                .iter()
                .zip(&cache.dropped_terms)
                .map(|(c, d)| d.is_empty().then(|| c.beta.clone()))
                .collect(),
        }
    }
}

pub fn overall_design(dataset: &Dataset) -> Result<DesignMatrix, LogisticError> {
    let r = dataset.n_groups;
    let k = dataset.n_covariates();
    let mut labels: Vec<String> = (1..=r).map(|g| format!("group{g}")).collect();
    labels.extend(dataset.covariate_names.iter().cloned());
    let mut data = Vec::with_capacity(dataset.len() * (r + k));
    for u in &dataset.units {
        data.extend((0..r).map(|g| if u.group() == g { 1.0 } else { 0.0 }));
        data.extend_from_slice(&u.x);
    }
    DesignMatrix::new(dataset.len(), labels, data)
}

/// Intercept plus covariates over `members`, skipping covariates that are
/// identically zero there.
pub fn subgroup_design(dataset: &Dataset, members: &[usize]) -> Result<(DesignMatrix, Vec<String>), LogisticError> {
    let k = dataset.n_covariates();
    let nonzero: Vec<usize> =
        (0..k).filter(|&j| members.iter().any(|&i| dataset.units[i].x[j] != 0.0)).collect();
    let dropped = (0..k)
        .filter(|j| !nonzero.contains(j))
        .map(|j| dataset.covariate_names[j].clone())
        .collect();
    let mut labels = vec!["(intercept)".to_string()];
    labels.extend(nonzero.iter().map(|&j| dataset.covariate_names[j].clone()));
    let mut data = Vec::with_capacity(members.len() * labels.len());
    for &i in members {
        data.push(1.0);
        data.extend(nonzero.iter().map(|&j| dataset.units[i].x[j]));
    }
    Ok((DesignMatrix::new(members.len(), labels, data)?, dropped))
}

fn fit_subgroup(
    dataset: &Dataset,
    members: &[usize],
    start: Option<&Vec<f64>>,
) -> Result<(LogisticCoefficients, Vec<f64>, Vec<String>), LogisticError> {
    let (mut design, mut dropped) = subgroup_design(dataset, members)?;
    let z: Vec<u8> = members.iter().map(|&i| dataset.units[i].z).collect();
    let opts = FitOptions {
        start: start.filter(|s| s.len() == design.n_cols()).cloned(),
        ..FitOptions::default()
    };
    let coef = match logistic::fit_with(&design, &z, &opts) {
        Err(LogisticError::RankDeficient(cols)) => {
            design = design.without_columns(&cols)?;
            dropped.extend(cols);
            logistic::fit(&design, &z)?
        }
        other => other?,
    };
    let p = logistic::predict(&design, &coef)?;
    Ok((coef, p, dropped))
}

pub fn precompute_fits(dataset: &Dataset) -> Result<FitCache, PropensityError> {
    precompute_fits_with(dataset, &WarmStart::default())
}

pub fn precompute_fits_with(dataset: &Dataset, warm: &WarmStart) -> Result<FitCache, PropensityError> {
    dataset.check()?;
    let index = crate::data::build_index(dataset)?;
    let fit_err = |scope| move |source| PropensityError::Fit { scope, source };

    let design = overall_design(dataset).map_err(fit_err(FitScope::Overall))?;
    let opts = FitOptions { start: warm.overall.clone(), ..FitOptions::default() };
    let overall =
        logistic::fit_with(&design, &dataset.treatment(), &opts).map_err(fit_err(FitScope::Overall))?;
    let overall_prob = logistic::predict(&design, &overall).map_err(fit_err(FitScope::Overall))?;

    let mut subgroup_prob = vec![0.0; dataset.len()];
    let mut subgroups = Vec::with_capacity(dataset.n_groups);
    let mut dropped_terms = Vec::with_capacity(dataset.n_groups);
    for r in 0..dataset.n_groups {
        let members = index.members(r);
        let start = warm.subgroups.get(r).and_then(Option::as_ref);
        let (coef, p, dropped) =
            fit_subgroup(dataset, &members, start).map_err(fit_err(FitScope::Subgroup(r + 1)))?;
        for (&i, pi) in members.iter().zip(p) {
            subgroup_prob[i] = pi;
        }
        subgroups.push(coef);
        dropped_terms.push(dropped);
    }
    let overall_logit = overall_prob.iter().map(|&p| logit(p)).collect();
    let subgroup_logit = subgroup_prob.iter().map(|&p| logit(p)).collect();
    Ok(FitCache { overall, subgroups, dropped_terms, overall_prob, subgroup_prob, overall_logit, subgroup_logit })
}

/// Propensity scores in use for one scope vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityFit {
    pub e_hat: Vec<f64>,
    pub logit: Vec<f64>,
    pub source: Vec<FitScope>,
    /// Per subgroup: whether the fit in use was flagged quasi-separated.
    pub quasi_separated: Vec<bool>,
}

impl PropensityFit {
    /// Wraps externally supplied probabilities (clamped).
    pub fn from_probabilities(dataset: &Dataset, probs: &[f64]) -> Result<Self, PropensityError> {
        if probs.len() != dataset.len() {
            return Err(PropensityError::ProbabilityLength { got: probs.len(), expected: dataset.len() });
        }
        let e_hat: Vec<f64> = probs.iter().map(|&p| clamp_prob(p)).collect();
        Ok(Self {
            logit: e_hat.iter().map(|&p| logit(p)).collect(),
            e_hat,
            source: vec![FitScope::Supplied; dataset.len()],
            quasi_separated: vec![false; dataset.n_groups],
        })
    }
}

pub fn score(dataset: &Dataset, cache: &FitCache, s: &ScopeVector) -> Result<PropensityFit, PropensityError> {
    if s.len() != dataset.n_groups || cache.n_groups() != dataset.n_groups {
        return Err(PropensityError::ScopeLength { got: s.len(), expected: dataset.n_groups });
    }
    let n = dataset.len();
    let mut fit = PropensityFit {
        e_hat: Vec::with_capacity(n),
        logit: Vec::with_capacity(n),
        source: Vec::with_capacity(n),
        quasi_separated: (0..dataset.n_groups).map(|r| cache.quasi_separated(r, s.uses_subgroup_fit(r))).collect(),
    };
    for (i, u) in dataset.units.iter().enumerate() {
        let own = s.uses_subgroup_fit(u.group());
        fit.e_hat.push(cache.probabilities(own)[i]);
        fit.logit.push(cache.logits(own)[i]);
        fit.source.push(if own { FitScope::Subgroup(u.g) } else { FitScope::Overall });
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UnitRecord;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dataset(r: usize, per: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut units = Vec::new();
        for g in 1..=r {
            for j in 0..per {
                let x1: f64 = rng.random::<f64>() * 2.0 - 1.0 + g as f64 * 0.3;
                let x2: f64 = rng.random();
                let p = 1.0 / (1.0 + (-(x1 - 0.5 * x2 + 0.2 * g as f64 - 0.5)).exp());
                // Keep both classes present in every subgroup.
                let z = if j == 0 { 1 } else if j == 1 { 0 } else { u8::from(rng.random::<f64>() < p) };
                units.push(UnitRecord::new(format!("{g}-{j}"), z, g, vec![x1, x2], Some(x1)));
            }
        }
        Dataset::new(units, r, vec!["x1".into(), "x2".into()])
    }

    #[test]
    fn single_group_fits_coincide() {
        let ds = random_dataset(1, 80, 3);
        let cache = precompute_fits(&ds).unwrap();
        for (a, b) in cache.probabilities(false).iter().zip(cache.probabilities(true)) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn three_groups_give_four_coefficient_vectors() {
        let ds = random_dataset(3, 60, 4);
        let cache = precompute_fits(&ds).unwrap();
        assert_eq!(cache.subgroups.len() + 1, 4);
        assert_eq!(cache.overall.beta.len(), 3 + 2);
        assert!(cache.subgroups.iter().all(|c| c.beta.len() == 3));
    }

    #[test]
    fn separated_subgroup_is_flagged() {
        let mut ds = random_dataset(3, 60, 5);
        for u in ds.units.iter_mut().filter(|u| u.g == 2) {
            u.z = u8::from(u.x[0] > 0.9);
        }
        let counts = (
            ds.units.iter().filter(|u| u.g == 2 && u.z == 1).count(),
            ds.units.iter().filter(|u| u.g == 2 && u.z == 0).count(),
        );
        assert!(counts.0 > 0 && counts.1 > 0);
        let cache = precompute_fits(&ds).unwrap();
        assert!(cache.subgroups[1].quasi_separated);
        assert!(!cache.overall.quasi_separated);
        let fit = score(&ds, &cache, &ScopeVector::new(vec![1, 2, 1]).unwrap()).unwrap();
        assert_eq!(fit.quasi_separated, vec![false, true, false]);
    }

    #[test]
    fn scope_selects_source_and_is_local() {
        let ds = random_dataset(3, 50, 6);
        let cache = precompute_fits(&ds).unwrap();
        let ones = score(&ds, &cache, &ScopeVector::all_ones(3)).unwrap();
        let twos = score(&ds, &cache, &ScopeVector::all_twos(3)).unwrap();
        assert_eq!(ones.e_hat, cache.probabilities(false));
        assert_eq!(twos.e_hat, cache.probabilities(true));
        let mid = score(&ds, &cache, &ScopeVector::new(vec![1, 2, 1]).unwrap()).unwrap();
        for (i, u) in ds.units.iter().enumerate() {
            let expect = if u.g == 2 { twos.e_hat[i] } else { ones.e_hat[i] };
            assert_eq!(mid.e_hat[i], expect);
            assert!((mid.logit[i] - (mid.e_hat[i] / (1.0 - mid.e_hat[i])).ln()).abs() < 1e-10);
        }
        assert_eq!(mid.source[ds.units.iter().position(|u| u.g == 2).unwrap()], FitScope::Subgroup(2));
        assert!(matches!(
            score(&ds, &cache, &ScopeVector::all_ones(2)),
            Err(PropensityError::ScopeLength { .. })
        ));
    }

    #[test]
    fn scope_values_are_checked() {
        assert!(ScopeVector::new(vec![1, 3]).is_err());
        let mut s = ScopeVector::from_mask(0b101, 3);
        assert_eq!(s.values(), &[2, 1, 2]);
        s.flip(1);
        assert_eq!(s.count_subgroup_fits(), 3);
    }

    #[test]
    fn constant_covariate_within_subgroup_is_dropped() {
        let mut ds = random_dataset(2, 40, 8);
        for u in ds.units.iter_mut().filter(|u| u.g == 1) {
            u.x[1] = 0.0;
        }
        let cache = precompute_fits(&ds).unwrap();
        assert_eq!(cache.dropped_terms[0], vec!["x2".to_string()]);
        assert!(cache.dropped_terms[1].is_empty());
    }
}
