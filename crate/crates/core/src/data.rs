//! Dataset representation, validation and subgroup indexing.

use std::fmt;

use thiserror::Error;

/// One observational unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: String,
    /// Treatment indicator, 0 for control and 1 for treated.
    pub z: u8,
    /// Subgroup label in `1..=R`.
    pub g: usize,
    pub x: Vec<f64>,
    pub y: Option<f64>,
}

impl UnitRecord {
    pub fn new(id: impl Into<String>, z: u8, g: usize, x: Vec<f64>, y: Option<f64>) -> Self {
        Self { id: id.into(), z, g, x, y }
    }

    pub fn is_treated(&self) -> bool {
        self.z == 1
    }

    /// Zero-based subgroup position.
    pub(crate) fn group(&self) -> usize {
        self.g - 1
    }
}

/// A broken dataset rule.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Treatment { unit: usize, value: u8 },
    Subgroup { unit: usize, label: usize, groups: usize },
    CovariateLength { unit: usize, len: usize, expected: usize },
    NonFiniteCovariate { unit: usize, column: String },
    NonFiniteOutcome { unit: usize },
    NoTreated { group: usize },
    NoControl { group: usize },
    NoGroups,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Treatment { unit, value } => {
                write!(f, "unit {unit}: treatment indicator {value} is not 0 or 1")
            }
            Violation::Subgroup { unit, label, groups } => {
                write!(f, "unit {unit}: subgroup {label} outside 1..={groups}")
            }
            Violation::CovariateLength { unit, len, expected } => {
                write!(f, "unit {unit}: {len} covariates, expected {expected}")
            }
            Violation::NonFiniteCovariate { unit, column } => {
                write!(f, "unit {unit}: covariate `{column}` is missing or not finite")
            }
            Violation::NonFiniteOutcome { unit } => write!(f, "unit {unit}: outcome is not finite"),
            Violation::NoTreated { group } => write!(f, "subgroup {group} has no treated units"),
            Violation::NoControl { group } => write!(f, "subgroup {group} has no control units"),
            Violation::NoGroups => write!(f, "dataset declares zero subgroups"),
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unit {unit} has no outcome")]
    MissingOutcome { unit: usize },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Units plus the subgroup count and covariate names.
///
/// Subgroup labels are stored as contiguous integers `1..=R`; the original
/// labels, when the data came from a file, are kept in `group_labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub units: Vec<UnitRecord>,
    pub n_groups: usize,
    pub covariate_names: Vec<String>,
    pub group_labels: Vec<String>,
}

impl Dataset {
    pub fn new(units: Vec<UnitRecord>, n_groups: usize, covariate_names: Vec<String>) -> Self {
        let group_labels = (1..=n_groups).map(|r| r.to_string()).collect();
        Self { units, n_groups, covariate_names, group_labels }
    }

    /// Builds a dataset and rejects it if any rule is broken.
    pub fn validated(
        units: Vec<UnitRecord>,
        n_groups: usize,
        covariate_names: Vec<String>,
    ) -> Result<Self, DataError> {
        let ds = Self::new(units, n_groups, covariate_names);
        ds.check()?;
        Ok(ds)
    }

    pub fn with_group_labels(mut self, labels: Vec<String>) -> Self {
        assert_eq!(labels.len(), self.n_groups, "one label per subgroup");
        self.group_labels = labels;
        self
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_treated(&self) -> usize {
        self.units.iter().filter(|u| u.is_treated()).count()
    }

    pub fn treatment(&self) -> Vec<u8> {
        self.units.iter().map(|u| u.z).collect()
    }

    pub fn has_outcomes(&self) -> bool {
        self.units.iter().all(|u| u.y.is_some())
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    pub fn check(&self) -> Result<(), DataError> {
        let v = validate(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(DataError::Invalid(v))
        }
    }

    /// Outcome of unit `i`, or an error naming the unit.
    pub fn outcome(&self, i: usize) -> Result<f64, DataError> {
        self.units[i].y.ok_or(DataError::MissingOutcome { unit: i })
    }
}

/// Returns every broken rule; an empty list means the dataset is usable.
pub fn validate(dataset: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let r = dataset.n_groups;
    if r == 0 {
        out.push(Violation::NoGroups);
    }
    let k = dataset.n_covariates();
    let mut treated = vec![0usize; r];
    let mut control = vec![0usize; r];
    for (i, u) in dataset.units.iter().enumerate() {
        if u.z > 1 {
            out.push(Violation::Treatment { unit: i, value: u.z });
        }
        if u.g == 0 || u.g > r {
            out.push(Violation::Subgroup { unit: i, label: u.g, groups: r });
        } else if u.z == 1 {
            treated[u.g - 1] += 1;
        } else if u.z == 0 {
            control[u.g - 1] += 1;
        }
        if u.x.len() != k {
            out.push(Violation::CovariateLength { unit: i, len: u.x.len(), expected: k });
        } else {
            for (j, v) in u.x.iter().enumerate() {
                if !v.is_finite() {
                    out.push(Violation::NonFiniteCovariate {
                        unit: i,
                        column: dataset.covariate_names[j].clone(),
                    });
                }
            }
        }
        if matches!(u.y, Some(y) if !y.is_finite()) {
            out.push(Violation::NonFiniteOutcome { unit: i });
        }
    }
    for g in 0..r {
        if treated[g] == 0 {
            out.push(Violation::NoTreated { group: g + 1 });
        }
        if control[g] == 0 {
            out.push(Violation::NoControl { group: g + 1 });
        }
    }
    out
}

/// Treated and control unit positions for every subgroup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgroupIndex {
    pub treated: Vec<Vec<usize>>,
    pub control: Vec<Vec<usize>>,
}

impl SubgroupIndex {
    pub fn n_groups(&self) -> usize {
        self.treated.len()
    }

    /// All positions of subgroup `r` (zero-based), in dataset order.
    pub fn members(&self, r: usize) -> Vec<usize> {
        let mut all: Vec<usize> = self.treated[r].iter().chain(&self.control[r]).copied().collect();
        all.sort_unstable();
        all
    }

    pub fn flatten(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self
            .treated
            .iter()
            .chain(&self.control)
            .flat_map(|c| c.iter().copied())
            .collect();
        all.sort_unstable();
        all
    }
}

/// Partitions unit positions into `(subgroup, treatment)` cells.
///
/// Empty cells are allowed here (they are reported by [`validate`]); only
/// labels that cannot be placed in any cell are rejected.
pub fn build_index(dataset: &Dataset) -> Result<SubgroupIndex, DataError> {
    let structural: Vec<Violation> = validate(dataset)
        .into_iter()
        .filter(|v| matches!(v, Violation::Treatment { .. } | Violation::Subgroup { .. }))
        .collect();
    if !structural.is_empty() {
        return Err(DataError::Invalid(structural));
    }
    let r = dataset.n_groups;
    let mut idx = SubgroupIndex { treated: vec![Vec::new(); r], control: vec![Vec::new(); r] };
    for (i, u) in dataset.units.iter().enumerate() {
        let cell = if u.is_treated() { &mut idx.treated } else { &mut idx.control };
        cell[u.group()].push(i);
    }
    Ok(idx)
}
