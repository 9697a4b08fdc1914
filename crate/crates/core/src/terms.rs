//! Covariate term lists: which functions of the raw covariates enter the
//! propensity model and the balance criteria.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::data::Dataset;

#[derive(Debug, Error, PartialEq)]
pub enum TermError {
    #[error("unknown covariate `{0}`")]
    UnknownColumn(String),
    #[error("cannot parse term `{0}`")]
    Syntax(String),
    #[error("empty term list")]
    Empty,
}

/// A product of raw covariates with integer powers, e.g. `x1`, `x1^2`, `x1*x4`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    factors: Vec<(String, u32)>,
}

impl Term {
    pub fn column(name: &str) -> Self {
        Self { factors: vec![(name.to_string(), 1)] }
    }

    pub fn power(name: &str, exp: u32) -> Self {
        Self { factors: vec![(name.to_string(), exp)] }
    }

    pub fn product(a: &str, b: &str) -> Self {
        Self { factors: vec![(a.to_string(), 1), (b.to_string(), 1)] }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|(n, e)| if *e == 1 { n.clone() } else { format!("{n}^{e}") })
            .collect();
        f.write_str(&parts.join("*"))
    }
}

impl FromStr for Term {
    type Err = TermError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut factors = Vec::new();
        for part in s.split('*') {
            let part = part.trim();
            let (name, exp) = match part.split_once('^') {
                Some((n, e)) => {
                    let e: u32 = e.trim().parse().map_err(|_| TermError::Syntax(s.to_string()))?;
                    (n.trim(), e)
                }
                None => (part, 1),
            };
            if name.is_empty() || exp == 0 {
                return Err(TermError::Syntax(s.to_string()));
            }
            factors.push((name.to_string(), exp));
        }
        Ok(Self { factors })
    }
}

/// Ordered list of model terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermList(pub Vec<Term>);

impl TermList {
    /// One linear term per listed column.
    pub fn linear<S: AsRef<str>>(columns: &[S]) -> Self {
        Self(columns.iter().map(|c| Term::column(c.as_ref())).collect())
    }

    pub fn parse(spec: &str) -> Result<Self, TermError> {
        let terms = spec
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(Term::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        if terms.is_empty() {
            return Err(TermError::Empty);
        }
        Ok(Self(terms))
    }

    pub fn names(&self) -> Vec<String> {
        self.0.iter().map(ToString::to_string).collect()
    }

    /// Returns a copy of `dataset` whose covariates are the evaluated terms.
    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset, TermError> {
        let cols: Vec<Vec<(usize, u32)>> = self
            .0
            .iter()
            .map(|t| {
                t.factors
                    .iter()
                    .map(|(n, e)| {
                        dataset
                            .covariate_names
                            .iter()
                            .position(|c| c == n)
                            .map(|j| (j, *e))
                            .ok_or_else(|| TermError::UnknownColumn(n.clone()))
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        let mut out = dataset.clone();
        for u in &mut out.units {
            let raw = std::mem::take(&mut u.x);
            u.x = cols
                .iter()
                .map(|fs| fs.iter().map(|&(j, e)| raw[j].powi(e as i32)).product())
                .collect();
        }
        out.covariate_names = self.names();
        Ok(out)
    }
}

impl fmt::Display for TermList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names().join(","))
    }
}
