//! Within-subgroup nearest-neighbour caliper matching on the logit
//! propensity scale, with replacement and ties.
//!
//! Every treated unit whose nearest control lies within the caliper carries
//! weight one; that unit of weight is shared equally by all controls at the
//! minimum distance. Control weights accumulate across treated units.
//! Treated units with no control inside the caliper are dropped.

use thiserror::Error;

use crate::data::{build_index, DataError, Dataset, SubgroupIndex};
use crate::propensity::PropensityFit;

/// Controls within this distance of the minimum count as tied.
pub const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum MatchingError {
    #[error("caliper needs at least two logits, got {0}")]
    TooFewUnits(usize),
    #[error("no control units available in subgroup {0}")]
    NoControls(usize),
    #[error("caliper must be a non-negative number, got {0}")]
    BadCaliper(f64),
    #[error("{0}")]
    Data(String),
}

impl From<DataError> for MatchingError {
    fn from(e: DataError) -> Self {
        MatchingError::Data(e.to_string())
    }
}

/// Standard deviation (n - 1 denominator) of the logits divided by four.
pub fn caliper_width(logits: &[f64]) -> Result<f64, MatchingError> {
    if logits.len() < 2 {
        return Err(MatchingError::TooFewUnits(logits.len()));
    }
    // Welford
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &v) in logits.iter().enumerate() {
        let d = v - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (v - mean);
    }
    Ok((m2 / (logits.len() - 1) as f64).sqrt() / 4.0)
}

/// Matching result on local indices of one subgroup.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMatch {
    /// Indices into the treated slice that found a match.
    pub matched: Vec<usize>,
    /// Indices into the treated slice that were dropped.
    pub dropped: Vec<usize>,
    /// Weight of every control, aligned with the control slice.
    pub control_weights: Vec<f64>,
}

/// Matches treated logits to control logits within `caliper`.
pub fn match_subgroup(treated: &[f64], control: &[f64], caliper: f64) -> Result<LocalMatch, MatchingError> {
    if control.is_empty() {
        return Err(MatchingError::NoControls(0));
    }
    if caliper.is_nan() || caliper < 0.0 {
        return Err(MatchingError::BadCaliper(caliper));
    }
    let mut order: Vec<usize> = (0..control.len()).collect();
    order.sort_by(|&a, &b| control[a].total_cmp(&control[b]));
    let sorted: Vec<f64> = order.iter().map(|&j| control[j]).collect();

    let mut out = LocalMatch { matched: Vec::new(), dropped: Vec::new(), control_weights: vec![0.0; control.len()] };
    let mut tied = Vec::new();
    for (ti, &t) in treated.iter().enumerate() {
        let pos = sorted.partition_point(|&c| c < t);
        let left = pos.checked_sub(1).map(|j| t - sorted[j]);
        let right = sorted.get(pos).map(|&c| c - t);
        let best = match (left, right) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) => a,
            (None, Some(b)) => b,
            (None, None) => unreachable!(),
        };
        if best > caliper {
            out.dropped.push(ti);
            continue;
        }
        tied.clear();
        let mut j = pos;
        while j > 0 && (t - sorted[j - 1]) - best <= TIE_TOL {
            j -= 1;
            tied.push(order[j]);
        }
        let mut j = pos;
        while j < sorted.len() && (sorted[j] - t) - best <= TIE_TOL {
            tied.push(order[j]);
            j += 1;
        }
        let share = 1.0 / tied.len() as f64;
        for &c in &tied {
            out.control_weights[c] += share;
        }
        out.matched.push(ti);
    }
    Ok(out)
}

/// Matched sample of one subgroup, in dataset positions.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSubgroup {
    /// One-based subgroup label.
    pub r: usize,
    pub matched_treated: Vec<usize>,
    pub dropped_treated: Vec<usize>,
    /// Control positions with positive weight.
    pub controls: Vec<usize>,
    pub control_weights: Vec<f64>,
    pub caliper: f64,
}

impl MatchedSubgroup {
    pub fn n_matched(&self) -> usize {
        self.matched_treated.len()
    }

    pub fn weight_sum(&self) -> f64 {
        self.control_weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSample {
    pub subgroups: Vec<MatchedSubgroup>,
}

impl MatchedSample {
    pub fn n_matched(&self) -> usize {
        self.subgroups.iter().map(MatchedSubgroup::n_matched).sum()
    }
}

/// Matches subgroup `r` (zero-based) given the logits of every unit.
pub fn match_group(index: &SubgroupIndex, r: usize, logits: &[f64]) -> Result<MatchedSubgroup, MatchingError> {
    let treated = &index.treated[r];
    let control = &index.control[r];
    if control.is_empty() {
        return Err(MatchingError::NoControls(r + 1));
    }
    let t_logits: Vec<f64> = treated.iter().map(|&i| logits[i]).collect();
    let c_logits: Vec<f64> = control.iter().map(|&i| logits[i]).collect();
    let all: Vec<f64> = t_logits.iter().chain(&c_logits).copied().collect();
    let caliper = caliper_width(&all)?;
    let m = match_subgroup(&t_logits, &c_logits, caliper)?;
    let (controls, control_weights) = control
        .iter()
        .zip(&m.control_weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&i, &w)| (i, w))
        .unzip();
    Ok(MatchedSubgroup {
        r: r + 1,
        matched_treated: m.matched.iter().map(|&j| treated[j]).collect(),
        dropped_treated: m.dropped.iter().map(|&j| treated[j]).collect(),
        controls,
        control_weights,
        caliper,
    })
}

pub fn match_all(dataset: &Dataset, propensity: &PropensityFit) -> Result<MatchedSample, MatchingError> {
    let index = build_index(dataset)?;
    match_all_indexed(&index, propensity)
}

pub fn match_all_indexed(index: &SubgroupIndex, propensity: &PropensityFit) -> Result<MatchedSample, MatchingError> {
    let subgroups = (0..index.n_groups())
        .map(|r| match_group(index, r, &propensity.logit))
        .collect::<Result<_, _>>()?;
    Ok(MatchedSample { subgroups })
}
