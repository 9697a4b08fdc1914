//! Subgroup effect estimates from the matched sample or from odds weights.

use std::fmt;
use std::str::FromStr;

use crate::data::{build_index, DataError, Dataset};
use crate::matching::MatchedSample;
use crate::propensity::PropensityFit;

/// Odds-weight totals below this are treated as zero.
const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    /// Matched treated mean minus matching-weighted control mean.
    Direct,
    /// Treated mean minus odds-weighted control mean.
    Psw,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Direct => "direct",
            Estimator::Psw => "psw",
        })
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "direct" => Ok(Estimator::Direct),
            "psw" => Ok(Estimator::Psw),
            other => Err(format!("unknown estimator `{other}` (expected direct or psw)")),
        }
    }
}

/// Per-subgroup estimates; `None` marks a subgroup with nothing to estimate from.
#[derive(Debug, Clone, PartialEq)]
pub struct SubgroupEffects {
    pub tau: Vec<Option<f64>>,
    pub estimator: Estimator,
}

impl SubgroupEffects {
    pub fn n_undefined(&self) -> usize {
        self.tau.iter().filter(|t| t.is_none()).count()
    }
}

pub fn tau_direct(dataset: &Dataset, matched: &MatchedSample) -> Result<SubgroupEffects, DataError> {
    let tau = matched
        .subgroups
        .iter()
        .map(|sg| {
            let n = sg.n_matched();
            if n == 0 {
                return Ok(None);
            }
            let mut treated = 0.0;
            for &i in &sg.matched_treated {
                treated += dataset.outcome(i)?;
            }
            let mut control = 0.0;
            for (&i, &w) in sg.controls.iter().zip(&sg.control_weights) {
                control += w * dataset.outcome(i)?;
            }
            Ok(Some((treated - control) / n as f64))
        })
        .collect::<Result<_, DataError>>()?;
    Ok(SubgroupEffects { tau, estimator: Estimator::Direct })
}

pub fn tau_psw(dataset: &Dataset, propensity: &PropensityFit) -> Result<SubgroupEffects, DataError> {
    let index = build_index(dataset)?;
    let tau = (0..dataset.n_groups)
        .map(|r| {
            let treated = &index.treated[r];
            if treated.is_empty() || index.control[r].is_empty() {
                return Ok(None);
            }
            let mut t_sum = 0.0;
            for &i in treated {
                t_sum += dataset.outcome(i)?;
            }
            let (mut w_sum, mut wy) = (0.0, 0.0);
            for &i in &index.control[r] {
                let e = propensity.e_hat[i];
                let w = e / (1.0 - e);
                w_sum += w;
                wy += w * dataset.outcome(i)?;
            }
            if w_sum < WEIGHT_FLOOR {
                return Ok(None);
            }
            Ok(Some(t_sum / treated.len() as f64 - wy / w_sum))
        })
        .collect::<Result<_, DataError>>()?;
    Ok(SubgroupEffects { tau, estimator: Estimator::Psw })
}
