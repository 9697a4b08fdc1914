//! Finite-sample balance moments and the two scalar criteria.
//!
//! The matching criterion `F^SMD` uses half standardized mean differences
//! between matched treated units and weighted matched controls, once over
//! the whole matched sample and once per subgroup (scaled by the
//! subgroup's share of matched treated units). The weighting criterion
//! `F^PSW` compares treated totals with odds-weighted control totals, for
//! every covariate overall, for the subgroup counts, and for every covariate
//! within each subgroup, all scaled by `1/N`.
//!
//! Standard deviations in the SMD denominators are those of the treated
//! units in the original (unmatched) sample, so they do not depend on the
//! scope vector.

use thiserror::Error;

use crate::data::{build_index, DataError, Dataset, SubgroupIndex};
use crate::matching::MatchedSample;
use crate::propensity::PropensityFit;

#[derive(Debug, Error)]
pub enum BalanceError {
    #[error("matched sample contains no treated units")]
    NoMatchedTreated,
    #[error(transparent)]
    Data(#[from] DataError),
}

fn sample_sd(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Treated-unit sample standard deviations from the unmatched sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatedSds {
    pub overall: Vec<f64>,
    /// `subgroup[r][k]`
    pub subgroup: Vec<Vec<f64>>,
}

impl TreatedSds {
    pub fn new(dataset: &Dataset, index: &SubgroupIndex) -> Self {
        let k = dataset.n_covariates();
        let x = |i: usize, j: usize| dataset.units[i].x[j];
        let all: Vec<usize> = index.treated.iter().flatten().copied().collect();
        let overall = (0..k).map(|j| sample_sd(all.iter().map(|&i| x(i, j)))).collect();
        let subgroup = index
            .treated
            .iter()
            .map(|cell| (0..k).map(|j| sample_sd(cell.iter().map(|&i| x(i, j)))).collect())
            .collect();
        Self { overall, subgroup }
    }

    pub fn overall_denominator(&self, k: usize) -> Option<f64> {
        Some(self.overall[k]).filter(|&s| s > 0.0)
    }

    /// Subgroup sd, falling back to the overall sd when the subgroup has no
    /// spread; `None` if both are zero.
    pub fn subgroup_denominator(&self, r: usize, k: usize) -> Option<f64> {
        Some(self.subgroup[r][k]).filter(|&s| s > 0.0).or_else(|| self.overall_denominator(k))
    }
}

/// Where a zero-spread covariate was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantTerm {
    Overall { k: usize },
    Subgroup { r: usize, k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmdMoments {
    pub overall: Vec<f64>,
    /// `subgroup[r][k]`
    pub subgroup: Vec<Vec<f64>>,
    pub sds: TreatedSds,
    /// One-based labels of subgroups with no matched treated units.
    pub empty_subgroups: Vec<usize>,
    pub constant_terms: Vec<ConstantTerm>,
}

pub fn smd_moments(dataset: &Dataset, matched: &MatchedSample) -> Result<SmdMoments, BalanceError> {
    let index = build_index(dataset)?;
    smd_moments_with(dataset, matched, &TreatedSds::new(dataset, &index))
}

pub fn smd_moments_with(dataset: &Dataset, matched: &MatchedSample, sds: &TreatedSds) -> Result<SmdMoments, BalanceError> {
    let k = dataset.n_covariates();
    let x = |i: usize| &dataset.units[i].x;
    let n_t = matched.n_matched();
    if n_t == 0 {
        return Err(BalanceError::NoMatchedTreated);
    }
    let n_t = n_t as f64;

    // Overall matched means.
    let mut t_mean = vec![0.0; k];
    let mut c_mean = vec![0.0; k];
    let mut c_weight = 0.0;
    for sg in &matched.subgroups {
        for &i in &sg.matched_treated {
            for (m, v) in t_mean.iter_mut().zip(x(i)) {
                *m += v;
            }
        }
        for (&i, &w) in sg.controls.iter().zip(&sg.control_weights) {
            c_weight += w;
            for (m, v) in c_mean.iter_mut().zip(x(i)) {
                *m += w * v;
            }
        }
    }
    let mut constant_terms = Vec::new();
    let overall = (0..k)
        .map(|j| match sds.overall_denominator(j) {
            Some(sd) => 0.5 * (t_mean[j] / n_t - c_mean[j] / c_weight) / sd,
            None => {
                constant_terms.push(ConstantTerm::Overall { k: j });
                0.0
            }
        })
        .collect();

    let mut empty_subgroups = Vec::new();
    let subgroup = matched
        .subgroups
        .iter()
        .enumerate()
        .map(|(r, sg)| {
            let n_rt = sg.n_matched();
            if n_rt == 0 {
                empty_subgroups.push(r + 1);
                return vec![0.0; k];
            }
            let w_sum = sg.weight_sum();
            (0..k)
                .map(|j| {
                    let tm = sg.matched_treated.iter().map(|&i| x(i)[j]).sum::<f64>() / n_rt as f64;
                    let cm = sg.controls.iter().zip(&sg.control_weights).map(|(&i, &w)| w * x(i)[j]).sum::<f64>()
                        / w_sum;
                    match sds.subgroup_denominator(r, j) {
                        Some(sd) => 0.5 * (n_rt as f64 / n_t) * (tm - cm) / sd,
                        None => {
                            constant_terms.push(ConstantTerm::Subgroup { r: r + 1, k: j });
                            0.0
                        }
                    }
                })
                .collect()
        })
        .collect();
    Ok(SmdMoments { overall, subgroup, sds: sds.clone(), empty_subgroups, constant_terms })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PswMoments {
    pub overall: Vec<f64>,
    /// One value per subgroup: treated count minus odds-weight total.
    pub group_share: Vec<f64>,
    /// `subgroup[r][k]`
    pub subgroup: Vec<Vec<f64>>,
}

pub fn psw_moments(dataset: &Dataset, propensity: &PropensityFit) -> PswMoments {
    let (r_n, k) = (dataset.n_groups, dataset.n_covariates());
    let n = dataset.len() as f64;
    let mut overall = vec![0.0; k];
    let mut group_share = vec![0.0; r_n];
    let mut subgroup = vec![vec![0.0; k]; r_n];
    for (i, u) in dataset.units.iter().enumerate() {
        let g = u.group();
        let w = if u.is_treated() {
            1.0
        } else {
            let e = propensity.e_hat[i];
            -e / (1.0 - e)
        };
        group_share[g] += w;
        for j in 0..k {
            overall[j] += w * u.x[j];
            subgroup[g][j] += w * u.x[j];
        }
    }
    let scale = |v: &mut Vec<f64>| v.iter_mut().for_each(|m| *m /= n);
    scale(&mut overall);
    scale(&mut group_share);
    subgroup.iter_mut().for_each(scale);
    PswMoments { overall, group_share, subgroup }
}

fn sum_sq<'a>(v: impl IntoIterator<Item = &'a f64>) -> f64 {
    v.into_iter().map(|m| m * m).sum()
}

pub fn f_smd(m: &SmdMoments) -> f64 {
    sum_sq(&m.overall) + m.subgroup.iter().map(sum_sq).sum::<f64>()
}

pub fn f_psw(m: &PswMoments) -> f64 {
    sum_sq(&m.overall) + sum_sq(&m.group_share) + m.subgroup.iter().map(sum_sq).sum::<f64>()
}

/// Standardized mean difference of one covariate in one subgroup, before and
/// after matching.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceRow {
    /// One-based subgroup label.
    pub r: usize,
    pub covariate: String,
    pub before: Option<f64>,
    pub after: Option<f64>,
}

/// Per-(subgroup, covariate) SMD table: (treated mean - control mean) / treated sd.
pub fn smd_table(dataset: &Dataset, matched: &MatchedSample) -> Result<Vec<BalanceRow>, BalanceError> {
    let index = build_index(dataset)?;
    let sds = TreatedSds::new(dataset, &index);
    let x = |i: usize, j: usize| dataset.units[i].x[j];
    let mean = |cells: &[usize], j: usize| cells.iter().map(|&i| x(i, j)).sum::<f64>() / cells.len() as f64;
    let mut rows = Vec::new();
    for (r, sg) in matched.subgroups.iter().enumerate() {
        for (j, name) in dataset.covariate_names.iter().enumerate() {
            let sd = sds.subgroup_denominator(r, j);
            let before = sd.filter(|_| !index.treated[r].is_empty() && !index.control[r].is_empty()).map(|s| {
                (mean(&index.treated[r], j) - mean(&index.control[r], j)) / s
            });
            let after = sd.filter(|_| sg.n_matched() > 0).map(|s| {
                let cm = sg.controls.iter().zip(&sg.control_weights).map(|(&i, &w)| w * x(i, j)).sum::<f64>()
                    / sg.weight_sum();
                (mean(&sg.matched_treated, j) - cm) / s
            });
            rows.push(BalanceRow { r: r + 1, covariate: name.clone(), before, after });
        }
    }
    Ok(rows)
}
