//! Bootstrap standard errors, normal p-values and Benjamini-Hochberg
//! adjustment.
//!
//! Resampling is stratified by (subgroup, treatment) cell so every replicate
//! keeps the original cell sizes and every subgroup stays estimable.

use rand::Rng;
use statrs::function::erf::erfc;

use crate::data::{build_index, Dataset, SubgroupIndex};
use crate::estimators::SubgroupEffects;
use crate::pipeline::{Estimator, Method, PipelineConfig, PipelineError, Prepared, SearchMode};
use crate::propensity::{ScopeVector, WarmStart};
use crate::rng::{self, Domain, StreamRng};

/// Two-sided normal critical value used for confidence intervals.
pub const Z_95: f64 = 1.96;

/// Whether bootstrap replicates search for their own scope vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BootstrapMode {
    /// Rerun the whole pipeline, including the scope search.
    #[default]
    Reoptimize,
    /// Keep the scope vector chosen on the original data (anti-conservative).
    FixedScope,
}

impl std::fmt::Display for BootstrapMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BootstrapMode::Reoptimize => "reoptimize",
            BootstrapMode::FixedScope => "fixed-scope",
        })
    }
}

/// Draws units with replacement within every (subgroup, treatment) cell.
pub fn stratified_resample(dataset: &Dataset, index: &SubgroupIndex, rng: &mut StreamRng) -> Dataset {
    let mut units = Vec::with_capacity(dataset.len());
    for cell in index.treated.iter().chain(&index.control) {
        for _ in 0..cell.len() {
            units.push(dataset.units[cell[rng.random_range(0..cell.len())]].clone());
        }
    }
    Dataset {
        units,
        n_groups: dataset.n_groups,
        covariate_names: dataset.covariate_names.clone(),
        group_labels: dataset.group_labels.clone(),
    }
}

/// Runs `f` on `b` stratified resamples. Replicate `i` draws from its own
/// stream and receives a seed derived from `(seed, i)`, so results do not
/// depend on scheduling.
pub fn bootstrap_replicates<T, F>(dataset: &Dataset, b: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&Dataset, u64) -> T + Sync + Send,
{
    let index = build_index(dataset).expect("bootstrap needs an indexable dataset");
    crate::par_map((0..b as u64).collect(), |i| {
        let mut r = rng::stream(seed, Domain::Bootstrap, i);
        let resample = stratified_resample(dataset, &index, &mut r);
        f(&resample, rng::derive_seed(seed, Domain::Bootstrap, i))
    })
}

/// Per-subgroup bootstrap standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSe {
    /// `None` when fewer than two replicates produced an estimate.
    pub se: Vec<Option<f64>>,
    /// Replicates with no estimate for each subgroup.
    pub undefined: Vec<usize>,
    pub replicates: usize,
}

/// Sample standard deviation (n - 1) over defined replicate estimates.
pub fn se_from_replicates(replicates: &[Option<Vec<Option<f64>>>], groups: usize) -> BootstrapSe {
    let mut se = Vec::with_capacity(groups);
    let mut undefined = Vec::with_capacity(groups);
    for r in 0..groups {
        let vals: Vec<f64> = replicates.iter().filter_map(|rep| rep.as_ref().and_then(|t| t[r])).collect();
        undefined.push(replicates.len() - vals.len());
        se.push((vals.len() >= 2).then(|| {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        }));
    }
    BootstrapSe { se, undefined, replicates: replicates.len() }
}

fn replicate_effects(
    resample: &Dataset,
    warm: &WarmStart,
    method: Method,
    search: SearchMode,
    fixed: Option<&ScopeVector>,
    estimator: Estimator,
    seed: u64,
) -> Result<SubgroupEffects, PipelineError> {
    let prep = Prepared::with_warm_start(resample, warm)?;
    let scope = match fixed {
        Some(s) => s.clone(),
        None => prep.choose_scope(method, search, seed)?.0,
    };
    prep.estimate(&scope, estimator)
}

/// Bootstrap standard errors of the subgroup estimates produced by `config`.
pub fn bootstrap_se(
    dataset: &Dataset,
    config: &PipelineConfig,
    b: usize,
    seed: u64,
    mode: BootstrapMode,
) -> Result<BootstrapSe, PipelineError> {
    let prep = Prepared::new(dataset)?;
    let warm = WarmStart::from_cache(&prep.cache);
    let fixed = match mode {
        BootstrapMode::Reoptimize => None,
        BootstrapMode::FixedScope => Some(prep.choose_scope(config.method, config.search, config.seed)?.0),
    };
    let reps = bootstrap_replicates(dataset, b, seed, |d, s| {
        replicate_effects(d, &warm, config.method, config.search, fixed.as_ref(), config.estimator, s)
            .ok()
            .map(|e| e.tau)
    });
    Ok(se_from_replicates(&reps, dataset.n_groups))
}

/// Two-sided normal p-value `2 (1 - Phi(|tau / se|))`; 0 when `se` is 0.
pub fn p_value(tau: f64, se: f64) -> f64 {
    if se <= 0.0 {
        return 0.0;
    }
    erfc((tau / se).abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0_f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        adjusted[i] = running.min(1.0);
    }
    adjusted
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectRow {
    /// Subgroup label as it appeared in the input.
    pub label: String,
    pub tau: Option<f64>,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p_value: Option<f64>,
    pub p_adjusted: Option<f64>,
    pub bootstrap_undefined: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub replicates: usize,
    pub seed: u64,
    pub method: Method,
    pub estimator: Estimator,
    pub scope: ScopeVector,
    pub bootstrap_mode: BootstrapMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectReport {
    pub rows: Vec<EffectRow>,
    pub meta: ReportMeta,
}

impl EffectReport {
    /// Combines point estimates and bootstrap SEs; BH adjustment runs over
    /// the subgroups that have a p-value.
    pub fn new(labels: &[String], effects: &SubgroupEffects, se: &BootstrapSe, meta: ReportMeta) -> Self {
        let mut rows: Vec<EffectRow> = effects
            .tau
            .iter()
            .zip(&se.se)
            .zip(labels)
            .zip(&se.undefined)
            .map(|(((&tau, &se), label), &undef)| {
                let both = tau.zip(se);
                EffectRow {
                    label: label.clone(),
                    tau,
                    se,
                    ci_low: both.map(|(t, s)| t - Z_95 * s),
                    ci_high: both.map(|(t, s)| t + Z_95 * s),
                    p_value: both.map(|(t, s)| p_value(t, s)),
                    p_adjusted: None,
                    bootstrap_undefined: undef,
                }
            })
            .collect();
        let with_p: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].p_value.is_some()).collect();
        let adj = bh_adjust(&with_p.iter().map(|&i| rows[i].p_value.unwrap()).collect::<Vec<_>>());
        for (&i, a) in with_p.iter().zip(adj) {
            rows[i].p_adjusted = Some(a);
        }
        Self { rows, meta }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UnitRecord;
    use approx::assert_abs_diff_eq;

    #[test]
    fn p_values_at_reference_points() {
        assert_eq!(p_value(0.0, 1.0), 1.0);
        assert_abs_diff_eq!(p_value(1.96, 1.0), 0.05, epsilon = 5e-4);
        assert_abs_diff_eq!(p_value(-2.0, 2.0), 0.3173, epsilon = 1e-4);
        assert_eq!(p_value(3.0, 0.0), 0.0);
    }

    #[test]
    fn bh_small_cases() {
        assert_eq!(bh_adjust(&[0.2]), vec![0.2]);
        assert_eq!(bh_adjust(&[0.3, 0.3, 0.3]), vec![0.3, 0.3, 0.3]);
        let adj = bh_adjust(&[0.01, 0.04, 0.03, 0.005]);
        // sorted: 0.005, 0.01, 0.03, 0.04 -> 0.02, 0.02, 0.04, 0.04
        let expect = [0.02, 0.04, 0.04, 0.02];
        for (a, e) in adj.iter().zip(expect) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-15);
        }
        assert!(bh_adjust(&[]).is_empty());
    }

    #[test]
    fn se_ignores_undefined_replicates() {
        let reps = vec![Some(vec![Some(1.0), None]), Some(vec![Some(3.0), None]), None];
        let se = se_from_replicates(&reps, 2);
        assert_abs_diff_eq!(se.se[0].unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert_eq!(se.se[1], None);
        assert_eq!(se.undefined, vec![1, 3]);
    }

    #[test]
    fn stratified_resample_keeps_cell_sizes() {
        let units = (0..30)
            .map(|i| UnitRecord::new(i.to_string(), (i % 3 == 0) as u8, 1 + i % 2, vec![i as f64], Some(0.0)))
            .collect();
        let ds = Dataset::new(units, 2, vec!["x".into()]);
        let idx = build_index(&ds).unwrap();
        let mut r = rng::stream(5, Domain::Bootstrap, 0);
        let re = stratified_resample(&ds, &idx, &mut r);
        let idx2 = build_index(&re).unwrap();
        for g in 0..2 {
            assert_eq!(idx.treated[g].len(), idx2.treated[g].len());
            assert_eq!(idx.control[g].len(), idx2.control[g].len());
        }
    }

    #[test]
    fn report_builds_intervals_and_adjusts() {
        let effects = SubgroupEffects { tau: vec![Some(2.0), None, Some(0.0)], estimator: Estimator::Direct };
        let se = BootstrapSe { se: vec![Some(1.0), Some(1.0), Some(0.5)], undefined: vec![0, 3, 0], replicates: 3 };
        let meta = ReportMeta {
            replicates: 3,
            seed: 1,
            method: Method::SbpsSmd,
            estimator: Estimator::Direct,
            scope: ScopeVector::all_ones(3),
            bootstrap_mode: BootstrapMode::Reoptimize,
        };
        let labels: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let rep = EffectReport::new(&labels, &effects, &se, meta);
        assert_abs_diff_eq!(rep.rows[0].ci_low.unwrap(), 2.0 - 1.96, epsilon = 1e-15);
        assert_eq!(rep.rows[1].p_value, None);
        assert_eq!(rep.rows[2].p_adjusted, Some(1.0));
        assert!(rep.rows[0].p_adjusted.unwrap() >= rep.rows[0].p_value.unwrap());
    }
}
