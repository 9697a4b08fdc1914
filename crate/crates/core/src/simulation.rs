//! Synthetic data-generating processes and the replicated experiment harness.

use std::fmt;

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Uniform};
use thiserror::Error;

use crate::data::{Dataset, UnitRecord};
use crate::inference::{bootstrap_replicates, se_from_replicates, BootstrapMode, Z_95};
use crate::pipeline::{Estimator, Method, PipelineError, Prepared, SearchMode};
use crate::propensity::{ScopeVector, WarmStart};
use crate::rng::{self, Domain, StreamRng};
use crate::terms::TermList;

/// Redraw budget for a replicate whose sample leaves a subgroup without
/// treated or control units.
const MAX_REDRAWS: u64 = 1000;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("need at least two subgroups, got {0}")]
    TooFewGroups(usize),
    #[error("{what}: expected {expected} values, got {got}")]
    Length { what: &'static str, expected: usize, got: usize },
    #[error("no valid sample after {0} draws (a subgroup keeps lacking treated or control units)")]
    Degenerate(u64),
    #[error("covariate `{0}` not found")]
    UnknownCovariate(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Whether the analysis model contains every term of the treatment model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelSpec {
    Correct,
    Misspecified,
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelSpec::Correct => "correct",
            ModelSpec::Misspecified => "misspecified",
        })
    }
}

/// One simulated dataset with its known effects.
#[derive(Debug, Clone)]
pub struct SimDataset {
    /// Raw covariates; apply [`Scenario::analysis_terms`] before analysis.
    pub dataset: Dataset,
    pub true_tau: Vec<f64>,
    pub true_propensity: Vec<f64>,
    /// Draws discarded because a subgroup lacked treated or control units.
    pub redraws: u64,
}

/// A data-generating process usable by [`run_experiment`].
pub trait Scenario: Sync {
    fn groups(&self) -> usize;
    fn true_tau(&self) -> Vec<f64>;
    fn replicate(&self, v: u64) -> Result<SimDataset, SimulationError>;
    fn analysis_terms(&self, spec: ModelSpec) -> TermList;
    /// Key/value description echoed into run manifests.
    fn describe(&self) -> Vec<(String, String)>;
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Evenly spaced values from `lo` (subgroup 1) to `hi` (subgroup R).
fn ramp(lo: f64, hi: f64, r: usize, groups: usize) -> f64 {
    lo + (hi - lo) * r as f64 / (groups - 1) as f64
}

/// Draws with fresh streams until every subgroup has both arms.
fn draw_valid(
    seed: u64,
    v: u64,
    mut draw: impl FnMut(&mut StreamRng) -> (Dataset, Vec<f64>),
) -> Result<(Dataset, Vec<f64>, u64), SimulationError> {
    let base = rng::derive_seed(seed, Domain::Simulation, v);
    for attempt in 0..MAX_REDRAWS {
        let mut r = rng::stream(base, Domain::Simulation, attempt);
        let (ds, p) = draw(&mut r);
        if ds.validate().is_empty() {
            return Ok((ds, p, attempt));
        }
    }
    Err(SimulationError::Degenerate(MAX_REDRAWS))
}

/// Subgroups with shifted covariate means, subgroup fixed effects in the
/// treatment model, quadratic and interaction terms, and effects that
/// increase linearly across subgroups.
#[derive(Debug, Clone, PartialEq)]
pub struct Sim1Config {
    pub groups: usize,
    pub units_per_group: usize,
    /// Treatment coefficients on x1, x2, x3, x4, x1^2, x1*x4.
    pub alpha: [f64; 6],
    /// Outcome intercept and coefficients on x1, x2, x3, x4, x1^2, x1*x4.
    pub beta: [f64; 7],
    /// Subgroup fixed effects run linearly over this range.
    pub delta_range: (f64, f64),
    /// Mean of x1 runs linearly over this range.
    pub mu_range: (f64, f64),
    /// True subgroup effects run linearly over this range.
    pub eta_range: (f64, f64),
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for Sim1Config {
    fn default() -> Self {
        Self {
            groups: 20,
            units_per_group: 100,
            alpha: [-1.5, -0.5, 0.5, -0.5, 0.5, 0.5],
            beta: [200.0, 20.0, 10.0, 10.0, 10.0, -5.0, 10.0],
            delta_range: (-1.0, 1.0),
            mu_range: (-3.0, 3.0),
            eta_range: (-10.0, 10.0),
            noise_sd: 1.0,
            seed: 1,
        }
    }
}

impl Sim1Config {
    pub fn mu(&self, r: usize) -> f64 {
        ramp(self.mu_range.0, self.mu_range.1, r, self.groups)
    }

    pub fn delta(&self, r: usize) -> f64 {
        ramp(self.delta_range.0, self.delta_range.1, r, self.groups)
    }

    pub fn eta(&self, r: usize) -> f64 {
        ramp(self.eta_range.0, self.eta_range.1, r, self.groups)
    }

    /// x1..x4 plus, for the correct model, x1^2 and x1*x4.
    pub fn analysis_terms(&self, correct: bool) -> TermList {
        let mut t = "x1,x2,x3,x4".to_string();
        if correct {
            t.push_str(",x1^2,x1*x4");
        }
        TermList::parse(&t).expect("static term list")
    }

    /// True propensity of a unit in zero-based subgroup `r`.
    pub fn propensity(&self, r: usize, x: &[f64]) -> f64 {
        let a = &self.alpha;
        let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
        sigmoid(self.delta(r) + a[0] * x1 + a[1] * x2 + a[2] * x3 + a[3] * x4 + a[4] * x1 * x1 + a[5] * x1 * x4)
    }
}

pub fn generate_sim1(config: &Sim1Config, v: u64) -> SimDataset {
    try_generate_sim1(config, v).expect("valid simulation configuration")
}

pub fn try_generate_sim1(config: &Sim1Config, v: u64) -> Result<SimDataset, SimulationError> {
    let groups = config.groups;
    if groups < 2 {
        return Err(SimulationError::TooFewGroups(groups));
    }
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| SimulationError::Config(e.to_string()))?;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let unif = Uniform::new(0.0, 1.0).expect("unit interval");
    let bern = Bernoulli::new(0.4).expect("probability in range");
    let b = &config.beta;
    let (dataset, true_propensity, redraws) = draw_valid(config.seed, v, |rng| {
        let mut units = Vec::with_capacity(groups * config.units_per_group);
        let mut probs = Vec::with_capacity(units.capacity());
        for r in 0..groups {
            let mu = config.mu(r);
            for j in 0..config.units_per_group {
                let x1 = mu + std_normal.sample(rng);
                let x2 = unif.sample(rng);
                let x3 = std_normal.sample(rng);
                let x4 = if bern.sample(rng) { 1.0 } else { 0.0 };
                let x = vec![x1, x2, x3, x4];
                let p = config.propensity(r, &x);
                let z = u8::from(rng.random::<f64>() < p);
                let y = b[0]
                    + config.eta(r) * f64::from(z)
                    + b[1] * x1
                    + b[2] * x2
                    + b[3] * x3
                    + b[4] * x4
                    + b[5] * x1 * x1
                    + b[6] * x1 * x4
                    + noise.sample(rng);
                units.push(UnitRecord::new(format!("{}-{j}", r + 1), z, r + 1, x, Some(y)));
                probs.push(p);
            }
        }
        let names = ["x1", "x2", "x3", "x4"].map(String::from).to_vec();
        (Dataset::new(units, groups, names), probs)
    })?;
    Ok(SimDataset { dataset, true_tau: (0..groups).map(|r| config.eta(r)).collect(), true_propensity, redraws })
}

impl Scenario for Sim1Config {
    fn groups(&self) -> usize {
        self.groups
    }

    fn true_tau(&self) -> Vec<f64> {
        (0..self.groups).map(|r| self.eta(r)).collect()
    }

    fn replicate(&self, v: u64) -> Result<SimDataset, SimulationError> {
        try_generate_sim1(self, v)
    }

    fn analysis_terms(&self, spec: ModelSpec) -> TermList {
        Sim1Config::analysis_terms(self, spec == ModelSpec::Correct)
    }

    fn describe(&self) -> Vec<(String, String)> {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("scenario".into(), "sim1".into()),
            ("groups".into(), self.groups.to_string()),
            ("units_per_group".into(), self.units_per_group.to_string()),
            ("alpha".into(), list(&self.alpha)),
            ("beta".into(), list(&self.beta)),
            ("delta_range".into(), list(&[self.delta_range.0, self.delta_range.1])),
            ("mu_range".into(), list(&[self.mu_range.0, self.mu_range.1])),
            ("eta_range".into(), list(&[self.eta_range.0, self.eta_range.1])),
            ("noise_sd".into(), self.noise_sd.to_string()),
            ("sim_seed".into(), self.seed.to_string()),
        ]
    }
}

/// Fixed covariates and subgroup labels (e.g. taken from a survey) with
/// treatment drawn from the overall logistic model and a linear outcome.
#[derive(Debug, Clone)]
pub struct ShiwLikeConfig {
    /// Source of covariates and subgroup labels; its treatment and outcome are ignored.
    pub covariates: Dataset,
    /// Subgroup fixed effects of the treatment model.
    pub delta: Vec<f64>,
    /// Treatment coefficients, one per covariate.
    pub alpha: Vec<f64>,
    pub beta0: f64,
    /// Outcome coefficients, one per covariate.
    pub beta: Vec<f64>,
    /// True subgroup effects.
    pub eta: Vec<f64>,
    pub noise_sd: f64,
    /// Covariate left out of the misspecified analysis model.
    pub dropped_covariate: Option<String>,
    pub seed: u64,
}

impl ShiwLikeConfig {
    pub fn check(&self) -> Result<(), SimulationError> {
        let (r, k) = (self.covariates.n_groups, self.covariates.n_covariates());
        let want = [("delta", &self.delta, r), ("alpha", &self.alpha, k), ("beta", &self.beta, k), ("eta", &self.eta, r)];
        for (what, v, expected) in want {
            if v.len() != expected {
                return Err(SimulationError::Length { what, expected, got: v.len() });
            }
        }
        if let Some(d) = &self.dropped_covariate {
            if !self.covariates.covariate_names.contains(d) {
                return Err(SimulationError::UnknownCovariate(d.clone()));
            }
        }
        if self.noise_sd.is_nan() || self.noise_sd < 0.0 {
            return Err(SimulationError::Config(format!("noise sd {}", self.noise_sd)));
        }
        Ok(())
    }
}

pub fn generate_shiw_like(config: &ShiwLikeConfig, v: u64) -> Result<SimDataset, SimulationError> {
    config.check()?;
    let base = &config.covariates;
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| SimulationError::Config(e.to_string()))?;
    let lin = |c: &[f64], x: &[f64]| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let (dataset, true_propensity, redraws) = draw_valid(config.seed, v, |rng| {
        let mut units = Vec::with_capacity(base.len());
        let mut probs = Vec::with_capacity(base.len());
        for u in &base.units {
            let r = u.g - 1;
            let p = sigmoid(config.delta[r] + lin(&config.alpha, &u.x));
            let z = u8::from(rng.random::<f64>() < p);
            let y = config.beta0 + config.eta[r] * f64::from(z) + lin(&config.beta, &u.x) + noise.sample(rng);
            units.push(UnitRecord { z, y: Some(y), ..u.clone() });
            probs.push(p);
        }
        (Dataset { units, ..base.clone() }, probs)
    })?;
    Ok(SimDataset { dataset, true_tau: config.eta.clone(), true_propensity, redraws })
}

impl Scenario for ShiwLikeConfig {
    fn groups(&self) -> usize {
        self.covariates.n_groups
    }

    fn true_tau(&self) -> Vec<f64> {
        self.eta.clone()
    }

    fn replicate(&self, v: u64) -> Result<SimDataset, SimulationError> {
        generate_shiw_like(self, v)
    }

    fn analysis_terms(&self, spec: ModelSpec) -> TermList {
        let names: Vec<&String> = self
            .covariates
            .covariate_names
            .iter()
            .filter(|n| spec == ModelSpec::Correct || Some(*n) != self.dropped_covariate.as_ref())
            .collect();
        TermList::linear(&names)
    }

    fn describe(&self) -> Vec<(String, String)> {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        vec![
            ("scenario".into(), "shiw-like".into()),
            ("groups".into(), self.covariates.n_groups.to_string()),
            ("units".into(), self.covariates.len().to_string()),
            ("covariates".into(), self.covariates.covariate_names.join(",")),
            ("delta".into(), list(&self.delta)),
            ("alpha".into(), list(&self.alpha)),
            ("beta0".into(), self.beta0.to_string()),
            ("beta".into(), list(&self.beta)),
            ("eta".into(), list(&self.eta)),
            ("noise_sd".into(), self.noise_sd.to_string()),
            ("dropped_covariate".into(), self.dropped_covariate.clone().unwrap_or_default()),
            ("sim_seed".into(), self.seed.to_string()),
        ]
    }
}

/// Replication settings and the method grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub replicates: usize,
    pub bootstrap: usize,
    pub search: SearchMode,
    pub bootstrap_mode: BootstrapMode,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub estimators: Vec<Estimator>,
    pub specs: Vec<ModelSpec>,
}

impl ExperimentConfig {
    /// 100 replicates, 200 bootstrap draws, 100 restarts.
    pub fn small() -> Self {
        Self {
            replicates: 100,
            bootstrap: 200,
            search: SearchMode::Stochastic { restarts: 100 },
            bootstrap_mode: BootstrapMode::Reoptimize,
            seed: 2024,
            methods: Method::ALL.to_vec(),
            estimators: vec![Estimator::Direct, Estimator::Psw],
            specs: vec![ModelSpec::Correct, ModelSpec::Misspecified],
        }
    }

    /// Full-scale settings: 1000 replicates, 1000 bootstrap draws, 1000 restarts.
    pub fn full() -> Self {
        Self { replicates: 1000, bootstrap: 1000, search: SearchMode::Stochastic { restarts: 1000 }, ..Self::small() }
    }

    fn cells(&self) -> Vec<(Method, Estimator)> {
        self.methods.iter().flat_map(|&m| self.estimators.iter().map(move |&e| (m, e))).collect()
    }
}

/// Performance of one estimator in one subgroup over the replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPerformance {
    pub true_tau: f64,
    /// Absolute bias of the mean estimate.
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    /// Share of intervals covering the truth, among replicates with an interval.
    pub coverage: Option<f64>,
    pub n_defined: usize,
    pub n_excluded: usize,
}

/// Per-subgroup bias, RMSE and coverage from replicate estimates.
pub fn group_performance(true_tau: f64, estimates: &[Option<f64>], ses: &[Option<f64>]) -> GroupPerformance {
    let vals: Vec<f64> = estimates.iter().flatten().copied().collect();
    let n = vals.len();
    let (bias, rmse) = if n == 0 {
        (None, None)
    } else {
        let mean = vals.iter().sum::<f64>() / n as f64;
        let mse = vals.iter().map(|t| (t - true_tau).powi(2)).sum::<f64>() / n as f64;
        (Some((mean - true_tau).abs()), Some(mse.sqrt()))
    };
    let covered: Vec<bool> = estimates
        .iter()
        .zip(ses)
        .filter_map(|(t, s)| t.zip(*s))
        .map(|(t, s)| (t - true_tau).abs() <= Z_95 * s)
        .collect();
    let coverage = (!covered.is_empty()).then(|| covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64);
    GroupPerformance { true_tau, bias, rmse, coverage, n_defined: n, n_excluded: estimates.len() - n }
}

/// One (spec, method, estimator) cell of the performance table.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceCell {
    pub spec: ModelSpec,
    pub method: Method,
    pub estimator: Estimator,
    pub groups: Vec<GroupPerformance>,
}

fn mean_of(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Vec<f64> = v.flatten().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

impl PerformanceCell {
    pub fn mean_bias(&self) -> Option<f64> {
        mean_of(self.groups.iter().map(|g| g.bias))
    }

    pub fn mean_rmse(&self) -> Option<f64> {
        mean_of(self.groups.iter().map(|g| g.rmse))
    }

    pub fn mean_coverage(&self) -> Option<f64> {
        mean_of(self.groups.iter().map(|g| g.coverage))
    }

    pub fn excluded(&self) -> usize {
        self.groups.iter().map(|g| g.n_excluded).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceTable {
    pub cells: Vec<PerformanceCell>,
}

impl PerformanceTable {
    pub fn cell(&self, spec: ModelSpec, method: Method, estimator: Estimator) -> Option<&PerformanceCell> {
        self.cells.iter().find(|c| c.spec == spec && c.method == method && c.estimator == estimator)
    }
}

/// Average share of subgroups using their own fit, per (spec, method).
#[derive(Debug, Clone, PartialEq)]
pub struct ScopeUsage {
    pub spec: ModelSpec,
    pub method: Method,
    pub mean_subgroup_fraction: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub table: PerformanceTable,
    pub scope_usage: Vec<ScopeUsage>,
    /// (replicate, spec, message) for every replicate that could not be analysed.
    pub failures: Vec<(u64, ModelSpec, String)>,
    pub redraws: u64,
}

/// Estimates and bootstrap SEs of one replicate under one model spec.
#[derive(Debug, Clone)]
struct SpecOutcome {
    /// Indexed like `ExperimentConfig::cells`.
    tau: Vec<Vec<Option<f64>>>,
    se: Vec<Vec<Option<f64>>>,
    /// Indexed like `ExperimentConfig::methods`.
    scope_fraction: Vec<f64>,
}

fn estimate_all(
    prep: &Prepared<'_>,
    config: &ExperimentConfig,
    seed: u64,
    fixed: Option<&[ScopeVector]>,
) -> Result<(CellEstimates, Vec<ScopeVector>), PipelineError> {
    let mut tau = Vec::new();
    let mut scopes = Vec::new();
    for (mi, &m) in config.methods.iter().enumerate() {
        let s = match fixed {
            Some(f) => f[mi].clone(),
            None => prep.choose_scope(m, config.search, seed)?.0,
        };
        for &e in &config.estimators {
            tau.push(prep.estimate(&s, e)?.tau);
        }
        scopes.push(s);
    }
    Ok((tau, scopes))
}

fn run_spec(dataset: &Dataset, config: &ExperimentConfig, seed: u64) -> Result<SpecOutcome, PipelineError> {
    let prep = Prepared::new(dataset)?;
    let (tau, scopes) = estimate_all(&prep, config, seed, None)?;
    let groups = dataset.n_groups;
    let warm = WarmStart::from_cache(&prep.cache);
    let fixed = (config.bootstrap_mode == BootstrapMode::FixedScope).then_some(scopes.as_slice());
    let reps = bootstrap_replicates(dataset, config.bootstrap, seed, |d, s| {
        Prepared::with_warm_start(d, &warm)
            .and_then(|p| estimate_all(&p, config, s, fixed))
            .ok()
            .map(|(t, _)| t)
    });
    let n_cells = tau.len();
    let se = (0..n_cells)
        .map(|c| {
            let cell_reps: Vec<Option<Vec<Option<f64>>>> =
                reps.iter().map(|r| r.as_ref().map(|t| t[c].clone())).collect();
            if config.bootstrap < 2 {
                vec![None; groups]
            } else {
                se_from_replicates(&cell_reps, groups).se
            }
        })
        .collect();
    let scope_fraction = scopes.iter().map(|s| s.count_subgroup_fits() as f64 / groups as f64).collect();
    Ok(SpecOutcome { tau, se, scope_fraction })
}

type CellEstimates = Vec<Vec<Option<f64>>>;

type ReplicateOutcome = (u64, Vec<Result<SpecOutcome, String>>);

/// Runs every replicate and aggregates bias, RMSE and coverage per cell.
/// Replicates are independent jobs with their own streams; aggregation runs
/// in replicate order, so results do not depend on the worker count.
pub fn run_experiment<S: Scenario>(scenario: &S, config: &ExperimentConfig) -> Result<ExperimentResult, SimulationError> {
    if config.replicates == 0 {
        return Err(SimulationError::Config("replicates must be positive".into()));
    }
    let outcomes: Vec<Result<ReplicateOutcome, SimulationError>> =
        crate::par_map((0..config.replicates as u64).collect(), |v| {
            let sim = scenario.replicate(v)?;
            let seed = rng::derive_seed(config.seed, Domain::Simulation, v);
            let per_spec = config
                .specs
                .iter()
                .map(|&spec| {
                    let ds = scenario.analysis_terms(spec).apply(&sim.dataset).map_err(|e| e.to_string())?;
                    run_spec(&ds, config, seed).map_err(|e| e.to_string())
                })
                .collect();
            Ok((sim.redraws, per_spec))
        });

    let cells = config.cells();
    let true_tau = scenario.true_tau();
    let groups = scenario.groups();
    let mut failures = Vec::new();
    let mut redraws = 0;
    // [spec][cell][group] -> per-replicate estimates and SEs
    let mut est = vec![vec![vec![Vec::new(); groups]; cells.len()]; config.specs.len()];
    let mut ses = est.clone();
    let mut usage = vec![vec![(0.0, 0usize); config.methods.len()]; config.specs.len()];
    for (v, outcome) in outcomes.into_iter().enumerate() {
        let (draws, per_spec) = outcome?;
        redraws += draws;
        for (si, res) in per_spec.into_iter().enumerate() {
            match res {
                Ok(o) => {
                    for c in 0..cells.len() {
                        for r in 0..groups {
                            est[si][c][r].push(o.tau[c][r]);
                            ses[si][c][r].push(o.se[c][r]);
                        }
                    }
                    for (mi, f) in o.scope_fraction.iter().enumerate() {
                        usage[si][mi].0 += f;
                        usage[si][mi].1 += 1;
                    }
                }
                Err(msg) => failures.push((v as u64, config.specs[si], msg)),
            }
        }
    }

    let mut table = PerformanceTable { cells: Vec::new() };
    let mut scope_usage = Vec::new();
    for (si, &spec) in config.specs.iter().enumerate() {
        for (c, &(method, estimator)) in cells.iter().enumerate() {
            let groups = (0..groups).map(|r| group_performance(true_tau[r], &est[si][c][r], &ses[si][c][r])).collect();
            table.cells.push(PerformanceCell { spec, method, estimator, groups });
        }
        for (mi, &method) in config.methods.iter().enumerate() {
            if method.criterion().is_some() && usage[si][mi].1 > 0 {
                let (sum, n) = usage[si][mi];
                scope_usage.push(ScopeUsage { spec, method, mean_subgroup_fraction: sum / n as f64, replicates: n });
            }
        }
    }
    Ok(ExperimentResult { table, scope_usage, failures, redraws })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ramps_hit_both_ends() {
        let c = Sim1Config::default();
        assert_eq!((c.mu(0), c.delta(0), c.eta(0)), (-3.0, -1.0, -10.0));
        assert_abs_diff_eq!(c.mu(19), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.delta(19), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.eta(19), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn one_group_is_rejected() {
        let c = Sim1Config { groups: 1, ..Sim1Config::default() };
        assert!(matches!(try_generate_sim1(&c, 0), Err(SimulationError::TooFewGroups(1))));
    }

    #[test]
    fn generation_is_deterministic() {
        let c = Sim1Config { groups: 5, units_per_group: 30, ..Sim1Config::default() };
        let a = generate_sim1(&c, 3);
        let b = generate_sim1(&c, 3);
        assert_eq!(a.dataset, b.dataset);
        assert_ne!(a.dataset, generate_sim1(&c, 4).dataset);
        assert!(a.dataset.validate().is_empty());
    }

    #[test]
    fn perfect_estimator_scores_zero() {
        let g = group_performance(2.0, &[Some(2.0); 5], &[Some(0.1); 5]);
        assert_eq!((g.bias, g.rmse, g.coverage), (Some(0.0), Some(0.0), Some(1.0)));
        let one = group_performance(2.0, &[Some(3.5)], &[None]);
        assert_eq!(one.bias, one.rmse);
        assert_eq!(one.coverage, None);
        let gaps = group_performance(0.0, &[Some(1.0), None, Some(-3.0)], &[Some(1.0), None, Some(1.0)]);
        assert_eq!(gaps.n_excluded, 1);
        assert_abs_diff_eq!(gaps.bias.unwrap(), 1.0);
        assert_abs_diff_eq!(gaps.rmse.unwrap(), 5f64.sqrt());
        assert_eq!(gaps.coverage, Some(0.5));
    }

    #[test]
    fn shiw_like_lengths_are_checked() {
        let base = generate_sim1(&Sim1Config { groups: 3, units_per_group: 20, ..Sim1Config::default() }, 0).dataset;
        let cfg = ShiwLikeConfig {
            covariates: base,
            delta: vec![0.3, 0.4],
            alpha: vec![0.0; 4],
            beta0: 0.0,
            beta: vec![0.0; 4],
            eta: vec![1.0; 3],
            noise_sd: 1.0,
            dropped_covariate: None,
            seed: 1,
        };
        assert!(matches!(generate_shiw_like(&cfg, 0), Err(SimulationError::Length { what: "delta", .. })));
    }
}
