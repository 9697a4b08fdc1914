//! Choosing the scope vector.
//!
//! Matching is local to a subgroup, so each subgroup has exactly two
//! candidate matched samples (one per choice of fit) and two candidate sets
//! of odds weights. [`Objective`] reduces each candidate to a few sums:
//!
//! * `diff[k]`: treated total minus (matching- or odds-) weighted control total,
//! * `own`: the subgroup's own squared moment terms, already standardized,
//! * `mass`: matched treated count (SMD only).
//!
//! The criterion for a scope vector is then
//! `(sum_k w_k (sum_r diff_rk)^2 + sum_r own_r) / norm`, with
//! `norm = 4 (sum_r mass_r)^2` for SMD and `N^2` for PSW, so flipping one
//! coordinate costs O(K).

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::balance::{self, BalanceError, TreatedSds};
use crate::data::{build_index, DataError, Dataset, SubgroupIndex};
use crate::matching::{self, MatchedSample, MatchedSubgroup, MatchingError};
use crate::propensity::{self, FitCache, PropensityError, ScopeVector};
use crate::rng::{self, Domain};

/// Largest subgroup count accepted by [`exhaustive`] unless overridden.
pub const DEFAULT_EXHAUSTIVE_CAP: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    Smd,
    Psw,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Criterion::Smd => "smd",
            Criterion::Psw => "psw",
        })
    }
}

impl std::str::FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "smd" => Ok(Criterion::Smd),
            "psw" => Ok(Criterion::Psw),
            other => Err(format!("unknown criterion `{other}` (expected smd or psw)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("exhaustive search over {groups} subgroups exceeds the cap of {cap}")]
    TooManyGroups { groups: usize, cap: usize },
    #[error("stochastic search needs at least one restart")]
    NoRestarts,
    #[error(transparent)]
    Propensity(#[from] PropensityError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Both candidate matched samples of every subgroup.
#[derive(Debug, Clone)]
pub struct CandidateMatches {
    /// `groups[r][0]` uses the overall fit, `groups[r][1]` the subgroup fit.
    pub groups: Vec<[MatchedSubgroup; 2]>,
}

impl CandidateMatches {
    pub fn new(index: &SubgroupIndex, cache: &FitCache) -> Result<Self, MatchingError> {
        let groups = (0..index.n_groups())
            .map(|r| {
                Ok([
                    matching::match_group(index, r, cache.logits(false))?,
                    matching::match_group(index, r, cache.logits(true))?,
                ])
            })
            .collect::<Result<_, MatchingError>>()?;
        Ok(Self { groups })
    }

    pub fn assemble(&self, s: &ScopeVector) -> MatchedSample {
        MatchedSample {
            subgroups: self
                .groups
                .iter()
                .enumerate()
                .map(|(r, pair)| pair[usize::from(s.uses_subgroup_fit(r))].clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct Cell {
    diff: Vec<f64>,
    own: f64,
    mass: f64,
}

/// Criterion value as a function of the scope vector, with O(K) flips.
#[derive(Debug, Clone)]
pub struct Objective {
    criterion: Criterion,
    overall_weight: Vec<f64>,
    cells: Vec<[Cell; 2]>,
    fixed_norm: f64,
}

/// Running aggregate for one scope vector.
#[derive(Debug, Clone)]
pub struct ObjectiveState {
    pub scope: ScopeVector,
    totals: Vec<f64>,
    own: f64,
    mass: f64,
}

impl Objective {
    pub fn new(dataset: &Dataset, cache: &FitCache, criterion: Criterion) -> Result<Self, SearchError> {
        let index = build_index(dataset)?;
        match criterion {
            Criterion::Smd => Ok(Self::smd(dataset, &index, &CandidateMatches::new(&index, cache)?)),
            Criterion::Psw => Ok(Self::psw(dataset, &index, cache)),
        }
    }

    pub fn smd(dataset: &Dataset, index: &SubgroupIndex, candidates: &CandidateMatches) -> Self {
        let k = dataset.n_covariates();
        let sds = TreatedSds::new(dataset, index);
        let x = |i: usize| &dataset.units[i].x;
        let overall_weight = (0..k).map(|j| sds.overall_denominator(j).map_or(0.0, |s| 1.0 / (s * s))).collect();
        let cells = candidates
            .groups
            .iter()
            .enumerate()
            .map(|(r, pair)| {
                pair.clone().map(|m| {
                    let mut diff = vec![0.0; k];
                    for &i in &m.matched_treated {
                        for (d, v) in diff.iter_mut().zip(x(i)) {
                            *d += v;
                        }
                    }
                    for (&i, &w) in m.controls.iter().zip(&m.control_weights) {
                        for (d, v) in diff.iter_mut().zip(x(i)) {
                            *d -= w * v;
                        }
                    }
                    let own = (0..k)
                        .map(|j| sds.subgroup_denominator(r, j).map_or(0.0, |s| (diff[j] / s).powi(2)))
                        .sum();
                    Cell { diff, own, mass: m.n_matched() as f64 }
                })
            })
            .collect();
        Self { criterion: Criterion::Smd, overall_weight, cells, fixed_norm: 0.0 }
    }

    pub fn psw(dataset: &Dataset, index: &SubgroupIndex, cache: &FitCache) -> Self {
        let k = dataset.n_covariates();
        let x = |i: usize| &dataset.units[i].x;
        let cells = (0..dataset.n_groups)
            .map(|r| {
                [false, true].map(|own_fit| {
                    let probs = cache.probabilities(own_fit);
                    let mut diff = vec![0.0; k];
                    let mut share = index.treated[r].len() as f64;
                    for &i in &index.treated[r] {
                        for (d, v) in diff.iter_mut().zip(x(i)) {
                            *d += v;
                        }
                    }
                    for &i in &index.control[r] {
                        let odds = probs[i] / (1.0 - probs[i]);
                        share -= odds;
                        for (d, v) in diff.iter_mut().zip(x(i)) {
                            *d -= odds * v;
                        }
                    }
                    let own = share * share + diff.iter().map(|d| d * d).sum::<f64>();
                    Cell { diff, own, mass: 0.0 }
                })
            })
            .collect();
        let n = dataset.len() as f64;
        Self { criterion: Criterion::Psw, overall_weight: vec![1.0; k], cells, fixed_norm: n * n }
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn n_groups(&self) -> usize {
        self.cells.len()
    }

    fn cell(&self, r: usize, s: &ScopeVector) -> &Cell {
        &self.cells[r][usize::from(s.uses_subgroup_fit(r))]
    }

    pub fn state(&self, s: &ScopeVector) -> ObjectiveState {
        let mut st = ObjectiveState {
            scope: s.clone(),
            totals: vec![0.0; self.overall_weight.len()],
            own: 0.0,
            mass: 0.0,
        };
        for r in 0..self.n_groups() {
            let c = self.cell(r, s);
            for (t, d) in st.totals.iter_mut().zip(&c.diff) {
                *t += d;
            }
            st.own += c.own;
            st.mass += c.mass;
        }
        st
    }

    fn finish(&self, totals: impl Iterator<Item = f64>, own: f64, mass: f64) -> f64 {
        let norm = match self.criterion {
            Criterion::Smd => 4.0 * mass * mass,
            Criterion::Psw => self.fixed_norm,
        };
        if norm == 0.0 {
            return f64::INFINITY;
        }
        let overall: f64 = totals.zip(&self.overall_weight).map(|(t, w)| w * t * t).sum();
        (overall + own) / norm
    }

    pub fn value_of(&self, st: &ObjectiveState) -> f64 {
        self.finish(st.totals.iter().copied(), st.own, st.mass)
    }

    pub fn value(&self, s: &ScopeVector) -> f64 {
        self.value_of(&self.state(s))
    }

    /// Criterion value if coordinate `r` of the state were flipped.
    pub fn flipped_value(&self, st: &ObjectiveState, r: usize) -> f64 {
        let cur = self.cell(r, &st.scope);
        let alt = &self.cells[r][usize::from(!st.scope.uses_subgroup_fit(r))];
        let totals = st.totals.iter().zip(cur.diff.iter().zip(&alt.diff)).map(|(t, (c, a))| t - c + a);
        self.finish(totals, st.own - cur.own + alt.own, st.mass - cur.mass + alt.mass)
    }

    pub fn apply_flip(&self, st: &mut ObjectiveState, r: usize) {
        let cur = self.cell(r, &st.scope).clone();
        st.scope.flip(r);
        let alt = self.cell(r, &st.scope);
        for ((t, c), a) in st.totals.iter_mut().zip(&cur.diff).zip(&alt.diff) {
            *t += a - c;
        }
        st.own += alt.own - cur.own;
        st.mass += alt.mass - cur.mass;
    }
}

/// Full-pipeline criterion value: score, then match and take SMD moments or
/// take PSW moments. A matched sample with no treated units scores +inf.
pub fn evaluate(dataset: &Dataset, cache: &FitCache, s: &ScopeVector, criterion: Criterion) -> Result<f64, SearchError> {
    let fit = propensity::score(dataset, cache, s)?;
    match criterion {
        Criterion::Smd => {
            let matched = matching::match_all(dataset, &fit)?;
            match balance::smd_moments(dataset, &matched) {
                Ok(m) => Ok(balance::f_smd(&m)),
                Err(BalanceError::NoMatchedTreated) => Ok(f64::INFINITY),
                Err(BalanceError::Data(e)) => Err(e.into()),
            }
        }
        Criterion::Psw => Ok(balance::f_psw(&balance::psw_moments(dataset, &fit))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub s_min: ScopeVector,
    pub f_min: f64,
    pub criterion: Criterion,
    /// Criterion value of the all-ones (overall fit everywhere) vector.
    pub f_all_ones: f64,
    pub evaluations: usize,
    /// Restarts whose local optimum strictly improved the incumbent.
    pub restarts_improved: usize,
}

/// `a` is preferred to `b` at equal criterion value: fewer subgroup fits,
/// then lexicographically smaller.
fn preferred_on_tie(a: &ScopeVector, b: &ScopeVector) -> bool {
    (a.count_subgroup_fits(), a.values()) < (b.count_subgroup_fits(), b.values())
}

pub fn exhaustive(objective: &Objective, cap: usize) -> Result<SearchResult, SearchError> {
    let r = objective.n_groups();
    if r > cap || r >= 64 {
        return Err(SearchError::TooManyGroups { groups: r, cap });
    }
    let ones = ScopeVector::all_ones(r);
    let f_all_ones = objective.value(&ones);
    let (mut best, mut best_f) = (ones, f_all_ones);
    for mask in 1..(1u64 << r) {
        let s = ScopeVector::from_mask(mask, r);
        let f = objective.value(&s);
        if f < best_f || (f == best_f && preferred_on_tie(&s, &best)) {
            best = s;
            best_f = f;
        }
    }
    Ok(SearchResult {
        s_min: best,
        f_min: best_f,
        criterion: objective.criterion(),
        f_all_ones,
        evaluations: 1 << r,
        restarts_improved: 0,
    })
}

/// Repeated sweeps over `order`, moving a coordinate only on strict
/// improvement, until a full sweep changes nothing.
pub fn descend(objective: &Objective, start: ScopeVector, order: &[usize], evaluations: &mut usize) -> (ScopeVector, f64) {
    let mut st = objective.state(&start);
    let mut f = objective.value_of(&st);
    *evaluations += 1;
    loop {
        let mut changed = false;
        for &r in order {
            let alt = objective.flipped_value(&st, r);
            *evaluations += 1;
            if alt < f {
                objective.apply_flip(&mut st, r);
                f = alt;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // Re-aggregate so the reported value carries no accumulated drift.
    let f = objective.value(&st.scope);
    (st.scope, f)
}

/// One restart: uniform random start, uniform random coordinate order.
pub fn restart(objective: &Objective, seed: u64, l: u64) -> (ScopeVector, f64, usize) {
    let r = objective.n_groups();
    let mut rng = rng::stream(seed, Domain::Restart, l);
    let start: Vec<u8> = (0..r).map(|_| if rng.random::<bool>() { 2 } else { 1 }).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.shuffle(&mut rng);
    let mut evals = 0;
    let start = ScopeVector::new(start).expect("values are 1 or 2");
    let (s, f) = descend(objective, start, &order, &mut evals);
    (s, f, evals)
}

/// Multi-start randomized coordinate descent starting from the all-ones
/// incumbent. Restart `l` draws from its own stream, so the result does not
/// depend on how restarts are scheduled.
pub fn stochastic(objective: &Objective, restarts: usize, seed: u64) -> Result<SearchResult, SearchError> {
    if restarts == 0 {
        return Err(SearchError::NoRestarts);
    }
    let ones = ScopeVector::all_ones(objective.n_groups());
    let f_all_ones = objective.value(&ones);
    let mut result = SearchResult {
        s_min: ones,
        f_min: f_all_ones,
        criterion: objective.criterion(),
        f_all_ones,
        evaluations: 1,
        restarts_improved: 0,
    };
    for l in 0..restarts as u64 {
        let (s, f, evals) = restart(objective, seed, l);
        result.evaluations += evals;
        if f < result.f_min {
            result.s_min = s;
            result.f_min = f;
            result.restarts_improved += 1;
        }
    }
    Ok(result)
}
