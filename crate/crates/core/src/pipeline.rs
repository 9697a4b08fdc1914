//! End-to-end analysis: fits, scope selection, matching or weighting, and
//! subgroup estimates.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::data::{build_index, DataError, Dataset, SubgroupIndex};
pub use crate::estimators::Estimator;
use crate::estimators::{self, SubgroupEffects};
use crate::matching::{MatchedSample, MatchingError};
use crate::propensity::{self, FitCache, PropensityError, PropensityFit, ScopeVector, WarmStart};
use crate::search::{self, CandidateMatches, Criterion, Objective, SearchError, SearchResult};

/// How propensity scores are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Overall-sample fit for every subgroup.
    Traditional,
    /// Scope vector minimizing the matching criterion.
    SbpsSmd,
    /// Scope vector minimizing the weighting criterion.
    SbpsPsw,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Traditional, Method::SbpsSmd, Method::SbpsPsw];

    pub fn criterion(self) -> Option<Criterion> {
        match self {
            Method::Traditional => None,
            Method::SbpsSmd => Some(Criterion::Smd),
            Method::SbpsPsw => Some(Criterion::Psw),
        }
    }

    pub fn sbps(criterion: Criterion) -> Self {
        match criterion {
            Criterion::Smd => Method::SbpsSmd,
            Criterion::Psw => Method::SbpsPsw,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Traditional => "traditional",
            Method::SbpsSmd => "sbps-smd",
            Method::SbpsPsw => "sbps-psw",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "traditional" => Ok(Method::Traditional),
            "sbps-smd" => Ok(Method::SbpsSmd),
            "sbps-psw" => Ok(Method::SbpsPsw),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Exhaustive { cap: usize },
    Stochastic { restarts: usize },
    /// Exhaustive when the subgroup count is at most `cap`, stochastic otherwise.
    Auto { cap: usize, restarts: usize },
}

impl Default for SearchMode {
    fn default() -> Self {
        SearchMode::Auto { cap: search::DEFAULT_EXHAUSTIVE_CAP, restarts: 1000 }
    }
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchMode::Exhaustive { .. } => f.write_str("exhaustive"),
            SearchMode::Stochastic { restarts } => write!(f, "stochastic(L={restarts})"),
            SearchMode::Auto { cap, restarts } => write!(f, "auto(cap={cap},L={restarts})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub method: Method,
    pub estimator: Estimator,
    pub search: SearchMode,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { method: Method::SbpsSmd, estimator: Estimator::Direct, search: SearchMode::default(), seed: 1 }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Propensity(#[from] PropensityError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// Everything computed once per dataset and shared by every method.
#[derive(Debug, Clone)]
pub struct Prepared<'a> {
    pub dataset: &'a Dataset,
    pub index: SubgroupIndex,
    pub cache: FitCache,
    pub candidates: CandidateMatches,
}

impl<'a> Prepared<'a> {
    pub fn new(dataset: &'a Dataset) -> Result<Self, PipelineError> {
        Self::with_warm_start(dataset, &WarmStart::default())
    }

    pub fn with_warm_start(dataset: &'a Dataset, warm: &WarmStart) -> Result<Self, PipelineError> {
        let cache = propensity::precompute_fits_with(dataset, warm)?;
        let index = build_index(dataset)?;
        let candidates = CandidateMatches::new(&index, &cache)?;
        Ok(Self { dataset, index, cache, candidates })
    }

    pub fn objective(&self, criterion: Criterion) -> Objective {
        match criterion {
            Criterion::Smd => Objective::smd(self.dataset, &self.index, &self.candidates),
            Criterion::Psw => Objective::psw(self.dataset, &self.index, &self.cache),
        }
    }

    pub fn search(&self, criterion: Criterion, mode: SearchMode, seed: u64) -> Result<SearchResult, SearchError> {
        let obj = self.objective(criterion);
        match mode {
            SearchMode::Exhaustive { cap } => search::exhaustive(&obj, cap),
            SearchMode::Stochastic { restarts } => search::stochastic(&obj, restarts, seed),
            SearchMode::Auto { cap, restarts } => {
                if self.dataset.n_groups <= cap {
                    search::exhaustive(&obj, cap)
                } else {
                    search::stochastic(&obj, restarts, seed)
                }
            }
        }
    }

    pub fn choose_scope(
        &self,
        method: Method,
        mode: SearchMode,
        seed: u64,
    ) -> Result<(ScopeVector, Option<SearchResult>), PipelineError> {
        match method.criterion() {
            None => Ok((ScopeVector::all_ones(self.dataset.n_groups), None)),
            Some(c) => {
                let res = self.search(c, mode, seed)?;
                Ok((res.s_min.clone(), Some(res)))
            }
        }
    }

    pub fn propensity(&self, s: &ScopeVector) -> Result<PropensityFit, PipelineError> {
        Ok(propensity::score(self.dataset, &self.cache, s)?)
    }

    pub fn matched(&self, s: &ScopeVector) -> MatchedSample {
        self.candidates.assemble(s)
    }

    pub fn estimate(&self, s: &ScopeVector, estimator: Estimator) -> Result<SubgroupEffects, PipelineError> {
        Ok(match estimator {
            Estimator::Direct => estimators::tau_direct(self.dataset, &self.matched(s))?,
            Estimator::Psw => estimators::tau_psw(self.dataset, &self.propensity(s)?)?,
        })
    }
}

/// Result of one analysis run.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub scope: ScopeVector,
    pub search: Option<SearchResult>,
    pub propensity: PropensityFit,
    pub matched: MatchedSample,
    pub effects: SubgroupEffects,
    pub cache: FitCache,
}

pub fn run(dataset: &Dataset, config: &PipelineConfig) -> Result<Analysis, PipelineError> {
    let prep = Prepared::new(dataset)?;
    let (scope, search) = prep.choose_scope(config.method, config.search, config.seed)?;
    let effects = prep.estimate(&scope, config.estimator)?;
    Ok(Analysis {
        propensity: prep.propensity(&scope)?,
        matched: prep.matched(&scope),
        scope,
        search,
        effects,
        cache: prep.cache,
    })
}
