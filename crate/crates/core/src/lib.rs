//! Subgroup balancing propensity scores (SBPS).
//!
//! Estimates subgroup average treatment effects on the treated from
//! observational data. For every subgroup the propensity score comes either
//! from a logistic model fitted on the overall sample or from one fitted on
//! that subgroup alone; the per-subgroup choice (the *scope vector*) is picked
//! to minimize a covariate-balance criterion that looks at the overall sample
//! and every subgroup at once.
//!
//! The pipeline is:
//!
//! 1. [`propensity::precompute_fits`] fits the overall model and every
//!    subgroup model once.
//! 2. [`search`] chooses the scope vector by exhaustive enumeration or by
//!    multi-start randomized coordinate descent, minimizing either the
//!    matching-based criterion ([`balance::f_smd`]) or the weighting-based one
//!    ([`balance::f_psw`]).
//! 3. [`matching`] or odds weighting produce the subgroup estimates in
//!    [`estimators`].
//! 4. [`inference`] adds stratified-bootstrap standard errors, normal p-values
//!    and Benjamini-Hochberg adjustment.
//!
//! [`simulation`] reproduces the benchmark designs and performance measures.

pub mod balance;
pub mod data;
pub mod estimators;
pub mod inference;
pub mod io;
pub mod logistic;
pub mod matching;
pub mod pipeline;
pub mod propensity;
pub mod rng;
pub mod search;
pub mod simulation;
pub mod terms;

pub use data::{Dataset, SubgroupIndex, UnitRecord, Violation};
pub use pipeline::{Estimator, Method, PipelineConfig, SearchMode};
pub use propensity::{FitCache, PropensityFit, ScopeVector};
pub use search::{Criterion, SearchResult};

/// Lower and upper clamp applied to every propensity score before it enters
/// a logit or an odds ratio.
pub const PROB_EPS: f64 = 1e-12;

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}
