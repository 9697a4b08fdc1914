//! Binary logistic regression by Newton-Raphson (IRLS) with step halving.
//!
//! Rows are stored densely but every pass works on the nonzero entries of
//! each row only, so a design made of subgroup indicators plus a few
//! covariates costs O(N * nnz^2) per iteration rather than O(N * p^2).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::PROB_EPS;

/// |linear predictor| beyond which a fitted probability is within
/// `PROB_EPS` of 0 or 1.
const BOUNDARY_ETA: f64 = 27.631_021_115_927_55;
const SEPARATION_RIDGE: f64 = 1e-8;
/// Pivot threshold (on the correlation scale of the Gram matrix) below which
/// a column is treated as a linear combination of earlier ones.
const RANK_TOL: f64 = 1e-10;
const MAX_HALVINGS: usize = 40;

/// Log-likelihood drop still counted as "no decrease". Near the optimum a
/// full Newton step changes the log-likelihood by less than its rounding
/// error, and a strict comparison would stall the iteration.
fn ll_slack(ll: f64) -> f64 {
    64.0 * f64::EPSILON * (1.0 + ll.abs())
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogisticError {
    #[error("design has {rows} rows but {expected} values were supplied")]
    DimensionMismatch { rows: usize, expected: usize },
    #[error("design has {cols} columns but only {rows} rows")]
    TooManyColumns { rows: usize, cols: usize },
    #[error("design columns are all zero: {0:?}")]
    ZeroColumns(Vec<String>),
    #[error("design is rank deficient; aliased columns: {0:?}")]
    RankDeficient(Vec<String>),
    #[error("response has a single class")]
    SingleClass,
    #[error("coefficient vector has {got} entries, design has {cols} columns")]
    CoefficientMismatch { got: usize, cols: usize },
}

/// Model matrix, one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    /// `data` is row-major. Rejects all-zero columns and more columns than rows.
    pub fn new(n_rows: usize, labels: Vec<String>, data: Vec<f64>) -> Result<Self, LogisticError> {
        let n_cols = labels.len();
        if data.len() != n_rows * n_cols {
            return Err(LogisticError::DimensionMismatch { rows: data.len(), expected: n_rows * n_cols });
        }
        if n_cols > n_rows {
            return Err(LogisticError::TooManyColumns { rows: n_rows, cols: n_cols });
        }
        let zero: Vec<String> = (0..n_cols)
            .filter(|&j| (0..n_rows).all(|i| data[i * n_cols + j] == 0.0))
            .map(|j| labels[j].clone())
            .collect();
        if !zero.is_empty() {
            return Err(LogisticError::ZeroColumns(zero));
        }
        Ok(Self { n_rows, n_cols, data, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<String>) -> Result<Self, LogisticError> {
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), labels, data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Copy without the named columns.
    pub fn without_columns(&self, drop: &[String]) -> Result<Self, LogisticError> {
        let keep: Vec<usize> = (0..self.n_cols).filter(|&j| !drop.contains(&self.labels[j])).collect();
        let labels = keep.iter().map(|&j| self.labels[j].clone()).collect();
        let data = (0..self.n_rows)
            .flat_map(|i| keep.iter().map(move |&j| self.data[i * self.n_cols + j]))
            .collect();
        Self::new(self.n_rows, labels, data)
    }

    pub fn linear_predictor(&self, beta: &[f64]) -> Result<Vec<f64>, LogisticError> {
        if beta.len() != self.n_cols {
            return Err(LogisticError::CoefficientMismatch { got: beta.len(), cols: self.n_cols });
        }
        Ok((0..self.n_rows).map(|i| dot(self.row(i), beta)).collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nonzero entries of every row, laid out contiguously.
struct SparseRows {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseRows {
    fn new(d: &DesignMatrix) -> Self {
        let mut offsets = Vec::with_capacity(d.n_rows + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for i in 0..d.n_rows {
            for (j, &v) in d.row(i).iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
        }
        Self { offsets, cols, vals }
    }

    fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    fn eta(&self, beta: &[f64], out: &mut [f64]) {
        for (i, e) in out.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            *e = c.iter().zip(v).map(|(&j, &x)| beta[j] * x).sum();
        }
    }

    /// Upper triangle of X' diag(w) X, mirrored.
    fn weighted_gram(&self, w: &[f64], p: usize) -> Vec<f64> {
        let mut h = vec![0.0; p * p];
        for (i, &wi) in w.iter().enumerate() {
            let (c, v) = self.row(i);
            for a in 0..c.len() {
                let wa = wi * v[a];
                let base = c[a] * p;
                for b in a..c.len() {
                    h[base + c[b]] += wa * v[b];
                }
            }
        }
        for a in 0..p {
            for b in (a + 1)..p {
                let (lo, hi) = (a * p + b, b * p + a);
                let s = h[lo] + h[hi];
                h[lo] = s;
                h[hi] = s;
            }
        }
        h
    }
}

/// Columns that are (numerically) linear combinations of earlier columns.
fn aliased_columns(rows: &SparseRows, n: usize, p: usize) -> Vec<usize> {
    let gram = rows.weighted_gram(&vec![1.0; n], p);
    let scale: Vec<f64> = (0..p).map(|j| gram[j * p + j].sqrt()).collect();
    let c = |a: usize, b: usize| gram[a * p + b] / (scale[a] * scale[b]);
    let mut l = vec![0.0; p * p];
    let mut aliased = Vec::new();
    for j in 0..p {
        let d = c(j, j) - (0..j).map(|k| l[j * p + k] * l[j * p + k]).sum::<f64>();
        if d <= RANK_TOL {
            aliased.push(j);
            continue;
        }
        let ljj = d.sqrt();
        l[j * p + j] = ljj;
        for i in (j + 1)..p {
            let s = c(i, j) - (0..j).map(|k| l[i * p + k] * l[j * p + k]).sum::<f64>();
            l[i * p + j] = s / ljj;
        }
    }
    aliased
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(x)) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn loglik_from_eta(eta: &[f64], z: &[u8]) -> f64 {
    eta.iter().zip(z).map(|(&e, &zi)| f64::from(zi) * e - softplus(e)).sum()
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the score vector.
    pub tol: f64,
    /// Starting coefficients; zeros when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8, start: None }
    }
}

/// Result of a logistic fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticCoefficients {
    pub beta: Vec<f64>,
    pub labels: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the score at `beta`.
    pub gradient_norm: f64,
    pub log_likelihood: f64,
    /// Set when fitted probabilities reached the clamp boundary or the
    /// Hessian needed a ridge to factor.
    pub quasi_separated: bool,
    /// Log-likelihood after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

pub fn fit(design: &DesignMatrix, z: &[u8]) -> Result<LogisticCoefficients, LogisticError> {
    fit_with(design, z, &FitOptions::default())
}

pub fn fit_with(
    design: &DesignMatrix,
    z: &[u8],
    opts: &FitOptions,
) -> Result<LogisticCoefficients, LogisticError> {
    let (n, p) = (design.n_rows, design.n_cols);
    if z.len() != n {
        return Err(LogisticError::DimensionMismatch { rows: n, expected: z.len() });
    }
    let treated = z.iter().filter(|&&v| v == 1).count();
    if treated == 0 || treated == n {
        return Err(LogisticError::SingleClass);
    }
    let rows = SparseRows::new(design);
    let aliased = aliased_columns(&rows, n, p);
    if !aliased.is_empty() {
        return Err(LogisticError::RankDeficient(
            aliased.into_iter().map(|j| design.labels[j].clone()).collect(),
        ));
    }

    let mut beta = match &opts.start {
        Some(s) if s.len() == p => s.clone(),
        Some(s) => return Err(LogisticError::CoefficientMismatch { got: s.len(), cols: p }),
        None => vec![0.0; p],
    };
    let mut eta = vec![0.0; n];
    rows.eta(&beta, &mut eta);
    let mut ll = loglik_from_eta(&eta, z);
    let mut trace = vec![ll];
    let mut ridge = 0.0;
    let mut quasi = false;
    let mut converged = false;
    let mut iterations = 0;
    let mut gnorm;
    let mut cand = vec![0.0; n];
    let mut w = vec![0.0; n];

    loop {
        let mut g = vec![0.0; p];
        for i in 0..n {
            let pi = sigmoid(eta[i]);
            if eta[i].abs() > BOUNDARY_ETA {
                quasi = true;
            }
            w[i] = pi * (1.0 - pi);
            let r = f64::from(z[i]) - pi;
            let (c, v) = rows.row(i);
            for (&j, &x) in c.iter().zip(v) {
                g[j] += x * r;
            }
        }
        gnorm = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if gnorm <= opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        if quasi && ridge == 0.0 {
            ridge = SEPARATION_RIDGE;
        }
        let h = rows.weighted_gram(&w, p);
        let step = loop {
            let mut m = DMatrix::from_row_slice(p, p, &h);
            for j in 0..p {
                m[(j, j)] += ridge;
            }
            match m.cholesky() {
                Some(ch) => break ch.solve(&DVector::from_column_slice(&g)),
                None => {
                    quasi = true;
                    ridge = if ridge == 0.0 { SEPARATION_RIDGE } else { ridge * 100.0 };
                }
            }
        };

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            rows.eta(&trial, &mut cand);
            let ll_new = loglik_from_eta(&cand, z);
            if ll_new >= ll - ll_slack(ll) {
                beta = trial;
                std::mem::swap(&mut eta, &mut cand);
                ll = ll_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            // No ascent direction left at machine precision.
            break;
        }
        trace.push(ll);
    }

    Ok(LogisticCoefficients {
        beta,
        labels: design.labels.clone(),
        converged,
        iterations,
        gradient_norm: gnorm,
        log_likelihood: ll,
        quasi_separated: quasi,
        trace,
    })
}

/// Fitted probabilities clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn predict(design: &DesignMatrix, coef: &LogisticCoefficients) -> Result<Vec<f64>, LogisticError> {
    Ok(design
        .linear_predictor(&coef.beta)?
        .into_iter()
        .map(|e| sigmoid(e).clamp(PROB_EPS, 1.0 - PROB_EPS))
        .collect())
}

pub fn log_likelihood(design: &DesignMatrix, z: &[u8], beta: &[f64]) -> Result<f64, LogisticError> {
    Ok(loglik_from_eta(&design.linear_predictor(beta)?, z))
}

/// Gradient of the log-likelihood, X'(z - p).
pub fn score(design: &DesignMatrix, z: &[u8], beta: &[f64]) -> Result<Vec<f64>, LogisticError> {
    let eta = design.linear_predictor(beta)?;
    let mut g = vec![0.0; design.n_cols];
    for (i, e) in eta.iter().enumerate() {
        let r = f64::from(z[i]) - sigmoid(*e);
        for (gj, x) in g.iter_mut().zip(design.row(i)) {
            *gj += x * r;
        }
    }
    Ok(g)
}
