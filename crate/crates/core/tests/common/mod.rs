//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use sbps::balance;
use sbps::data::{build_index, Dataset};
use sbps::logistic::DesignMatrix;
use sbps::matching;
use sbps::propensity::{self, FitCache};
use sbps::{Criterion, ScopeVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// BH by the textbook formula q_(i) = min_{k >= i} min(1, m p_(k) / k), O(m^2).
pub fn bh_oracle(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut sorted: Vec<(f64, usize)> = p.iter().copied().zip(0..).collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out = vec![0.0; m];
    for i in 0..m {
        let mut q = 1.0_f64;
        for (k, &(pk, _)) in sorted.iter().enumerate().skip(i) {
            q = q.min(m as f64 * pk / (k + 1) as f64);
        }
        out[sorted[i].1] = q;
    }
    out
}

/// Per-control weights by direct scan: each treated unit finds every control
/// at its minimum distance (within `tol`) and splits one unit of weight
/// evenly; units with nothing inside the caliper are dropped.
pub fn matching_oracle(treated: &[f64], control: &[f64], caliper: f64, tol: f64) -> (Vec<bool>, Vec<f64>) {
    let mut w = vec![0.0; control.len()];
    let mut kept = Vec::with_capacity(treated.len());
    for &t in treated {
        let best = control.iter().map(|c| (c - t).abs()).fold(f64::INFINITY, f64::min);
        if best > caliper {
            kept.push(false);
            continue;
        }
        kept.push(true);
        let ties: Vec<usize> = (0..control.len()).filter(|&j| (control[j] - t).abs() <= best + tol).collect();
        for j in &ties {
            w[*j] += 1.0 / ties.len() as f64;
        }
    }
    (kept, w)
}

/// Criterion value from scratch: score, match, moments.
pub fn criterion_value(ds: &Dataset, cache: &FitCache, s: &ScopeVector, c: Criterion) -> f64 {
    let p = propensity::score(ds, cache, s).unwrap();
    match c {
        Criterion::Smd => {
            let index = build_index(ds).unwrap();
            let m = matching::match_all_indexed(&index, &p).unwrap();
            match balance::smd_moments(ds, &m) {
                Ok(mom) => balance::f_smd(&mom),
                Err(_) => f64::INFINITY,
            }
        }
        Criterion::Psw => balance::f_psw(&balance::psw_moments(ds, &p)),
    }
}

/// Minimum over all 2^R scope vectors; ties go to fewer subgroup fits, then
/// lexicographic order.
pub fn brute_force(ds: &Dataset, cache: &FitCache, c: Criterion) -> (ScopeVector, f64) {
    let r = ds.n_groups;
    let mut all: Vec<(ScopeVector, f64)> =
        (0..1u64 << r).map(|m| ScopeVector::from_mask(m, r)).map(|s| (s.clone(), criterion_value(ds, cache, &s, c))).collect();
    all.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(a.0.count_subgroup_fits().cmp(&b.0.count_subgroup_fits()))
            .then(a.0.values().cmp(b.0.values()))
    });
    all.swap_remove(0)
}

/// Random logistic problem: intercept plus `k` Gaussian covariates.
pub fn logistic_problem(seed: u64, n: usize, beta: &[f64]) -> (DesignMatrix, Vec<u8>) {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let p = beta.len();
    let mut data = Vec::with_capacity(n * p);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = vec![1.0];
        row.extend((1..p).map(|_| normal.sample(&mut r)));
        let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
        z.push(u8::from(r.random::<f64>() < 1.0 / (1.0 + (-eta).exp())));
        data.extend(row);
    }
    let labels = (0..p).map(|j| format!("c{j}")).collect();
    (DesignMatrix::new(n, labels, data).unwrap(), z)
}

/// Observed Fisher information X' W X at `beta`.
pub fn information(design: &DesignMatrix, beta: &[f64]) -> nalgebra::DMatrix<f64> {
    let p = beta.len();
    let mut h = nalgebra::DMatrix::zeros(p, p);
    for i in 0..design.n_rows() {
        let x = design.row(i);
        let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
        let pi = 1.0 / (1.0 + (-eta).exp());
        let w = pi * (1.0 - pi);
        for a in 0..p {
            for b in 0..p {
                h[(a, b)] += w * x[a] * x[b];
            }
        }
    }
    h
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    (0..at.len())
        .map(|j| {
            let mut up = at.to_vec();
            let mut dn = at.to_vec();
            up[j] += h;
            dn[j] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// Small simulated dataset with linear analysis terms.
pub fn small_dataset(groups: usize, units_per_group: usize, seed: u64) -> Dataset {
    let cfg = sbps::simulation::Sim1Config { groups, units_per_group, seed, ..Default::default() };
    let sim = sbps::simulation::generate_sim1(&cfg, 0);
    cfg.analysis_terms(false).apply(&sim.dataset).unwrap()
}
