//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Criteria 1-3 share one replicated experiment (100 datasets of 20 subgroups
//! x 100 units, 200 bootstrap draws, 100 search restarts) and dominate the
//! runtime.

mod common;

use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::Rng;

use sbps::balance;
use sbps::inference::{self, bh_adjust, p_value, BootstrapMode};
use sbps::logistic;
use sbps::matching::match_subgroup;
use sbps::pipeline::{Prepared, SearchMode};
use sbps::propensity::PropensityFit;
use sbps::simulation::{generate_sim1, run_experiment, ExperimentConfig, ModelSpec, Sim1Config};
use sbps::{Criterion, Estimator, Method, PipelineConfig};

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn check(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail }
}

fn table_criteria(out: &mut Vec<Outcome>) {
    let cfg = ExperimentConfig {
        replicates: 100,
        bootstrap: 200,
        search: SearchMode::Stochastic { restarts: 100 },
        bootstrap_mode: BootstrapMode::Reoptimize,
        seed: 20240601,
        methods: vec![Method::Traditional, Method::SbpsSmd],
        estimators: vec![Estimator::Direct],
        specs: vec![ModelSpec::Correct, ModelSpec::Misspecified],
    };
    let res = run_experiment(&Sim1Config::default(), &cfg).expect("experiment runs");
    let cell = |spec, method| res.table.cell(spec, method, Estimator::Direct).expect("cell present");
    let (ct, cs) = (cell(ModelSpec::Correct, Method::Traditional), cell(ModelSpec::Correct, Method::SbpsSmd));
    let (mt, ms) = (cell(ModelSpec::Misspecified, Method::Traditional), cell(ModelSpec::Misspecified, Method::SbpsSmd));
    let failures = res.failures.len();

    let (e_t, e_s) = (ct.mean_rmse().unwrap_or(f64::NAN), cs.mean_rmse().unwrap_or(f64::NAN));
    let ratio = e_s / e_t;
    out.push(check(
        "1 correct model, RMSE ratio SBPS-SMD/traditional < 0.85",
        ratio < 0.85,
        format!("E(sbps-smd)={e_s:.3} E(traditional)={e_t:.3} ratio={ratio:.3} failed replicates={failures}"),
    ));

    let (b_t, b_s) = (mt.mean_bias().unwrap_or(f64::NAN), ms.mean_bias().unwrap_or(f64::NAN));
    let (c_t, c_s) = (mt.mean_coverage().unwrap_or(f64::NAN), ms.mean_coverage().unwrap_or(f64::NAN));
    let b_ratio = b_s / b_t;
    out.push(check(
        "2 misspecified model, bias ratio < 0.6, coverage >= 0.90 vs <= 0.80",
        b_ratio < 0.6 && c_s >= 0.90 && c_t <= 0.80,
        format!(
            "B(sbps-smd)={b_s:.3} B(traditional)={b_t:.3} ratio={b_ratio:.3} C(sbps-smd)={c_s:.3} C(traditional)={c_t:.3} excluded={}",
            ms.excluded()
        ),
    ));

    let usage = |spec| {
        res.scope_usage
            .iter()
            .find(|u| u.spec == spec && u.method == Method::SbpsSmd)
            .map_or(f64::NAN, |u| u.mean_subgroup_fraction)
    };
    let (u_c, u_m) = (usage(ModelSpec::Correct), usage(ModelSpec::Misspecified));
    out.push(check(
        "3 share of subgroup fits in [0.55,0.90] correct, [0.70,0.97] misspecified",
        (0.55..=0.90).contains(&u_c) && (0.70..=0.97).contains(&u_m),
        format!("correct={u_c:.3} misspecified={u_m:.3}"),
    ));
}

fn search_soundness() -> Outcome {
    let mut r = common::rng(4);
    let (mut exact, mut hits, mut cases, mut above) = (0, 0, 0, 0);
    let mut mismatches = Vec::new();
    for d in 0..50u64 {
        let groups = r.random_range(2..=6);
        let cfg = Sim1Config { groups, units_per_group: r.random_range(30..=80), seed: 900 + d, ..Sim1Config::default() };
        let sim = generate_sim1(&cfg, d);
        let ds = cfg.analysis_terms(r.random_bool(0.5)).apply(&sim.dataset).unwrap();
        let prep = Prepared::new(&ds).unwrap();
        for c in [Criterion::Smd, Criterion::Psw] {
            cases += 1;
            let (s_bf, f_bf) = common::brute_force(&ds, &prep.cache, c);
            let ex = prep.search(c, SearchMode::Exhaustive { cap: 6 }, 0).unwrap();
            let f_ex = common::criterion_value(&ds, &prep.cache, &ex.s_min, c);
            if ex.s_min == s_bf && f_ex == f_bf {
                exact += 1;
            } else {
                mismatches.push(format!("dataset {d} {c}: {} vs {}", ex.s_min, s_bf));
            }
            let st = prep.search(c, SearchMode::Stochastic { restarts: 200 }, d).unwrap();
            let f_st = common::criterion_value(&ds, &prep.cache, &st.s_min, c);
            if (f_st - f_bf).abs() <= 1e-10 * (1.0 + f_bf.abs()) {
                hits += 1;
            }
            let f_ones = common::criterion_value(&ds, &prep.cache, &sbps::ScopeVector::all_ones(groups), c);
            if f_st > f_ones + 1e-12 * (1.0 + f_ones.abs()) {
                above += 1;
            }
        }
    }
    let rate = hits as f64 / cases as f64;
    check(
        "4 exhaustive = brute force, stochastic hit rate >= 0.90, never above all-ones",
        exact == cases && rate >= 0.90 && above == 0,
        format!("exact {exact}/{cases}, stochastic hits {hits}/{cases} ({rate:.3}), above all-ones {above} {mismatches:?}"),
    )
}

fn psw_moments_at_scale() -> Outcome {
    let cfg = Sim1Config { units_per_group: 2500, seed: 55, ..Sim1Config::default() };
    let sim = generate_sim1(&cfg, 0);
    let ds = cfg.analysis_terms(true).apply(&sim.dataset).unwrap();
    let p = PropensityFit::from_probabilities(&ds, &sim.true_propensity).unwrap();
    let m = balance::psw_moments(&ds, &p);
    let worst = m
        .overall
        .iter()
        .chain(&m.group_share)
        .chain(m.subgroup.iter().flatten())
        .fold(0.0_f64, |a, v| a.max(v.abs()));
    check("5 true-propensity weighting moments all below 0.02 at N=50000", worst < 0.02, format!("max |moment| = {worst:.5}"))
}

fn logits(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec((-40i32..40).prop_map(|v| v as f64 * 0.05), n)
}

fn matching_suite() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 2000, failure_persistence: None, ..Config::default() });
    let strategy = (logits(1..30), logits(1..30), 0.0f64..1.0, any::<u64>());
    let res = runner.run(&strategy, |(t, c, cal, seed)| {
        let m = match_subgroup(&t, &c, cal).unwrap();
        let (kept, w) = common::matching_oracle(&t, &c, cal, 1e-10);
        // weight sum equals the matched treated count
        let total: f64 = m.control_weights.iter().sum();
        prop_assert!((total - m.matched.len() as f64).abs() <= 1e-9);
        // caliper containment, against the oracle's kept set
        let matched: Vec<usize> = (0..t.len()).filter(|&i| kept[i]).collect();
        prop_assert_eq!(&m.matched, &matched);
        for &i in &m.matched {
            prop_assert!(c.iter().any(|x| (x - t[i]).abs() <= cal));
        }
        // tie splitting: per-control weights agree with the oracle
        for (a, b) in m.control_weights.iter().zip(&w) {
            prop_assert!((a - b).abs() <= 1e-9, "weights {:?} vs {:?}", m.control_weights, w);
        }
        // order independence: permuting controls permutes the weights
        let mut perm: Vec<usize> = (0..c.len()).collect();
        perm.shuffle(&mut common::rng(seed));
        let shuffled: Vec<f64> = perm.iter().map(|&j| c[j]).collect();
        let ms = match_subgroup(&t, &shuffled, cal).unwrap();
        prop_assert_eq!(&ms.matched, &m.matched);
        for (pos, &j) in perm.iter().enumerate() {
            prop_assert!((ms.control_weights[pos] - m.control_weights[j]).abs() <= 1e-9);
        }
        Ok(())
    });
    check(
        "6 matching properties over 2000 random cases",
        res.is_ok(),
        match res {
            Ok(()) => "weight sums, caliper, tie splits and control order all hold".into(),
            Err(e) => e.to_string(),
        },
    )
}

fn inference_suite() -> Outcome {
    let mut r = common::rng(7);
    let mut worst_bh = 0.0_f64;
    for _ in 0..1000 {
        let m = r.random_range(1..=60);
        let p: Vec<f64> = (0..m).map(|_| r.random::<f64>().powi(r.random_range(1..4))).collect();
        let got = bh_adjust(&p);
        for (a, b) in got.iter().zip(common::bh_oracle(&p)) {
            worst_bh = worst_bh.max((a - b).abs());
        }
    }
    let p196 = p_value(1.96, 1.0);

    let cfg = Sim1Config { groups: 4, units_per_group: 60, ..Sim1Config::default() };
    let ds = cfg.analysis_terms(true).apply(&generate_sim1(&cfg, 3).dataset).unwrap();
    let pc = PipelineConfig { method: Method::SbpsSmd, estimator: Estimator::Direct, search: SearchMode::default(), seed: 5 };
    let a = inference::bootstrap_se(&ds, &pc, 50, 99, BootstrapMode::Reoptimize).unwrap();
    let b = inference::bootstrap_se(&ds, &pc, 50, 99, BootstrapMode::Reoptimize).unwrap();
    let same = a == b && a.se.iter().all(Option::is_some);
    check(
        "7 BH vs step-up oracle, p(1.96) = 0.05, bootstrap determinism",
        worst_bh <= 1e-12 && (p196 - 0.05).abs() <= 5e-4 && same,
        format!("max BH gap {worst_bh:.2e}, p(1.96)={p196:.6}, bootstrap repeat identical={same}"),
    )
}

fn logistic_suite() -> Outcome {
    let beta = [-0.5, 1.0, -0.75, 0.3];
    let (d, z) = common::logistic_problem(8, 20_000, &beta);
    let fit = logistic::fit(&d, &z).unwrap();
    let cov = common::information(&d, &fit.beta).try_inverse().unwrap();
    let worst_se = (0..beta.len()).map(|j| (fit.beta[j] - beta[j]).abs() / cov[(j, j)].sqrt()).fold(0.0, f64::max);
    let residual = logistic::score(&d, &z, &fit.beta).unwrap().iter().fold(0.0_f64, |a, v| a.max(v.abs()));

    let mut worst_fd = 0.0_f64;
    let mut r = common::rng(9);
    for s in 0..50 {
        let b: Vec<f64> = (0..3).map(|_| r.random_range(-1.5..1.5)).collect();
        let (d, z) = common::logistic_problem(100 + s, 40, &b);
        let at: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
        let g = logistic::score(&d, &z, &at).unwrap();
        let fd = common::fd_gradient(|x| logistic::log_likelihood(&d, &z, x).unwrap(), &at, 1e-5);
        let norm = g.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-12);
        for (a, b) in g.iter().zip(&fd) {
            worst_fd = worst_fd.max((a - b).abs() / norm);
        }
    }
    check(
        "8 logistic recovery within 3 SE, score residual <= 1e-6, gradient vs finite differences",
        worst_se <= 3.0 && residual <= 1e-6 && worst_fd <= 1e-4 && fit.converged,
        format!("max |error|/SE={worst_se:.3}, residual={residual:.2e}, FD relative error={worst_fd:.2e}"),
    )
}

/// Matching on the true score in a large correctly specified sample: the
/// replicate average of every subgroup SMD stays below 0.1.
fn true_score_balance() -> Outcome {
    let cfg = Sim1Config { units_per_group: 1000, seed: 77, ..Sim1Config::default() };
    let reps = 100;
    let k = cfg.analysis_terms(true).0.len();
    let mut sums = vec![vec![0.0; k]; cfg.groups];
    let mut counts = vec![vec![0usize; k]; cfg.groups];
    for v in 0..reps {
        let sim = generate_sim1(&cfg, v);
        let ds = cfg.analysis_terms(true).apply(&sim.dataset).unwrap();
        let p = PropensityFit::from_probabilities(&ds, &sim.true_propensity).unwrap();
        let m = sbps::matching::match_all(&ds, &p).unwrap();
        for row in balance::smd_table(&ds, &m).unwrap() {
            let j = ds.covariate_names.iter().position(|c| *c == row.covariate).unwrap();
            if let Some(a) = row.after {
                sums[row.r - 1][j] += a;
                counts[row.r - 1][j] += 1;
            }
        }
    }
    let worst = sums
        .iter()
        .flatten()
        .zip(counts.iter().flatten())
        .map(|(s, &c)| (s / c as f64).abs())
        .fold(0.0, f64::max);
    check(
        "6b matching on true scores, replicate-mean SMD below 0.1 in every subgroup",
        worst < 0.1,
        format!("worst |mean SMD| over subgroups and terms = {worst:.4} ({reps} replicates)"),
    )
}

fn main() {
    let mut results = Vec::new();
    let t = Instant::now();
    table_criteria(&mut results);
    results.push(search_soundness());
    results.push(psw_moments_at_scale());
    results.push(matching_suite());
    results.push(true_score_balance());
    results.push(inference_suite());
    results.push(logistic_suite());
    results.sort_by_key(|o| o.id);
    let mut failed = 0;
    for o in &results {
        println!("criterion {}: {} ({})", o.id, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of {} passed in {:.0?}", results.len() - failed, results.len(), t.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
