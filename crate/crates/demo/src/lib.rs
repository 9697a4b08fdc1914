//! Browser demo for the `sbps` crate. Each export takes plain numbers or
//! text and returns a JSON string, so the page needs no bindings beyond
//! strings.

use rand_distr::{Distribution, Normal};
use sbps::inference::bh_adjust;
use sbps::matching::{caliper_width, match_subgroup};
use sbps::pipeline::Prepared;
use sbps::rng::{self, Domain};
use sbps::simulation::{try_generate_sim1, Sim1Config};
use sbps::{Criterion, Estimator, Method, SearchMode};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct GroupRow {
    label: String,
    scope: u8,
    n_treated: usize,
    n_control: usize,
    true_tau: f64,
    tau_traditional: Option<f64>,
    tau_sbps: Option<f64>,
}

#[derive(Serialize)]
struct SearchOutput {
    criterion: String,
    search: String,
    f_min: f64,
    f_all_ones: f64,
    evaluations: usize,
    groups: Vec<GroupRow>,
}

#[derive(Serialize)]
struct Failure {
    error: String,
}

fn to_json<T: Serialize>(v: Result<T, String>) -> String {
    match v {
        Ok(v) => serde_json::to_string(&v),
        Err(error) => serde_json::to_string(&Failure { error }),
    }
    .expect("plain data serializes")
}

/// Simulates one dataset with the misspecified analysis model and picks the
/// scope vector. Exhaustive up to 12 subgroups, `restarts` restarts above.
pub fn scope_search(groups: usize, units_per_group: usize, criterion: &str, restarts: usize, seed: u64) -> String {
    to_json(run_search(groups, units_per_group, criterion, restarts, seed))
}

fn run_search(groups: usize, units_per_group: usize, criterion: &str, restarts: usize, seed: u64) -> Result<SearchOutput, String> {
    let crit = match criterion {
        "smd" => Criterion::Smd,
        "psw" => Criterion::Psw,
        other => return Err(format!("unknown criterion '{other}'")),
    };
    if !(2..=40).contains(&groups) || !(10..=1000).contains(&units_per_group) {
        return Err("use 2-40 subgroups of 10-1000 units".into());
    }
    let cfg = Sim1Config { groups, units_per_group, seed, ..Default::default() };
    let sim = try_generate_sim1(&cfg, 0).map_err(|e| e.to_string())?;
    let ds = cfg.analysis_terms(false).apply(&sim.dataset).map_err(|e| e.to_string())?;
    let prep = Prepared::new(&ds).map_err(|e| e.to_string())?;
    let mode = if groups <= 12 { SearchMode::Exhaustive { cap: 12 } } else { SearchMode::Stochastic { restarts: restarts.max(1) } };
    let (scope, res) = prep.choose_scope(Method::sbps(crit), mode, seed).map_err(|e| e.to_string())?;
    let res = res.expect("SBPS runs a search");
    let estimator = match crit {
        Criterion::Smd => Estimator::Direct,
        Criterion::Psw => Estimator::Psw,
    };
    let trad = prep.estimate(&sbps::ScopeVector::all_ones(groups), estimator).map_err(|e| e.to_string())?;
    let chosen = prep.estimate(&scope, estimator).map_err(|e| e.to_string())?;
    let rows = (0..groups)
        .map(|r| GroupRow {
            label: ds.group_labels[r].clone(),
            scope: scope.values()[r],
            n_treated: prep.index.treated[r].len(),
            n_control: prep.index.control[r].len(),
            true_tau: sim.true_tau[r],
            tau_traditional: trad.tau[r],
            tau_sbps: chosen.tau[r],
        })
        .collect();
    Ok(SearchOutput {
        criterion: crit.to_string(),
        search: mode.to_string(),
        f_min: res.f_min,
        f_all_ones: res.f_all_ones,
        evaluations: res.evaluations,
        groups: rows,
    })
}

#[derive(Serialize)]
struct Link {
    treated: usize,
    control: usize,
    share: f64,
}

#[derive(Serialize)]
struct MatchOutput {
    treated: Vec<f64>,
    control: Vec<f64>,
    caliper: f64,
    dropped: Vec<usize>,
    control_weights: Vec<f64>,
    links: Vec<Link>,
}

/// Draws treated and control logits from two normals `gap` apart, rounded to
/// `grid` so ties appear, and matches them with the default caliper scaled by
/// `caliper_scale`.
pub fn caliper_matching(n_treated: usize, n_control: usize, gap: f64, grid: f64, caliper_scale: f64, seed: u64) -> String {
    to_json(run_matching(n_treated, n_control, gap, grid, caliper_scale, seed))
}

fn run_matching(n_treated: usize, n_control: usize, gap: f64, grid: f64, caliper_scale: f64, seed: u64) -> Result<MatchOutput, String> {
    if !(1..=500).contains(&n_treated) || !(1..=500).contains(&n_control) {
        return Err("use 1-500 units per arm".into());
    }
    let mut rng = rng::stream(seed, Domain::Demo, 0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let snap = |v: f64| if grid > 0.0 { (v / grid).round() * grid } else { v };
    let treated: Vec<f64> = (0..n_treated).map(|_| snap(gap + normal.sample(&mut rng))).collect();
    let control: Vec<f64> = (0..n_control).map(|_| snap(normal.sample(&mut rng))).collect();
    let all: Vec<f64> = treated.iter().chain(&control).copied().collect();
    let caliper = caliper_width(&all).map_err(|e| e.to_string())? * caliper_scale.max(0.0);
    let m = match_subgroup(&treated, &control, caliper).map_err(|e| e.to_string())?;
    let mut links = Vec::new();
    for &t in &m.matched {
        let single = match_subgroup(&treated[t..=t], &control, caliper).map_err(|e| e.to_string())?;
        for (c, &w) in single.control_weights.iter().enumerate() {
            if w > 0.0 {
                links.push(Link { treated: t, control: c, share: w });
            }
        }
    }
    Ok(MatchOutput { treated, control, caliper, dropped: m.dropped, control_weights: m.control_weights, links })
}

#[derive(Serialize)]
struct BhOutput {
    p: Vec<f64>,
    adjusted: Vec<f64>,
}

/// Parses p-values separated by commas, spaces or newlines.
pub fn bh(text: &str) -> String {
    to_json(run_bh(text))
}

fn run_bh(text: &str) -> Result<BhOutput, String> {
    let p = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| match t.parse::<f64>() {
            Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
            _ => Err(format!("'{t}' is not a p-value")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if p.is_empty() {
        return Err("enter at least one p-value".into());
    }
    Ok(BhOutput { adjusted: bh_adjust(&p), p })
}

#[wasm_bindgen(js_name = scopeSearch)]
pub fn scope_search_js(groups: usize, units_per_group: usize, criterion: &str, restarts: usize, seed: u32) -> String {
    scope_search(groups, units_per_group, criterion, restarts, seed.into())
}

#[wasm_bindgen(js_name = caliperMatching)]
pub fn caliper_matching_js(n_treated: usize, n_control: usize, gap: f64, grid: f64, caliper_scale: f64, seed: u32) -> String {
    caliper_matching(n_treated, n_control, gap, grid, caliper_scale, seed.into())
}

#[wasm_bindgen(js_name = bhAdjust)]
pub fn bh_js(text: &str) -> String {
    bh(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn search_reports_every_subgroup() {
        let v = parse(&scope_search(4, 60, "smd", 10, 3));
        assert_eq!(v["groups"].as_array().unwrap().len(), 4);
        assert!(v["f_min"].as_f64().unwrap() <= v["f_all_ones"].as_f64().unwrap());
        assert_eq!(v["search"], "exhaustive");
    }

    #[test]
    fn search_rejects_unknown_criterion() {
        assert!(parse(&scope_search(4, 60, "ks", 10, 3))["error"].is_string());
    }

    #[test]
    fn matching_links_carry_the_control_weights() {
        let v = parse(&caliper_matching(30, 40, 0.8, 0.25, 1.0, 7));
        let weights: Vec<f64> = v["control_weights"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap()).collect();
        let mut from_links = vec![0.0; weights.len()];
        for l in v["links"].as_array().unwrap() {
            from_links[l["control"].as_u64().unwrap() as usize] += l["share"].as_f64().unwrap();
        }
        for (a, b) in weights.iter().zip(&from_links) {
            assert!((a - b).abs() < 1e-12);
        }
        let matched = 30 - v["dropped"].as_array().unwrap().len();
        assert!((weights.iter().sum::<f64>() - matched as f64).abs() < 1e-9);
    }

    #[test]
    fn bh_parses_mixed_separators() {
        let v = parse(&bh("0.01, 0.04\n0.03 0.2"));
        let adj: Vec<f64> = v["adjusted"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap()).collect();
        assert_eq!(adj.len(), 4);
        assert!((adj[0] - 0.04).abs() < 1e-15);
        assert!(parse(&bh("0.5, 2"))["error"].is_string());
    }
}
