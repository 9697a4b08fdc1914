use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::Args;

use crate::config::{fmt2, read_manifest_hash, render_table, SavedTable};

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Output directory of a previous `fit` or `simulate` run.
    #[arg(long)]
    dir: PathBuf,
}

/// Fails when a table was written by a different run than the manifest.
fn check_hash(dir: &Path, tables: &[(&str, &SavedTable)]) -> Result<String> {
    let hash = read_manifest_hash(dir)?;
    for (name, t) in tables {
        if t.hash.as_deref() != Some(hash.as_str()) {
            bail!("{name} does not carry the manifest hash {hash}");
        }
    }
    Ok(hash)
}

fn manifest_notes(dir: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    Ok(text
        .lines()
        .filter_map(|l| l.strip_prefix("note=").or_else(|| l.strip_prefix("warning=")).map(String::from))
        .collect())
}

fn p_fmt(cell: &str) -> String {
    match cell.parse::<f64>() {
        Ok(p) if p < 0.005 => "<0.01".into(),
        _ => fmt2(cell),
    }
}

pub fn fit_summary(dir: &Path) -> Result<String> {
    let scope = SavedTable::read(dir, "scope.csv")?;
    let objective = SavedTable::read(dir, "objective.csv")?;
    let effects = dir.join("effects.csv").exists().then(|| SavedTable::read(dir, "effects.csv")).transpose()?;
    let mut tables = vec![("scope.csv", &scope), ("objective.csv", &objective)];
    if let Some(e) = &effects {
        tables.push(("effects.csv", e));
    }
    let hash = check_hash(dir, &tables)?;

    let mut s = format!("run {}\n\n", &hash[..12]);
    let (crit, f, f1) = (objective.col("criterion")?, objective.col("f_value")?, objective.col("f_all_ones")?);
    if let Some(row) = objective.rows.first() {
        s.push_str(&format!("criterion {}: F = {} (all-overall F = {})\n", row[crit], fmt2(&row[f]), fmt2(&row[f1])));
    }
    let (sg, sc) = (scope.col("subgroup")?, scope.col("scope")?);
    let n_sub = scope.rows.iter().filter(|r| r[sc] == "2").count();
    s.push_str(&format!("subgroups using their own fit: {n_sub} of {}\n\n", scope.rows.len()));

    if let Some(e) = &effects {
        let cols = ["subgroup", "tau", "se", "ci_low", "ci_high", "p_value", "p_adjusted"];
        let idx: Vec<usize> = cols.iter().map(|c| e.col(c)).collect::<Result<_>>()?;
        let rows: Vec<Vec<String>> = e
            .rows
            .iter()
            .map(|r| {
                let mut out = vec![r[idx[0]].clone()];
                out.extend(idx[1..5].iter().map(|&i| fmt2(&r[i])));
                out.extend(idx[5..].iter().map(|&i| p_fmt(&r[i])));
                out
            })
            .collect();
        s.push_str(&render_table(&cols, &rows));
    } else {
        let rows: Vec<Vec<String>> = scope.rows.iter().map(|r| vec![r[sg].clone(), r[sc].clone()]).collect();
        s.push_str(&render_table(&["subgroup", "scope"], &rows));
    }
    let notes = manifest_notes(dir)?;
    if !notes.is_empty() {
        s.push('\n');
        for n in notes {
            s.push_str(&format!("note: {n}\n"));
        }
    }
    Ok(s)
}

pub fn simulate_summary(dir: &Path) -> Result<String> {
    let perf = SavedTable::read(dir, "performance_summary.csv")?;
    let usage = SavedTable::read(dir, "scope_usage.csv")?;
    let per_group = SavedTable::read(dir, "performance.csv")?;
    let hash = check_hash(dir, &[("performance_summary.csv", &perf), ("scope_usage.csv", &usage), ("performance.csv", &per_group)])?;

    let mut s = format!("run {}\n", &hash[..12]);
    for n in manifest_notes(dir)? {
        s.push_str(&format!("note: {n}\n"));
    }
    let cols = ["spec", "method", "estimator", "mean_bias", "mean_rmse", "mean_coverage", "excluded"];
    let idx: Vec<usize> = cols.iter().map(|c| perf.col(c)).collect::<Result<_>>()?;
    let rows: Vec<Vec<String>> = perf
        .rows
        .iter()
        .map(|r| {
            let mut out: Vec<String> = idx[..3].iter().map(|&i| r[i].clone()).collect();
            out.extend(idx[3..6].iter().map(|&i| fmt2(&r[i])));
            out.push(r[idx[6]].clone());
            out
        })
        .collect();
    s.push('\n');
    s.push_str(&render_table(&["model", "method", "estimator", "B", "E", "C", "excluded"], &rows));
    if !usage.rows.is_empty() {
        let (sp, me, fr) = (usage.col("spec")?, usage.col("method")?, usage.col("subgroup_fit_fraction")?);
        let rows: Vec<Vec<String>> =
            usage.rows.iter().map(|r| vec![r[sp].clone(), r[me].clone(), fmt2(&r[fr])]).collect();
        s.push('\n');
        s.push_str(&render_table(&["model", "method", "share of subgroups using own fit"], &rows));
    }
    Ok(s)
}

pub fn run(a: ReportArgs) -> Result<()> {
    let summary = if a.dir.join("performance_summary.csv").exists() {
        simulate_summary(&a.dir)?
    } else if a.dir.join("scope.csv").exists() {
        fit_summary(&a.dir)?
    } else {
        bail!("{} holds no saved run", a.dir.display());
    };
    fs::write(a.dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
