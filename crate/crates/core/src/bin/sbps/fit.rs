use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use sbps::balance::{self, BalanceRow};
use sbps::data::{build_index, Dataset};
use sbps::inference::{self, BootstrapMode, BootstrapSe, EffectReport, ReportMeta};
use sbps::io::{read_csv, ReadOptions};
use sbps::pipeline::{Prepared, SearchMode};
use sbps::terms::TermList;
use sbps::{Criterion, Estimator, Method};

use crate::config::{self, opt, parse_list, write_table, ConfigFile, Manifest};

const KNOWN_KEYS: [&str; 15] = [
    "input",
    "covariates",
    "categorical",
    "method",
    "criterion",
    "estimator",
    "search",
    "restarts",
    "cap",
    "bootstrap",
    "seed",
    "out",
    "workers",
    "no-outcome",
    "fixed-scope",
];

/// Subgroup limit of an explicitly requested exhaustive search.
const MAX_EXHAUSTIVE: usize = 24;

#[derive(Args, Debug)]
pub struct FitArgs {
    /// CSV with columns z, g, y and covariates.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Model terms, e.g. "x1,x2,x1^2,x1*x4". Defaults to every covariate column.
    #[arg(long)]
    covariates: Option<String>,
    /// Columns to one-hot encode (first level is the baseline).
    #[arg(long)]
    categorical: Option<String>,
    /// traditional or sbps.
    #[arg(long)]
    method: Option<String>,
    /// Balance criterion for the scope search: smd or psw.
    #[arg(long)]
    criterion: Option<String>,
    /// direct (matching) or psw (odds weighting).
    #[arg(long)]
    estimator: Option<String>,
    /// exhaustive, stochastic or auto.
    #[arg(long)]
    search: Option<String>,
    /// Restarts of the stochastic search.
    #[arg(long)]
    restarts: Option<usize>,
    /// Largest subgroup count searched exhaustively in auto mode.
    #[arg(long)]
    cap: Option<usize>,
    /// Bootstrap replicates for standard errors (0 disables).
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Balance-only run on data without outcomes.
    #[arg(long)]
    no_outcome: bool,
    /// Keep the original scope vector in bootstrap replicates.
    #[arg(long)]
    fixed_scope: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub covariates: Option<String>,
    pub categorical: Vec<String>,
    pub method: Method,
    pub estimator: Estimator,
    pub search: SearchMode,
    pub bootstrap: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub no_outcome: bool,
    pub bootstrap_mode: BootstrapMode,
}

impl RunConfig {
    fn resolve(a: FitArgs) -> Result<Self> {
        let file = ConfigFile::load(a.config.as_deref())?;
        file.check_known(&KNOWN_KEYS)?;
        let input = file.pick(a.input, "input")?.context("--input is required")?;
        let criterion: Criterion =
            file.pick(a.criterion, "criterion")?.as_deref().unwrap_or("smd").parse().map_err(anyhow::Error::msg)?;
        let method = match file.pick(a.method, "method")?.as_deref().unwrap_or("sbps") {
            "sbps" => Method::sbps(criterion),
            other => other.parse().map_err(anyhow::Error::msg)?,
        };
        let estimator = file.pick(a.estimator, "estimator")?.as_deref().unwrap_or("direct").parse().map_err(anyhow::Error::msg)?;
        let restarts = file.pick(a.restarts, "restarts")?.unwrap_or(1000);
        let cap = file.pick(a.cap, "cap")?;
        let search = match file.pick(a.search, "search")?.as_deref().unwrap_or("auto") {
            "exhaustive" => SearchMode::Exhaustive { cap: cap.unwrap_or(MAX_EXHAUSTIVE) },
            "stochastic" => SearchMode::Stochastic { restarts },
            "auto" => SearchMode::Auto { cap: cap.unwrap_or(sbps::search::DEFAULT_EXHAUSTIVE_CAP), restarts },
            other => bail!("unknown search mode `{other}` (expected exhaustive, stochastic or auto)"),
        };
        Ok(Self {
            input,
            covariates: file.pick(a.covariates, "covariates")?,
            categorical: file.pick(a.categorical, "categorical")?.map(|c| parse_list(&c, "categorical")).transpose()?.unwrap_or_default(),
            method,
            estimator,
            search,
            bootstrap: file.pick(a.bootstrap, "bootstrap")?.unwrap_or(200),
            seed: file.pick(a.seed, "seed")?.unwrap_or(1),
            out: file.pick(a.out, "out")?.unwrap_or_else(|| PathBuf::from("sbps-out")),
            workers: file.pick(a.workers, "workers")?,
            no_outcome: file.flag(a.no_outcome, "no-outcome")?,
            bootstrap_mode: if file.flag(a.fixed_scope, "fixed-scope")? {
                BootstrapMode::FixedScope
            } else {
                BootstrapMode::Reoptimize
            },
        })
    }

    fn echo(&self, m: &mut Manifest) {
        m.set("input", self.input.display());
        m.set("covariates", self.covariates.as_deref().unwrap_or("(all)"));
        m.set("categorical", self.categorical.join(","));
        m.set("method", self.method);
        m.set("estimator", self.estimator);
        m.set("search", self.search);
        m.set("bootstrap", self.bootstrap);
        m.set("bootstrap_mode", self.bootstrap_mode);
        m.set("seed", self.seed);
        m.set("no_outcome", self.no_outcome);
    }
}

/// Raw columns referenced by a term list, in first-use order.
fn referenced_columns(spec: &str) -> Vec<String> {
    let mut cols: Vec<String> = Vec::new();
    for term in spec.split(',') {
        for factor in term.split('*') {
            let name = factor.split('^').next().unwrap_or("").trim().to_string();
            if !name.is_empty() && !cols.contains(&name) {
                cols.push(name);
            }
        }
    }
    cols
}

/// Reads the input and evaluates the model terms. A bare categorical column
/// name in the term list stands for all of its indicator columns.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let covariates = cfg.covariates.as_deref().map(referenced_columns);
    let opts = ReadOptions {
        covariates: covariates.clone(),
        categorical: cfg.categorical.clone(),
        outcome_optional: cfg.no_outcome,
    };
    let raw = read_csv(&cfg.input, &opts).with_context(|| format!("reading {}", cfg.input.display()))?;
    let Some(spec) = &cfg.covariates else {
        return Ok(raw);
    };
    let expanded: Vec<String> = spec
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .flat_map(|t| {
            if cfg.categorical.iter().any(|c| c == t) {
                let prefix = format!("{t}=");
                raw.covariate_names.iter().filter(|n| n.starts_with(&prefix)).cloned().collect()
            } else {
                vec![t.to_string()]
            }
        })
        .collect();
    Ok(TermList::parse(&expanded.join(","))?.apply(&raw)?)
}

pub fn run(a: FitArgs) -> Result<()> {
    let cfg = RunConfig::resolve(a)?;
    crate::set_workers(cfg.workers)?;
    let ds = load_dataset(&cfg)?;
    if !cfg.no_outcome && !ds.has_outcomes() {
        bail!("input has missing outcomes; use --no-outcome for a balance-only run");
    }
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;

    let mut m = Manifest::new("fit");
    cfg.echo(&mut m);
    m.set("input_sha256", config::file_sha256(&cfg.input)?);
    m.set("units", ds.len());
    m.set("subgroups", ds.n_groups);
    m.set("terms", ds.covariate_names.join(","));

    let prep = Prepared::new(&ds)?;
    let (scope, search) = prep.choose_scope(cfg.method, cfg.search, cfg.seed)?;
    let criterion = cfg.method.criterion().unwrap_or(Criterion::Smd);
    let f_value = search.as_ref().map_or_else(|| prep.objective(criterion).value(&scope), |s| s.f_min);
    let matched = prep.matched(&scope);
    let index = build_index(&ds)?;
    let labels = &ds.group_labels;

    for (r, label) in labels.iter().enumerate() {
        let sub = scope.uses_subgroup_fit(r);
        if prep.cache.quasi_separated(r, sub) {
            m.warn(format!("subgroup {}: quasi-separation in the {} fit", label, if sub { "subgroup" } else { "overall" }));
        }
        if !prep.cache.dropped_terms[r].is_empty() {
            m.warn(format!("subgroup {}: terms dropped from subgroup fit: {}", label, prep.cache.dropped_terms[r].join(",")));
        }
        let sg = &matched.subgroups[r];
        if !sg.dropped_treated.is_empty() {
            m.warn(format!("subgroup {}: {} treated units outside the caliper", label, sg.dropped_treated.len()));
        }
    }

    let mut report = None;
    if !cfg.no_outcome {
        let effects = prep.estimate(&scope, cfg.estimator)?;
        let se = if cfg.bootstrap >= 2 {
            let pc = sbps::PipelineConfig { method: cfg.method, estimator: cfg.estimator, search: cfg.search, seed: cfg.seed };
            inference::bootstrap_se(&ds, &pc, cfg.bootstrap, cfg.seed, cfg.bootstrap_mode)?
        } else {
            BootstrapSe { se: vec![None; ds.n_groups], undefined: vec![0; ds.n_groups], replicates: 0 }
        };
        for (r, t) in effects.tau.iter().enumerate() {
            if t.is_none() {
                m.warn(format!("subgroup {}: effect undefined", labels[r]));
            }
        }
        let meta = ReportMeta {
            replicates: cfg.bootstrap,
            seed: cfg.seed,
            method: cfg.method,
            estimator: cfg.estimator,
            scope: scope.clone(),
            bootstrap_mode: cfg.bootstrap_mode,
        };
        report = Some(EffectReport::new(labels, &effects, &se, meta));
    }
    let balance_rows = balance::smd_table(&ds, &matched)?;

    let hash = m.hash();
    m.write(&cfg.out)?;
    if let Some(rep) = &report {
        write_effects(&cfg.out, &hash, rep, &index, &matched)?;
    }
    let scope_rows: Vec<Vec<String>> = (0..ds.n_groups)
        .map(|r| {
            let sg = &matched.subgroups[r];
            vec![
                labels[r].clone(),
                scope.values()[r].to_string(),
                index.treated[r].len().to_string(),
                index.control[r].len().to_string(),
                sg.n_matched().to_string(),
                sg.dropped_treated.len().to_string(),
                sg.caliper.to_string(),
            ]
        })
        .collect();
    write_table(
        &cfg.out,
        "scope.csv",
        &hash,
        &["subgroup", "scope", "n_treated", "n_control", "matched_treated", "dropped_treated", "caliper"],
        &scope_rows,
    )?;
    let objective = vec![vec![
        criterion.to_string(),
        f_value.to_string(),
        search.as_ref().map_or_else(|| f_value.to_string(), |s| s.f_all_ones.to_string()),
        search.as_ref().map_or(0, |s| s.evaluations).to_string(),
    ]];
    write_table(&cfg.out, "objective.csv", &hash, &["criterion", "f_value", "f_all_ones", "evaluations"], &objective)?;
    write_balance(&cfg.out, &hash, &balance_rows, labels)?;

    let summary = crate::report::fit_summary(&cfg.out)?;
    fs::write(cfg.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn write_effects(
    dir: &Path,
    hash: &str,
    rep: &EffectReport,
    index: &sbps::SubgroupIndex,
    matched: &sbps::matching::MatchedSample,
) -> Result<()> {
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            vec![
                row.label.clone(),
                opt(row.tau),
                opt(row.se),
                opt(row.ci_low),
                opt(row.ci_high),
                opt(row.p_value),
                opt(row.p_adjusted),
                index.treated[r].len().to_string(),
                index.control[r].len().to_string(),
                matched.subgroups[r].n_matched().to_string(),
                row.bootstrap_undefined.to_string(),
            ]
        })
        .collect();
    write_table(
        dir,
        "effects.csv",
        hash,
        &[
            "subgroup",
            "tau",
            "se",
            "ci_low",
            "ci_high",
            "p_value",
            "p_adjusted",
            "n_treated",
            "n_control",
            "n_matched",
            "bootstrap_undefined",
        ],
        &rows,
    )
}

fn write_balance(dir: &Path, hash: &str, rows: &[BalanceRow], labels: &[String]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|b| vec![labels[b.r - 1].clone(), b.covariate.clone(), opt(b.before), opt(b.after)])
        .collect();
    write_table(dir, "balance.csv", hash, &["subgroup", "covariate", "smd_before", "smd_after"], &rows)
}
