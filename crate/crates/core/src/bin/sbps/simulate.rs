use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use sbps::inference::BootstrapMode;
use sbps::io::{read_csv, ReadOptions};
use sbps::pipeline::SearchMode;
use sbps::simulation::{
    run_experiment, ExperimentConfig, ExperimentResult, ModelSpec, Scenario, ShiwLikeConfig, Sim1Config,
};
use sbps::{Estimator, Method};

use crate::config::{opt, parse_list, write_table, ConfigFile, Manifest};

const KNOWN_KEYS: [&str; 23] = [
    "preset",
    "replicates",
    "bootstrap",
    "restarts",
    "seed",
    "sim-seed",
    "out",
    "workers",
    "fixed-scope",
    "methods",
    "estimators",
    "specs",
    "input",
    "categorical",
    "delta",
    "alpha",
    "beta0",
    "beta",
    "eta",
    "noise-sd",
    "drop",
    "groups",
    "units-per-group",
];

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// sim1-small, sim1-full, sim1-r40 or shiw-like.
    #[arg(long)]
    preset: Option<String>,
    /// Number of simulated datasets.
    #[arg(long)]
    replicates: Option<usize>,
    /// Bootstrap replicates per dataset.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Restarts of the stochastic scope search.
    #[arg(long)]
    restarts: Option<usize>,
    /// Master seed for searches and bootstrap.
    #[arg(long)]
    seed: Option<u64>,
    /// Seed of the data-generating process.
    #[arg(long)]
    sim_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// key=value file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Keep the original scope vector in bootstrap replicates.
    #[arg(long)]
    fixed_scope: bool,
    /// Subset of traditional,sbps-smd,sbps-psw.
    #[arg(long)]
    methods: Option<String>,
    /// Subset of direct,psw.
    #[arg(long)]
    estimators: Option<String>,
    /// Subset of correct,misspecified.
    #[arg(long)]
    specs: Option<String>,
    /// Subgroup count (sim1 presets).
    #[arg(long)]
    groups: Option<usize>,
    /// Units per subgroup (sim1 presets).
    #[arg(long)]
    units_per_group: Option<usize>,
    /// shiw-like: covariate CSV with columns z, g and covariates.
    #[arg(long)]
    input: Option<PathBuf>,
    /// shiw-like: columns to one-hot encode.
    #[arg(long)]
    categorical: Option<String>,
    /// shiw-like: subgroup fixed effects of the treatment model.
    #[arg(long)]
    delta: Option<String>,
    /// shiw-like: treatment coefficients, one per covariate.
    #[arg(long)]
    alpha: Option<String>,
    /// shiw-like: outcome intercept.
    #[arg(long)]
    beta0: Option<f64>,
    /// shiw-like: outcome coefficients, one per covariate.
    #[arg(long)]
    beta: Option<String>,
    /// shiw-like: true subgroup effects.
    #[arg(long)]
    eta: Option<String>,
    /// shiw-like: outcome noise sd.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// shiw-like: covariate left out of the misspecified model.
    #[arg(long)]
    drop: Option<String>,
}

impl std::str::FromStr for Wrapped<ModelSpec> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "correct" => Ok(Wrapped(ModelSpec::Correct)),
            "misspecified" => Ok(Wrapped(ModelSpec::Misspecified)),
            other => Err(format!("unknown model spec `{other}`")),
        }
    }
}

struct Wrapped<T>(T);

enum Preset {
    Sim1(Sim1Config),
    ShiwLike(ShiwLikeConfig),
}

fn list_f64(file: &ConfigFile, flag: Option<String>, key: &str) -> Result<Vec<f64>> {
    let s = file.pick(flag, key)?.with_context(|| format!("shiw-like needs --{key}"))?;
    parse_list(&s, key)
}

fn build(a: SimulateArgs) -> Result<(String, Preset, ExperimentConfig, Option<usize>)> {
    let file = ConfigFile::load(a.config.as_deref())?;
    file.check_known(&KNOWN_KEYS)?;
    let preset = file.pick(a.preset, "preset")?.unwrap_or_else(|| "sim1-small".into());
    let mut exp = match preset.as_str() {
        "sim1-full" => ExperimentConfig::full(),
        _ => ExperimentConfig::small(),
    };
    let sim_seed = file.pick(a.sim_seed, "sim-seed")?.unwrap_or(1);
    let scenario = match preset.as_str() {
        "sim1-small" | "sim1-full" | "sim1-r40" => {
            let mut c = Sim1Config { seed: sim_seed, ..Sim1Config::default() };
            if preset == "sim1-r40" {
                c.groups = 40;
                c.units_per_group = 50;
            }
            c.groups = file.pick(a.groups, "groups")?.unwrap_or(c.groups);
            c.units_per_group = file.pick(a.units_per_group, "units-per-group")?.unwrap_or(c.units_per_group);
            Preset::Sim1(c)
        }
        "shiw-like" => {
            let path: PathBuf = file.pick(a.input, "input")?.context("shiw-like needs --input")?;
            let categorical =
                file.pick(a.categorical, "categorical")?.map(|c| parse_list(&c, "categorical")).transpose()?.unwrap_or_default();
            let opts = ReadOptions { covariates: None, categorical, outcome_optional: true };
            let covariates = read_csv(&path, &opts).with_context(|| format!("reading {}", path.display()))?;
            let cfg = ShiwLikeConfig {
                covariates,
                delta: list_f64(&file, a.delta, "delta")?,
                alpha: list_f64(&file, a.alpha, "alpha")?,
                beta0: file.pick(a.beta0, "beta0")?.unwrap_or(0.0),
                beta: list_f64(&file, a.beta, "beta")?,
                eta: list_f64(&file, a.eta, "eta")?,
                noise_sd: file.pick(a.noise_sd, "noise-sd")?.unwrap_or(50.0),
                dropped_covariate: file.pick(a.drop, "drop")?,
                seed: sim_seed,
            };
            cfg.check()?;
            Preset::ShiwLike(cfg)
        }
        other => bail!("unknown preset `{other}` (expected sim1-small, sim1-full, sim1-r40 or shiw-like)"),
    };
    exp.replicates = file.pick(a.replicates, "replicates")?.unwrap_or(exp.replicates);
    exp.bootstrap = file.pick(a.bootstrap, "bootstrap")?.unwrap_or(exp.bootstrap);
    if let Some(l) = file.pick(a.restarts, "restarts")? {
        exp.search = SearchMode::Stochastic { restarts: l };
    }
    exp.seed = file.pick(a.seed, "seed")?.unwrap_or(exp.seed);
    if file.flag(a.fixed_scope, "fixed-scope")? {
        exp.bootstrap_mode = BootstrapMode::FixedScope;
    }
    if let Some(m) = file.pick(a.methods, "methods")? {
        exp.methods = parse_list::<Method>(&m, "methods")?;
    }
    if let Some(e) = file.pick(a.estimators, "estimators")? {
        exp.estimators = parse_list::<Estimator>(&e, "estimators")?;
    }
    if let Some(s) = file.pick(a.specs, "specs")? {
        exp.specs = parse_list::<Wrapped<ModelSpec>>(&s, "specs")?.into_iter().map(|w| w.0).collect();
    }
    if exp.methods.is_empty() || exp.estimators.is_empty() || exp.specs.is_empty() {
        bail!("methods, estimators and specs must be non-empty");
    }
    let workers = file.pick(a.workers, "workers")?;
    let out = file.pick(a.out, "out")?.unwrap_or_else(|| PathBuf::from(format!("sbps-{preset}")));
    Ok((out.to_string_lossy().into_owned(), scenario, exp, workers))
}

fn echo(m: &mut Manifest, preset: &str, scenario: &dyn Scenario, exp: &ExperimentConfig) {
    m.set("preset", preset);
    for (k, v) in scenario.describe() {
        m.set(&k, v);
    }
    m.set("replicates", exp.replicates);
    m.set("bootstrap", exp.bootstrap);
    m.set("bootstrap_mode", exp.bootstrap_mode);
    m.set("search", exp.search);
    m.set("seed", exp.seed);
    let join = |v: Vec<String>| v.join(",");
    m.set("methods", join(exp.methods.iter().map(ToString::to_string).collect()));
    m.set("estimators", join(exp.estimators.iter().map(ToString::to_string).collect()));
    m.set("specs", join(exp.specs.iter().map(ToString::to_string).collect()));
    m.set("terms_correct", scenario.analysis_terms(ModelSpec::Correct));
    m.set("terms_misspecified", scenario.analysis_terms(ModelSpec::Misspecified));
}

pub fn run(a: SimulateArgs) -> Result<()> {
    let preset = a.preset.clone().unwrap_or_default();
    let (out, scenario, exp, workers) = build(a)?;
    let preset = if preset.is_empty() { "sim1-small".to_string() } else { preset };
    crate::set_workers(workers)?;
    let out = PathBuf::from(out);
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mut m = Manifest::new("simulate");
    let res = match &scenario {
        Preset::Sim1(c) => {
            echo(&mut m, &preset, c, &exp);
            m.set("note", "covariates drawn as x1 ~ N(mu_r,1), x2 ~ Unif(0,1), x3 ~ N(0,1), x4 ~ Bernoulli(0.4)");
            run_experiment(c, &exp)?
        }
        Preset::ShiwLike(c) => {
            echo(&mut m, &preset, c, &exp);
            run_experiment(c, &exp)?
        }
    };
    record(&mut m, &res);
    let hash = m.hash();
    m.write(&out)?;
    write_tables(&out, &hash, &res)?;
    let summary = crate::report::simulate_summary(&out)?;
    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn record(m: &mut Manifest, res: &ExperimentResult) {
    m.set("redraws", res.redraws);
    m.set("failures", res.failures.len());
    for (v, spec, msg) in &res.failures {
        m.warn(format!("replicate {v} ({spec}): {msg}"));
    }
    for c in &res.table.cells {
        if c.excluded() > 0 {
            m.warn(format!(
                "{} {} {}: {} undefined subgroup estimates excluded",
                c.spec,
                c.method,
                c.estimator,
                c.excluded()
            ));
        }
    }
}

fn write_tables(dir: &std::path::Path, hash: &str, res: &ExperimentResult) -> Result<()> {
    let mut per_group = Vec::new();
    let mut summary = Vec::new();
    for c in &res.table.cells {
        let key = [c.spec.to_string(), c.method.to_string(), c.estimator.to_string()];
        for (r, g) in c.groups.iter().enumerate() {
            let mut row = key.to_vec();
            row.extend([
                (r + 1).to_string(),
                g.true_tau.to_string(),
                opt(g.bias),
                opt(g.rmse),
                opt(g.coverage),
                g.n_defined.to_string(),
                g.n_excluded.to_string(),
            ]);
            per_group.push(row);
        }
        let mut row = key.to_vec();
        row.extend([opt(c.mean_bias()), opt(c.mean_rmse()), opt(c.mean_coverage()), c.excluded().to_string()]);
        summary.push(row);
    }
    write_table(
        dir,
        "performance.csv",
        hash,
        &["spec", "method", "estimator", "subgroup", "true_tau", "bias", "rmse", "coverage", "n_defined", "n_excluded"],
        &per_group,
    )?;
    write_table(
        dir,
        "performance_summary.csv",
        hash,
        &["spec", "method", "estimator", "mean_bias", "mean_rmse", "mean_coverage", "excluded"],
        &summary,
    )?;
    let usage: Vec<Vec<String>> = res
        .scope_usage
        .iter()
        .map(|u| {
            vec![u.spec.to_string(), u.method.to_string(), u.mean_subgroup_fraction.to_string(), u.replicates.to_string()]
        })
        .collect();
    write_table(dir, "scope_usage.csv", hash, &["spec", "method", "subgroup_fit_fraction", "replicates"], &usage)
}
