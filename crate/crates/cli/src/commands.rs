use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use lcrm_core::archive::{fmt_float, SampleArchive};
use lcrm_core::data::{
    build_partition, default_simulation, load_dataset, simulate_lcrm, standardize, write_dataset, SimulationSetup,
    StandardizationRecord,
};
use lcrm_core::predict::{predictive_report, write_probability_csv, write_survival_csv, TimePoint};
use lcrm_core::priors::check_propriety;
use lcrm_core::summaries::{
    column, compare, effective_sample_size, hpd_interval, modal_draws, summarize, ComparisonReport, ParameterSummary,
    PosteriorSummary,
};
use lcrm_core::{run_chain, run_rj_chain, Dataset, Error, ModelKind, ProprietyCondition, ProprietyReport, TimePartition};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{parse_float_list, RunArgs, RunConfig, CONFIG_FILE};

pub const ARCHIVE_DIR: &str = "archive";
pub const SUMMARY_FILE: &str = "summary.json";
pub const STANDARDIZATION_FILE: &str = "standardization.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// The dataset as fitted, plus the transform applied to it.
struct Prepared {
    data: Dataset,
    standardization: Option<StandardizationRecord>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let path = cfg.data_path()?;
    let raw = load_dataset(path, &cfg.schema).with_context(|| format!("loading {}", path.display()))?;
    if cfg.standardize {
        let (data, record) = standardize(&raw)?;
        Ok(Prepared { data, standardization: Some(record) })
    } else {
        Ok(Prepared { data: raw, standardization: None })
    }
}

fn partition_for(data: &Dataset, cfg: &RunConfig, intervals: usize) -> Result<TimePartition> {
    match &cfg.cuts {
        Some(cuts) => Ok(TimePartition::new(cuts.clone())?),
        None => Ok(build_partition(data, intervals)?),
    }
}

/// Groups used for `model`'s prior: the LCRM's `G`, otherwise 1.
fn prior_groups(model: ModelKind, groups: usize) -> usize {
    if model == ModelKind::Lcrm {
        groups
    } else {
        1
    }
}

/// Run `cfg.chains` chains (in parallel) and merge them.
fn fit_one(data: &Dataset, partition: &TimePartition, model: ModelKind, groups: usize, cfg: &RunConfig) -> Result<SampleArchive> {
    let spec = cfg.prior.spec(prior_groups(model, groups))?;
    let archives = (0..cfg.chains)
        .into_par_iter()
        .map(|i| {
            let mut mcmc = cfg.mcmc.clone();
            mcmc.seed = mcmc.seed.wrapping_add(i as u64);
            mcmc.chain_id = i;
            run_chain(model, data, partition, &spec, &mcmc)
        })
        .collect::<lcrm_core::Result<Vec<_>>>()?;
    Ok(SampleArchive::merge(archives)?)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DataInfo {
    pub path: Option<PathBuf>,
    pub n: usize,
    pub events: usize,
    pub max_time: f64,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
}

impl DataInfo {
    fn new(path: Option<&Path>, data: &Dataset) -> Self {
        Self {
            path: path.map(Path::to_path_buf),
            n: data.n(),
            events: data.n_events(),
            max_time: data.records.iter().map(|r| r.time).fold(0.0, f64::max),
            x_names: data.x_names.clone(),
            z_names: data.z_names.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Criteria {
    pub lpml: f64,
    pub dic: f64,
    pub p_d: f64,
    pub dev_at_mean: f64,
    pub mean_deviance: f64,
}

impl From<&ComparisonReport> for Criteria {
    fn from(r: &ComparisonReport) -> Self {
        Self { lpml: r.lpml, dic: r.dic, p_d: r.p_d, dev_at_mean: r.dev_at_mean, mean_deviance: r.mean_deviance }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: ModelKind,
    pub groups: Option<usize>,
    pub cuts: Vec<f64>,
    pub data: DataInfo,
    pub posterior: PosteriorSummary,
    /// Posterior of `exp(-theta_k)`, LCRM only.
    pub cure_rates: Vec<ParameterSummary>,
    pub criteria: Criteria,
    pub acceptance: std::collections::BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

fn cure_rate_summaries(archive: &SampleArchive, alpha: f64) -> Vec<ParameterSummary> {
    if archive.model != ModelKind::Lcrm {
        return Vec::new();
    }
    let draws = modal_draws(archive);
    let groups = draws.first().and_then(|d| d.params.n_groups()).unwrap_or(0);
    (1..=groups)
        .map(|k| {
            let v: Vec<f64> = column(&draws, &format!("theta.{k}")).iter().map(|t| (-t).exp()).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            ParameterSummary {
                name: format!("cure.{k}"),
                mean: m,
                sd,
                hpd: hpd_interval(&v, alpha),
                ess: effective_sample_size(&v),
            }
        })
        .collect()
}

/// Fit one cell and write `config.json`, `archive/` and `summary.json` into
/// `cfg.output_dir`.
fn fit_and_write(prepared: &Prepared, cfg: &RunConfig, model: ModelKind, groups: usize, intervals: usize) -> Result<FitSummary> {
    let data = &prepared.data;
    let partition = partition_for(data, cfg, intervals)?;
    let archive = fit_one(data, &partition, model, groups, cfg)?;
    let dir = &cfg.output_dir;
    cfg.save(dir)?;
    archive.save(&dir.join(ARCHIVE_DIR))?;
    if let Some(rec) = &prepared.standardization {
        write_json(&dir.join(STANDARDIZATION_FILE), rec)?;
    }
    let report = compare(&archive, data, &partition)?;
    let cpo_csv: String = std::iter::once("subject,cpo\n".to_string())
        .chain(report.cpo.iter().enumerate().map(|(i, c)| format!("{},{}\n", i + 1, fmt_float(*c))))
        .collect();
    fs::write(dir.join("cpo.csv"), cpo_csv)?;
    let summary = FitSummary {
        model,
        groups: (model == ModelKind::Lcrm).then_some(groups),
        cuts: partition.cuts().to_vec(),
        data: DataInfo::new(cfg.data.as_deref(), data),
        posterior: summarize(&archive, cfg.alpha)?,
        cure_rates: cure_rate_summaries(&archive, cfg.alpha),
        criteria: Criteria::from(&report),
        acceptance: archive.acceptance.clone(),
        warnings: archive.warnings.clone(),
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn single<T: Copy + std::fmt::Debug>(name: &str, values: &[T]) -> Result<T> {
    match values {
        [v] => Ok(*v),
        _ => bail!("fit takes a single {name}, got {values:?}; use `compare` for grids"),
    }
}

pub fn fit(args: &RunArgs, default_out: PathBuf) -> Result<Value> {
    let cfg = args.resolve(default_out)?;
    let model = single("model", &cfg.models)?;
    let groups = single("G", &cfg.groups)?;
    let intervals = single("J", &cfg.intervals)?;
    let prepared = prepare(&cfg)?;
    let summary = fit_and_write(&prepared, &cfg, model, groups, intervals)?;
    Ok(json!({
        "output_dir": cfg.output_dir,
        "draws": summary.posterior.draws,
        "criteria": summary.criteria,
        "warnings": summary.warnings,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub groups: Option<usize>,
    pub intervals: usize,
    pub cuts: Vec<f64>,
    pub lpml: f64,
    pub dic: f64,
    pub p_d: f64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelProbabilities {
    pub intervals: usize,
    pub cuts: Vec<f64>,
    pub mu_g: f64,
    /// `P(G = g | data)` for `g = 1..=g_max`.
    pub probabilities: Vec<f64>,
    pub argmax: usize,
    pub move_acceptance: std::collections::BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub model_probabilities: Vec<ModelProbabilities>,
    /// Descriptive notes, e.g. whether LPML is concave in `J`.
    pub annotations: Vec<String>,
}

fn cell_name(model: ModelKind, groups: Option<usize>, intervals: usize) -> String {
    match groups {
        Some(g) => format!("{model}_G{g}_J{intervals}"),
        None => format!("{model}_J{intervals}"),
    }
}

fn concavity_notes(rows: &[ComparisonRow]) -> Vec<String> {
    let mut notes = Vec::new();
    let mut keys: Vec<(ModelKind, Option<usize>)> = rows.iter().map(|r| (r.model, r.groups)).collect();
    keys.dedup();
    for (model, groups) in keys {
        let mut series: Vec<(usize, f64)> =
            rows.iter().filter(|r| r.model == model && r.groups == groups).map(|r| (r.intervals, r.lpml)).collect();
        series.sort_by_key(|s| s.0);
        if series.len() < 3 {
            continue;
        }
        let concave = series.windows(3).all(|w| {
            let (s1, s2) = ((w[1].1 - w[0].1) / (w[1].0 - w[0].0) as f64, (w[2].1 - w[1].1) / (w[2].0 - w[1].0) as f64);
            s2 <= s1
        });
        let label = cell_name(model, groups, 0);
        let label = label.trim_end_matches("_J0");
        notes.push(format!("{label}: LPML is {} in J", if concave { "concave" } else { "not concave" }));
    }
    notes
}

pub fn compare_grid(args: &RunArgs, default_out: PathBuf) -> Result<Value> {
    let cfg = args.resolve(default_out)?;
    let prepared = prepare(&cfg)?;
    let mut cells = Vec::new();
    for &model in &cfg.models {
        for &j in &cfg.intervals {
            if model == ModelKind::Lcrm {
                cells.extend(cfg.groups.iter().map(|&g| (model, Some(g), j)));
            } else {
                cells.push((model, None, j));
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|&(model, groups, j)| {
            let mut cell = cfg.clone();
            cell.models = vec![model];
            cell.groups = vec![groups.unwrap_or(1)];
            cell.intervals = vec![j];
            cell.output_dir = cfg.output_dir.join("fits").join(cell_name(model, groups, j));
            let s = fit_and_write(&prepared, &cell, model, groups.unwrap_or(1), j)?;
            Ok(ComparisonRow {
                model,
                groups,
                intervals: j,
                cuts: s.cuts,
                lpml: s.criteria.lpml,
                dic: s.criteria.dic,
                p_d: s.criteria.p_d,
                output_dir: cell.output_dir,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut model_probabilities = Vec::new();
    if cfg.models.contains(&ModelKind::Lcrm) && cfg.groups.len() > 1 {
        let g_max = *cfg.groups.iter().max().expect("nonempty");
        let mut rj = cfg.rj.clone();
        rj.g_max = g_max;
        let rj_cfg = rj.config(&cfg.prior);
        let base = cfg.prior.spec(1)?;
        model_probabilities = cfg
            .intervals
            .par_iter()
            .map(|&j| {
                let partition = partition_for(&prepared.data, &cfg, j)?;
                let out = run_rj_chain(&prepared.data, &partition, &base, &rj_cfg, &cfg.mcmc)?;
                out.archive.save(&cfg.output_dir.join("rj").join(format!("J{j}")))?;
                Ok(ModelProbabilities {
                    intervals: j,
                    cuts: partition.cuts().to_vec(),
                    mu_g: rj.mu_g,
                    argmax: lcrm_core::numeric::argmax_first(&out.model_probs) + 1,
                    probabilities: out.model_probs,
                    move_acceptance: lcrm_core::rj::move_acceptance(&out.move_stats),
                })
            })
            .collect::<Result<Vec<_>>>()?;
    }

    let annotations = concavity_notes(&rows);
    let table = ComparisonTable { rows, model_probabilities, annotations };
    cfg.save(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("comparison.json"), &table)?;
    let mut csv = String::from("model,G,J,lpml,dic,p_d\n");
    for r in &table.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.model,
            r.groups.map(|g| g.to_string()).unwrap_or_default(),
            r.intervals,
            fmt_float(r.lpml),
            fmt_float(r.dic),
            fmt_float(r.p_d)
        ));
    }
    fs::write(cfg.output_dir.join("comparison.csv"), csv)?;
    Ok(json!({ "output_dir": cfg.output_dir, "table": table }))
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Output directory of a `fit` run (or one cell of a `compare` run).
    #[arg(long)]
    pub fit: PathBuf,
    /// Latency covariates of the new subject, in fitted column order.
    #[arg(long, value_parser = parse_float_list, default_value = "", allow_hyphen_values = true)]
    pub x: std::vec::Vec<f64>,
    /// Membership covariates without the intercept.
    #[arg(long, value_parser = parse_float_list, default_value = "", allow_hyphen_values = true)]
    pub z: std::vec::Vec<f64>,
    /// Time at which the group is assigned: a number or `inf`.
    #[arg(long, default_value = "0")]
    pub at_time: TimePoint,
    /// Grid end for the curves (default: largest observed time).
    #[arg(long)]
    pub grid_max: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub grid_points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn classify(args: &ClassifyArgs, default_out: PathBuf) -> Result<Value> {
    let summary: FitSummary = read_json(&args.fit.join(SUMMARY_FILE))?;
    let archive = SampleArchive::load(&args.fit.join(ARCHIVE_DIR))?;
    let x_names = &summary.data.x_names;
    let z_names = &summary.data.z_names;
    if args.x.len() != x_names.len() {
        bail!("expected {} x values ({}), got {}", x_names.len(), x_names.join(", "), args.x.len());
    }
    if args.z.len() + 1 != z_names.len() {
        bail!("expected {} z values ({}), got {}", z_names.len() - 1, z_names[1..].join(", "), args.z.len());
    }
    let mut x = args.x.clone();
    let mut z: Vec<f64> = std::iter::once(1.0).chain(args.z.iter().copied()).collect();
    let std_path = args.fit.join(STANDARDIZATION_FILE);
    if std_path.exists() {
        let rec: StandardizationRecord = read_json(&std_path)?;
        x = rec.apply_x(x_names, &x)?;
        z = rec.apply_z(z_names, &z)?;
    }
    if args.grid_points == 0 {
        bail!("grid needs at least one point");
    }
    let grid_max = args.grid_max.unwrap_or(summary.data.max_time);
    if !(grid_max > 0.0 && grid_max.is_finite()) {
        bail!("grid end must be positive, got {grid_max}");
    }
    let grid: Vec<f64> = (1..=args.grid_points).map(|i| grid_max * i as f64 / args.grid_points as f64).collect();
    let report = predictive_report(&archive, &x, &z, &archive.partition, &grid, args.at_time)?;
    let out = args.out.clone().unwrap_or(default_out);
    fs::create_dir_all(&out)?;
    write_json(&out.join("report.json"), &report)?;
    write_survival_csv(&report.survival, &out.join("survival.csv"))?;
    write_probability_csv(&report.probs_at_t, &out.join("probabilities.csv"))?;
    write_json(
        &out.join(CONFIG_FILE),
        &json!({
            "fit": args.fit,
            "x": args.x,
            "z": args.z,
            "at_time": args.at_time,
            "grid_max": grid_max,
            "grid_points": args.grid_points,
        }),
    )?;
    Ok(json!({
        "output_dir": out,
        "assigned_group": report.assigned_group,
        "probabilities": report.probs_at_assignment,
        "at_time": report.at_time,
        "overall_cure_rate": report.overall_cure_rate,
    }))
}

/// Everything `simulate` depends on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub n: usize,
    pub seed: u64,
    pub setup: SimulationSetup,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Start from a saved simulate config.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scenario JSON (parameters, partition, covariates, censoring).
    #[arg(long, conflicts_with = "config")]
    pub setup: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Administrative censoring time.
    #[arg(long)]
    pub admin_time: Option<f64>,
    /// Rate of independent exponential censoring.
    #[arg(long)]
    pub censor_rate: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn simulate(args: &SimulateArgs, default_out: PathBuf) -> Result<Value> {
    let mut cfg = match (&args.config, &args.setup) {
        (Some(path), _) => read_json::<SimulateConfig>(path)?,
        (None, Some(path)) => SimulateConfig { n: 1000, seed: 1, setup: read_json(path)? },
        (None, None) => SimulateConfig { n: 1000, seed: 1, setup: default_simulation() },
    };
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.admin_time.is_some() {
        cfg.setup.censoring.admin_time = args.admin_time;
    }
    if args.censor_rate.is_some() {
        cfg.setup.censoring.random_rate = args.censor_rate;
    }
    let s = &cfg.setup;
    let (data, truth) = simulate_lcrm(&s.params, &s.partition, &s.covariates, cfg.n, &s.censoring, cfg.seed)?;
    let out = args.out.clone().unwrap_or(default_out);
    fs::create_dir_all(&out)?;
    write_dataset(&data, fs::File::create(out.join("data.csv"))?)?;
    write_json(&out.join("truth.json"), &truth)?;
    write_json(&out.join(CONFIG_FILE), &cfg)?;
    Ok(json!({
        "output_dir": out,
        "n": data.n(),
        "events": data.n_events(),
        "cured": truth.cured.iter().filter(|c| **c).count(),
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckOutput {
    pub data: DataInfo,
    pub groups: usize,
    pub requested_intervals: Option<usize>,
    pub cuts: Vec<f64>,
    pub report: ProprietyReport,
}

/// Writes `check.json`; a failed check is returned as a propriety error after
/// the report is on disk.
///
/// Without explicit cuts the partition is the one `fit` would use. Those cuts
/// never leave an interval without events, so a requested `J` they cannot
/// deliver is reported as a failure of the events-in-every-interval condition.
pub fn check(args: &RunArgs, default_out: PathBuf) -> Result<Value> {
    let cfg = args.resolve(default_out)?;
    let groups = single("G", &cfg.groups)?;
    let intervals = single("J", &cfg.intervals)?;
    let prepared = prepare(&cfg)?;
    let data = &prepared.data;
    let spec = cfg.prior.spec(groups)?;
    let (partition, requested) = match &cfg.cuts {
        Some(cuts) => (TimePartition::new(cuts.clone())?, None),
        None => {
            let feasible = intervals.min(data.n_events()).max(1);
            (build_partition(data, feasible)?, Some(intervals))
        }
    };
    let mut report = check_propriety(data, &partition, &spec);
    if requested.is_some_and(|j| partition.n_intervals() < j) {
        let cond = ProprietyCondition::EventsInEveryInterval;
        if !report.failed_conditions.contains(&cond) {
            report.failed_conditions.push(cond);
            report.failed_conditions.sort();
        }
        report.passes = false;
    }
    let out = CheckOutput {
        data: DataInfo::new(cfg.data.as_deref(), data),
        groups,
        requested_intervals: requested,
        cuts: partition.cuts().to_vec(),
        report,
    };
    cfg.save(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("check.json"), &out)?;
    if !out.report.passes {
        return Err(Error::Propriety(out.report).into());
    }
    Ok(json!({ "output_dir": cfg.output_dir, "report": out.report, "cuts": out.cuts }))
}
