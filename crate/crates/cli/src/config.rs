use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use lcrm_core::data::Schema;
use lcrm_core::priors::{DEFAULT_A0, DEFAULT_B0, DEFAULT_C0, DEFAULT_C01, DEFAULT_C02};
use lcrm_core::{McmcConfig, ModelKind, PriorSpec, RjConfig};
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "config.json";

/// Scalar prior hyperparameters; `theta` priors are elicited per `G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSettings {
    pub c01: f64,
    pub c02: f64,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    /// Prior cure rates; used when their length matches `G`, otherwise the
    /// default table applies.
    pub cure_rates: Option<Vec<f64>>,
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self { c01: DEFAULT_C01, c02: DEFAULT_C02, a0: DEFAULT_A0, b0: DEFAULT_B0, c0: DEFAULT_C0, cure_rates: None }
    }
}

impl PriorSettings {
    pub fn cure_rates_for(&self, groups: usize) -> Vec<f64> {
        match &self.cure_rates {
            Some(c) if c.len() == groups => c.clone(),
            _ => lcrm_core::priors::default_prior_cure_rates(groups),
        }
    }

    pub fn spec(&self, groups: usize) -> Result<PriorSpec> {
        Ok(PriorSpec::elicited(self.c01, self.c02, self.a0, self.b0, self.c0, &self.cure_rates_for(groups))?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RjSettings {
    pub mu_g: f64,
    pub g_max: usize,
    pub sweeps_per_move: usize,
    #[serde(default = "default_moves_per_sweep")]
    pub moves_per_sweep: usize,
    pub birth_shape: f64,
    pub phi_scale: f64,
}

fn default_moves_per_sweep() -> usize {
    1
}

impl Default for RjSettings {
    fn default() -> Self {
        let base = RjConfig::new(3.0, 5);
        Self {
            mu_g: base.mu_g,
            g_max: base.g_max,
            sweeps_per_move: base.sweeps_per_move,
            moves_per_sweep: base.moves_per_sweep,
            birth_shape: base.birth_shape,
            phi_scale: base.phi_scale,
        }
    }
}

impl RjSettings {
    pub fn config(&self, cure: &PriorSettings) -> RjConfig {
        let mut cfg = RjConfig::new(self.mu_g, self.g_max);
        cfg.sweeps_per_move = self.sweeps_per_move;
        cfg.moves_per_sweep = self.moves_per_sweep;
        cfg.birth_shape = self.birth_shape;
        cfg.phi_scale = self.phi_scale;
        cfg.cure_rates = (1..=self.g_max).map(|g| cure.cure_rates_for(g)).collect();
        cfg
    }
}

/// Everything a fitting run depends on. Written next to every artifact so
/// that `--config <dir>/config.json` repeats the run exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub schema: Schema,
    pub standardize: bool,
    pub models: Vec<ModelKind>,
    pub groups: Vec<usize>,
    pub intervals: Vec<usize>,
    /// Explicit cut points; when set, `intervals` is ignored.
    pub cuts: Option<Vec<f64>>,
    pub prior: PriorSettings,
    pub mcmc: McmcConfig,
    pub chains: usize,
    pub rj: RjSettings,
    /// HPD level is `1 - alpha`.
    pub alpha: f64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            schema: Schema::default(),
            standardize: false,
            models: vec![ModelKind::Lcrm],
            groups: vec![3],
            intervals: vec![5],
            cuts: None,
            prior: PriorSettings::default(),
            mcmc: McmcConfig::standard(1),
            chains: 1,
            rj: RjSettings::default(),
            alpha: 0.05,
            output_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    pub fn data_path(&self) -> Result<&Path> {
        self.data.as_deref().context("no dataset given (use --data)")
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.groups.is_empty() || self.intervals.is_empty() {
            bail!("models, groups and intervals must be nonempty");
        }
        if self.groups.contains(&0) || self.intervals.contains(&0) {
            bail!("G and J must be positive");
        }
        if self.chains == 0 {
            bail!("need at least one chain");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha must lie in (0, 1), got {}", self.alpha);
        }
        self.mcmc.validate()?;
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// `3`, `1,2,4` or `1..5` (inclusive).
pub fn parse_usize_set(s: &str) -> std::result::Result<Vec<usize>, String> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let lo: usize = a.trim().parse().map_err(|_| format!("bad range start in `{s}`"))?;
        let hi: usize = b.trim().parse().map_err(|_| format!("bad range end in `{s}`"))?;
        if lo > hi {
            return Err(format!("empty range `{s}`"));
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| format!("not a positive integer: `{v}`")))
        .collect()
}

pub fn parse_float_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| format!("not a number: `{v}`")))
        .collect()
}

fn parse_name_list(s: &str) -> std::result::Result<Vec<String>, String> {
    Ok(s.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect())
}

fn parse_models(s: &str) -> std::result::Result<Vec<ModelKind>, String> {
    if s.trim() == "all" {
        return Ok(ModelKind::ALL.to_vec());
    }
    s.split(',').map(|m| m.parse::<ModelKind>().map_err(|e| e.to_string())).collect()
}

/// Flags shared by the fitting subcommands. Every flag is optional and only
/// overrides the value from `--config` (or the built-in default) when given.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Start from a saved config.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub time: Option<String>,
    #[arg(long)]
    pub event: Option<String>,
    /// Latency covariates (comma separated); default: all other columns.
    #[arg(long, value_parser = parse_name_list)]
    pub x: Option<std::vec::Vec<String>>,
    /// Membership covariates (comma separated, intercept implied).
    #[arg(long, value_parser = parse_name_list)]
    pub z: Option<std::vec::Vec<String>>,
    /// Centre and scale covariates before fitting.
    #[arg(long)]
    pub standardize: bool,
    /// Models: cox, cis, phph, lacr, lcrm, or all.
    #[arg(long, alias = "model", value_parser = parse_models)]
    pub models: Option<std::vec::Vec<ModelKind>>,
    /// Number of LCRM groups: `3`, `1,2,3` or `1..5`.
    #[arg(long, visible_alias = "G", value_parser = parse_usize_set)]
    pub groups: Option<std::vec::Vec<usize>>,
    /// Number of baseline intervals (quantile cuts), same forms as --groups.
    #[arg(long, visible_alias = "J", value_parser = parse_usize_set)]
    pub intervals: Option<std::vec::Vec<usize>>,
    /// Explicit interior cut points.
    #[arg(long, value_parser = parse_float_list)]
    pub cuts: Option<std::vec::Vec<f64>>,
    #[arg(long)]
    pub c01: Option<f64>,
    #[arg(long)]
    pub c02: Option<f64>,
    #[arg(long)]
    pub a0: Option<f64>,
    #[arg(long)]
    pub b0: Option<f64>,
    #[arg(long)]
    pub c0: Option<f64>,
    /// Prior cure rates, one per group, decreasing.
    #[arg(long, value_parser = parse_float_list)]
    pub cure_rates: Option<std::vec::Vec<f64>>,
    /// 2000 iterations, burn-in 500, thin 2. Not enough for inference.
    #[arg(long, conflicts_with = "quick_extended")]
    pub quick: bool,
    /// 20000 iterations, burn-in 4000, thin 5.
    #[arg(long)]
    pub quick_extended: bool,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent chains, run in parallel; chain `i` uses seed `seed + i`.
    #[arg(long)]
    pub chains: Option<usize>,
    /// LCRM starting points screened before sampling.
    #[arg(long)]
    pub starts: Option<usize>,
    /// Sample even if the propriety check fails.
    #[arg(long)]
    pub force: bool,
    /// Mean of the truncated Poisson prior on G.
    #[arg(long)]
    pub mu_g: Option<f64>,
    #[arg(long)]
    pub g_max: Option<usize>,
    /// Reversible-jump dimension moves attempted after each sweep.
    #[arg(long)]
    pub moves_per_sweep: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Output directory (default: <output root>/<subcommand>).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self, default_out: PathBuf) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig { output_dir: default_out, ..RunConfig::default() },
        };
        if let Some(v) = &self.data {
            cfg.data = Some(v.clone());
        }
        if let Some(v) = &self.time {
            cfg.schema.time = v.clone();
        }
        if let Some(v) = &self.event {
            cfg.schema.event = v.clone();
        }
        if let Some(v) = &self.x {
            cfg.schema.x = v.clone();
        }
        if let Some(v) = &self.z {
            cfg.schema.z = v.clone();
        }
        cfg.standardize |= self.standardize;
        if let Some(v) = &self.models {
            cfg.models = v.clone();
        }
        if let Some(v) = &self.groups {
            cfg.groups = v.clone();
        }
        if let Some(v) = &self.intervals {
            cfg.intervals = v.clone();
            cfg.cuts = None;
        }
        if let Some(v) = &self.cuts {
            cfg.cuts = Some(v.clone());
        }
        let prior = &mut cfg.prior;
        for (slot, v) in [
            (&mut prior.c01, self.c01),
            (&mut prior.c02, self.c02),
            (&mut prior.a0, self.a0),
            (&mut prior.b0, self.b0),
            (&mut prior.c0, self.c0),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(v) = &self.cure_rates {
            prior.cure_rates = Some(v.clone());
        }
        let m = &mut cfg.mcmc;
        if self.quick {
            (m.total_iterations, m.burn_in, m.thin) = (2_000, 500, 2);
        }
        if self.quick_extended {
            (m.total_iterations, m.burn_in, m.thin) = (20_000, 4_000, 5);
        }
        if let Some(v) = self.iterations {
            m.total_iterations = v;
        }
        if let Some(v) = self.burn_in {
            m.burn_in = v;
        }
        if let Some(v) = self.thin {
            m.thin = v;
        }
        if let Some(v) = self.seed {
            m.seed = v;
        }
        if let Some(v) = self.starts {
            m.starts = v;
        }
        m.force |= self.force;
        if let Some(v) = self.chains {
            cfg.chains = v;
        }
        if let Some(v) = self.mu_g {
            cfg.rj.mu_g = v;
        }
        if let Some(v) = self.g_max {
            cfg.rj.g_max = v;
        }
        if let Some(v) = self.moves_per_sweep {
            cfg.rj.moves_per_sweep = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
