//! Posterior samplers.
//!
//! [`run_chain`] runs a fixed-dimension data-augmented sampler for any of the
//! five models; [`crate::rj`] adds dimension moves over the number of LCRM
//! groups. One chain owns its state and random number generator exclusively,
//! so independent chains can run on separate threads.

pub(crate) mod adapt;
pub mod lcrm;
pub mod reduced;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adapt::RandomWalk;

use crate::archive::{Draw, PointwiseAccumulator, SampleArchive};
use crate::error::{Error, Result};
use crate::hazard::{BaselineHazard, TimePartition};
use crate::models::{subject_logliks_cached, Dataset, DesignCache, LatentState, ModelKind, ModelParams};
use crate::priors::{check_propriety, log_prior, PriorSpec};

/// Initial random-walk scales; `None` picks a scale from the data size.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProposalScales {
    pub beta: Option<f64>,
    pub phi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub total_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub proposal_scales: ProposalScales,
    /// Tune random-walk scales during burn-in.
    pub adapt: bool,
    pub target_acceptance: f64,
    /// Proposals per adaptation batch.
    pub adapt_batch: usize,
    /// Run even when the propriety check fails.
    pub force: bool,
    pub chain_id: usize,
    /// LCRM starting points tried before the chain proper; the one with the
    /// highest log posterior after its pilot run is kept.
    #[serde(default = "default_starts")]
    pub starts: usize,
    /// Adaptive sweeps per starting point (not counted in `total_iterations`).
    #[serde(default = "default_pilot_sweeps")]
    pub pilot_sweeps: usize,
}

fn default_starts() -> usize {
    8
}

fn default_pilot_sweeps() -> usize {
    250
}

impl McmcConfig {
    /// 100000 iterations, burn-in 4000, thin 5.
    pub fn standard(seed: u64) -> Self {
        Self::with_lengths(100_000, 4_000, 5, seed)
    }

    /// 2000 iterations, burn-in 500, thin 2. Too short for inference; meant for
    /// smoke tests and CI.
    pub fn quick(seed: u64) -> Self {
        Self::with_lengths(2_000, 500, 2, seed)
    }

    /// 20000 iterations, burn-in 4000, thin 5.
    pub fn quick_extended(seed: u64) -> Self {
        Self::with_lengths(20_000, 4_000, 5, seed)
    }

    pub fn with_lengths(total_iterations: usize, burn_in: usize, thin: usize, seed: u64) -> Self {
        Self {
            total_iterations,
            burn_in,
            thin,
            seed,
            proposal_scales: ProposalScales::default(),
            adapt: true,
            target_acceptance: 0.30,
            adapt_batch: 25,
            force: false,
            chain_id: 0,
            starts: default_starts(),
            pilot_sweeps: default_pilot_sweeps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.burn_in >= self.total_iterations {
            return Err(Error::Config(format!(
                "burn-in ({}) must be smaller than the total iterations ({})",
                self.burn_in, self.total_iterations
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("target acceptance must lie in (0, 1)".into()));
        }
        if self.starts == 0 {
            return Err(Error::Config("need at least one starting point".into()));
        }
        if self.adapt_batch == 0 {
            return Err(Error::Config("adaptation batch must be positive".into()));
        }
        for s in [self.proposal_scales.beta, self.proposal_scales.phi].into_iter().flatten() {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("proposal scale must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Number of draws kept: iterations `t > burn_in` with `(t - burn_in) % thin == 0`.
    pub fn stored_draws(&self) -> usize {
        (self.total_iterations - self.burn_in) / self.thin
    }

    pub(crate) fn stores(&self, iteration: usize) -> bool {
        iteration > self.burn_in && (iteration - self.burn_in).is_multiple_of(self.thin)
    }
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self::standard(1)
    }
}

/// Mutable state of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub params: ModelParams,
    /// LCRM: counts `N` and groups `g`. CIS/PHPH: counts only. LACR: the
    /// susceptibility indicator stored as a 0/1 count. Cox: empty.
    pub latent: LatentState,
    pub rng: ChaCha8Rng,
    pub iteration: usize,
    pub beta_walk: RandomWalk,
    /// Second coefficient block (PHPH `beta2`).
    pub beta2_walk: RandomWalk,
    /// One walk per free `phi_k`; may be longer than `G - 1` in
    /// trans-dimensional runs.
    pub phi_walks: Vec<RandomWalk>,
    /// LCRM collapsed steps on `theta` and `phi`.
    pub collapsed: lcrm::CollapsedWalks,
}

impl ChainState {
    /// Starting state. Deterministic starting values are followed by an exact
    /// draw of the latent variables; for the LCRM with `cfg.starts > 1`, further
    /// dispersed starts are tried and the best after a pilot run is kept.
    pub fn initialize(
        kind: ModelKind,
        data: &Dataset,
        cache: &DesignCache,
        spec: &PriorSpec,
        cfg: &McmcConfig,
        max_groups: usize,
    ) -> Result<Self> {
        let state = Self::deterministic_start(kind, data, cache, spec, cfg, max_groups)?;
        if kind == ModelKind::Lcrm && cfg.starts > 1 {
            state.best_of_starts(data, cache, spec, cfg)
        } else {
            Ok(state)
        }
    }

    fn best_of_starts(self, data: &Dataset, cache: &DesignCache, spec: &PriorSpec, cfg: &McmcConfig) -> Result<Self> {
        let mut rng = self.rng.clone();
        let mut best: Option<(f64, Self)> = None;
        for start in 0..cfg.starts {
            let mut cand = self.clone();
            if let (true, ModelParams::Lcrm(p)) = (start > 0, &mut cand.params) {
                lcrm::disperse(p, spec, &mut rng);
                cand.latent = lcrm::sample_latent_joint(p, data, cache, &mut rng)?;
            }
            cand.rng = rng;
            for w in cand.walks_mut() {
                w.configure(cfg.adapt, cfg.target_acceptance, cfg.adapt_batch);
            }
            for _ in 0..cfg.pilot_sweeps {
                cand.sweep(data, cache, spec)?;
            }
            rng = cand.rng.clone();
            let score = match &cand.params {
                ModelParams::Lcrm(p) => {
                    subject_logliks_cached(&cand.params, data, cache)?.iter().sum::<f64>() + log_prior(p, spec)
                }
                _ => unreachable!("only LCRM chains use multiple starts"),
            };
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, cand));
            }
        }
        let (_, mut best) = best.expect("at least one start");
        best.rng = rng;
        best.iteration = 0;
        best.freeze();
        Ok(best)
    }

    fn deterministic_start(
        kind: ModelKind,
        data: &Dataset,
        cache: &DesignCache,
        spec: &PriorSpec,
        cfg: &McmcConfig,
        max_groups: usize,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let hazard = initial_hazard(data, cache)?;
        let p = data.p();
        let params = match kind {
            ModelKind::Cox => ModelParams::Cox { beta: vec![0.0; p], hazard },
            ModelKind::Cis => ModelParams::Cis { beta: vec![0.0; p], hazard },
            ModelKind::Lacr => ModelParams::Lacr { beta: vec![0.0; p], hazard },
            ModelKind::Phph => ModelParams::Phph { beta1: vec![0.0; p], beta2: vec![0.0; p], hazard },
            ModelKind::Lcrm => ModelParams::Lcrm(lcrm::initial_params(data, spec, hazard)?),
        };
        let latent = match &params {
            ModelParams::Lcrm(lp) => lcrm::sample_latent_joint(lp, data, cache, &mut rng)?,
            other => reduced::initial_latent(other, data, cache, &mut rng)?,
        };
        let events = data.n_events().max(1) as f64;
        let beta_scale = cfg
            .proposal_scales
            .beta
            .unwrap_or_else(|| default_scale(p, 1.0 / spec.c01 + events));
        let groups = params.n_groups().unwrap_or(1);
        let walks = groups.max(max_groups).saturating_sub(1);
        let q1 = data.z_len();
        let phi_scale = cfg
            .proposal_scales
            .phi
            .unwrap_or_else(|| default_scale(q1, 1.0 / spec.c02 + 0.2 * data.n() as f64 / groups as f64));
        Ok(Self {
            params,
            latent,
            rng,
            iteration: 0,
            beta_walk: RandomWalk::new(beta_scale),
            beta2_walk: RandomWalk::new(beta_scale),
            phi_walks: vec![RandomWalk::new(phi_scale); walks],
            collapsed: lcrm::CollapsedWalks {
                theta: RandomWalk::new(default_scale(groups, 25.0 * groups as f64)),
                phi: vec![RandomWalk::new(phi_scale); walks],
            },
        })
    }

    /// One systematic-scan sweep of the model's blocks.
    pub fn sweep(&mut self, data: &Dataset, cache: &DesignCache, spec: &PriorSpec) -> Result<()> {
        match &mut self.params {
            ModelParams::Lcrm(p) => lcrm::sweep(
                p,
                &mut self.latent,
                data,
                cache,
                spec,
                &mut self.beta_walk,
                &mut self.phi_walks,
                &mut self.collapsed,
                &mut self.rng,
            )?,
            other => reduced::sweep(
                other,
                &mut self.latent,
                data,
                cache,
                spec,
                &mut self.beta_walk,
                &mut self.beta2_walk,
                &mut self.rng,
            )?,
        }
        self.iteration += 1;
        Ok(())
    }

    pub(crate) fn walks_mut(&mut self) -> impl Iterator<Item = &mut RandomWalk> {
        std::iter::once(&mut self.beta_walk)
            .chain(std::iter::once(&mut self.beta2_walk))
            .chain(self.phi_walks.iter_mut())
            .chain(std::iter::once(&mut self.collapsed.theta))
            .chain(self.collapsed.phi.iter_mut())
    }

    /// Start or stop adaptation on every block.
    pub(crate) fn set_adaptation(&mut self, cfg: &McmcConfig) {
        let on = cfg.adapt && self.iteration < cfg.burn_in;
        for w in self.walks_mut() {
            w.configure(on, cfg.target_acceptance, cfg.adapt_batch);
        }
    }

    /// Freeze the kernel and reset the acceptance counters.
    pub(crate) fn freeze(&mut self) {
        for w in self.walks_mut() {
            w.freeze();
        }
    }

    /// Acceptance rates of the blocks used by the current model.
    pub fn acceptance_rates(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        match &self.params {
            ModelParams::Phph { .. } => {
                out.insert("beta1".to_string(), self.beta_walk.acceptance_rate());
                out.insert("beta2".to_string(), self.beta2_walk.acceptance_rate());
            }
            ModelParams::Lcrm(_) => {
                out.insert("beta".to_string(), self.beta_walk.acceptance_rate());
                for (k, w) in self.phi_walks.iter().enumerate() {
                    out.insert(format!("phi.{}", k + 1), w.acceptance_rate());
                }
                out.insert("theta.collapsed".to_string(), self.collapsed.theta.acceptance_rate());
                for (k, w) in self.collapsed.phi.iter().enumerate() {
                    out.insert(format!("phi.{}.collapsed", k + 1), w.acceptance_rate());
                }
            }
            _ => {
                out.insert("beta".to_string(), self.beta_walk.acceptance_rate());
            }
        }
        out.retain(|_, v| !v.is_nan());
        out
    }
}

/// `2.4 / sqrt(dim)` times an approximate posterior SD `1/sqrt(information)`.
fn default_scale(dim: usize, information: f64) -> f64 {
    2.4 / (dim.max(1) as f64).sqrt() / information.sqrt()
}

/// Events per unit exposure in each interval, floored to stay positive.
fn initial_hazard(data: &Dataset, cache: &DesignCache) -> Result<BaselineHazard> {
    let d = cache.events_per_interval(data);
    let mut exposure = vec![0.0; cache.n_intervals()];
    for i in 0..data.n() {
        for (e, x) in exposure.iter_mut().zip(cache.exposures(i)) {
            *e += x;
        }
    }
    let rates = d
        .iter()
        .zip(&exposure)
        .map(|(&dj, &ej)| {
            let r = (dj as f64).max(0.5) / ej;
            if r.is_finite() && r > 0.0 { r.clamp(1e-6, 1e6) } else { 1.0 }
        })
        .collect();
    BaselineHazard::new(rates)
}

/// Refuse to sample an improper posterior unless forced; returns warnings.
pub(crate) fn propriety_gate(
    data: &Dataset,
    partition: &TimePartition,
    spec: &PriorSpec,
    cfg: &McmcConfig,
) -> Result<Vec<String>> {
    let report = check_propriety(data, partition, spec);
    if report.passes {
        Ok(Vec::new())
    } else if cfg.force {
        Ok(vec![format!("posterior propriety not guaranteed: {report}")])
    } else {
        Err(Error::Propriety(report))
    }
}

/// Per-subject log-likelihoods of a stored draw, rejecting zero likelihoods.
pub(crate) fn draw_logliks(
    params: &ModelParams,
    data: &Dataset,
    cache: &DesignCache,
    draw: usize,
) -> Result<Vec<f64>> {
    let ll = subject_logliks_cached(params, data, cache)?;
    if let Some(i) = ll.iter().position(|l| *l == f64::NEG_INFINITY) {
        return Err(Error::ZeroLikelihood { draw, subject: i });
    }
    Ok(ll)
}

/// Record a draw into the archive.
pub(crate) fn store_draw(
    archive: &mut SampleArchive,
    params: &ModelParams,
    data: &Dataset,
    cache: &DesignCache,
    iteration: usize,
) -> Result<()> {
    let ll = draw_logliks(params, data, cache, archive.draws.len())?;
    archive.pointwise.push(&ll);
    archive.draws.push(Draw {
        chain: archive.config.chain_id,
        iteration,
        params: params.clone(),
        loglik: ll.iter().sum(),
    });
    Ok(())
}

pub(crate) fn empty_archive(
    kind: ModelKind,
    data: &Dataset,
    partition: &TimePartition,
    spec: &PriorSpec,
    cfg: &McmcConfig,
    warnings: Vec<String>,
) -> SampleArchive {
    SampleArchive {
        model: kind,
        partition: partition.clone(),
        config: cfg.clone(),
        prior: spec.clone(),
        n_subjects: data.n(),
        draws: Vec::with_capacity(cfg.stored_draws()),
        pointwise: PointwiseAccumulator::new(data.n()),
        acceptance: BTreeMap::new(),
        warnings,
    }
}

/// Run one chain of the fixed-dimension sampler.
///
/// For the LCRM the number of groups is the length of `spec.theta_shape`.
/// Each iteration performs one sweep; draws at iterations
/// `burn_in + thin, burn_in + 2 thin, ...` are stored together with their
/// per-subject observed-data log-likelihoods.
pub fn run_chain(
    kind: ModelKind,
    data: &Dataset,
    partition: &TimePartition,
    spec: &PriorSpec,
    cfg: &McmcConfig,
) -> Result<SampleArchive> {
    cfg.validate()?;
    spec.validate()?;
    data.validate()?;
    let warnings = propriety_gate(data, partition, spec, cfg)?;
    let cache = DesignCache::new(data, partition)?;
    let mut state = ChainState::initialize(kind, data, &cache, spec, cfg, 0)?;
    let mut archive = empty_archive(kind, data, partition, spec, cfg, warnings);
    state.set_adaptation(cfg);
    for it in 1..=cfg.total_iterations {
        state.sweep(data, &cache, spec)?;
        if it == cfg.burn_in {
            state.freeze();
        }
        if cfg.stores(it) {
            store_draw(&mut archive, &state.params, data, &cache, it)?;
        }
    }
    archive.acceptance = state.acceptance_rates();
    Ok(archive)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stored_draw_accounting() {
        let cfg = McmcConfig::with_lengths(105, 100, 5, 1);
        assert_eq!(cfg.stored_draws(), 1);
        assert_eq!((1..=105).filter(|&t| cfg.stores(t)).count(), 1);
        let cfg = McmcConfig::standard(1);
        assert_eq!(cfg.stored_draws(), 19_200);
        assert_eq!((1..=cfg.total_iterations).filter(|&t| cfg.stores(t)).count(), 19_200);
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::with_lengths(10, 10, 1, 0).validate().is_err());
        assert!(McmcConfig::with_lengths(10, 0, 0, 0).validate().is_err());
        assert!(McmcConfig::quick(0).validate().is_ok());
    }
}
