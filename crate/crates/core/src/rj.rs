//! Reversible-jump MCMC over the number of risk groups `G`.
//!
//! The prior on `G` is Poisson(`mu_G`) truncated to `1..=G_max`. Under `G`
//! groups, `theta` has the ordered-gamma prior elicited from that dimension's
//! prior cure rates, normalised by `Z_G = P(theta_1 < ... < theta_G)`.
//!
//! Birth (`G -> G+1`) picks one of the `G+1` gaps of the ordered `theta`
//! uniformly and draws `theta*` from a gamma with shape `a` and mean at the
//! gap midpoint (for the unbounded top gap `lo + max(lo, 1)`), truncated to
//! the gap. The new component's logit offset is `u ~ N(0, d^2 I)`. Below the
//! top gap `u` becomes the new `phi` vector; in the top gap the new group
//! becomes the reference and every existing `phi_k` shifts by `-u`, so the
//! map has unit Jacobian. Death removes a uniformly chosen component by the
//! inverse map. Acceptance uses the observed-data likelihood, and the latent
//! `(N, g)` are redrawn exactly after every attempt.

use std::cell::RefCell;
use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::archive::SampleArchive;
use crate::error::{Error, Result};
use crate::hazard::TimePartition;
use crate::models::{subject_logliks_cached, Dataset, DesignCache, LcrmParams, ModelKind, ModelParams};
use crate::numeric::{gamma_ln_pdf, ln_factorial, normal_ln_pdf_iso};
use crate::priors::{check_propriety, default_prior_cure_rates, ordered_gamma_log_normalizer, PriorSpec};
use crate::sampler::adapt::metropolis;
use crate::sampler::lcrm::sample_latent_joint;
use crate::sampler::{empty_archive, store_draw, ChainState, McmcConfig};
use crate::truncgamma::{ln_pdf_truncated, sample_truncated_gamma};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RjConfig {
    /// Mean of the truncated Poisson prior on `G`.
    pub mu_g: f64,
    pub g_max: usize,
    /// `tr[G-1][G'-1]`: probability of proposing `G'` from `G`.
    pub tr: Vec<Vec<f64>>,
    /// Gamma shape `a` of the birth proposal for `theta*`.
    pub birth_shape: f64,
    /// Standard deviation `d` of the birth proposal for the new `phi`.
    pub phi_scale: f64,
    /// Within-model sweeps between dimension moves.
    pub sweeps_per_move: usize,
    /// Dimension moves attempted back to back each time moves are due.
    #[serde(default = "one")]
    pub moves_per_sweep: usize,
    pub initial_groups: usize,
    pub moves_enabled: bool,
    /// Prior cure rates for each `G = 1..=g_max`.
    pub cure_rates: Vec<Vec<f64>>,
}

impl RjConfig {
    /// Tridiagonal move matrix, `a = 3`, `d = 0.5`, one move after every sweep,
    /// starting at `min(3, g_max)` groups.
    pub fn new(mu_g: f64, g_max: usize) -> Self {
        Self {
            mu_g,
            g_max,
            tr: default_transition_matrix(g_max),
            birth_shape: 3.0,
            phi_scale: 0.5,
            sweeps_per_move: 1,
            moves_per_sweep: 1,
            initial_groups: g_max.clamp(1, 3),
            moves_enabled: true,
            cure_rates: (1..=g_max).map(default_prior_cure_rates).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_g > 0.0 && self.mu_g.is_finite()) {
            return Err(Error::Config(format!("mu_G must be positive, got {}", self.mu_g)));
        }
        if self.g_max == 0 {
            return Err(Error::Config("G_max must be at least 1".into()));
        }
        if !(1..=self.g_max).contains(&self.initial_groups) {
            return Err(Error::Config(format!("initial G must lie in 1..={}", self.g_max)));
        }
        if !(self.birth_shape > 0.0 && self.phi_scale > 0.0) {
            return Err(Error::Config("birth proposal shape and phi scale must be positive".into()));
        }
        if self.sweeps_per_move == 0 || self.moves_per_sweep == 0 {
            return Err(Error::Config("sweeps per move and moves per sweep must be positive".into()));
        }
        if self.cure_rates.len() != self.g_max || self.cure_rates.iter().enumerate().any(|(i, c)| c.len() != i + 1) {
            return Err(Error::Config("need one prior cure-rate vector of length G for each G".into()));
        }
        if self.tr.len() != self.g_max || self.tr.iter().any(|r| r.len() != self.g_max) {
            return Err(Error::Config(format!("TR must be {0} x {0}", self.g_max)));
        }
        for (i, row) in self.tr.iter().enumerate() {
            if row.iter().any(|p| !(*p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("TR row {} must be a probability vector", i + 1)));
            }
            let stays = self.g_max == 1;
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 && i.abs_diff(j) != 1 && !(stays && i == j) {
                    return Err(Error::Config(format!("TR allows a move from G = {} to {}", i + 1, j + 1)));
                }
            }
        }
        Ok(())
    }

    /// Per-dimension priors with `base`'s scalar hyperparameters.
    pub fn priors(&self, base: &PriorSpec) -> Result<Vec<PriorSpec>> {
        self.cure_rates.iter().map(|c| base.with_cure_rates(c)).collect()
    }
}

/// Boundary rows move inward with probability 1, interior rows go up or
/// down with probability 1/2 each.
pub fn default_transition_matrix(g_max: usize) -> Vec<Vec<f64>> {
    let mut tr = vec![vec![0.0; g_max]; g_max];
    if g_max == 1 {
        tr[0][0] = 1.0;
        return tr;
    }
    for (i, row) in tr.iter_mut().enumerate() {
        if i == 0 {
            row[1] = 1.0;
        } else if i + 1 == g_max {
            row[i - 1] = 1.0;
        } else {
            row[i - 1] = 0.5;
            row[i + 1] = 0.5;
        }
    }
    tr
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Birth,
    Death,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    pub births_proposed: usize,
    pub births_accepted: usize,
    pub deaths_proposed: usize,
    pub deaths_accepted: usize,
}

/// A proposed dimension change.
#[derive(Clone, Debug)]
pub struct DimensionProposal {
    pub kind: MoveKind,
    pub params: LcrmParams,
    /// `-inf` for proposals outside the support.
    pub log_ratio: f64,
}

/// Everything the acceptance ratio needs besides the current state.
pub struct RjTarget<'a> {
    pub data: &'a Dataset,
    pub cache: &'a DesignCache,
    pub cfg: &'a RjConfig,
    /// Prior for `G` groups at index `G - 1`.
    pub priors: &'a [PriorSpec],
    /// `ln Z_G` at index `G - 1`.
    pub log_z: Vec<f64>,
    /// The two most recent `log_target` evaluations.
    memo: RefCell<Vec<(LcrmParams, f64)>>,
}

impl<'a> RjTarget<'a> {
    pub fn new(data: &'a Dataset, cache: &'a DesignCache, cfg: &'a RjConfig, priors: &'a [PriorSpec]) -> Result<Self> {
        if priors.len() != cfg.g_max {
            return Err(Error::Config("need one prior per dimension".into()));
        }
        let log_z = priors.iter().map(|p| ordered_gamma_log_normalizer(&p.theta_shape, &p.theta_rate)).collect();
        Ok(Self { data, cache, cfg, priors, log_z, memo: RefCell::new(Vec::with_capacity(2)) })
    }

    /// Log posterior up to terms shared by all dimensions (`beta`, `lambda`).
    pub fn log_target(&self, params: &LcrmParams) -> Result<f64> {
        let g = params.n_groups();
        if g == 0 || g > self.cfg.g_max || !params.is_ordered() {
            return Ok(f64::NEG_INFINITY);
        }
        if let Some((_, v)) = self.memo.borrow().iter().find(|(p, _)| p == params) {
            return Ok(*v);
        }
        let spec = &self.priors[g - 1];
        let loglik: f64 = subject_logliks_cached(&ModelParams::Lcrm(params.clone()), self.data, self.cache)?.iter().sum();
        let log_prior_g = g as f64 * self.cfg.mu_g.ln() - ln_factorial(g as u64);
        let theta: f64 = params
            .theta
            .iter()
            .zip(spec.theta_shape.iter().zip(&spec.theta_rate))
            .map(|(t, (a, b))| gamma_ln_pdf(*t, *a, *b))
            .sum();
        let phi: f64 = params.phi.iter().map(|v| normal_ln_pdf_iso(v, spec.c02)).sum();
        let value = loglik + log_prior_g + theta - self.log_z[g - 1] + phi;
        let mut memo = self.memo.borrow_mut();
        if memo.len() == 2 {
            memo.remove(0);
        }
        memo.push((params.clone(), value));
        Ok(value)
    }

    /// Gap `(lo, hi)` and proposal rate for inserting at position `gap`.
    fn gap_proposal(&self, theta: &[f64], gap: usize) -> (f64, f64, f64) {
        let lo = if gap == 0 { 0.0 } else { theta[gap - 1] };
        let hi = theta.get(gap).copied().unwrap_or(f64::INFINITY);
        let mean = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + lo.max(1.0) };
        (lo, hi, self.cfg.birth_shape / mean)
    }

    /// `ln TR[from][to]` for 1-based dimensions.
    fn ln_tr(&self, from: usize, to: usize) -> f64 {
        self.cfg.tr[from - 1][to - 1].ln()
    }

    /// Log acceptance ratio of the birth `small -> big` that inserted
    /// `theta*` at `gap` with offset `u`.
    fn birth_log_ratio(&self, small: &LcrmParams, big: &LcrmParams, gap: usize, u: &[f64]) -> Result<f64> {
        let g = small.n_groups();
        let (lo, hi, rate) = self.gap_proposal(&small.theta, gap);
        let q_theta = ln_pdf_truncated(big.theta[gap], self.cfg.birth_shape, rate, lo, hi)?;
        let q_u = normal_ln_pdf_iso(u, self.cfg.phi_scale * self.cfg.phi_scale);
        // choosing the gap (1/(G+1)) and the component to remove (1/(G+1)) cancel
        Ok(self.log_target(big)? - self.log_target(small)? + self.ln_tr(g + 1, g) - self.ln_tr(g, g + 1) - q_theta - q_u)
    }
}

/// Insert a component at `gap` with `theta*` and offset `u`.
pub fn insert_component(params: &LcrmParams, gap: usize, theta_star: f64, u: &[f64]) -> Result<LcrmParams> {
    let g = params.n_groups();
    let mut theta = params.theta.clone();
    theta.insert(gap, theta_star);
    let phi = if gap < g {
        let mut phi = params.phi.clone();
        phi.insert(gap, u.to_vec());
        phi
    } else {
        let shifted = |v: &Vec<f64>| v.iter().zip(u).map(|(a, b)| a - b).collect::<Vec<f64>>();
        let mut phi: Vec<Vec<f64>> = params.phi.iter().map(shifted).collect();
        phi.push(u.iter().map(|x| -x).collect());
        phi
    };
    LcrmParams::new(params.beta.clone(), theta, phi, params.hazard.clone())
}

/// Remove component `k`; returns the smaller state and the offset `u` that
/// [`insert_component`] would need to undo the removal.
pub fn remove_component(params: &LcrmParams, k: usize) -> Result<(LcrmParams, Vec<f64>)> {
    let g = params.n_groups();
    if g < 2 || k >= g {
        return Err(Error::Config(format!("cannot remove component {k} of {g}")));
    }
    let mut theta = params.theta.clone();
    theta.remove(k);
    let (phi, u) = if k + 1 < g {
        let mut phi = params.phi.clone();
        let u = phi.remove(k);
        (phi, u)
    } else {
        let u: Vec<f64> = params.phi[g - 2].iter().map(|x| -x).collect();
        let phi = params.phi[..g - 2].iter().map(|v| v.iter().zip(&u).map(|(a, b)| a + b).collect()).collect();
        (phi, u)
    };
    Ok((LcrmParams::new(params.beta.clone(), theta, phi, params.hazard.clone())?, u))
}

fn one() -> usize {
    1
}

/// Propose a birth or death according to the current row of TR. Returns
/// `None` when the row has no move (only possible for `G_max = 1`).
pub fn propose_dimension_move<R: Rng + ?Sized>(
    params: &LcrmParams,
    target: &RjTarget<'_>,
    rng: &mut R,
) -> Result<Option<DimensionProposal>> {
    let g = params.n_groups();
    if g == 0 || g > target.cfg.g_max {
        return Err(Error::Config(format!("current G = {g} outside 1..={}", target.cfg.g_max)));
    }
    let row = &target.cfg.tr[g - 1];
    let up = if g < target.cfg.g_max { row[g] } else { 0.0 };
    let down = if g > 1 { row[g - 2] } else { 0.0 };
    if up + down <= 0.0 {
        return Ok(None);
    }
    let birth = rng.random::<f64>() * (up + down) < up;
    if birth {
        let gap = rng.random_range(0..=g);
        let (lo, hi, rate) = target.gap_proposal(&params.theta, gap);
        let theta_star = sample_truncated_gamma(rng, target.cfg.birth_shape, rate, lo, hi)?;
        let u: Vec<f64> = (0..target.data.z_len())
            .map(|_| target.cfg.phi_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if !(theta_star > lo && theta_star < hi) {
            return Ok(Some(DimensionProposal { kind: MoveKind::Birth, params: params.clone(), log_ratio: f64::NEG_INFINITY }));
        }
        let big = insert_component(params, gap, theta_star, &u)?;
        let log_ratio = target.birth_log_ratio(params, &big, gap, &u)?;
        Ok(Some(DimensionProposal { kind: MoveKind::Birth, params: big, log_ratio }))
    } else {
        let k = rng.random_range(0..g);
        let (small, u) = remove_component(params, k)?;
        let log_ratio = -target.birth_log_ratio(&small, params, k, &u)?;
        Ok(Some(DimensionProposal { kind: MoveKind::Death, params: small, log_ratio }))
    }
}

#[derive(Clone, Debug)]
pub struct RjOutput {
    pub archive: SampleArchive,
    /// `P(G = g | data)` at index `g - 1`, from post-burn-in visit frequencies.
    pub model_probs: Vec<f64>,
    pub move_stats: MoveStats,
}

/// Alternate within-model sweeps with dimension moves.
///
/// With `moves_enabled = false` the chain is the fixed-dimension sampler at
/// `initial_groups` and reproduces [`crate::sampler::run_chain`] exactly.
pub fn run_rj_chain(
    data: &Dataset,
    partition: &TimePartition,
    base: &PriorSpec,
    cfg: &RjConfig,
    mcmc: &McmcConfig,
) -> Result<RjOutput> {
    cfg.validate()?;
    mcmc.validate()?;
    data.validate()?;
    let priors = cfg.priors(base)?;
    let mut warnings = Vec::new();
    let dims: Vec<usize> = if cfg.moves_enabled { (1..=cfg.g_max).collect() } else { vec![cfg.initial_groups] };
    for g in dims {
        let report = check_propriety(data, partition, &priors[g - 1]);
        if !report.passes {
            if mcmc.force {
                warnings.push(format!("G = {g}: posterior propriety not guaranteed: {report}"));
            } else {
                return Err(Error::Propriety(report));
            }
        }
    }
    let cache = DesignCache::new(data, partition)?;
    let target = RjTarget::new(data, &cache, cfg, &priors)?;
    let start = &priors[cfg.initial_groups - 1];
    let mut state = ChainState::initialize(ModelKind::Lcrm, data, &cache, start, mcmc, cfg.g_max)?;
    let mut archive = empty_archive(ModelKind::Lcrm, data, partition, start, mcmc, warnings);
    let mut visits = vec![0usize; cfg.g_max];
    let mut stats = MoveStats::default();
    state.set_adaptation(mcmc);
    for it in 1..=mcmc.total_iterations {
        let g = state.params.n_groups().unwrap_or(1);
        state.sweep(data, &cache, &priors[g - 1])?;
        if it == mcmc.burn_in {
            state.freeze();
        }
        let due = if cfg.moves_enabled && it % cfg.sweeps_per_move == 0 { cfg.moves_per_sweep } else { 0 };
        for _ in 0..due {
            let current = state.params.as_lcrm()?.clone();
            if let Some(prop) = propose_dimension_move(&current, &target, &mut state.rng)? {
                let accept = metropolis(prop.log_ratio, &mut state.rng);
                match prop.kind {
                    MoveKind::Birth => {
                        stats.births_proposed += 1;
                        stats.births_accepted += accept as usize;
                    }
                    MoveKind::Death => {
                        stats.deaths_proposed += 1;
                        stats.deaths_accepted += accept as usize;
                    }
                }
                if accept {
                    state.latent = sample_latent_joint(&prop.params, data, &cache, &mut state.rng)?;
                    state.params = ModelParams::Lcrm(prop.params);
                }
            }
        }
        if it > mcmc.burn_in {
            visits[state.params.n_groups().unwrap_or(1) - 1] += 1;
        }
        if mcmc.stores(it) {
            store_draw(&mut archive, &state.params, data, &cache, it)?;
        }
    }
    archive.acceptance = state.acceptance_rates();
    let total: usize = visits.iter().sum();
    let model_probs = visits.iter().map(|&v| v as f64 / total as f64).collect();
    Ok(RjOutput { archive, model_probs, move_stats: stats })
}

/// Acceptance rates of births and deaths.
pub fn move_acceptance(stats: &MoveStats) -> BTreeMap<String, f64> {
    let rate = |a: usize, p: usize| if p == 0 { f64::NAN } else { a as f64 / p as f64 };
    let mut out = BTreeMap::new();
    out.insert("birth".to_string(), rate(stats.births_accepted, stats.births_proposed));
    out.insert("death".to_string(), rate(stats.deaths_accepted, stats.deaths_proposed));
    out.retain(|_, v| !v.is_nan());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazard::BaselineHazard;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(theta: Vec<f64>, phi: Vec<Vec<f64>>) -> LcrmParams {
        LcrmParams::new(vec![0.3], theta, phi, BaselineHazard::new(vec![1.0]).unwrap()).unwrap()
    }

    #[test]
    fn default_matrix_shape() {
        let tr = default_transition_matrix(5);
        assert_eq!(tr[0], vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(tr[2], vec![0.0, 0.5, 0.0, 0.5, 0.0]);
        assert_eq!(tr[4], vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(RjConfig::new(3.0, 5).validate().is_ok());
        let mut bad = RjConfig::new(3.0, 5);
        bad.tr[2] = vec![0.5, 0.0, 0.0, 0.5, 0.0];
        assert!(bad.validate().is_err());
        let mut bad = RjConfig::new(3.0, 5);
        bad.moves_per_sweep = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn insert_and_remove_are_inverse() {
        let p = params(vec![0.2, 1.0, 3.0], vec![vec![0.5, -1.0], vec![1.5, 0.25]]);
        let u = vec![0.3, -0.7];
        for (gap, t) in [(0, 0.1), (1, 0.5), (2, 2.0), (3, 4.0)] {
            let big = insert_component(&p, gap, t, &u).unwrap();
            assert!(big.is_ordered());
            let (small, back) = remove_component(&big, gap).unwrap();
            for (a, b) in small.phi.iter().flatten().zip(p.phi.iter().flatten()) {
                assert!((a - b).abs() < 1e-15);
            }
            assert_eq!(small.theta, p.theta);
            for (a, b) in back.iter().zip(&u) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn top_insertion_preserves_old_logits() {
        let p = params(vec![0.2, 1.0], vec![vec![0.5, -1.0]]);
        let u = vec![0.3, -0.7];
        let big = insert_component(&p, 2, 5.0, &u).unwrap();
        let z = [1.0, 2.0];
        let old = p.group_logits(&z);
        let new = big.group_logits(&z);
        // differences between existing groups are unchanged
        assert!(((old[0] - old[1]) - (new[0] - new[1])).abs() < 1e-12);
        assert!((new[2] - new[1] - crate::numeric::dot(&u, &z)).abs() < 1e-12);
    }

    #[test]
    fn single_group_only_proposes_births() {
        let data = Dataset::from_records(vec![], 1, 1).unwrap();
        let part = TimePartition::single();
        let cache = DesignCache::new(&data, &part).unwrap();
        let cfg = RjConfig::new(3.0, 3);
        let priors = cfg.priors(&PriorSpec::default_for_groups(1).unwrap()).unwrap();
        let target = RjTarget::new(&data, &cache, &cfg, &priors).unwrap();
        let p = params(vec![0.7], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let prop = propose_dimension_move(&p, &target, &mut rng).unwrap().unwrap();
            assert_eq!(prop.kind, MoveKind::Birth);
            assert_eq!(prop.params.n_groups(), 2);
            assert!(prop.params.is_ordered());
        }
    }
}
