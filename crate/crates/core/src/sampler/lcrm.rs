//! Full conditionals of the LCRM data-augmentation sampler.
//!
//! With `u_i = exp(x_i'beta) H0(y_i)` and `w_ik` the membership
//! probabilities, the complete-data posterior factorises into
//!
//! ```text
//! N_i | ...     = nu_i + Poisson(theta_{g_i} exp(-u_i))
//! g_i | ...     ~ Categorical(p_k ∝ exp(z_i'phi_k) theta_k^{N_i} exp(-theta_k))
//! theta_k | ... ~ Gamma(a_k + sum_{g_i=k} N_i, b_k + n_k) on (theta_{k-1}, theta_{k+1})
//! lambda_j | ...~ Gamma(a0 + d_j, b0 + sum_i exp(x_i'beta) N_i e_ij)
//! beta | ...    ∝ exp(sum_i [nu_i x_i'beta - N_i u_i]) N(beta; 0, c01 I)
//! phi_k | ...   ∝ prod_i w_{i g_i} N(phi_k; 0, c02 I)
//! ```
//!
//! `beta` and each `phi_k` are updated by random-walk Metropolis.
//!
//! Each sweep ends with collapsed Metropolis steps on `log theta` and on each
//! `phi_k`, targeting the observed-data posterior with `(N, g)` summed out,
//! followed by an exact joint redraw of `(N, g)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use super::adapt::metropolis;
use super::RandomWalk;
use crate::error::{Error, Result};
use crate::hazard::BaselineHazard;
use crate::models::{lcrm_subject_terms, Dataset, DesignCache, LatentState, LcrmParams};
use crate::numeric::{dot, log_sum_exp, softmax};
use crate::priors::PriorSpec;
use crate::truncgamma::sample_truncated_gamma;

/// Draw an index from unnormalised log-weights.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let probs = softmax(log_weights);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

pub(crate) fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean)
        .map_err(|e| Error::Domain(format!("Poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

pub(crate) fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Domain(format!("Gamma({shape}, {rate}): {e}")))?;
    // guard against an underflow to exactly zero
    Ok(dist.sample(rng).max(f64::MIN_POSITIVE))
}

fn scaled_hazards(params: &LcrmParams, data: &Dataset, cache: &DesignCache) -> Result<Vec<(f64, f64)>> {
    data.records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let eta = dot(&r.x, &params.beta);
            let h0 = cache.cumulative_hazard(i, &params.hazard);
            let u = if h0 == 0.0 { 0.0 } else { eta.exp() * h0 };
            if !u.is_finite() {
                return Err(Error::Numeric { index: i, message: format!("exp(x'beta) H0 overflowed (x'beta = {eta})") });
            }
            Ok((eta, u))
        })
        .collect()
}

/// Starting values: `beta = 0`, `phi = 0`, `theta` at its prior means when
/// those are ordered, otherwise `1, 2, ..., G`.
pub(crate) fn initial_params(data: &Dataset, spec: &PriorSpec, hazard: BaselineHazard) -> Result<LcrmParams> {
    let g = spec.n_groups();
    let theta = if spec.theta0.len() == g
        && spec.theta0.iter().all(|t| *t > 0.0 && t.is_finite())
        && spec.theta0.windows(2).all(|w| w[0] < w[1])
    {
        spec.theta0.clone()
    } else {
        (1..=g).map(|k| k as f64).collect()
    };
    LcrmParams::new(vec![0.0; data.p()], theta, vec![vec![0.0; data.z_len()]; g - 1], hazard)
}

/// Dispersed starting point: `theta_k = theta_0k exp(N(0, 1))` sorted and
/// `phi` entries from `N(0, 1.5^2)`; `beta` and the hazard are kept.
pub(crate) fn disperse<R: Rng + ?Sized>(params: &mut LcrmParams, spec: &PriorSpec, rng: &mut R) {
    let mut theta: Vec<f64> = params
        .theta
        .iter()
        .zip(&spec.theta0)
        .map(|(t, t0)| {
            let e: f64 = rng.sample(StandardNormal);
            let base = if *t0 > 0.0 && t0.is_finite() { *t0 } else { *t };
            (base * e.exp()).clamp(1e-3, 1e3)
        })
        .collect();
    theta.sort_by(|a, b| a.total_cmp(b));
    if theta.windows(2).all(|w| w[0] < w[1]) {
        params.theta = theta;
    }
    for v in params.phi.iter_mut() {
        for x in v.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            *x = 1.5 * e;
        }
    }
}

/// Exact draw of `(g, N)` from their joint conditional given the parameters:
/// `g_i` from the normalised observed-likelihood terms, then `N_i | g_i`.
pub fn sample_latent_joint<R: Rng + ?Sized>(
    params: &LcrmParams,
    data: &Dataset,
    cache: &DesignCache,
    rng: &mut R,
) -> Result<LatentState> {
    let n = data.n();
    let mut latent = LatentState { counts: vec![0; n], groups: vec![0; n] };
    for (i, r) in data.records.iter().enumerate() {
        let h0 = cache.cumulative_hazard(i, &params.hazard);
        let terms = lcrm_subject_terms(params, r, cache.interval(i), h0, i)?;
        latent.groups[i] = sample_categorical(&terms, rng);
    }
    sample_latent_counts(params, &mut latent, data, cache, rng)?;
    Ok(latent)
}

/// `N_i <- nu_i + Poisson(theta_{g_i} exp(-u_i))`.
pub fn sample_latent_counts<R: Rng + ?Sized>(
    params: &LcrmParams,
    latent: &mut LatentState,
    data: &Dataset,
    cache: &DesignCache,
    rng: &mut R,
) -> Result<()> {
    let hz = scaled_hazards(params, data, cache)?;
    for (i, r) in data.records.iter().enumerate() {
        let mean = params.theta[latent.groups[i]] * (-hz[i].1).exp();
        latent.counts[i] = r.nu() + sample_poisson(mean, rng)?;
    }
    Ok(())
}

/// `g_i ~ Categorical(p_k ∝ exp(z_i'phi_k) theta_k^{N_i} exp(-theta_k))`.
pub fn sample_memberships<R: Rng + ?Sized>(
    params: &LcrmParams,
    latent: &mut LatentState,
    data: &Dataset,
    rng: &mut R,
) -> Result<()> {
    let log_theta: Vec<f64> = params.theta.iter().map(|t| t.ln()).collect();
    for (i, r) in data.records.iter().enumerate() {
        let n_i = latent.counts[i] as f64;
        let mut w = params.group_logits(&r.z);
        for (k, wk) in w.iter_mut().enumerate() {
            *wk += n_i * log_theta[k] - params.theta[k];
        }
        latent.groups[i] = sample_categorical(&w, rng);
    }
    Ok(())
}

/// Ordered-gamma update of `theta_1, ..., theta_G` in sequence.
pub fn sample_theta<R: Rng + ?Sized>(
    params: &mut LcrmParams,
    latent: &LatentState,
    spec: &PriorSpec,
    rng: &mut R,
) -> Result<()> {
    let g = params.n_groups();
    if spec.n_groups() != g {
        return Err(Error::Config(format!("prior has {} groups, parameters have {g}", spec.n_groups())));
    }
    let mut sum_n = vec![0.0; g];
    let mut size = vec![0.0; g];
    for (&n_i, &k) in latent.counts.iter().zip(&latent.groups) {
        sum_n[k] += n_i as f64;
        size[k] += 1.0;
    }
    for k in 0..g {
        let lo = if k == 0 { 0.0 } else { params.theta[k - 1] };
        let hi = if k + 1 == g { f64::INFINITY } else { params.theta[k + 1] };
        let shape = spec.theta_shape[k] + sum_n[k];
        let rate = spec.theta_rate[k] + size[k];
        params.theta[k] = sample_truncated_gamma(rng, shape, rate, lo, hi)?;
    }
    Ok(())
}

/// Conjugate gamma update of the baseline hazard rates.
pub fn sample_lambda<R: Rng + ?Sized>(
    params: &mut LcrmParams,
    latent: &LatentState,
    data: &Dataset,
    cache: &DesignCache,
    spec: &PriorSpec,
    rng: &mut R,
) -> Result<()> {
    let n_int = cache.n_intervals();
    let d = cache.events_per_interval(data);
    let mut exposure = vec![0.0; n_int];
    for (i, r) in data.records.iter().enumerate() {
        let n_i = latent.counts[i];
        if n_i == 0 {
            continue;
        }
        let w = dot(&r.x, &params.beta).exp() * n_i as f64;
        for (e, x) in exposure.iter_mut().zip(cache.exposures(i)) {
            *e += w * x;
        }
    }
    let rates = (0..n_int)
        .map(|j| sample_gamma(spec.a0 + d[j] as f64, spec.b0 + exposure[j], rng))
        .collect::<Result<Vec<_>>>()?;
    params.hazard = BaselineHazard::new(rates)?;
    Ok(())
}

fn beta_log_target(beta: &[f64], latent: &LatentState, data: &Dataset, h0: &[f64], c01: f64) -> f64 {
    let mut lp = -0.5 * beta.iter().map(|b| b * b).sum::<f64>() / c01;
    for (i, r) in data.records.iter().enumerate() {
        let eta = dot(&r.x, beta);
        if r.event {
            lp += eta;
        }
        let n_i = latent.counts[i];
        if n_i > 0 && h0[i] > 0.0 {
            lp -= eta.exp() * n_i as f64 * h0[i];
        }
    }
    lp
}

/// Random-walk Metropolis step for `beta`; returns whether it was accepted.
pub fn mh_update_beta<R: Rng + ?Sized>(
    params: &mut LcrmParams,
    latent: &LatentState,
    data: &Dataset,
    cache: &DesignCache,
    spec: &PriorSpec,
    walk: &mut RandomWalk,
    rng: &mut R,
) -> Result<bool> {
    if params.beta.is_empty() {
        return Ok(false);
    }
    let h0: Vec<f64> = (0..data.n()).map(|i| cache.cumulative_hazard(i, &params.hazard)).collect();
    let proposal = walk.propose(&params.beta, rng);
    let current = beta_log_target(&params.beta, latent, data, &h0, spec.c01);
    let proposed = beta_log_target(&proposal, latent, data, &h0, spec.c01);
    let accept = metropolis(proposed - current, rng);
    if accept {
        params.beta = proposal;
    }
    walk.record(accept);
    Ok(accept)
}

/// Random-walk Metropolis step for each free `phi_k` in turn.
pub fn mh_update_phi<R: Rng + ?Sized>(
    params: &mut LcrmParams,
    latent: &LatentState,
    data: &Dataset,
    spec: &PriorSpec,
    walks: &mut [RandomWalk],
    rng: &mut R,
) -> Result<Vec<bool>> {
    let free = params.phi.len();
    if walks.len() < free {
        return Err(Error::Config("fewer random-walk blocks than phi vectors".into()));
    }
    let g = free + 1;
    // row-major n x G logits
    let mut logits: Vec<f64> = data.records.iter().flat_map(|r| params.group_logits(&r.z)).collect();
    let mut column = vec![0.0; data.n()];
    let prior = |v: &[f64]| -0.5 * v.iter().map(|x| x * x).sum::<f64>() / spec.c02;
    let mut accepted = Vec::with_capacity(free);
    for k in 0..free {
        let proposal = walks[k].propose(&params.phi[k], rng);
        let mut log_ratio = prior(&proposal) - prior(&params.phi[k]);
        let mut scratch = vec![0.0; g];
        for (i, r) in data.records.iter().enumerate() {
            let row = &logits[i * g..(i + 1) * g];
            scratch.copy_from_slice(row);
            column[i] = dot(&proposal, &r.z);
            scratch[k] = column[i];
            let gi = latent.groups[i];
            log_ratio += (scratch[gi] - log_sum_exp(&scratch)) - (row[gi] - log_sum_exp(row));
        }
        let accept = metropolis(log_ratio, rng);
        if accept {
            params.phi[k] = proposal;
            for (i, v) in column.iter().enumerate() {
                logits[i * g + k] = *v;
            }
        }
        walks[k].record(accept);
        accepted.push(accept);
    }
    Ok(accepted)
}

/// One sweep in the fixed order `N, g, theta, lambda, beta, phi`.
#[allow(clippy::too_many_arguments)]
/// Random walks for the collapsed steps.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CollapsedWalks {
    /// Joint walk on `log theta`.
    pub theta: RandomWalk,
    /// One walk per free `phi_k`.
    pub phi: Vec<RandomWalk>,
}

/// Per-subject quantities that stay fixed while `theta` and `phi` move.
struct MixtureTerms {
    groups: usize,
    /// `1 - exp(-u_i)`.
    f: Vec<f64>,
    event: Vec<bool>,
    /// Row-major `n x G` membership logits.
    logits: Vec<f64>,
}

impl MixtureTerms {
    fn new(params: &LcrmParams, data: &Dataset, cache: &DesignCache) -> Result<Self> {
        let hz = scaled_hazards(params, data, cache)?;
        Ok(Self {
            groups: params.n_groups(),
            f: hz.iter().map(|(_, u)| -(-u).exp_m1()).collect(),
            event: data.records.iter().map(|r| r.event).collect(),
            logits: data.records.iter().flat_map(|r| params.group_logits(&r.z)).collect(),
        })
    }

    /// Observed log-likelihood up to terms free of `theta` and `phi`.
    fn loglik(&self, theta: &[f64], logits: &[f64]) -> f64 {
        let g = self.groups;
        let log_theta: Vec<f64> = theta.iter().map(|t| t.ln()).collect();
        let mut c = vec![0.0; g];
        let mut total = 0.0;
        for (i, (&f, &ev)) in self.f.iter().zip(&self.event).enumerate() {
            let row = &logits[i * g..(i + 1) * g];
            for k in 0..g {
                c[k] = row[k] - theta[k] * f + if ev { log_theta[k] } else { 0.0 };
            }
            total += log_sum_exp(&c) - log_sum_exp(row);
        }
        total
    }
}

fn theta_log_prior(theta: &[f64], spec: &PriorSpec) -> f64 {
    theta
        .iter()
        .zip(spec.theta_shape.iter().zip(&spec.theta_rate))
        .map(|(t, (a, b))| (a - 1.0) * t.ln() - b * t)
        .sum()
}

/// Collapsed Metropolis steps on `log theta` (jointly, rejecting proposals
/// that break the ordering) and on each `phi_k`.
pub fn collapsed_update<R: Rng + ?Sized>(
    params: &mut LcrmParams,
    data: &Dataset,
    cache: &DesignCache,
    spec: &PriorSpec,
    walks: &mut CollapsedWalks,
    rng: &mut R,
) -> Result<()> {
    let g = params.n_groups();
    if walks.phi.len() + 1 < g {
        return Err(Error::Config("fewer random-walk blocks than phi vectors".into()));
    }
    let mut terms = MixtureTerms::new(params, data, cache)?;
    let mut current = terms.loglik(&params.theta, &terms.logits);

    let log_theta: Vec<f64> = params.theta.iter().map(|t| t.ln()).collect();
    let proposal: Vec<f64> = walks.theta.propose(&log_theta, rng).iter().map(|l| l.exp()).collect();
    let ordered = proposal.windows(2).all(|w| w[0] < w[1]) && proposal.iter().all(|t| *t > 0.0 && t.is_finite());
    let accept = ordered && {
        let proposed = terms.loglik(&proposal, &terms.logits);
        let jacobian: f64 = proposal.iter().map(|t| t.ln()).sum::<f64>() - log_theta.iter().sum::<f64>();
        let log_ratio =
            proposed - current + theta_log_prior(&proposal, spec) - theta_log_prior(&params.theta, spec) + jacobian;
        let ok = metropolis(log_ratio, rng);
        if ok {
            current = proposed;
        }
        ok
    };
    if accept {
        params.theta = proposal;
    }
    walks.theta.record(accept);

    let prior = |v: &[f64]| -0.5 * v.iter().map(|x| x * x).sum::<f64>() / spec.c02;
    let mut logits = terms.logits.clone();
    for k in 0..g - 1 {
        let proposal = walks.phi[k].propose(&params.phi[k], rng);
        for (i, r) in data.records.iter().enumerate() {
            logits[i * g + k] = dot(&proposal, &r.z);
        }
        let proposed = terms.loglik(&params.theta, &logits);
        let accept = metropolis(proposed - current + prior(&proposal) - prior(&params.phi[k]), rng);
        if accept {
            params.phi[k] = proposal;
            current = proposed;
            terms.logits.copy_from_slice(&logits);
        } else {
            logits.copy_from_slice(&terms.logits);
        }
        walks.phi[k].record(accept);
    }
    Ok(())
}

/// One sweep: the complete-data scan `N, g, theta, lambda, beta, phi`, then
/// the collapsed steps and a joint redraw of `(N, g)`.
#[allow(clippy::too_many_arguments)]
pub fn sweep<R: Rng + ?Sized>(
    params: &mut LcrmParams,
    latent: &mut LatentState,
    data: &Dataset,
    cache: &DesignCache,
    spec: &PriorSpec,
    beta_walk: &mut RandomWalk,
    phi_walks: &mut [RandomWalk],
    collapsed: &mut CollapsedWalks,
    rng: &mut R,
) -> Result<()> {
    sample_latent_counts(params, latent, data, cache, rng)?;
    sample_memberships(params, latent, data, rng)?;
    sample_theta(params, latent, spec, rng)?;
    sample_lambda(params, latent, data, cache, spec, rng)?;
    mh_update_beta(params, latent, data, cache, spec, beta_walk, rng)?;
    mh_update_phi(params, latent, data, spec, phi_walks, rng)?;
    collapsed_update(params, data, cache, spec, collapsed, rng)?;
    *latent = sample_latent_joint(params, data, cache, rng)?;
    debug_assert!(params.is_ordered());
    debug_assert!(latent.counts.iter().zip(&data.records).all(|(n, r)| *n >= r.nu()));
    Ok(())
}
