//! Samplers for the comparator models.
//!
//! * Cox: conjugate gamma update of `lambda`, Metropolis on `beta` with the
//!   observed-data likelihood.
//! * CIS: `N_i = nu_i + Poisson(theta_i S0(y_i))` with `theta_i = exp(x_i'beta)`;
//!   then `lambda_j ~ Gamma(a0 + d_j, b0 + sum_i N_i e_ij)` and Metropolis on
//!   `beta` with target `sum_i [N_i x_i'beta - exp(x_i'beta)]`.
//! * PHPH: as CIS with the latency scaled by `exp(x_i'beta2)`; `beta1` and
//!   `beta2` are separate Metropolis blocks.
//! * LACR: a susceptibility indicator `U_i` (1 for events, otherwise
//!   Bernoulli with odds `(1 - e^{-theta}) S0 : e^{-theta}`); then
//!   `lambda_j ~ Gamma(a0 + d_j, b0 + sum_i U_i e_ij)` and Metropolis on
//!   `beta` with target `sum_i [U_i log(1 - e^{-theta_i}) - (1 - U_i) theta_i]`.
//!
//! Each sweep updates the latent variables, then `lambda`, then the
//! coefficient blocks.

use rand::Rng;

use super::adapt::metropolis;
use super::lcrm::{sample_gamma, sample_poisson};
use super::RandomWalk;
use crate::error::{Error, Result};
use crate::hazard::BaselineHazard;
use crate::models::{Dataset, DesignCache, LatentState, ModelParams};
use crate::numeric::{dot, ln_one_minus_exp_neg};
use crate::priors::PriorSpec;

fn normal_prior(v: &[f64], variance: f64) -> f64 {
    -0.5 * v.iter().map(|x| x * x).sum::<f64>() / variance
}

fn cumulative_hazards(hazard: &BaselineHazard, n: usize, cache: &DesignCache) -> Vec<f64> {
    (0..n).map(|i| cache.cumulative_hazard(i, hazard)).collect()
}

/// `exp(eta) * h0` with `0 * inf` treated as 0.
fn scaled(eta: f64, h0: f64) -> f64 {
    if h0 == 0.0 { 0.0 } else { eta.exp() * h0 }
}

/// Draw the latent variables of a comparator model given its parameters.
pub(crate) fn initial_latent<R: Rng + ?Sized>(
    params: &ModelParams,
    data: &Dataset,
    cache: &DesignCache,
    rng: &mut R,
) -> Result<LatentState> {
    let mut latent = LatentState { counts: vec![0; data.n()], groups: Vec::new() };
    sample_latent(params, &mut latent, data, cache, rng)?;
    Ok(latent)
}

fn sample_latent<R: Rng + ?Sized>(
    params: &ModelParams,
    latent: &mut LatentState,
    data: &Dataset,
    cache: &DesignCache,
    rng: &mut R,
) -> Result<()> {
    let h0 = cumulative_hazards(params.hazard(), data.n(), cache);
    for (i, r) in data.records.iter().enumerate() {
        latent.counts[i] = match params {
            ModelParams::Cox { .. } => 0,
            ModelParams::Cis { beta, .. } => {
                let theta = dot(&r.x, beta).exp();
                r.nu() + sample_poisson(theta * (-h0[i]).exp(), rng)?
            }
            ModelParams::Phph { beta1, beta2, .. } => {
                let theta = dot(&r.x, beta1).exp();
                let u = scaled(dot(&r.x, beta2), h0[i]);
                r.nu() + sample_poisson(theta * (-u).exp(), rng)?
            }
            ModelParams::Lacr { beta, .. } => {
                if r.event {
                    1
                } else {
                    let theta = dot(&r.x, beta).exp();
                    // P(U = 1 | censored) = p S0 / (1 - p + p S0), p = 1 - e^{-theta}
                    let log_a = ln_one_minus_exp_neg(theta) - h0[i];
                    let log_b = -theta;
                    let prob = 1.0 / (1.0 + (log_b - log_a).exp());
                    let u: f64 = rng.random();
                    u64::from(u < prob)
                }
            }
            ModelParams::Lcrm(_) => {
                return Err(Error::ModelKind { expected: "comparator".into(), found: "lcrm".into() })
            }
        };
    }
    Ok(())
}

/// Gamma update of `lambda` with per-subject exposure weights.
fn sample_hazard<R: Rng + ?Sized>(
    weights: &[f64],
    data: &Dataset,
    cache: &DesignCache,
    spec: &PriorSpec,
    rng: &mut R,
) -> Result<BaselineHazard> {
    let d = cache.events_per_interval(data);
    let mut exposure = vec![0.0; cache.n_intervals()];
    for (i, w) in weights.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        for (e, x) in exposure.iter_mut().zip(cache.exposures(i)) {
            *e += w * x;
        }
    }
    let rates = d
        .iter()
        .zip(&exposure)
        .map(|(&dj, &ej)| sample_gamma(spec.a0 + dj as f64, spec.b0 + ej, rng))
        .collect::<Result<Vec<_>>>()?;
    BaselineHazard::new(rates)
}

fn mh_block<R: Rng + ?Sized>(
    current: &mut Vec<f64>,
    walk: &mut RandomWalk,
    variance: f64,
    rng: &mut R,
    log_lik: impl Fn(&[f64]) -> f64,
) -> bool {
    if current.is_empty() {
        return false;
    }
    let proposal = walk.propose(current, rng);
    let log_ratio = log_lik(&proposal) + normal_prior(&proposal, variance)
        - log_lik(current)
        - normal_prior(current, variance);
    let accept = metropolis(log_ratio, rng);
    if accept {
        *current = proposal;
    }
    walk.record(accept);
    accept
}

/// One sweep of a comparator-model sampler.
#[allow(clippy::too_many_arguments)]
pub fn sweep<R: Rng + ?Sized>(
    params: &mut ModelParams,
    latent: &mut LatentState,
    data: &Dataset,
    cache: &DesignCache,
    spec: &PriorSpec,
    beta_walk: &mut RandomWalk,
    beta2_walk: &mut RandomWalk,
    rng: &mut R,
) -> Result<()> {
    sample_latent(params, latent, data, cache, rng)?;
    let recs = &data.records;
    let counts = &latent.counts;
    let n = data.n();
    match params {
        ModelParams::Cox { beta, hazard } => {
            let w: Vec<f64> = recs.iter().map(|r| dot(&r.x, beta).exp()).collect();
            *hazard = sample_hazard(&w, data, cache, spec, rng)?;
            let h0 = cumulative_hazards(hazard, n, cache);
            mh_block(beta, beta_walk, spec.c01, rng, |b| {
                recs.iter()
                    .zip(&h0)
                    .map(|(r, &h)| {
                        let eta = dot(&r.x, b);
                        r.nu() as f64 * eta - scaled(eta, h)
                    })
                    .sum()
            });
        }
        ModelParams::Cis { beta, hazard } => {
            let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            *hazard = sample_hazard(&w, data, cache, spec, rng)?;
            mh_block(beta, beta_walk, spec.c01, rng, |b| {
                recs.iter()
                    .zip(counts)
                    .map(|(r, &c)| {
                        let eta = dot(&r.x, b);
                        c as f64 * eta - eta.exp()
                    })
                    .sum()
            });
        }
        ModelParams::Phph { beta1, beta2, hazard } => {
            let w: Vec<f64> = recs
                .iter()
                .zip(counts)
                .map(|(r, &c)| if c == 0 { 0.0 } else { c as f64 * dot(&r.x, beta2).exp() })
                .collect();
            *hazard = sample_hazard(&w, data, cache, spec, rng)?;
            let h0 = cumulative_hazards(hazard, n, cache);
            mh_block(beta1, beta_walk, spec.c01, rng, |b| {
                recs.iter()
                    .zip(counts)
                    .map(|(r, &c)| {
                        let eta = dot(&r.x, b);
                        c as f64 * eta - eta.exp()
                    })
                    .sum()
            });
            mh_block(beta2, beta2_walk, spec.c01, rng, |b| {
                recs.iter()
                    .zip(counts)
                    .zip(&h0)
                    .map(|((r, &c), &h)| {
                        let eta = dot(&r.x, b);
                        let mut v = r.nu() as f64 * eta;
                        if c > 0 {
                            v -= c as f64 * scaled(eta, h);
                        }
                        v
                    })
                    .sum()
            });
        }
        ModelParams::Lacr { beta, hazard } => {
            let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            *hazard = sample_hazard(&w, data, cache, spec, rng)?;
            mh_block(beta, beta_walk, spec.c01, rng, |b| {
                recs.iter()
                    .zip(counts)
                    .map(|(r, &u)| {
                        let theta = dot(&r.x, b).exp();
                        if u == 1 { ln_one_minus_exp_neg(theta) } else { -theta }
                    })
                    .sum()
            });
        }
        ModelParams::Lcrm(_) => {
            return Err(Error::ModelKind { expected: "comparator".into(), found: "lcrm".into() })
        }
    }
    Ok(())
}
