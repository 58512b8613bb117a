//! Survival functions, cure rates and likelihoods for the five survival
//! models: Cox (piecewise-exponential proportional hazards), CIS (promotion
//! time), PHPH (double proportional hazards), LACR (latent activation) and the
//! latent cure rate marker model (LCRM).
//!
//! All models share a piecewise-exponential baseline with cumulative hazard
//! `H0` and write `eta = x'beta`. For the LCRM, subject `i` belongs to latent
//! group `k` with multinomial-logit probability `w_ik = softmax_k(z_i'phi_k)`
//! (`phi_G = 0`), and given its group
//!
//! ```text
//! S(t | k) = exp(-theta_k * F(t)),   F(t) = 1 - exp(-exp(eta) H0(t))
//! S(t)     = sum_k w_k S(t | k)
//! ```
//!
//! The LCRM observed-data likelihood sums the complete-data likelihood over the
//! latent Poisson counts `N_i` and groups `g_i`; per subject it is a `G`-term
//! mixture that is evaluated with log-sum-exp.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::{cumulative_baseline_hazard, interval_decompose, BaselineHazard, TimePartition};
use crate::numeric::{dot, ln_factorial, ln_one_minus_exp_neg, log_sum_exp, softmax};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cox,
    Cis,
    Phph,
    Lacr,
    Lcrm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Cox,
        ModelKind::Cis,
        ModelKind::Phph,
        ModelKind::Lacr,
        ModelKind::Lcrm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cox => "cox",
            ModelKind::Cis => "cis",
            ModelKind::Phph => "phph",
            ModelKind::Lacr => "lacr",
            ModelKind::Lcrm => "lcrm",
        }
    }

    /// Whether the model has a cure fraction. Cox does not; its
    /// [`cure_rate`] is reported as 0 by convention.
    pub fn has_cure_fraction(self) -> bool {
        self != ModelKind::Cox
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cox" => Ok(ModelKind::Cox),
            "cis" => Ok(ModelKind::Cis),
            "phph" => Ok(ModelKind::Phph),
            "lacr" => Ok(ModelKind::Lacr),
            "lcrm" => Ok(ModelKind::Lcrm),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// Parameters of the latent cure rate marker model.
///
/// `theta` is strictly increasing; `phi` holds the `G - 1` free coefficient
/// vectors (each of length `q + 1`, intercept first). The reference group `G`
/// has `phi_G = 0` and is not stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcrmParams {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub hazard: BaselineHazard,
}

impl LcrmParams {
    pub fn new(
        beta: Vec<f64>,
        theta: Vec<f64>,
        phi: Vec<Vec<f64>>,
        hazard: BaselineHazard,
    ) -> Result<Self> {
        let params = Self { beta, theta, phi, hazard };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::Config("LCRM needs at least one group".into()));
        }
        if self.theta.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::Domain("theta must be finite and positive".into()));
        }
        if !self.is_ordered() {
            return Err(Error::Ordering(format!(
                "theta must be strictly increasing, got {:?}",
                self.theta
            )));
        }
        if self.phi.len() + 1 != self.theta.len() {
            return Err(Error::Config(format!(
                "{} groups need {} phi vectors, got {}",
                self.theta.len(),
                self.theta.len() - 1,
                self.phi.len()
            )));
        }
        if let Some(first) = self.phi.first() {
            if self.phi.iter().any(|v| v.len() != first.len()) {
                return Err(Error::Config("phi vectors differ in length".into()));
            }
        }
        Ok(())
    }

    pub fn n_groups(&self) -> usize {
        self.theta.len()
    }

    pub fn is_ordered(&self) -> bool {
        self.theta.first().is_some_and(|t| *t > 0.0) && self.theta.windows(2).all(|w| w[0] < w[1])
    }

    /// `z'phi_k` for every group, including the pinned reference (0).
    pub fn group_logits(&self, z: &[f64]) -> Vec<f64> {
        let mut logits: Vec<f64> = self.phi.iter().map(|p| dot(p, z)).collect();
        logits.push(0.0);
        logits
    }

    fn check_dims(&self, x: &[f64], z: &[f64]) -> Result<()> {
        check_len("x", x.len(), self.beta.len())?;
        if let Some(first) = self.phi.first() {
            check_len("z", z.len(), first.len())?;
        }
        Ok(())
    }
}

/// Parameters for one of the five models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelParams {
    Cox { beta: Vec<f64>, hazard: BaselineHazard },
    Cis { beta: Vec<f64>, hazard: BaselineHazard },
    Phph { beta1: Vec<f64>, beta2: Vec<f64>, hazard: BaselineHazard },
    Lacr { beta: Vec<f64>, hazard: BaselineHazard },
    Lcrm(LcrmParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Cox { .. } => ModelKind::Cox,
            ModelParams::Cis { .. } => ModelKind::Cis,
            ModelParams::Phph { .. } => ModelKind::Phph,
            ModelParams::Lacr { .. } => ModelKind::Lacr,
            ModelParams::Lcrm(_) => ModelKind::Lcrm,
        }
    }

    pub fn hazard(&self) -> &BaselineHazard {
        match self {
            ModelParams::Cox { hazard, .. }
            | ModelParams::Cis { hazard, .. }
            | ModelParams::Phph { hazard, .. }
            | ModelParams::Lacr { hazard, .. } => hazard,
            ModelParams::Lcrm(p) => &p.hazard,
        }
    }

    /// Number of latent groups; `None` for the non-mixture models.
    pub fn n_groups(&self) -> Option<usize> {
        match self {
            ModelParams::Lcrm(p) => Some(p.n_groups()),
            _ => None,
        }
    }

    pub fn as_lcrm(&self) -> Result<&LcrmParams> {
        match self {
            ModelParams::Lcrm(p) => Ok(p),
            other => Err(Error::ModelKind {
                expected: "lcrm".into(),
                found: other.kind().to_string(),
            }),
        }
    }

    /// Flattened `(column name, value)` pairs, e.g. `beta.1`, `theta.2`,
    /// `phi.1.0`, `lambda.3`. Indices are one-based except the `phi`
    /// coefficient index, which starts at 0 for the intercept.
    pub fn named_values(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let push_vec = |prefix: &str, v: &[f64], out: &mut Vec<(String, f64)>| {
            for (i, x) in v.iter().enumerate() {
                out.push((format!("{prefix}.{}", i + 1), *x));
            }
        };
        match self {
            ModelParams::Cox { beta, .. }
            | ModelParams::Cis { beta, .. }
            | ModelParams::Lacr { beta, .. } => push_vec("beta", beta, &mut out),
            ModelParams::Phph { beta1, beta2, .. } => {
                push_vec("beta1", beta1, &mut out);
                push_vec("beta2", beta2, &mut out);
            }
            ModelParams::Lcrm(p) => {
                push_vec("beta", &p.beta, &mut out);
                push_vec("theta", &p.theta, &mut out);
                for (k, phi) in p.phi.iter().enumerate() {
                    for (j, v) in phi.iter().enumerate() {
                        out.push((format!("phi.{}.{j}", k + 1), *v));
                    }
                }
            }
        }
        push_vec("lambda", self.hazard().rates(), &mut out);
        out
    }

    fn check_dims(&self, x: &[f64], z: &[f64], partition: &TimePartition) -> Result<()> {
        self.hazard().check_matches(partition)?;
        match self {
            ModelParams::Cox { beta, .. }
            | ModelParams::Cis { beta, .. }
            | ModelParams::Lacr { beta, .. } => check_len("x", x.len(), beta.len()),
            ModelParams::Phph { beta1, beta2, .. } => {
                check_len("x", x.len(), beta1.len())?;
                check_len("x", x.len(), beta2.len())
            }
            ModelParams::Lcrm(p) => p.check_dims(x, z),
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Config(format!(
            "covariate vector `{what}` has length {got}, expected {want}"
        )));
    }
    Ok(())
}

/// One subject: observed time, event indicator and the two covariate vectors.
/// `z` carries the leading intercept `1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub time: f64,
    pub event: bool,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl SurvivalRecord {
    pub fn nu(&self) -> u64 {
        u64::from(self.event)
    }
}

/// Observed data. Fields are public so that raw (possibly invalid) data can
/// be handed to the propriety checker; [`Dataset::new`] validates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<SurvivalRecord>,
    pub x_names: Vec<String>,
    /// Names of the `z` columns, starting with the intercept.
    pub z_names: Vec<String>,
}

pub const INTERCEPT: &str = "(intercept)";

impl Dataset {
    pub fn new(records: Vec<SurvivalRecord>, x_names: Vec<String>, z_names: Vec<String>) -> Result<Self> {
        let data = Self { records, x_names, z_names };
        data.validate()?;
        Ok(data)
    }

    /// Dataset with generic covariate names `x1..xp` and `z1..zq`.
    pub fn from_records(records: Vec<SurvivalRecord>, p: usize, q: usize) -> Result<Self> {
        let x_names = (1..=p).map(|j| format!("x{j}")).collect();
        let z_names = std::iter::once(INTERCEPT.to_string())
            .chain((1..=q).map(|j| format!("z{j}")))
            .collect();
        Self::new(records, x_names, z_names)
    }

    pub fn validate(&self) -> Result<()> {
        if self.z_names.is_empty() {
            return Err(Error::Config("z must include the intercept column".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            if !(r.time.is_finite() && r.time > 0.0) {
                return Err(Error::Domain(format!(
                    "record {i}: time must be finite and positive, got {}",
                    r.time
                )));
            }
            if r.x.len() != self.p() {
                return Err(Error::Config(format!(
                    "record {i}: x has length {}, expected {}",
                    r.x.len(),
                    self.p()
                )));
            }
            if r.z.len() != self.z_names.len() {
                return Err(Error::Config(format!(
                    "record {i}: z has length {}, expected {}",
                    r.z.len(),
                    self.z_names.len()
                )));
            }
            if r.z[0] != 1.0 {
                return Err(Error::Config(format!("record {i}: z must start with the intercept 1")));
            }
            if r.x.iter().chain(&r.z).any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("record {i}: non-finite covariate")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn p(&self) -> usize {
        self.x_names.len()
    }

    /// Length of `z` including the intercept, i.e. `q + 1`.
    pub fn z_len(&self) -> usize {
        self.z_names.len()
    }

    pub fn n_events(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    /// Mirror the `x` covariates (`x -> -x`); used for symmetry checks.
    pub fn with_negated_x(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            r.x.iter_mut().for_each(|v| *v = -*v);
        }
        out
    }
}

/// Latent Poisson counts and zero-based group memberships.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentState {
    pub counts: Vec<u64>,
    pub groups: Vec<usize>,
}

/// Interval index and exposures of every subject, computed once per fit.
#[derive(Clone, Debug)]
pub struct DesignCache {
    interval: Vec<usize>,
    exposures: Vec<f64>,
    n_intervals: usize,
}

impl DesignCache {
    pub fn new(data: &Dataset, partition: &TimePartition) -> Result<Self> {
        let n_intervals = partition.n_intervals();
        let mut interval = Vec::with_capacity(data.n());
        let mut exposures = Vec::with_capacity(data.n() * n_intervals);
        for r in &data.records {
            let d = interval_decompose(r.time, partition)?;
            interval.push(d.index);
            exposures.extend_from_slice(&d.exposures);
        }
        Ok(Self { interval, exposures, n_intervals })
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    pub fn interval(&self, i: usize) -> usize {
        self.interval[i]
    }

    pub fn exposures(&self, i: usize) -> &[f64] {
        &self.exposures[i * self.n_intervals..(i + 1) * self.n_intervals]
    }

    pub fn cumulative_hazard(&self, i: usize, hazard: &BaselineHazard) -> f64 {
        let j = self.interval[i];
        self.exposures(i)[..=j]
            .iter()
            .zip(hazard.rates())
            .map(|(e, l)| e * l)
            .sum()
    }

    /// `d_j`: observed events per interval.
    pub fn events_per_interval(&self, data: &Dataset) -> Vec<usize> {
        let mut d = vec![0; self.n_intervals];
        for (i, r) in data.records.iter().enumerate() {
            if r.event {
                d[self.interval[i]] += 1;
            }
        }
        d
    }
}

fn numeric_err(index: usize, message: impl Into<String>) -> Error {
    Error::Numeric { index, message: message.into() }
}

/// Cumulative hazard `exp(eta) * h0`, rejecting overflow.
fn scaled_hazard(eta: f64, h0: f64, index: usize) -> Result<f64> {
    let u = if h0 == 0.0 { 0.0 } else { eta.exp() * h0 };
    if !u.is_finite() {
        return Err(numeric_err(index, format!("exp(x'beta) * H0 overflowed (x'beta = {eta})")));
    }
    Ok(u)
}

/// `1 - exp(-u)` without cancellation.
fn one_minus_exp_neg(u: f64) -> f64 {
    -(-u).exp_m1()
}

/// Per-group terms `c_k` of the LCRM observed likelihood for one subject:
///
/// ```text
/// c_k = log w_k + nu (log theta_k + eta + log lambda_j - u) - theta_k (1 - e^{-u})
/// ```
///
/// so that the subject's log-likelihood is `logsumexp_k c_k`.
pub(crate) fn lcrm_subject_terms(
    params: &LcrmParams,
    record: &SurvivalRecord,
    interval: usize,
    h0: f64,
    index: usize,
) -> Result<Vec<f64>> {
    let eta = dot(&record.x, &params.beta);
    let u = scaled_hazard(eta, h0, index)?;
    let f = one_minus_exp_neg(u);
    let logits = params.group_logits(&record.z);
    let log_norm = log_sum_exp(&logits);
    let event_part = eta + params.hazard.rates()[interval].ln() - u;
    Ok(params
        .theta
        .iter()
        .zip(&logits)
        .map(|(&theta, &lg)| {
            let mut c = lg - log_norm - theta * f;
            if record.event {
                c += theta.ln() + event_part;
            }
            c
        })
        .collect())
}

fn lcrm_subject_loglik(
    params: &LcrmParams,
    record: &SurvivalRecord,
    interval: usize,
    h0: f64,
    index: usize,
) -> Result<f64> {
    let terms = lcrm_subject_terms(params, record, interval, h0, index)?;
    Ok(log_sum_exp(&terms))
}

/// Observed-data log-likelihood contribution of one subject.
pub(crate) fn subject_loglik(
    model: &ModelParams,
    record: &SurvivalRecord,
    interval: usize,
    h0: f64,
    index: usize,
) -> Result<f64> {
    let log_rate = model.hazard().rates()[interval].ln();
    let nu = record.event;
    let ll = match model {
        ModelParams::Cox { beta, .. } => {
            let eta = dot(&record.x, beta);
            let u = scaled_hazard(eta, h0, index)?;
            if nu { log_rate + eta - u } else { -u }
        }
        ModelParams::Cis { beta, .. } => {
            let eta = dot(&record.x, beta);
            let theta = eta.exp();
            let f0 = one_minus_exp_neg(h0);
            if nu { eta + log_rate - h0 - theta * f0 } else { -theta * f0 }
        }
        ModelParams::Phph { beta1, beta2, .. } => {
            let eta1 = dot(&record.x, beta1);
            let eta2 = dot(&record.x, beta2);
            let theta = eta1.exp();
            let u = scaled_hazard(eta2, h0, index)?;
            let f = one_minus_exp_neg(u);
            if nu { eta1 + eta2 + log_rate - u - theta * f } else { -theta * f }
        }
        ModelParams::Lacr { beta, .. } => {
            let theta = dot(&record.x, beta).exp();
            if nu {
                ln_one_minus_exp_neg(theta) + log_rate - h0
            } else {
                // S = 1 - (1 - e^{-theta}) F0
                (-(one_minus_exp_neg(theta) * one_minus_exp_neg(h0))).ln_1p()
            }
        }
        ModelParams::Lcrm(p) => lcrm_subject_loglik(p, record, interval, h0, index)?,
    };
    if ll.is_nan() || ll == f64::INFINITY {
        return Err(numeric_err(index, format!("log-likelihood evaluated to {ll}")));
    }
    Ok(ll)
}

fn check_data_dims(model: &ModelParams, data: &Dataset, partition: &TimePartition) -> Result<()> {
    model.hazard().check_matches(partition)?;
    if let Some(r) = data.records.first() {
        model.check_dims(&r.x, &r.z, partition)?;
    }
    Ok(())
}

/// Per-subject observed-data log-likelihoods, using a precomputed design.
pub fn subject_logliks_cached(model: &ModelParams, data: &Dataset, cache: &DesignCache) -> Result<Vec<f64>> {
    data.records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let h0 = cache.cumulative_hazard(i, model.hazard());
            subject_loglik(model, r, cache.interval(i), h0, i)
        })
        .collect()
}

pub fn subject_logliks(model: &ModelParams, data: &Dataset, partition: &TimePartition) -> Result<Vec<f64>> {
    check_data_dims(model, data, partition)?;
    let cache = DesignCache::new(data, partition)?;
    subject_logliks_cached(model, data, &cache)
}

/// Observed-data log-likelihood. An empty dataset gives 0.
pub fn observed_loglik(model: &ModelParams, data: &Dataset, partition: &TimePartition) -> Result<f64> {
    Ok(subject_logliks(model, data, partition)?.iter().sum())
}

pub fn observed_loglik_cached(model: &ModelParams, data: &Dataset, cache: &DesignCache) -> Result<f64> {
    let mut total = 0.0;
    for (i, r) in data.records.iter().enumerate() {
        let h0 = cache.cumulative_hazard(i, model.hazard());
        total += subject_loglik(model, r, cache.interval(i), h0, i)?;
    }
    Ok(total)
}

/// Log of the LCRM complete-data likelihood given latent counts and groups.
pub fn complete_loglik(
    params: &LcrmParams,
    latent: &LatentState,
    data: &Dataset,
    partition: &TimePartition,
) -> Result<f64> {
    params.hazard.check_matches(partition)?;
    if latent.counts.len() != data.n() || latent.groups.len() != data.n() {
        return Err(Error::Config("latent state length differs from the dataset".into()));
    }
    let mut total = 0.0;
    for (i, r) in data.records.iter().enumerate() {
        params.check_dims(&r.x, &r.z)?;
        let n_i = latent.counts[i];
        let g = latent.groups[i];
        if g >= params.n_groups() {
            return Err(Error::Domain(format!("record {i}: group {g} out of range")));
        }
        if n_i < r.nu() {
            return Err(Error::Domain(format!(
                "record {i}: an observed event needs at least one latent cell (zero likelihood)"
            )));
        }
        let d = interval_decompose(r.time, partition)?;
        let h0 = d.cumulative_hazard(&params.hazard);
        let eta = dot(&r.x, &params.beta);
        let nf = n_i as f64;
        let logits = params.group_logits(&r.z);
        let theta = params.theta[g];
        let mut ll = nf * theta.ln() - ln_factorial(n_i) - theta + logits[g] - log_sum_exp(&logits);
        if n_i > 0 {
            ll -= scaled_hazard(eta, h0, i)? * nf;
        }
        if r.event {
            ll += nf.ln() + params.hazard.rates()[d.index].ln() + eta;
        }
        total += ll;
    }
    Ok(total)
}

/// Membership probabilities `softmax(z'phi_1, ..., z'phi_{G-1}, 0)`.
pub fn membership_probs(phi: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    let mut logits: Vec<f64> = phi.iter().map(|p| dot(p, z)).collect();
    logits.push(0.0);
    softmax(&logits)
}

/// LCRM survival given group cure parameter `theta_k`:
/// `exp(-theta_k [1 - exp(-exp(x'beta) H0(t))])`.
pub fn conditional_lcrm_survival(
    theta_k: f64,
    beta: &[f64],
    t: f64,
    x: &[f64],
    partition: &TimePartition,
    hazard: &BaselineHazard,
) -> Result<f64> {
    if !(theta_k > 0.0) {
        return Err(Error::Domain(format!("theta must be positive, got {theta_k}")));
    }
    check_len("x", x.len(), beta.len())?;
    let h0 = cumulative_baseline_hazard(t, partition, hazard)?;
    let f = latency_cdf(dot(x, beta), h0);
    Ok((-theta_k * f).exp())
}

/// `1 - exp(-exp(eta) h0)`, with `h0 = inf` giving 1.
pub(crate) fn latency_cdf(eta: f64, h0: f64) -> f64 {
    if h0 == 0.0 {
        0.0
    } else {
        one_minus_exp_neg(eta.exp() * h0)
    }
}

/// Survival function `S(t)` of any model. `t` may be `+inf`, giving the cure
/// rate. `z` is ignored by the non-mixture models.
pub fn survival_at(
    model: &ModelParams,
    t: f64,
    x: &[f64],
    z: &[f64],
    partition: &TimePartition,
) -> Result<f64> {
    model.check_dims(x, z, partition)?;
    let h0 = cumulative_baseline_hazard(t, partition, model.hazard())?;
    let s = match model {
        ModelParams::Cox { beta, .. } => {
            if h0 == 0.0 { 1.0 } else { (-dot(x, beta).exp() * h0).exp() }
        }
        ModelParams::Cis { beta, .. } => (-dot(x, beta).exp() * one_minus_exp_neg(h0)).exp(),
        ModelParams::Phph { beta1, beta2, .. } => {
            (-dot(x, beta1).exp() * latency_cdf(dot(x, beta2), h0)).exp()
        }
        ModelParams::Lacr { beta, .. } => {
            let uncured = one_minus_exp_neg(dot(x, beta).exp());
            1.0 - uncured * one_minus_exp_neg(h0)
        }
        ModelParams::Lcrm(p) => {
            let f = latency_cdf(dot(x, &p.beta), h0);
            let w = membership_probs(&p.phi, z);
            let failed: f64 = w
                .iter()
                .zip(&p.theta)
                .map(|(wk, th)| wk * one_minus_exp_neg(th * f))
                .sum();
            1.0 - failed
        }
    };
    Ok(s)
}

/// Cure rate `S(inf)`. The Cox model has no cure fraction and returns 0.
pub fn cure_rate(model: &ModelParams, x: &[f64], z: &[f64]) -> Result<f64> {
    let rate = match model {
        ModelParams::Cox { beta, .. } => {
            check_len("x", x.len(), beta.len())?;
            0.0
        }
        ModelParams::Cis { beta, .. } | ModelParams::Lacr { beta, .. } => {
            check_len("x", x.len(), beta.len())?;
            (-dot(x, beta).exp()).exp()
        }
        ModelParams::Phph { beta1, .. } => {
            check_len("x", x.len(), beta1.len())?;
            (-dot(x, beta1).exp()).exp()
        }
        ModelParams::Lcrm(p) => {
            p.check_dims(x, z)?;
            membership_probs(&p.phi, z)
                .iter()
                .zip(&p.theta)
                .map(|(w, th)| w * (-th).exp())
                .sum()
        }
    };
    Ok(rate)
}

/// Gradient of the LCRM observed-data log-likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct LcrmGradient {
    pub beta: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
}

pub fn lcrm_loglik_gradient(
    params: &LcrmParams,
    data: &Dataset,
    partition: &TimePartition,
) -> Result<LcrmGradient> {
    params.hazard.check_matches(partition)?;
    let cache = DesignCache::new(data, partition)?;
    let g = params.n_groups();
    let rates = params.hazard.rates();
    let mut grad = LcrmGradient {
        beta: vec![0.0; params.beta.len()],
        theta: vec![0.0; g],
        phi: params.phi.iter().map(|v| vec![0.0; v.len()]).collect(),
        lambda: vec![0.0; rates.len()],
    };
    for (i, r) in data.records.iter().enumerate() {
        params.check_dims(&r.x, &r.z)?;
        let j = cache.interval(i);
        let h0 = cache.cumulative_hazard(i, &params.hazard);
        let terms = lcrm_subject_terms(params, r, j, h0, i)?;
        let resp = softmax(&terms);
        let w = membership_probs(&params.phi, &r.z);
        let eta = dot(&r.x, &params.beta);
        let e_eta = eta.exp();
        let u = e_eta * h0;
        let surv = (-u).exp();
        let f = one_minus_exp_neg(u);
        let nu = r.nu() as f64;
        // d c_k / d u = -nu - theta_k S
        let mut d_eta = 0.0;
        let mut d_u = 0.0;
        for ((r_k, th), g_th) in resp.iter().zip(&params.theta).zip(grad.theta.iter_mut()) {
            let dc_du = -nu - th * surv;
            d_eta += r_k * (nu + dc_du * u);
            d_u += r_k * dc_du;
            *g_th += r_k * (nu / th - f);
        }
        for (gb, xv) in grad.beta.iter_mut().zip(&r.x) {
            *gb += d_eta * xv;
        }
        for (l, e) in cache.exposures(i).iter().enumerate() {
            grad.lambda[l] += d_u * e_eta * e;
        }
        grad.lambda[j] += nu / rates[j];
        for (m, gphi) in grad.phi.iter_mut().enumerate() {
            let coef = resp[m] - w[m];
            for (gv, zv) in gphi.iter_mut().zip(&r.z) {
                *gv += coef * zv;
            }
        }
    }
    Ok(grad)
}
