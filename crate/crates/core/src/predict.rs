//! Posterior predictive risk-group probabilities, classification, cure rates
//! and survival curves for a new subject.
//!
//! Per draw, the probability of group `k` given survival to `t` is
//! `softmax_k(z'phi_k - theta_k F(t))` with `F(t) = 1 - exp(-exp(x'beta) H0(t))`;
//! at `t = 0` this is the membership model and at `t = inf` it is
//! `softmax_k(z'phi_k - theta_k)`. Reported values are Monte Carlo averages
//! over draws in archive order.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::archive::{fmt_float, SampleArchive};
use crate::error::{Error, Result};
use crate::hazard::{cumulative_baseline_hazard, TimePartition};
use crate::models::{latency_cdf, LcrmParams};
use crate::numeric::{argmax_first, dot, softmax};
use crate::summaries::modal_draws;

/// A prediction time: finite and nonnegative, or the limit `t -> inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimePoint {
    Finite(f64),
    Infinity,
}

impl TimePoint {
    pub fn zero() -> Self {
        TimePoint::Finite(0.0)
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimePoint::Finite(t) => write!(f, "{t}"),
            TimePoint::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for TimePoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "+inf") || s == "∞" {
            return Ok(TimePoint::Infinity);
        }
        let t: f64 = s.parse().map_err(|_| Error::Config(format!("invalid time {s:?}")))?;
        if t.is_infinite() && t > 0.0 {
            return Ok(TimePoint::Infinity);
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("prediction time must be nonnegative, got {s}")));
        }
        Ok(TimePoint::Finite(t))
    }
}

impl Serialize for TimePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TimePoint::Finite(t) => s.serialize_f64(*t),
            TimePoint::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for TimePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(t) if t >= 0.0 => Ok(TimePoint::Finite(t)),
            Raw::Num(t) => Err(serde::de::Error::custom(format!("negative time {t}"))),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// LCRM draws used for prediction; trans-dimensional archives contribute
/// the draws with the most frequent number of groups.
pub fn lcrm_draws(archive: &SampleArchive) -> Result<Vec<&LcrmParams>> {
    if archive.is_empty() {
        return Err(Error::Config("archive holds no draws".into()));
    }
    modal_draws(archive).into_iter().map(|d| d.params.as_lcrm()).collect()
}

/// `F(t | x)` for one draw.
fn latency_at(p: &LcrmParams, t: TimePoint, x: &[f64], partition: &TimePartition) -> Result<f64> {
    if x.len() != p.beta.len() {
        return Err(Error::Config(format!("x has length {}, expected {}", x.len(), p.beta.len())));
    }
    Ok(match t {
        TimePoint::Infinity => 1.0,
        TimePoint::Finite(t) => latency_cdf(dot(x, &p.beta), cumulative_baseline_hazard(t, partition, &p.hazard)?),
    })
}

/// `softmax_k(z'phi_k - theta_k f)` for one draw.
pub fn draw_group_probs(p: &LcrmParams, f: f64, z: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = p.group_logits(z).iter().zip(&p.theta).map(|(l, th)| l - th * f).collect();
    softmax(&logits)
}

fn check_z(p: &LcrmParams, z: &[f64]) -> Result<()> {
    match p.phi.first() {
        Some(v) if v.len() != z.len() => Err(Error::Config(format!("z has length {}, expected {}", z.len(), v.len()))),
        _ => Ok(()),
    }
}

fn average(rows: impl Iterator<Item = Vec<f64>>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut m = 0usize;
    for row in rows {
        if sum.is_empty() {
            sum = vec![0.0; row.len()];
        }
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v;
        }
        m += 1;
    }
    sum.iter().map(|s| s / m as f64).collect()
}

/// Averaged probabilities given per-draw latency values.
fn probs_given_latency(draws: &[&LcrmParams], latency: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    for p in draws {
        check_z(p, z)?;
    }
    Ok(average(draws.iter().zip(latency).map(|(p, f)| draw_group_probs(p, *f, z))))
}

/// Membership probabilities `E[softmax(z'phi)]`; identical to
/// [`predictive_probs_at`] at `t = 0`.
pub fn predictive_probs_t0(archive: &SampleArchive, z: &[f64]) -> Result<Vec<f64>> {
    let draws = lcrm_draws(archive)?;
    probs_given_latency(&draws, &vec![0.0; draws.len()], z)
}

/// Group probabilities for a subject known to be event-free at `t`.
pub fn predictive_probs_at(
    archive: &SampleArchive,
    t: TimePoint,
    x: &[f64],
    z: &[f64],
    partition: &TimePartition,
) -> Result<Vec<f64>> {
    let draws = lcrm_draws(archive)?;
    let latency = draws.iter().map(|p| latency_at(p, t, x, partition)).collect::<Result<Vec<_>>>()?;
    probs_given_latency(&draws, &latency, z)
}

/// One-based index of the most probable group, smallest index on ties.
pub fn classify_probs(probs: &[f64]) -> usize {
    argmax_first(probs) + 1
}

/// One-based group assignment at time `t`.
pub fn classify(
    archive: &SampleArchive,
    t: TimePoint,
    x: &[f64],
    z: &[f64],
    partition: &TimePartition,
) -> Result<usize> {
    Ok(classify_probs(&predictive_probs_at(archive, t, x, z, partition)?))
}

/// `E[sum_k exp(-theta_k) softmax_k(z'phi)]`.
pub fn overall_cure_rate_pred(archive: &SampleArchive, z: &[f64]) -> Result<f64> {
    let draws = lcrm_draws(archive)?;
    let mut total = 0.0;
    for p in &draws {
        check_z(p, z)?;
        let w = softmax(&p.group_logits(z));
        total += w.iter().zip(&p.theta).map(|(wk, th)| wk * (-th).exp()).sum::<f64>();
    }
    Ok(total / draws.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurves {
    pub grid: Vec<f64>,
    /// `groups[k][m]`: posterior mean of `exp(-theta_k F(t_m))`.
    pub groups: Vec<Vec<f64>>,
    /// Posterior mean of the population survival `sum_k w_k exp(-theta_k F)`.
    pub marginal: Vec<f64>,
}

/// Group-specific and marginal survival curves on `grid`.
pub fn survival_curves(
    archive: &SampleArchive,
    x: &[f64],
    z: &[f64],
    partition: &TimePartition,
    grid: &[f64],
) -> Result<SurvivalCurves> {
    if grid.is_empty() {
        return Err(Error::Config("survival grid is empty".into()));
    }
    if let Some(t) = grid.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::Domain(format!("grid times must be finite and nonnegative, got {t}")));
    }
    let draws = lcrm_draws(archive)?;
    let g = draws[0].n_groups();
    let mut groups = vec![vec![0.0; grid.len()]; g];
    let mut marginal = vec![0.0; grid.len()];
    for p in &draws {
        check_z(p, z)?;
        let w = softmax(&p.group_logits(z));
        for (m, &t) in grid.iter().enumerate() {
            let f = latency_at(p, TimePoint::Finite(t), x, partition)?;
            let mut mix = 0.0;
            for k in 0..g {
                let s = (-p.theta[k] * f).exp();
                groups[k][m] += s;
                mix += w[k] * s;
            }
            marginal[m] += mix;
        }
    }
    let m = draws.len() as f64;
    for row in groups.iter_mut().chain(std::iter::once(&mut marginal)) {
        for v in row.iter_mut() {
            *v /= m;
        }
    }
    Ok(SurvivalCurves { grid: grid.to_vec(), groups, marginal })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityRow {
    pub t: TimePoint,
    pub probs: Vec<f64>,
}

/// Predictions for one covariate profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveReport {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub groups: usize,
    /// Grid rows, always including `t = 0` first and `t = inf` last.
    pub probs_at_t: Vec<ProbabilityRow>,
    pub at_time: TimePoint,
    /// One-based group assigned at `at_time`.
    pub assigned_group: usize,
    pub probs_at_assignment: Vec<f64>,
    pub overall_cure_rate: f64,
    pub survival: SurvivalCurves,
}

pub fn predictive_report(
    archive: &SampleArchive,
    x: &[f64],
    z: &[f64],
    partition: &TimePartition,
    grid: &[f64],
    at_time: TimePoint,
) -> Result<PredictiveReport> {
    let mut times = vec![TimePoint::zero()];
    times.extend(grid.iter().filter(|t| **t > 0.0).map(|t| TimePoint::Finite(*t)));
    times.push(TimePoint::Infinity);
    let probs_at_t = times
        .into_iter()
        .map(|t| Ok(ProbabilityRow { t, probs: predictive_probs_at(archive, t, x, z, partition)? }))
        .collect::<Result<Vec<_>>>()?;
    let probs_at_assignment = predictive_probs_at(archive, at_time, x, z, partition)?;
    let mut curve_grid = vec![0.0];
    curve_grid.extend(grid.iter().filter(|t| **t > 0.0));
    Ok(PredictiveReport {
        x: x.to_vec(),
        z: z.to_vec(),
        groups: probs_at_assignment.len(),
        probs_at_t,
        at_time,
        assigned_group: classify_probs(&probs_at_assignment),
        probs_at_assignment,
        overall_cure_rate: overall_cure_rate_pred(archive, z)?,
        survival: survival_curves(archive, x, z, partition, &curve_grid)?,
    })
}

/// Long-format CSV `t,group,survival`; the marginal curve uses group
/// `overall`.
pub fn write_survival_csv(curves: &SurvivalCurves, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "group", "survival"])?;
    for (k, row) in curves.groups.iter().enumerate() {
        for (t, s) in curves.grid.iter().zip(row) {
            w.write_record([fmt_float(*t), (k + 1).to_string(), fmt_float(*s)])?;
        }
    }
    for (t, s) in curves.grid.iter().zip(&curves.marginal) {
        w.write_record([fmt_float(*t), "overall".to_string(), fmt_float(*s)])?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format CSV `t,k,probability` with `t = inf` for the limit.
pub fn write_probability_csv(rows: &[ProbabilityRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "k", "probability"])?;
    for row in rows {
        let t = match row.t {
            TimePoint::Finite(t) => fmt_float(t),
            TimePoint::Infinity => "inf".to_string(),
        };
        for (k, p) in row.probs.iter().enumerate() {
            w.write_record([t.clone(), (k + 1).to_string(), fmt_float(*p)])?;
        }
    }
    w.flush()?;
    Ok(())
}
