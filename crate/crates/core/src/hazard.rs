//! Piecewise-exponential baseline hazard.
//!
//! The time axis is split into `J` intervals `(s_{j-1}, s_j]` with `s_0 = 0`
//! and `s_J = +inf`. The baseline hazard is constant (`lambda_j`) inside
//! interval `j`, so the cumulative hazard is piecewise linear:
//!
//! ```text
//! H0(y) = sum_j lambda_j * e_j(y),   e_j(y) = max(0, min(y, s_j) - s_{j-1})
//! F0(y) = 1 - exp(-H0(y))
//! ```
//!
//! A time equal to a cut point `s_j` belongs to interval `j` (the left one).
//! Interval indices are zero-based throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cut points `s_1 < ... < s_{J-1}` of the time axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimePartition {
    cuts: Vec<f64>,
}

impl TimePartition {
    pub fn new(cuts: Vec<f64>) -> Result<Self> {
        for (k, &c) in cuts.iter().enumerate() {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Config(format!(
                    "cut point {k} must be finite and positive, got {c}"
                )));
            }
            if k > 0 && cuts[k - 1] >= c {
                return Err(Error::Config(format!(
                    "cut points must be strictly increasing ({} >= {c})",
                    cuts[k - 1]
                )));
            }
        }
        Ok(Self { cuts })
    }

    /// The one-interval partition (exponential baseline).
    pub fn single() -> Self {
        Self { cuts: Vec::new() }
    }

    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    /// Number of intervals `J`.
    pub fn n_intervals(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn lower(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.cuts[j - 1]
        }
    }

    pub fn upper(&self, j: usize) -> f64 {
        self.cuts.get(j).copied().unwrap_or(f64::INFINITY)
    }

    /// Zero-based interval containing `y`, using the `(s_{j-1}, s_j]` convention.
    pub fn interval_of(&self, y: f64) -> usize {
        self.cuts.partition_point(|&c| c < y)
    }
}

impl TryFrom<Vec<f64>> for TimePartition {
    type Error = Error;

    fn try_from(cuts: Vec<f64>) -> Result<Self> {
        Self::new(cuts)
    }
}

impl From<TimePartition> for Vec<f64> {
    fn from(p: TimePartition) -> Self {
        p.cuts
    }
}

impl TryFrom<Vec<f64>> for BaselineHazard {
    type Error = Error;

    fn try_from(rates: Vec<f64>) -> Result<Self> {
        Self::new(rates)
    }
}

impl From<BaselineHazard> for Vec<f64> {
    fn from(h: BaselineHazard) -> Self {
        h.rates
    }
}

/// Interval-wise hazard rates `lambda_1..lambda_J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BaselineHazard {
    rates: Vec<f64>,
}

impl BaselineHazard {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Config("baseline hazard needs at least one rate".into()));
        }
        if let Some((j, r)) = rates
            .iter()
            .enumerate()
            .find(|(_, r)| !(r.is_finite() && **r > 0.0))
        {
            return Err(Error::Config(format!(
                "hazard rate {j} must be finite and positive, got {r}"
            )));
        }
        Ok(Self { rates })
    }

    /// Constant hazard over `n_intervals` intervals.
    pub fn constant(rate: f64, n_intervals: usize) -> Result<Self> {
        Self::new(vec![rate; n_intervals])
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn check_matches(&self, partition: &TimePartition) -> Result<()> {
        if self.rates.len() != partition.n_intervals() {
            return Err(Error::Config(format!(
                "baseline hazard has {} rates but the partition has {} intervals",
                self.rates.len(),
                partition.n_intervals()
            )));
        }
        Ok(())
    }
}

/// Where a time falls on the partition, and how much of it each interval holds.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalDecomposition {
    /// Zero-based index of the interval containing `y`.
    pub index: usize,
    /// `e_j = max(0, min(y, s_j) - s_{j-1})`; sums to `y`.
    pub exposures: Vec<f64>,
}

impl IntervalDecomposition {
    pub fn cumulative_hazard(&self, hazard: &BaselineHazard) -> f64 {
        self.exposures[..=self.index]
            .iter()
            .zip(hazard.rates())
            .map(|(e, l)| e * l)
            .sum()
    }
}

pub fn interval_decompose(y: f64, partition: &TimePartition) -> Result<IntervalDecomposition> {
    if !(y > 0.0) || y.is_nan() {
        return Err(Error::Domain(format!("time must be positive, got {y}")));
    }
    let index = partition.interval_of(y);
    let exposures = (0..partition.n_intervals())
        .map(|j| exposure(y, partition, j))
        .collect();
    Ok(IntervalDecomposition { index, exposures })
}

fn exposure(y: f64, partition: &TimePartition, j: usize) -> f64 {
    let lo = partition.lower(j);
    if y <= lo {
        return 0.0;
    }
    y.min(partition.upper(j)) - lo
}

fn check_time(y: f64) -> Result<()> {
    if y.is_nan() || y < 0.0 {
        return Err(Error::Domain(format!("time must be nonnegative, got {y}")));
    }
    Ok(())
}

/// `H0*(y)`, the integrated step hazard. `H0*(0) = 0`, `H0*(inf) = inf`.
pub fn cumulative_baseline_hazard(
    y: f64,
    partition: &TimePartition,
    hazard: &BaselineHazard,
) -> Result<f64> {
    check_time(y)?;
    hazard.check_matches(partition)?;
    if y.is_infinite() {
        return Ok(f64::INFINITY);
    }
    Ok(hazard
        .rates()
        .iter()
        .enumerate()
        .map(|(j, l)| l * exposure(y, partition, j))
        .sum())
}

/// `log(1 - F0(y)) = -H0*(y)`.
pub fn baseline_log_survival(
    y: f64,
    partition: &TimePartition,
    hazard: &BaselineHazard,
) -> Result<f64> {
    Ok(-cumulative_baseline_hazard(y, partition, hazard)?)
}

/// Piecewise-exponential baseline c.d.f. `F0(y) = 1 - exp(-H0*(y))`.
pub fn baseline_cdf(y: f64, partition: &TimePartition, hazard: &BaselineHazard) -> Result<f64> {
    let h = cumulative_baseline_hazard(y, partition, hazard)?;
    Ok(-(-h).exp_m1())
}

/// Smallest `y` with `H0*(y) = target`; exact segment inversion.
pub fn inverse_cumulative_hazard(
    target: f64,
    partition: &TimePartition,
    hazard: &BaselineHazard,
) -> Result<f64> {
    hazard.check_matches(partition)?;
    if target.is_nan() || target < 0.0 {
        return Err(Error::Domain(format!(
            "cumulative hazard target must be nonnegative, got {target}"
        )));
    }
    if target.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut acc = 0.0;
    let last = partition.n_intervals() - 1;
    for (j, &rate) in hazard.rates().iter().enumerate() {
        let lo = partition.lower(j);
        if j == last {
            return Ok(lo + (target - acc) / rate);
        }
        let width = partition.upper(j) - lo;
        let seg = rate * width;
        if acc + seg >= target {
            return Ok((lo + (target - acc) / rate).min(partition.upper(j)));
        }
        acc += seg;
    }
    unreachable!("last interval is unbounded")
}
