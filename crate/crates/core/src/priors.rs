//! Prior densities, elicitation of the ordered cure-parameter prior, and the
//! posterior propriety checker.
//!
//! Priors are independent:
//!
//! ```text
//! beta   ~ N(0, c01 I)
//! phi_k  ~ N(0, c02 I)            k = 1..G-1 (all q+1 components)
//! lambda_j ~ Gamma(a0, b0)
//! theta  ~ prod_k Gamma(a_k, b_k) restricted to 0 < theta_1 < ... < theta_G
//! ```
//!
//! The `theta` hyperparameters are elicited from prior cure rates `pi_k`:
//! `theta_0k = -ln(pi_k)`, `a_k = 1/c0^2`, `b_k = 1/(c0^2 theta_0k)`, which puts
//! the prior mean at `theta_0k` and the prior SD at `c0 * theta_0k`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::hazard::TimePartition;
use crate::models::{Dataset, DesignCache, LcrmParams};
use crate::numeric::{gamma_ln_pdf, normal_ln_pdf_iso};

pub const DEFAULT_C01: f64 = 1000.0;
pub const DEFAULT_C02: f64 = 3.0;
pub const DEFAULT_A0: f64 = 1.0;
pub const DEFAULT_B0: f64 = 0.01;
pub const DEFAULT_C0: f64 = 2.5;

/// Default prior cure rates for `G = 1..=5` groups.
pub fn default_prior_cure_rates(groups: usize) -> Vec<f64> {
    match groups {
        1 => vec![0.5],
        2 => vec![0.9, 0.3],
        3 => vec![0.9, 0.5, 0.1],
        4 => vec![0.9, 0.6, 0.3, 0.1],
        5 => vec![0.9, 0.7, 0.5, 0.3, 0.1],
        g => (0..g)
            .map(|k| 0.9 - 0.8 * k as f64 / (g - 1) as f64)
            .collect(),
    }
}

/// Hyperparameters of the LCRM prior (the reduced models use the `beta` and
/// `lambda` parts).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub c01: f64,
    pub c02: f64,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    /// Prior means `theta_0k`, strictly increasing.
    pub theta0: Vec<f64>,
    /// Gamma shapes `a_k`.
    pub theta_shape: Vec<f64>,
    /// Gamma rates `b_k`.
    pub theta_rate: Vec<f64>,
}

impl PriorSpec {
    /// Prior with elicited `theta` hyperparameters from prior cure rates.
    pub fn elicited(c01: f64, c02: f64, a0: f64, b0: f64, c0: f64, cure_rates: &[f64]) -> Result<Self> {
        let (theta_shape, theta_rate) = elicit_theta_prior(c0, cure_rates)?;
        let theta0 = cure_rates.iter().map(|c| -c.ln()).collect();
        let spec = Self { c01, c02, a0, b0, c0, theta0, theta_shape, theta_rate };
        spec.validate()?;
        Ok(spec)
    }

    /// Defaults: `c01 = 1000, c02 = 3, a0 = 1, b0 = 0.01, c0 = 2.5` and the
    /// default prior cure rates for `groups`.
    pub fn default_for_groups(groups: usize) -> Result<Self> {
        Self::elicited(
            DEFAULT_C01,
            DEFAULT_C02,
            DEFAULT_A0,
            DEFAULT_B0,
            DEFAULT_C0,
            &default_prior_cure_rates(groups),
        )
    }

    /// Same scalar hyperparameters, re-elicited for another number of groups.
    pub fn with_cure_rates(&self, cure_rates: &[f64]) -> Result<Self> {
        Self::elicited(self.c01, self.c02, self.a0, self.b0, self.c0, cure_rates)
    }

    pub fn n_groups(&self) -> usize {
        self.theta_shape.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c01", self.c01), ("c02", self.c02), ("c0", self.c0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.a0 >= 0.0 && self.b0 >= 0.0) {
            return Err(Error::Config("a0 and b0 must be nonnegative".into()));
        }
        if self.theta_shape.len() != self.theta_rate.len() || self.theta_shape.is_empty() {
            return Err(Error::Config("theta shape/rate vectors must be nonempty and equal length".into()));
        }
        Ok(())
    }
}

/// `a_k = 1/c0^2`, `b_k = 1/(c0^2 theta_0k)` with `theta_0k = -ln(cure_k)`.
pub fn elicit_theta_prior(c0: f64, cure_rates: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(c0.is_finite() && c0 > 0.0) {
        return Err(Error::Config(format!("c0 must be positive, got {c0}")));
    }
    if cure_rates.is_empty() {
        return Err(Error::Config("need at least one prior cure rate".into()));
    }
    if cure_rates.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
        return Err(Error::Domain(format!("prior cure rates must lie in (0, 1): {cure_rates:?}")));
    }
    if cure_rates.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Ordering(format!(
            "prior cure rates must be strictly decreasing: {cure_rates:?}"
        )));
    }
    let c2 = c0 * c0;
    let shape = vec![1.0 / c2; cure_rates.len()];
    let rate = cure_rates.iter().map(|c| 1.0 / (c2 * -c.ln())).collect();
    Ok((shape, rate))
}

/// Log prior density of LCRM parameters; `-inf` outside the order cone.
///
/// The `theta` term is the product of gamma densities without the cone's
/// normalising constant (see [`ordered_gamma_log_normalizer`]).
pub fn log_prior(params: &LcrmParams, spec: &PriorSpec) -> f64 {
    if !params.is_ordered() {
        return f64::NEG_INFINITY;
    }
    if spec.theta_shape.len() != params.n_groups() {
        return f64::NEG_INFINITY;
    }
    let mut lp = 0.0;
    if !params.beta.is_empty() {
        lp += normal_ln_pdf_iso(&params.beta, spec.c01);
    }
    for phi in &params.phi {
        if !phi.is_empty() {
            lp += normal_ln_pdf_iso(phi, spec.c02);
        }
    }
    for &l in params.hazard.rates() {
        lp += gamma_ln_pdf(l, spec.a0, spec.b0);
    }
    for ((t, a), b) in params.theta.iter().zip(&spec.theta_shape).zip(&spec.theta_rate) {
        lp += gamma_ln_pdf(*t, *a, *b);
    }
    lp
}

/// `ln P(theta_1 < ... < theta_G)` for independent `Gamma(a_k, b_k)`.
///
/// Computed by the recursion `C_1(t) = P(a_1, b_1 t)`,
/// `C_k(t) = int_0^t f_k(s) C_{k-1}(s) ds`, integrated on a uniform grid in
/// `ln s` (the integrands decay exponentially at both ends of that scale).
pub fn ordered_gamma_log_normalizer(shape: &[f64], rate: &[f64]) -> f64 {
    assert_eq!(shape.len(), rate.len());
    let g = shape.len();
    if g <= 1 {
        return 0.0;
    }
    // integration range in u = ln s covering all components' mass
    let mut u_lo = f64::INFINITY;
    let mut u_hi = f64::NEG_INFINITY;
    for (&a, &b) in shape.iter().zip(rate) {
        let lo = ((1e-17f64).ln() + ln_gamma(a + 1.0)) / a - b.ln();
        let hi = ((a + 45.0 + 12.0 * a.sqrt()) / b).ln();
        u_lo = u_lo.min(lo);
        u_hi = u_hi.max(hi);
    }
    let steps = 200_000usize;
    let h = (u_hi - u_lo) / steps as f64;
    let grid: Vec<f64> = (0..=steps).map(|m| u_lo + h * m as f64).collect();
    let mut cum: Vec<f64> = grid
        .iter()
        .map(|&u| gamma_lr(shape[0], rate[0] * u.exp()))
        .collect();
    for k in 1..g {
        let (a, b) = (shape[k], rate[k]);
        let log_norm = a * b.ln() - ln_gamma(a);
        // density of ln(theta_k) on the u grid: f(e^u) e^u
        let integrand: Vec<f64> = grid
            .iter()
            .zip(&cum)
            .map(|(&u, &c)| (log_norm + a * u - b * u.exp()).exp() * c)
            .collect();
        let mut acc = 0.0;
        cum[0] = 0.0;
        for m in 1..=steps {
            acc += 0.5 * h * (integrand[m - 1] + integrand[m]);
            cum[m] = acc;
        }
    }
    cum[steps].ln()
}

/// One of the four sufficient conditions for a proper posterior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProprietyCondition {
    /// (i) every event time is strictly positive.
    PositiveEventTimes,
    /// (ii) every interval contains at least one event.
    EventsInEveryInterval,
    /// (iii) some interval has a full-column-rank event design `(1, x')`.
    FullRankEventDesign,
    /// (iv) positivity of the prior hyperparameters.
    HyperparameterPositivity,
}

impl ProprietyCondition {
    pub fn label(self) -> &'static str {
        match self {
            ProprietyCondition::PositiveEventTimes => "(i)",
            ProprietyCondition::EventsInEveryInterval => "(ii)",
            ProprietyCondition::FullRankEventDesign => "(iii)",
            ProprietyCondition::HyperparameterPositivity => "(iv)",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProprietyReport {
    pub passes: bool,
    pub failed_conditions: Vec<ProprietyCondition>,
    /// `d_j` per interval (counting only events with a valid time).
    pub events_per_interval: Vec<usize>,
    /// Largest rank of `X_j` over intervals, and the target `p + 1`.
    pub best_rank: usize,
    pub required_rank: usize,
}

impl fmt::Display for ProprietyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passes {
            return f.write_str("all conditions hold");
        }
        let labels: Vec<&str> = self.failed_conditions.iter().map(|c| c.label()).collect();
        write!(f, "failed conditions {}", labels.join(", "))
    }
}

/// Evaluate the four sufficient conditions for posterior propriety.
///
/// Records with nonpositive times fail (i) when they are events and are
/// otherwise ignored when counting intervals.
pub fn check_propriety(data: &Dataset, partition: &TimePartition, spec: &PriorSpec) -> ProprietyReport {
    let n_int = partition.n_intervals();
    let p = data.p();
    let mut failed = Vec::new();

    if data.records.iter().any(|r| r.event && !(r.time > 0.0)) {
        failed.push(ProprietyCondition::PositiveEventTimes);
    }

    let mut d = vec![0usize; n_int];
    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_int];
    for r in &data.records {
        if !(r.event && r.time > 0.0) {
            continue;
        }
        let j = partition.interval_of(r.time);
        d[j] += 1;
        let mut row = Vec::with_capacity(p + 1);
        row.push(1.0);
        row.extend_from_slice(&r.x);
        rows[j].push(row);
    }
    if d.contains(&0) {
        failed.push(ProprietyCondition::EventsInEveryInterval);
    }

    let best_rank = rows.iter().map(|r| design_rank(r, p + 1)).max().unwrap_or(0);
    if best_rank < p + 1 {
        failed.push(ProprietyCondition::FullRankEventDesign);
    }

    if !hyperparameters_ok(spec, d.iter().sum()) {
        failed.push(ProprietyCondition::HyperparameterPositivity);
    }

    ProprietyReport {
        passes: failed.is_empty(),
        failed_conditions: failed,
        events_per_interval: d,
        best_rank,
        required_rank: p + 1,
    }
}

fn hyperparameters_ok(spec: &PriorSpec, total_events: usize) -> bool {
    let g = spec.theta_shape.len();
    if g == 0 || spec.theta_rate.len() != g || !(spec.c02 > 0.0) {
        return false;
    }
    let head_ok = (0..g - 1).all(|k| spec.theta_shape[k] > 0.0 && spec.theta_rate[k] >= 0.0);
    let shape_sum: f64 = spec.theta_shape[..g - 1].iter().sum();
    head_ok && total_events as f64 + shape_sum + spec.theta_shape[g - 1] > 0.0 && spec.theta_rate[g - 1] > 0.0
}

/// Numerical rank via SVD with tolerance `1e-10 * sigma_max`.
fn design_rank(rows: &[Vec<f64>], cols: usize) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
    let sv = m.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * smax).count()
}

/// Convenience wrapper building the interval cache for callers that already
/// validated the dataset.
pub fn events_per_interval(data: &Dataset, partition: &TimePartition) -> Result<Vec<usize>> {
    Ok(DesignCache::new(data, partition)?.events_per_interval(data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hazard::BaselineHazard;
    use crate::models::SurvivalRecord;
    use approx::assert_abs_diff_eq;

    #[test]
    fn elicitation_unit_case() {
        let (a, b) = elicit_theta_prior(1.0, &[(-1f64).exp()]).unwrap();
        assert_abs_diff_eq!(a[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn elicitation_default_scale() {
        let (a, b) = elicit_theta_prior(2.5, &[0.9]).unwrap();
        let theta0 = -(0.9f64).ln();
        assert_abs_diff_eq!(theta0, 0.10536, epsilon = 1e-5);
        assert_abs_diff_eq!(a[0], 0.16, epsilon = 1e-15);
        assert_abs_diff_eq!(b[0], 1.0 / (6.25 * theta0), epsilon = 1e-12);
        assert_abs_diff_eq!(b[0], 1.5186, epsilon = 1e-4);
    }

    #[test]
    fn elicitation_rejects_nondecreasing_cure_rates() {
        assert!(matches!(elicit_theta_prior(1.0, &[0.3, 0.5]), Err(Error::Ordering(_))));
        assert!(matches!(elicit_theta_prior(1.0, &[0.3, 0.3]), Err(Error::Ordering(_))));
    }

    #[test]
    fn log_prior_order_violation() {
        let spec = PriorSpec::default_for_groups(2).unwrap();
        let params = LcrmParams {
            beta: vec![],
            theta: vec![2.0, 1.0],
            phi: vec![vec![0.0]],
            hazard: BaselineHazard::new(vec![1.0]).unwrap(),
        };
        assert_eq!(log_prior(&params, &spec), f64::NEG_INFINITY);
    }

    #[test]
    fn log_prior_zero_coefficients_give_normalising_constants() {
        let spec = PriorSpec::default_for_groups(2).unwrap();
        let h = BaselineHazard::new(vec![1.0]).unwrap();
        let params = LcrmParams::new(vec![0.0; 2], vec![0.5, 2.0], vec![vec![0.0; 3]], h).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let normal = -(two_pi * 1000.0).ln() - 1.5 * (two_pi * 3.0).ln();
        let rest = gamma_ln_pdf(1.0, 1.0, 0.01)
            + gamma_ln_pdf(0.5, spec.theta_shape[0], spec.theta_rate[0])
            + gamma_ln_pdf(2.0, spec.theta_shape[1], spec.theta_rate[1]);
        assert_abs_diff_eq!(log_prior(&params, &spec), normal + rest, epsilon = 1e-12);
    }

    #[test]
    fn log_prior_textbook_gammas() {
        let spec = PriorSpec {
            c01: 1.0,
            c02: 1.0,
            a0: 1.0,
            b0: 0.01,
            c0: 1.0,
            theta0: vec![1.0],
            theta_shape: vec![1.0],
            theta_rate: vec![1.0],
        };
        let params = LcrmParams::new(vec![], vec![1.0], vec![], BaselineHazard::new(vec![1.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(log_prior(&params, &spec), -1.0 + (0.01f64.ln() - 0.01), epsilon = 1e-14);
    }

    #[test]
    fn ordered_normalizer_equal_components_is_inverse_factorial() {
        for g in 2..=5usize {
            let fact: f64 = (1..=g).map(|k| k as f64).product();
            let z = ordered_gamma_log_normalizer(&vec![0.16; g], &vec![1.3; g]);
            assert_abs_diff_eq!(z, -fact.ln(), epsilon = 1e-6);
            let z = ordered_gamma_log_normalizer(&vec![3.0; g], &vec![0.5; g]);
            assert_abs_diff_eq!(z, -fact.ln(), epsilon = 1e-6);
        }
    }

    #[test]
    fn ordered_normalizer_two_exponentials() {
        // P(X < Y) for X ~ Exp(a), Y ~ Exp(b) is a / (a + b)
        let z = ordered_gamma_log_normalizer(&[1.0, 1.0], &[2.0, 0.5]);
        assert_abs_diff_eq!(z, (2.0f64 / 2.5).ln(), epsilon = 1e-7);
    }

    fn rec(time: f64, event: bool, x: f64) -> SurvivalRecord {
        SurvivalRecord { time, event, x: vec![x], z: vec![1.0] }
    }

    fn raw(records: Vec<SurvivalRecord>) -> Dataset {
        Dataset { records, x_names: vec!["x1".into()], z_names: vec!["(intercept)".into()] }
    }

    #[test]
    fn propriety_positive_times() {
        let spec = PriorSpec::default_for_groups(2).unwrap();
        let data = raw(vec![rec(0.0, true, 0.0), rec(1.0, true, 1.0), rec(2.0, true, 2.0)]);
        let report = check_propriety(&data, &TimePartition::single(), &spec);
        assert_eq!(report.failed_conditions, vec![ProprietyCondition::PositiveEventTimes]);
    }

    #[test]
    fn propriety_empty_interval() {
        let spec = PriorSpec::default_for_groups(2).unwrap();
        let data = raw(vec![rec(0.5, true, 0.0), rec(0.7, true, 1.0), rec(2.0, false, 2.0)]);
        let report = check_propriety(&data, &TimePartition::new(vec![1.0]).unwrap(), &spec);
        assert_eq!(report.failed_conditions, vec![ProprietyCondition::EventsInEveryInterval]);
        assert_eq!(report.events_per_interval, vec![2, 0]);
    }

    #[test]
    fn propriety_constant_covariate_is_rank_deficient() {
        let spec = PriorSpec::default_for_groups(2).unwrap();
        let data = raw(vec![rec(0.5, true, 1.0), rec(0.7, true, 1.0), rec(2.0, true, 1.0)]);
        let report = check_propriety(&data, &TimePartition::single(), &spec);
        assert_eq!(report.failed_conditions, vec![ProprietyCondition::FullRankEventDesign]);
        assert_eq!(report.best_rank, 1);
    }

    #[test]
    fn propriety_hyperparameters() {
        let mut spec = PriorSpec::default_for_groups(3).unwrap();
        let data = raw(vec![rec(0.5, true, 0.0), rec(0.7, true, 1.0)]);
        assert!(check_propriety(&data, &TimePartition::single(), &spec).passes);
        // a_G = 0 is allowed
        spec.theta_shape[2] = 0.0;
        assert!(check_propriety(&data, &TimePartition::single(), &spec).passes);
        spec.theta_rate[2] = 0.0;
        let report = check_propriety(&data, &TimePartition::single(), &spec);
        assert_eq!(report.failed_conditions, vec![ProprietyCondition::HyperparameterPositivity]);
        let mut spec = PriorSpec::default_for_groups(3).unwrap();
        spec.theta_shape[0] = 0.0;
        assert!(!check_propriety(&data, &TimePartition::single(), &spec).passes);
    }

    #[test]
    fn adding_an_event_to_empty_interval_fixes_condition_two() {
        let spec = PriorSpec::default_for_groups(2).unwrap();
        let part = TimePartition::new(vec![1.0]).unwrap();
        let mut data = raw(vec![rec(0.5, true, 0.0), rec(0.7, true, 1.0), rec(2.0, false, 2.0)]);
        assert!(!check_propriety(&data, &part, &spec).passes);
        data.records.push(rec(3.0, true, 0.5));
        assert!(check_propriety(&data, &part, &spec).passes);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn elicited_moments_are_exact(c0 in 0.1f64..5.0, theta0 in 0.01f64..5.0) {
                let cure = (-theta0).exp();
                let (a, b) = elicit_theta_prior(c0, &[cure]).unwrap();
                let theta0 = -cure.ln();
                let mean = a[0] / b[0];
                let sd = a[0].sqrt() / b[0];
                prop_assert!((mean - theta0).abs() <= 1e-12 * theta0);
                prop_assert!((sd - c0 * theta0).abs() <= 1e-12 * c0 * theta0);
            }

            #[test]
            fn log_prior_finite_inside_cone(t1 in 0.01f64..3.0, gap in 0.01f64..3.0, b in -3.0f64..3.0) {
                let spec = PriorSpec::default_for_groups(2).unwrap();
                let h = BaselineHazard::new(vec![0.7]).unwrap();
                let inside = LcrmParams::new(vec![b], vec![t1, t1 + gap], vec![vec![b, -b]], h.clone()).unwrap();
                prop_assert!(log_prior(&inside, &spec).is_finite());
                let outside = LcrmParams { beta: vec![b], theta: vec![t1 + gap, t1], phi: vec![vec![b, -b]], hazard: h };
                prop_assert_eq!(log_prior(&outside, &spec), f64::NEG_INFINITY);
            }
        }
    }
}
