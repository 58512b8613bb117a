use serde::{Deserialize, Serialize};

use crate::models::Dataset;

/// Kaplan–Meier product-limit estimate: a right-continuous step function
/// equal to 1 before the first event time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    /// Distinct event times, increasing.
    pub times: Vec<f64>,
    /// Survival just after each event time.
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl KmCurve {
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|s| *s <= t);
        if k == 0 { 1.0 } else { self.survival[k - 1] }
    }

    /// Greenwood variance of the estimate at `t`.
    pub fn greenwood_variance(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|s| *s <= t);
        let s = self.survival_at(t);
        let sum: f64 = (0..k)
            .map(|i| {
                let (n, d) = (self.at_risk[i] as f64, self.events[i] as f64);
                if n > d { d / (n * (n - d)) } else { 0.0 }
            })
            .sum();
        s * s * sum
    }
}

/// Product-limit estimator. Censored times tied with an event time count as
/// at risk at that time.
pub fn km_estimate(data: &Dataset) -> KmCurve {
    let mut obs: Vec<(f64, bool)> = data.records.iter().map(|r| (r.time, r.event)).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut curve = KmCurve { times: Vec::new(), survival: Vec::new(), at_risk: Vec::new(), events: Vec::new() };
    let mut s = 1.0;
    let mut i = 0;
    let n = obs.len();
    while i < n {
        let t = obs[i].0;
        let mut j = i;
        let mut d = 0;
        while j < n && obs[j].0 == t {
            d += usize::from(obs[j].1);
            j += 1;
        }
        if d > 0 {
            let at_risk = n - i;
            s *= 1.0 - d as f64 / at_risk as f64;
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.events.push(d);
        }
        i = j;
    }
    curve
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::SurvivalRecord;

    fn times(ts: &[(f64, bool)]) -> Dataset {
        let records = ts
            .iter()
            .map(|&(time, event)| SurvivalRecord { time, event, x: vec![], z: vec![1.0] })
            .collect();
        Dataset::from_records(records, 0, 0).unwrap()
    }

    #[test]
    fn uncensored_three_events() {
        let km = km_estimate(&times(&[(2.0, true), (1.0, true), (3.0, true)]));
        assert_eq!(km.times, vec![1.0, 2.0, 3.0]);
        let expect = [2.0 / 3.0, 1.0 / 3.0, 0.0];
        for (a, b) in km.survival.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(km.survival_at(0.5), 1.0);
        assert_eq!(km.survival_at(1.0), km.survival[0]);
    }

    #[test]
    fn all_censored_is_flat() {
        let km = km_estimate(&times(&[(1.0, false), (2.0, false)]));
        assert!(km.times.is_empty());
        assert_eq!(km.survival_at(10.0), 1.0);
    }

    #[test]
    fn censoring_reduces_risk_set() {
        let km = km_estimate(&times(&[(1.0, true), (2.0, false), (3.0, true), (4.0, true)]));
        // 3/4, then 3/4 * 1/2, then 0
        assert!((km.survival[1] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn uncensored_equals_empirical_survival() {
        let ts = [0.3, 1.7, 0.9, 2.2, 0.5, 1.1, 3.0];
        let km = km_estimate(&times(&ts.iter().map(|&t| (t, true)).collect::<Vec<_>>()));
        for &t in &[0.1, 0.4, 0.95, 1.5, 2.5, 3.5] {
            let emp = ts.iter().filter(|&&s| s > t).count() as f64 / ts.len() as f64;
            assert!((km.survival_at(t) - emp).abs() < 1e-12);
        }
    }
}
