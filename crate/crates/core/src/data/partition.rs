use crate::error::{Error, Result};
use crate::hazard::TimePartition;
use crate::models::Dataset;

/// Quantile of sorted values with midpoint interpolation: when `n p` is an
/// integer the two neighbouring order statistics are averaged.
pub fn event_time_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let np = n as f64 * p;
    let k = np.floor() as usize;
    if (np - k as f64).abs() < 1e-9 * n as f64 && k >= 1 && k < n {
        0.5 * (sorted[k - 1] + sorted[k])
    } else {
        sorted[(np.ceil() as usize).clamp(1, n) - 1]
    }
}

/// Cuts at the `j/J` quantiles of the observed event times, deduplicated,
/// dropping any cut that would leave an interval without events. The result
/// can therefore have fewer than `J` intervals when event times are tied.
pub fn build_partition(data: &Dataset, intervals: usize) -> Result<TimePartition> {
    if intervals == 0 {
        return Err(Error::Config("the number of intervals must be positive".into()));
    }
    let mut events: Vec<f64> = data.records.iter().filter(|r| r.event).map(|r| r.time).collect();
    if events.len() < intervals {
        return Err(Error::Config(format!(
            "{} observed events cannot fill {intervals} intervals; choose a smaller J",
            events.len()
        )));
    }
    events.sort_by(|a, b| a.total_cmp(b));
    let mut cuts: Vec<f64> = Vec::new();
    for j in 1..intervals {
        let c = event_time_quantile(&events, j as f64 / intervals as f64);
        let below = events.partition_point(|t| *t <= c);
        let prev = cuts.last().copied().unwrap_or(0.0);
        let since_prev = below - events.partition_point(|t| *t <= prev);
        // keep a cut only if both sides of it hold at least one event
        if c > prev && since_prev >= 1 && below < events.len() {
            cuts.push(c);
        }
    }
    TimePartition::new(cuts)
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
    fn single_interval() {
        let d = times(&[(1.0, true)]);
        assert!(build_partition(&d, 1).unwrap().cuts().is_empty());
    }

    #[test]
    fn median_cut() {
        let d = times(&[(1.0, true), (2.0, true), (3.0, true), (4.0, true), (10.0, false)]);
        let p = build_partition(&d, 2).unwrap();
        assert_eq!(p.cuts(), &[2.5]);
        let cache = crate::models::DesignCache::new(&d, &p).unwrap();
        assert_eq!(cache.events_per_interval(&d), vec![2, 2]);
    }

    #[test]
    fn ties_are_deduplicated() {
        let d = times(&[(1.0, true), (1.0, true), (1.0, true), (1.0, true), (2.0, true)]);
        let p = build_partition(&d, 4).unwrap();
        let cache = crate::models::DesignCache::new(&d, &p).unwrap();
        assert!(cache.events_per_interval(&d).iter().all(|&c| c >= 1));
        assert!(p.n_intervals() <= 4);
    }

    #[test]
    fn too_few_events() {
        let d = times(&[(1.0, true), (2.0, false)]);
        assert!(matches!(build_partition(&d, 2), Err(Error::Config(_))));
    }
}
