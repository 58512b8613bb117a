use lcrm_core::archive::PointwiseAccumulator;
use lcrm_core::data::{build_partition, destandardize, standardize};
use lcrm_core::hazard::{cumulative_baseline_hazard, inverse_cumulative_hazard};
use lcrm_core::models::{cure_rate, membership_probs, survival_at};
use lcrm_core::predict::predictive_probs_at;
use lcrm_core::predict::TimePoint;
use lcrm_core::summaries::{hpd_interval, log_mean_likelihood_sum};
use lcrm_core::*;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn partition_strategy() -> impl Strategy<Value = TimePartition> {
    prop::collection::vec(0.05f64..4.0, 0..4).prop_map(|mut cuts| {
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        TimePartition::new(cuts).unwrap()
    })
}

fn lcrm_strategy(intervals: usize) -> impl Strategy<Value = LcrmParams> {
    (
        prop::collection::vec(-1.0f64..1.0, 2),
        prop::collection::vec(0.05f64..1.5, 1..4),
        prop::collection::vec(-2.0f64..2.0, 6),
        prop::collection::vec(0.1f64..2.0, intervals),
    )
        .prop_map(|(beta, steps, phi, rates)| {
            let theta: Vec<f64> = steps.iter().scan(0.0, |acc, s| {
                *acc += s;
                Some(*acc)
            }).collect();
            let phi = phi.chunks(2).take(theta.len() - 1).map(|c| c.to_vec()).collect();
            LcrmParams::new(beta, theta, phi, BaselineHazard::new(rates).unwrap()).unwrap()
        })
}

fn partition_and_params() -> impl Strategy<Value = (TimePartition, LcrmParams)> {
    partition_strategy().prop_flat_map(|p| {
        let j = p.n_intervals();
        (Just(p), lcrm_strategy(j))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn cumulative_hazard_is_monotone_and_inverts((partition, params) in partition_and_params(), a in 0.0f64..6.0, b in 0.0f64..6.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let h_lo = cumulative_baseline_hazard(lo, &partition, &params.hazard).unwrap();
        let h_hi = cumulative_baseline_hazard(hi, &partition, &params.hazard).unwrap();
        prop_assert!(h_lo <= h_hi);
        let back = inverse_cumulative_hazard(h_hi, &partition, &params.hazard).unwrap();
        prop_assert!((back - hi).abs() <= 1e-9 * hi.max(1.0));
    }

    #[test]
    fn lcrm_survival_lies_between_cure_rate_and_one(
        (partition, params) in partition_and_params(),
        t1 in 0.0f64..8.0,
        dt in 0.0f64..4.0,
        x in prop::collection::vec(-2.0f64..2.0, 2),
        z1 in -2.0f64..2.0,
    ) {
        let z = [1.0, z1];
        let model = ModelParams::Lcrm(params);
        let s1 = survival_at(&model, t1, &x, &z, &partition).unwrap();
        let s2 = survival_at(&model, t1 + dt, &x, &z, &partition).unwrap();
        let cure = cure_rate(&model, &x, &z).unwrap();
        prop_assert!(s2 <= s1 + 1e-15);
        prop_assert!(cure <= s2 + 1e-15 && s1 <= 1.0);
    }

    #[test]
    fn membership_probabilities_form_a_distribution(params in lcrm_strategy(1), z1 in -5.0f64..5.0) {
        let w = membership_probs(&params.phi, &[1.0, z1]);
        prop_assert_eq!(w.len(), params.n_groups());
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predictive_probabilities_sum_to_one(
        draws in prop::collection::vec(lcrm_strategy(2), 1..8),
        t in 0.0f64..5.0,
        z1 in -2.0f64..2.0,
    ) {
        let groups = draws[0].n_groups();
        let draws: Vec<LcrmParams> = draws.into_iter().filter(|d| d.n_groups() == groups).collect();
        let partition = TimePartition::new(vec![1.0]).unwrap();
        let archive = SampleArchive {
            model: ModelKind::Lcrm,
            partition: partition.clone(),
            config: McmcConfig::quick(0),
            prior: PriorSpec::default_for_groups(groups).unwrap(),
            n_subjects: 0,
            draws: draws
                .into_iter()
                .enumerate()
                .map(|(m, p)| Draw { chain: 0, iteration: m + 1, params: ModelParams::Lcrm(p), loglik: 0.0 })
                .collect(),
            pointwise: PointwiseAccumulator::new(0),
            acceptance: BTreeMap::new(),
            warnings: Vec::new(),
        };
        let probs = predictive_probs_at(&archive, TimePoint::Finite(t), &[0.2, -0.4], &[1.0, z1], &partition).unwrap();
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hpd_interval_holds_the_required_mass(draws in prop::collection::vec((-100i32..100).prop_map(|v| v as f64 / 4.0), 10..300), alpha in 0.01f64..0.5) {
        let [lo, hi] = hpd_interval(&draws, alpha).unwrap();
        let inside = draws.iter().filter(|d| **d >= lo && **d <= hi).count();
        prop_assert!(inside as f64 >= (1.0 - alpha) * draws.len() as f64 - 1e-9);
        prop_assert!(lo <= hi);
    }

    #[test]
    fn lpml_never_exceeds_the_log_mean_likelihood(rows in prop::collection::vec(prop::collection::vec(-20.0f64..1.0, 5), 1..50)) {
        let mut acc = PointwiseAccumulator::new(5);
        for r in &rows {
            acc.push(r);
        }
        let mut archive = SampleArchive {
            model: ModelKind::Cox,
            partition: TimePartition::single(),
            config: McmcConfig::quick(0),
            prior: PriorSpec::default_for_groups(1).unwrap(),
            n_subjects: 5,
            draws: Vec::new(),
            pointwise: PointwiseAccumulator::new(5),
            acceptance: BTreeMap::new(),
            warnings: Vec::new(),
        };
        archive.pointwise = acc;
        let (_, lpml) = summaries::archive_cpo_lpml(&archive).unwrap();
        prop_assert!(lpml <= log_mean_likelihood_sum(&archive) + 1e-9);
    }

    #[test]
    fn standardization_round_trips(
        rows in prop::collection::vec((0.01f64..10.0, any::<bool>(), -50.0f64..50.0, -5.0f64..5.0), 3..40),
    ) {
        let records: Vec<SurvivalRecord> = rows
            .iter()
            .map(|(t, e, x, z)| SurvivalRecord { time: *t, event: *e, x: vec![*x], z: vec![1.0, *z] })
            .collect();
        let data = Dataset::from_records(records, 1, 1).unwrap();
        let (std_data, record) = standardize(&data).unwrap();
        let back = destandardize(&std_data, &record).unwrap();
        for (a, b) in data.records.iter().zip(&back.records) {
            prop_assert!((a.x[0] - b.x[0]).abs() <= 1e-9 * a.x[0].abs().max(1.0));
            prop_assert!((a.z[1] - b.z[1]).abs() <= 1e-9 * a.z[1].abs().max(1.0));
            prop_assert_eq!(a.z[0], b.z[0]);
        }
    }

    #[test]
    fn quantile_partitions_leave_no_interval_empty(
        times in prop::collection::vec(0.01f64..10.0, 5..60),
        intervals in 1usize..6,
    ) {
        let records: Vec<SurvivalRecord> = times
            .iter()
            .enumerate()
            .map(|(i, t)| SurvivalRecord { time: *t, event: i % 3 != 0, x: vec![0.0], z: vec![1.0] })
            .collect();
        let data = Dataset::from_records(records, 1, 0).unwrap();
        prop_assume!(data.n_events() >= intervals);
        let partition = build_partition(&data, intervals).unwrap();
        prop_assert!(partition.n_intervals() <= intervals);
        let mut counts = vec![0usize; partition.n_intervals()];
        for r in data.records.iter().filter(|r| r.event) {
            counts[partition.interval_of(r.time)] += 1;
        }
        prop_assert!(counts.iter().all(|c| *c > 0));
    }

    #[test]
    fn phph_and_lcrm_agree_when_groups_share_theta(
        theta in 0.1f64..3.0,
        b in prop::collection::vec(-1.0f64..1.0, 2),
        phi in prop::collection::vec(-2.0f64..2.0, 2),
        t in 0.0f64..5.0,
        x in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let hazard = BaselineHazard::new(vec![0.7]).unwrap();
        let partition = TimePartition::single();
        let lcrm = ModelParams::Lcrm(LcrmParams { beta: b.clone(), theta: vec![theta; 2], phi: vec![phi], hazard: hazard.clone() });
        let phph = ModelParams::Phph { beta1: vec![theta.ln(), 0.0, 0.0], beta2: vec![0.0, b[0], b[1]], hazard };
        let xp = [1.0, x[0], x[1]];
        let a = survival_at(&lcrm, t, &xp[1..], &[1.0, 0.3], &partition).unwrap();
        let c = survival_at(&phph, t, &xp, &[1.0, 0.3], &partition).unwrap();
        prop_assert!((a - c).abs() < 1e-12);
    }
}
