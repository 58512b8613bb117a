//! Joint-distribution test of the LCRM sampler: alternating a full sweep with
//! a fresh draw of `(N, g, y)` given the parameters leaves the prior invariant,
//! so parameter moments along that chain must match direct prior draws.

use lcrm_core::hazard::inverse_cumulative_hazard;
use lcrm_core::models::DesignCache;
use lcrm_core::sampler::ChainState;
use lcrm_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

const ADMIN: f64 = 2.0;

fn prior() -> PriorSpec {
    PriorSpec {
        c01: 0.25,
        c02: 0.5,
        a0: 3.0,
        b0: 3.0,
        c0: 1.0,
        theta0: vec![0.5, 2.0],
        theta_shape: vec![2.0, 4.0],
        theta_rate: vec![4.0, 2.0],
    }
}

fn covariates(n: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..n)
        .map(|_| {
            let x: f64 = rng.sample(rand_distr::StandardNormal);
            let b = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            (vec![x], vec![1.0, b])
        })
        .collect()
}

fn draw_prior(spec: &PriorSpec, rng: &mut ChaCha8Rng) -> LcrmParams {
    let theta = loop {
        let t: Vec<f64> = spec
            .theta_shape
            .iter()
            .zip(&spec.theta_rate)
            .map(|(a, b)| Gamma::new(*a, 1.0 / b).unwrap().sample(rng))
            .collect();
        if t.windows(2).all(|w| w[0] < w[1]) {
            break t;
        }
    };
    let nb = Normal::new(0.0, spec.c01.sqrt()).unwrap();
    let np = Normal::new(0.0, spec.c02.sqrt()).unwrap();
    let lg = Gamma::new(spec.a0, 1.0 / spec.b0).unwrap();
    LcrmParams::new(
        vec![nb.sample(rng)],
        theta,
        vec![vec![np.sample(rng), np.sample(rng)]],
        BaselineHazard::new(vec![lg.sample(rng), lg.sample(rng)]).unwrap(),
    )
    .unwrap()
}

/// `(N, g, y)` given the parameters, with administrative censoring.
fn generate(
    p: &LcrmParams,
    cov: &[(Vec<f64>, Vec<f64>)],
    part: &TimePartition,
    rng: &mut ChaCha8Rng,
) -> (Dataset, LatentState) {
    let mut records = Vec::new();
    let mut latent = LatentState { counts: vec![], groups: vec![] };
    for (x, z) in cov {
        let w = lcrm_core::models::membership_probs(&p.phi, z);
        let u: f64 = rng.random();
        let mut g = 0;
        let mut acc = w[0];
        while u > acc && g + 1 < w.len() {
            g += 1;
            acc += w[g];
        }
        let n = Poisson::new(p.theta[g]).unwrap().sample(rng) as u64;
        let (time, event) = if n == 0 {
            (ADMIN, false)
        } else {
            let v: f64 = rng.random();
            let target = -(1.0 - v).ln() / (n as f64 * (x[0] * p.beta[0]).exp());
            let t = inverse_cumulative_hazard(target, part, &p.hazard).unwrap();
            if t <= ADMIN { (t.max(1e-300), true) } else { (ADMIN, false) }
        };
        records.push(SurvivalRecord { time, event, x: x.clone(), z: z.clone() });
        latent.counts.push(n);
        latent.groups.push(g);
    }
    (Dataset::from_records(records, 1, 1).unwrap(), latent)
}

fn values(p: &LcrmParams) -> Vec<f64> {
    let mut v = vec![p.beta[0], p.theta[0], p.theta[1], p.phi[0][0], p.phi[0][1]];
    v.extend_from_slice(p.hazard.rates());
    let squares: Vec<f64> = v.iter().map(|x| x * x).collect();
    v.extend(squares);
    v
}

#[test]
fn successive_conditional_matches_prior() {
    let spec = prior();
    let part = TimePartition::new(vec![0.5]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cov = covariates(12, &mut rng);

    let m_direct = 200_000;
    let base = ["beta", "theta1", "theta2", "phi0", "phi1", "lambda1", "lambda2"];
    let names: Vec<String> =
        base.iter().map(|s| s.to_string()).chain(base.iter().map(|s| format!("{s}^2"))).collect();
    let mut direct = vec![0.0; names.len()];
    let mut direct_sq = vec![0.0; names.len()];
    for _ in 0..m_direct {
        for (k, v) in values(&draw_prior(&spec, &mut rng)).into_iter().enumerate() {
            direct[k] += v / m_direct as f64;
            direct_sq[k] += v * v / m_direct as f64;
        }
    }

    let mut cfg = McmcConfig::with_lengths(10, 1, 1, 7);
    cfg.adapt = false;
    cfg.starts = 1;
    cfg.proposal_scales.beta = Some(0.6);
    cfg.proposal_scales.phi = Some(0.6);
    let mut params = draw_prior(&spec, &mut rng);
    let (data, _) = generate(&params, &cov, &part, &mut rng);
    let cache = DesignCache::new(&data, &part).unwrap();
    let mut state = ChainState::initialize(ModelKind::Lcrm, &data, &cache, &spec, &cfg, 0).unwrap();

    let iters = 400_000;
    let batches = 200;
    let per = iters / batches;
    let mut batch_means = vec![vec![0.0; names.len()]; batches];
    for it in 0..iters {
        let (data, latent) = generate(&params, &cov, &part, &mut rng);
        let cache = DesignCache::new(&data, &part).unwrap();
        state.params = ModelParams::Lcrm(params.clone());
        state.latent = latent;
        state.sweep(&data, &cache, &spec).unwrap();
        params = state.params.as_lcrm().unwrap().clone();
        for (k, v) in values(&params).into_iter().enumerate() {
            batch_means[it / per][k] += v / per as f64;
        }
    }
    let mut failures = Vec::new();
    for k in 0..names.len() {
        let bm: Vec<f64> = batch_means.iter().map(|b| b[k]).collect();
        let mean = bm.iter().sum::<f64>() / batches as f64;
        let var = bm.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se_chain = (var / batches as f64).sqrt();
        let sd = (direct_sq[k] - direct[k] * direct[k]).sqrt();
        let se = (se_chain.powi(2) + sd * sd / m_direct as f64).sqrt();
        let z = (mean - direct[k]) / se;
        println!("{:8} chain {mean:.4} prior {:.4} se {se:.4} z {z:.2}", names[k], direct[k]);
        if z.abs() > 4.0 {
            failures.push(names[k].clone());
        }
    }
    assert!(failures.is_empty(), "moments disagree for {failures:?}");
}
