use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::{inverse_cumulative_hazard, BaselineHazard, TimePartition};
use crate::models::{Dataset, LcrmParams, SurvivalRecord, INTERCEPT};
use crate::numeric::dot;
use crate::sampler::lcrm::{sample_categorical, sample_poisson};

/// Which generated columns enter the membership model; the intercept is
/// always included.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipCovariates {
    /// `z = (1)`, and `x` holds every generated column.
    InterceptOnly,
    /// `z = (1, x)`.
    Shared,
    /// `x` holds the continuous columns and `z = (1, binary columns)`.
    SplitBinary,
}

/// Covariates: `continuous` standard normal columns followed by `binary`
/// Bernoulli(`binary_prob`) columns, routed to `x` and `z` by `membership`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateGenerator {
    pub continuous: usize,
    pub binary: usize,
    pub binary_prob: f64,
    pub membership: MembershipCovariates,
}

impl CovariateGenerator {
    /// Length of `x`.
    pub fn p(&self) -> usize {
        match self.membership {
            MembershipCovariates::SplitBinary => self.continuous,
            _ => self.continuous + self.binary,
        }
    }

    /// Length of `z`, intercept included.
    pub fn z_len(&self) -> usize {
        match self.membership {
            MembershipCovariates::InterceptOnly => 1,
            MembershipCovariates::Shared => 1 + self.continuous + self.binary,
            MembershipCovariates::SplitBinary => 1 + self.binary,
        }
    }

    fn column_names(&self) -> Vec<String> {
        (1..=self.continuous + self.binary).map(|j| format!("x{j}")).collect()
    }

    pub fn x_names(&self) -> Vec<String> {
        let mut names = self.column_names();
        names.truncate(self.p());
        names
    }

    pub fn z_names(&self) -> Vec<String> {
        let mut names = vec![INTERCEPT.to_string()];
        match self.membership {
            MembershipCovariates::InterceptOnly => {}
            MembershipCovariates::Shared => names.extend(self.column_names()),
            MembershipCovariates::SplitBinary => names.extend(self.column_names().split_off(self.continuous)),
        }
        names
    }

    /// One subject's `(x, z)`.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut cols = Vec::with_capacity(self.continuous + self.binary);
        for _ in 0..self.continuous {
            cols.push(rng.sample(StandardNormal));
        }
        for _ in 0..self.binary {
            let u: f64 = rng.random();
            cols.push(if u < self.binary_prob { 1.0 } else { 0.0 });
        }
        let mut z = vec![1.0];
        match self.membership {
            MembershipCovariates::InterceptOnly => {}
            MembershipCovariates::Shared => z.extend_from_slice(&cols),
            MembershipCovariates::SplitBinary => {
                z.extend_from_slice(&cols[self.continuous..]);
                cols.truncate(self.continuous);
            }
        }
        (cols, z)
    }
}

/// Censoring of simulated times. Cured subjects (and any event later than
/// the administrative time) are censored at `admin_time`, which defaults to
/// 1.25 times the largest latent event time. `random_rate` adds independent
/// exponential censoring.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CensoringSpec {
    pub admin_time: Option<f64>,
    pub random_rate: Option<f64>,
}

/// Ground truth behind a simulated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub params: LcrmParams,
    pub partition: TimePartition,
    pub covariates: CovariateGenerator,
    pub seed: u64,
    pub counts: Vec<u64>,
    /// Zero-based groups.
    pub groups: Vec<usize>,
    pub cured: Vec<bool>,
    pub admin_time: f64,
    pub random_rate: Option<f64>,
}

/// A complete simulation scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSetup {
    pub params: LcrmParams,
    pub partition: TimePartition,
    pub covariates: CovariateGenerator,
    pub censoring: CensoringSpec,
}

/// Three risk groups with cure rates 0.9, 0.5 and 0.1 (the default prior
/// table for `G = 3`). Two standard normal columns form `x`; two
/// Bernoulli(1/2) indicators `b1, b2` enter the membership model, which
/// sends `(1, 0)` mostly to group 1, `(0, 0)` to group 3, and the other two
/// cells mostly to group 2. The baseline hazard has two pieces, cut at 1.
pub fn default_simulation() -> SimulationSetup {
    let hazard = BaselineHazard::new(vec![0.5, 0.8]).expect("valid rates");
    let params = LcrmParams::new(
        vec![0.5, -0.3],
        [0.9f64, 0.5, 0.1].iter().map(|c| -c.ln()).collect(),
        vec![vec![-2.0, 4.0, -4.0], vec![-2.0, 0.0, 4.0]],
        hazard,
    )
    .expect("valid parameters");
    SimulationSetup {
        params,
        partition: TimePartition::new(vec![1.0]).expect("valid cuts"),
        covariates: CovariateGenerator {
            continuous: 2,
            binary: 2,
            binary_prob: 0.5,
            membership: MembershipCovariates::SplitBinary,
        },
        censoring: CensoringSpec::default(),
    }
}

/// Simulate `n` subjects from the LCRM.
///
/// Per subject: covariates, `g ~ softmax(z'phi)`, `N ~ Poisson(theta_g)`.
/// If `N = 0` the subject is cured; otherwise the event time is the minimum
/// of `N` activation times with CDF `1 - exp(-exp(x'beta) H0(t))`, drawn
/// exactly as `H0(Y) = -ln(U) / (N exp(x'beta))`.
pub fn simulate_lcrm(
    params: &LcrmParams,
    partition: &TimePartition,
    covariates: &CovariateGenerator,
    n: usize,
    censoring: &CensoringSpec,
    seed: u64,
) -> Result<(Dataset, SimulationTruth)> {
    params.validate()?;
    params.hazard.check_matches(partition)?;
    if params.beta.len() != covariates.p() {
        return Err(Error::Config(format!(
            "beta has length {}, covariate generator produces {}",
            params.beta.len(),
            covariates.p()
        )));
    }
    if params.phi.iter().any(|v| v.len() != covariates.z_len()) {
        return Err(Error::Config("phi vectors do not match the generated z".into()));
    }
    if let Some(r) = censoring.random_rate {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Config(format!("random censoring rate must be positive, got {r}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    let mut latent_times = Vec::with_capacity(n);
    let mut counts = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    let mut random_cens = Vec::with_capacity(n);
    let exp_cens = censoring.random_rate.map(|r| Exp::new(r).expect("validated rate"));
    for _ in 0..n {
        let (x, z) = covariates.draw(&mut rng);
        let g = sample_categorical(&params.group_logits(&z), &mut rng);
        let count = sample_poisson(params.theta[g], &mut rng)?;
        let time = if count == 0 {
            None
        } else {
            let u: f64 = rng.random();
            let target = -(1.0 - u).ln() / (count as f64 * dot(&x, &params.beta).exp());
            Some(inverse_cumulative_hazard(target, partition, &params.hazard)?)
        };
        random_cens.push(match &exp_cens {
            Some(d) => d.sample(&mut rng),
            None => f64::INFINITY,
        });
        xs.push(x);
        zs.push(z);
        latent_times.push(time);
        counts.push(count);
        groups.push(g);
    }
    let admin_time = match censoring.admin_time {
        Some(t) => t,
        None => {
            let max = latent_times.iter().flatten().copied().fold(0.0, f64::max);
            if max > 0.0 { 1.25 * max } else { 1.0 }
        }
    };
    if !(admin_time > 0.0 && admin_time.is_finite()) {
        return Err(Error::Config(format!("administrative censoring time must be positive, got {admin_time}")));
    }
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let event_time = latent_times[i].unwrap_or(f64::INFINITY);
        let cens = admin_time.min(random_cens[i]);
        let event = event_time <= cens;
        let time = if event { event_time } else { cens };
        // a time of exactly zero can only arise from rounding
        let time = time.max(f64::MIN_POSITIVE);
        records.push(SurvivalRecord { time, event, x: xs[i].clone(), z: zs[i].clone() });
    }
    let data = Dataset::new(records, covariates.x_names(), covariates.z_names())?;
    let truth = SimulationTruth {
        params: params.clone(),
        partition: partition.clone(),
        covariates: covariates.clone(),
        seed,
        cured: counts.iter().map(|&c| c == 0).collect(),
        counts,
        groups,
        admin_time,
        random_rate: censoring.random_rate,
    };
    Ok((data, truth))
}
