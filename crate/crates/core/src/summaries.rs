//! Posterior summaries and model-comparison criteria.
//!
//! * HPD intervals: the shortest window of `ceil((1 - alpha) M)` consecutive
//!   sorted draws (ties resolved towards the smallest start).
//! * ESS: Geyer's initial positive sequence estimator.
//! * CPO: harmonic mean `[M^-1 sum_m 1/f(y_i | gamma_m)]^-1`, and
//!   `LPML = sum_i log CPO_i`.
//! * DIC: `Dev(mean) + 2 p_D` with `p_D = mean(Dev) - Dev(mean)`.

use serde::{Deserialize, Serialize};

use crate::archive::{Draw, SampleArchive};
use crate::error::{Error, Result};
use crate::hazard::{BaselineHazard, TimePartition};
use crate::models::{observed_loglik, Dataset, LcrmParams, ModelParams};

/// Fewest draws for which an HPD interval is reported.
pub const MIN_HPD_DRAWS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// `None` when there are fewer than [`MIN_HPD_DRAWS`] draws.
    pub hpd: Option<[f64; 2]>,
    pub ess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub alpha: f64,
    pub draws: usize,
    pub parameters: Vec<ParameterSummary>,
    /// Set when the archive was too short for HPD intervals.
    pub hpd_refused: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub lpml: f64,
    pub dic: f64,
    pub p_d: f64,
    pub dev_at_mean: f64,
    pub mean_deviance: f64,
    pub cpo: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample SD with divisor `M - 1` (0 for a single draw).
fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Shortest interval holding `ceil((1 - alpha) M)` of the draws.
pub fn hpd_interval(draws: &[f64], alpha: f64) -> Option<[f64; 2]> {
    if draws.len() < MIN_HPD_DRAWS || !(alpha > 0.0 && alpha < 1.0) {
        return None;
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = sorted.len();
    let keep = (((1.0 - alpha) * m as f64) - 1e-9).ceil().max(1.0) as usize;
    let keep = keep.min(m);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for start in 0..=m - keep {
        let w = sorted[start + keep - 1] - sorted[start];
        if w < best_width {
            best_width = w;
            best = start;
        }
    }
    Some([sorted[best], sorted[best + keep - 1]])
}

/// Effective sample size by Geyer's initial positive sequence.
pub fn effective_sample_size(draws: &[f64]) -> f64 {
    let n = draws.len();
    if n < 4 {
        return n as f64;
    }
    let m = mean(draws);
    let c: Vec<f64> = draws.iter().map(|x| x - m).collect();
    let gamma0 = c.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if gamma0 == 0.0 {
        return n as f64;
    }
    let autocov = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let mut sum_pairs = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = if k == 0 { gamma0 } else { autocov(2 * k) } + autocov(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair;
        k += 1;
    }
    let tau = (-gamma0 + 2.0 * sum_pairs) / gamma0;
    if tau <= 0.0 { n as f64 } else { (n as f64 / tau).min(n as f64) }
}

/// Values of one named column across draws.
pub fn column(draws: &[&Draw], name: &str) -> Vec<f64> {
    draws
        .iter()
        .filter_map(|d| d.params.named_values().into_iter().find(|(n, _)| n == name).map(|(_, v)| v))
        .collect()
}

/// Mean, SD, HPD and ESS of every parameter. Trans-dimensional archives are
/// summarised over the draws sharing the most common number of groups.
pub fn summarize(archive: &SampleArchive, alpha: f64) -> Result<PosteriorSummary> {
    if archive.is_empty() {
        return Err(Error::Config("cannot summarise an empty archive".into()));
    }
    let draws = modal_draws(archive);
    let names: Vec<String> = draws[0].params.named_values().into_iter().map(|(n, _)| n).collect();
    let mut columns = vec![Vec::with_capacity(draws.len()); names.len()];
    for d in &draws {
        for (col, (_, v)) in columns.iter_mut().zip(d.params.named_values()) {
            col.push(v);
        }
    }
    let parameters = names
        .into_iter()
        .zip(columns)
        .map(|(name, v)| ParameterSummary {
            name,
            mean: mean(&v),
            sd: sd(&v),
            hpd: hpd_interval(&v, alpha),
            ess: effective_sample_size(&v),
        })
        .collect();
    Ok(PosteriorSummary { alpha, draws: draws.len(), parameters, hpd_refused: draws.len() < MIN_HPD_DRAWS })
}

/// Draws with the most frequent number of groups (all draws for fixed-G
/// archives); ties go to the smaller G.
pub fn modal_draws(archive: &SampleArchive) -> Vec<&Draw> {
    if !archive.variable_groups() {
        return archive.draws.iter().collect();
    }
    let mut counts = std::collections::BTreeMap::new();
    for d in &archive.draws {
        *counts.entry(d.params.n_groups()).or_insert(0usize) += 1;
    }
    let best = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).and_then(|(g, _)| *g);
    archive.draws.iter().filter(|d| d.params.n_groups() == best).collect()
}

/// CPO and LPML from a draws x subjects matrix of likelihood values `f`.
pub fn compute_cpo_lpml(likelihoods: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let m = likelihoods.len();
    if m == 0 {
        return Err(Error::Config("no draws".into()));
    }
    let n = likelihoods[0].len();
    let mut inv_sum = vec![0.0; n];
    for (draw, row) in likelihoods.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Config("ragged likelihood matrix".into()));
        }
        for (subject, (&f, acc)) in row.iter().zip(&mut inv_sum).enumerate() {
            if !(f > 0.0) {
                return Err(Error::ZeroLikelihood { draw, subject });
            }
            *acc += 1.0 / f;
        }
    }
    let cpo: Vec<f64> = inv_sum.iter().map(|s| m as f64 / s).collect();
    let lpml = cpo.iter().map(|c| c.ln()).sum();
    Ok((cpo, lpml))
}

/// CPO and LPML from an archive's streaming accumulators.
pub fn archive_cpo_lpml(archive: &SampleArchive) -> Result<(Vec<f64>, f64)> {
    if archive.pointwise.draws == 0 {
        return Err(Error::Config("archive holds no pointwise likelihoods".into()));
    }
    let log_cpo = archive.pointwise.log_cpo();
    let lpml = log_cpo.iter().sum();
    Ok((log_cpo.iter().map(|l| l.exp()).collect(), lpml))
}

/// `sum_i log mean_m f_im`, an upper bound for LPML.
pub fn log_mean_likelihood_sum(archive: &SampleArchive) -> f64 {
    archive.pointwise.log_mean_likelihood().iter().sum()
}

fn average(vs: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![0.0; vs[0].len()];
    for v in vs {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    out.iter().map(|x| x / vs.len() as f64).collect()
}

/// Componentwise posterior mean of the parameters; all draws must share
/// the model and dimensions.
pub fn posterior_mean(draws: &[&Draw]) -> Result<ModelParams> {
    let first = draws.first().ok_or_else(|| Error::Config("no draws".into()))?;
    let hz: Vec<&[f64]> = draws.iter().map(|d| d.params.hazard().rates()).collect();
    let hazard = BaselineHazard::new(average(&hz))?;
    macro_rules! collect {
        ($pat:pat => $e:expr) => {
            draws
                .iter()
                .map(|d| match &d.params {
                    $pat => Ok($e),
                    _ => Err(Error::Config("draws mix different models".into())),
                })
                .collect::<Result<Vec<&[f64]>>>()?
        };
    }
    Ok(match &first.params {
        ModelParams::Cox { .. } => ModelParams::Cox {
            beta: average(&collect!(ModelParams::Cox { beta, .. } => beta.as_slice())),
            hazard,
        },
        ModelParams::Cis { .. } => ModelParams::Cis {
            beta: average(&collect!(ModelParams::Cis { beta, .. } => beta.as_slice())),
            hazard,
        },
        ModelParams::Lacr { .. } => ModelParams::Lacr {
            beta: average(&collect!(ModelParams::Lacr { beta, .. } => beta.as_slice())),
            hazard,
        },
        ModelParams::Phph { .. } => ModelParams::Phph {
            beta1: average(&collect!(ModelParams::Phph { beta1, .. } => beta1.as_slice())),
            beta2: average(&collect!(ModelParams::Phph { beta2, .. } => beta2.as_slice())),
            hazard,
        },
        ModelParams::Lcrm(p0) => {
            let g = p0.n_groups();
            if draws.iter().any(|d| d.params.n_groups() != Some(g)) {
                return Err(Error::Config("draws have different numbers of groups".into()));
            }
            let beta = average(&collect!(ModelParams::Lcrm(p) => p.beta.as_slice()));
            let theta = average(&collect!(ModelParams::Lcrm(p) => p.theta.as_slice()));
            let phi = (0..g - 1)
                .map(|k| -> Result<Vec<f64>> { Ok(average(&collect!(ModelParams::Lcrm(p) => p.phi[k].as_slice()))) })
                .collect::<Result<Vec<_>>>()?;
            ModelParams::Lcrm(LcrmParams::new(beta, theta, phi, hazard)?)
        }
    })
}

/// DIC from stored deviances and the deviance at the posterior mean.
pub fn dic_from_deviances(deviances: &[f64], dev_at_mean: f64) -> (f64, f64) {
    let p_d = mean(deviances) - dev_at_mean;
    (dev_at_mean + 2.0 * p_d, p_d)
}

/// `(dic, p_D, Dev(mean))` for a fixed-dimension archive.
pub fn compute_dic(archive: &SampleArchive, data: &Dataset, partition: &TimePartition) -> Result<(f64, f64, f64)> {
    let draws: Vec<&Draw> = archive.draws.iter().collect();
    let mean_params = posterior_mean(&draws)?;
    let dev_at_mean = -2.0 * observed_loglik(&mean_params, data, partition)?;
    let devs: Vec<f64> = archive.draws.iter().map(Draw::deviance).collect();
    let (dic, p_d) = dic_from_deviances(&devs, dev_at_mean);
    Ok((dic, p_d, dev_at_mean))
}

/// LPML and DIC together.
pub fn compare(archive: &SampleArchive, data: &Dataset, partition: &TimePartition) -> Result<ComparisonReport> {
    let (cpo, lpml) = archive_cpo_lpml(archive)?;
    let (dic, p_d, dev_at_mean) = compute_dic(archive, data, partition)?;
    let devs: Vec<f64> = archive.draws.iter().map(Draw::deviance).collect();
    Ok(ComparisonReport { lpml, dic, p_d, dev_at_mean, mean_deviance: mean(&devs), cpo })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples() {
        let v = vec![2.5; 50];
        assert_eq!(hpd_interval(&v, 0.05), Some([2.5, 2.5]));
        assert_eq!(sd(&v), 0.0);
        assert_eq!(mean(&v), 2.5);
    }

    #[test]
    fn uniform_spacing_picks_first_window() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(hpd_interval(&v, 0.05), Some([1.0, 95.0]));
    }

    #[test]
    fn too_few_draws() {
        assert_eq!(hpd_interval(&[1.0, 2.0, 3.0], 0.05), None);
    }

    #[test]
    fn harmonic_mean_cpo() {
        let (cpo, lpml) = compute_cpo_lpml(&[vec![1.0, 2.0], vec![3.0, 2.0]]).unwrap();
        assert_eq!(cpo, vec![1.5, 2.0]);
        assert_eq!(lpml, 1.5f64.ln() + 2f64.ln());
        assert!(matches!(compute_cpo_lpml(&[vec![1.0], vec![0.0]]), Err(Error::ZeroLikelihood { draw: 1, subject: 0 })));
    }

    #[test]
    fn dic_arithmetic() {
        assert_eq!(dic_from_deviances(&[10.0, 14.0], 11.0), (13.0, 1.0));
        assert_eq!(dic_from_deviances(&[7.0, 7.0], 7.0), (7.0, 0.0));
    }

    #[test]
    fn ess_of_independent_and_sticky_series() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let iid: Vec<f64> = (0..4000).map(|_| rng.random::<f64>()).collect();
        let e = effective_sample_size(&iid);
        assert!(e > 3000.0 && e <= 4000.0, "{e}");
        let mut x = 0.0;
        let ar: Vec<f64> = (0..4000)
            .map(|_| {
                x = 0.95 * x + rng.random::<f64>() - 0.5;
                x
            })
            .collect();
        // AR(1) with rho = 0.95 has ESS about n (1 - rho) / (1 + rho)
        let e = effective_sample_size(&ar);
        assert!(e > 40.0 && e < 250.0, "{e}");
    }
}
