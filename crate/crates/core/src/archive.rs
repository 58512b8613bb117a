//! Posterior sample archives and their on-disk format.
//!
//! An archive directory holds `draws.csv` (one row per stored draw, columns
//! `chain, iteration, G, <parameters>, loglik, deviance`) and `archive.json`
//! (model, partition, sampler configuration, prior, acceptance rates and the
//! per-subject likelihood accumulators used for CPO).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hazard::{BaselineHazard, TimePartition};
use crate::models::{LcrmParams, ModelKind, ModelParams};
use crate::priors::PriorSpec;
use crate::sampler::McmcConfig;

pub const DRAWS_FILE: &str = "draws.csv";
pub const SIDECAR_FILE: &str = "archive.json";

/// One stored posterior draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub chain: usize,
    pub iteration: usize,
    pub params: ModelParams,
    /// Observed-data log-likelihood at `params`.
    pub loglik: f64,
}

impl Draw {
    pub fn deviance(&self) -> f64 {
        -2.0 * self.loglik
    }
}

/// Streaming `log(sum(exp(x)))` with a running maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogSum {
    max: f64,
    scaled: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, scaled: 0.0 }
    }
}

impl LogSum {
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled += (x - self.max).exp();
        }
    }

    pub fn merge(&mut self, other: &LogSum) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max > self.max {
            self.scaled = self.scaled * (self.max - other.max).exp() + other.scaled;
            self.max = other.max;
        } else {
            self.scaled += other.scaled * (other.max - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Per-subject accumulators over stored draws: `log sum_m 1/f_im` and
/// `log sum_m f_im`, from which CPO and the mean likelihood follow.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointwiseAccumulator {
    pub draws: usize,
    inverse: Vec<LogSum>,
    direct: Vec<LogSum>,
}

impl PointwiseAccumulator {
    pub fn new(n_subjects: usize) -> Self {
        Self {
            draws: 0,
            inverse: vec![LogSum::default(); n_subjects],
            direct: vec![LogSum::default(); n_subjects],
        }
    }

    pub fn n_subjects(&self) -> usize {
        self.inverse.len()
    }

    /// Add one draw's per-subject log-likelihoods.
    pub fn push(&mut self, logliks: &[f64]) {
        assert_eq!(logliks.len(), self.inverse.len(), "subject count mismatch");
        for ((inv, dir), &l) in self.inverse.iter_mut().zip(&mut self.direct).zip(logliks) {
            inv.push(-l);
            dir.push(l);
        }
        self.draws += 1;
    }

    pub fn merge(&mut self, other: &PointwiseAccumulator) -> Result<()> {
        if other.n_subjects() != self.n_subjects() {
            return Err(Error::Config("cannot merge accumulators over different datasets".into()));
        }
        for (a, b) in self.inverse.iter_mut().zip(&other.inverse) {
            a.merge(b);
        }
        for (a, b) in self.direct.iter_mut().zip(&other.direct) {
            a.merge(b);
        }
        self.draws += other.draws;
        Ok(())
    }

    /// `log CPO_i = log M - log sum_m 1/f_im` (harmonic mean).
    pub fn log_cpo(&self) -> Vec<f64> {
        let log_m = (self.draws as f64).ln();
        self.inverse.iter().map(|s| log_m - s.value()).collect()
    }

    /// `log mean_m f_im`.
    pub fn log_mean_likelihood(&self) -> Vec<f64> {
        let log_m = (self.draws as f64).ln();
        self.direct.iter().map(|s| s.value() - log_m).collect()
    }
}

/// Posterior draws plus everything needed to summarise and reproduce them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleArchive {
    pub model: ModelKind,
    pub partition: TimePartition,
    pub config: McmcConfig,
    pub prior: PriorSpec,
    pub n_subjects: usize,
    #[serde(skip)]
    pub draws: Vec<Draw>,
    pub pointwise: PointwiseAccumulator,
    /// Post-burn-in acceptance rate per random-walk block.
    pub acceptance: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl SampleArchive {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Whether the number of groups varies across draws.
    pub fn variable_groups(&self) -> bool {
        let mut gs = self.draws.iter().map(|d| d.params.n_groups());
        match gs.next() {
            Some(first) => gs.any(|g| g != first),
            None => false,
        }
    }

    /// Draws whose parameters have exactly `groups` groups.
    pub fn draws_with_groups(&self, groups: usize) -> Vec<&Draw> {
        self.draws.iter().filter(|d| d.params.n_groups() == Some(groups)).collect()
    }

    /// Concatenate archives from independent chains, ordered by chain id.
    pub fn merge(mut archives: Vec<SampleArchive>) -> Result<SampleArchive> {
        if archives.is_empty() {
            return Err(Error::Config("nothing to merge".into()));
        }
        archives.sort_by_key(|a| a.config.chain_id);
        let mut iter = archives.into_iter();
        let mut out = iter.next().expect("nonempty");
        for a in iter {
            if a.model != out.model || a.partition != out.partition || a.n_subjects != out.n_subjects {
                return Err(Error::Config("archives describe different fits".into()));
            }
            out.pointwise.merge(&a.pointwise)?;
            out.draws.extend(a.draws);
            out.warnings.extend(a.warnings);
            for (k, v) in a.acceptance {
                out.acceptance.insert(format!("chain{}.{k}", a.config.chain_id), v);
            }
        }
        Ok(out)
    }

    /// Column names for the CSV, taken from the draw with the most parameters.
    pub fn parameter_columns(&self) -> Vec<String> {
        self.draws
            .iter()
            .max_by_key(|d| (d.params.n_groups().unwrap_or(0), std::cmp::Reverse(d.iteration)))
            .map(|d| d.params.named_values().into_iter().map(|(n, _)| n).collect())
            .unwrap_or_default()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let columns = self.parameter_columns();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["chain".to_string(), "iteration".to_string(), "G".to_string()];
        header.extend(columns.iter().cloned());
        header.push("loglik".into());
        header.push("deviance".into());
        w.write_record(&header)?;
        for d in &self.draws {
            let values: BTreeMap<String, f64> = d.params.named_values().into_iter().collect();
            let mut row = vec![
                d.chain.to_string(),
                d.iteration.to_string(),
                d.params.n_groups().map(|g| g.to_string()).unwrap_or_default(),
            ];
            row.extend(columns.iter().map(|c| values.get(c).map(|v| fmt_float(*v)).unwrap_or_default()));
            row.push(fmt_float(d.loglik));
            row.push(fmt_float(d.deviance()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Write `draws.csv` and `archive.json` into `dir` (created if needed).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_csv(fs::File::create(dir.join(DRAWS_FILE))?)?;
        let json = serde_json::to_string_pretty(self)?;
        fs::write(dir.join(SIDECAR_FILE), json + "\n")?;
        Ok(())
    }

    /// Read an archive written by [`SampleArchive::save`].
    pub fn load(dir: &Path) -> Result<SampleArchive> {
        let sidecar = fs::read_to_string(dir.join(SIDECAR_FILE))?;
        let mut archive: SampleArchive = serde_json::from_str(&sidecar)?;
        let mut reader = csv::Reader::from_path(dir.join(DRAWS_FILE))?;
        let headers = reader.headers()?.clone();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec?;
            let mut values = BTreeMap::new();
            let mut meta = BTreeMap::new();
            for (name, cell) in headers.iter().zip(rec.iter()) {
                if cell.is_empty() {
                    continue;
                }
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: row + 1,
                    column: name.to_string(),
                    message: format!("not a number: {cell:?}"),
                })?;
                match name {
                    "chain" | "iteration" | "G" | "loglik" | "deviance" => {
                        meta.insert(name.to_string(), v);
                    }
                    _ => {
                        values.insert(name.to_string(), v);
                    }
                }
            }
            let params = params_from_columns(archive.model, &values).map_err(|e| Error::Parse {
                row: row + 1,
                column: "*".into(),
                message: e.to_string(),
            })?;
            let get = |k: &str| meta.get(k).copied().unwrap_or(0.0);
            archive.draws.push(Draw {
                chain: get("chain") as usize,
                iteration: get("iteration") as usize,
                params,
                loglik: get("loglik"),
            });
        }
        Ok(archive)
    }
}

/// Floats as 17 significant digits, which round-trip exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn indexed(values: &BTreeMap<String, f64>, prefix: &str) -> Vec<f64> {
    let mut out = Vec::new();
    while let Some(v) = values.get(&format!("{prefix}.{}", out.len() + 1)) {
        out.push(*v);
    }
    out
}

fn params_from_columns(model: ModelKind, values: &BTreeMap<String, f64>) -> Result<ModelParams> {
    let hazard = BaselineHazard::new(indexed(values, "lambda"))?;
    Ok(match model {
        ModelKind::Cox => ModelParams::Cox { beta: indexed(values, "beta"), hazard },
        ModelKind::Cis => ModelParams::Cis { beta: indexed(values, "beta"), hazard },
        ModelKind::Lacr => ModelParams::Lacr { beta: indexed(values, "beta"), hazard },
        ModelKind::Phph => ModelParams::Phph {
            beta1: indexed(values, "beta1"),
            beta2: indexed(values, "beta2"),
            hazard,
        },
        ModelKind::Lcrm => {
            let theta = indexed(values, "theta");
            let phi = (1..theta.len())
                .map(|k| {
                    let mut v = Vec::new();
                    while let Some(x) = values.get(&format!("phi.{k}.{}", v.len())) {
                        v.push(*x);
                    }
                    v
                })
                .collect();
            ModelParams::Lcrm(LcrmParams::new(indexed(values, "beta"), theta, phi, hazard)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsum_matches_direct() {
        let xs = [-1.0, 3.0, 0.5, -700.0, 2.0];
        let mut s = LogSum::default();
        xs.iter().for_each(|&x| s.push(x));
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((s.value() - direct).abs() < 1e-14);
    }

    #[test]
    fn logsum_merge_equals_sequential() {
        let (a, b) = ([0.1, -2.0, 5.0], [7.0, -1.0]);
        let mut left = LogSum::default();
        a.iter().for_each(|&x| left.push(x));
        let mut right = LogSum::default();
        b.iter().for_each(|&x| right.push(x));
        left.merge(&right);
        let mut all = LogSum::default();
        a.iter().chain(&b).for_each(|&x| all.push(x));
        assert!((left.value() - all.value()).abs() < 1e-14);
    }

    #[test]
    fn accumulator_harmonic_mean() {
        let mut acc = PointwiseAccumulator::new(1);
        acc.push(&[0.0]);
        acc.push(&[3f64.ln()]);
        assert!((acc.log_cpo()[0].exp() - 1.5).abs() < 1e-14);
        assert!((acc.log_mean_likelihood()[0].exp() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = fmt_float(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
