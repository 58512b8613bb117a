use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Dataset;

/// Centre and scale of one covariate column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    /// Sample SD with divisor `n - 1`.
    pub sd: f64,
    /// Whether the raw column only took the values 0 and 1.
    pub binary: bool,
}

/// Per-column transforms, keyed by covariate name. A name used for both `x`
/// and `z` gets one shared transform.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardizationRecord {
    pub columns: BTreeMap<String, ColumnScale>,
}

impl StandardizationRecord {
    fn apply(&self, names: &[String], values: &[f64], forward: bool) -> Result<Vec<f64>> {
        names
            .iter()
            .zip(values)
            .map(|(n, v)| match self.columns.get(n) {
                Some(c) if forward => Ok((v - c.mean) / c.sd),
                Some(c) => Ok(v * c.sd + c.mean),
                None if n == crate::models::INTERCEPT => Ok(*v),
                None => Err(Error::Config(format!("no standardisation recorded for `{n}`"))),
            })
            .collect()
    }

    /// Transform a new subject's `x` vector.
    pub fn apply_x(&self, data_names: &[String], x: &[f64]) -> Result<Vec<f64>> {
        self.apply(data_names, x, true)
    }

    /// Transform a new subject's `z` vector (intercept first, left unchanged).
    pub fn apply_z(&self, z_names: &[String], z: &[f64]) -> Result<Vec<f64>> {
        self.apply(z_names, z, true)
    }
}

fn column_values(data: &Dataset, name: &str) -> Vec<f64> {
    if let Some(j) = data.x_names.iter().position(|n| n == name) {
        data.records.iter().map(|r| r.x[j]).collect()
    } else {
        let j = data.z_names.iter().position(|n| n == name).expect("known column");
        data.records.iter().map(|r| r.z[j]).collect()
    }
}

/// Centre every covariate at its sample mean and divide by its sample SD.
pub fn standardize(data: &Dataset) -> Result<(Dataset, StandardizationRecord)> {
    let n = data.n();
    let mut record = StandardizationRecord::default();
    let names = data.x_names.iter().chain(data.z_names.iter().skip(1));
    for name in names {
        if record.columns.contains_key(name) {
            continue;
        }
        let v = column_values(data, name);
        if n < 2 {
            return Err(Error::Config("standardisation needs at least two subjects".into()));
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::Config(format!("covariate `{name}` is constant and cannot be standardised")));
        }
        let binary = v.iter().all(|x| *x == 0.0 || *x == 1.0);
        record.columns.insert(name.clone(), ColumnScale { mean, sd, binary });
    }
    let mut out = data.clone();
    for r in &mut out.records {
        r.x = record.apply(&data.x_names, &r.x, true)?;
        r.z = record.apply(&data.z_names, &r.z, true)?;
    }
    Ok((out, record))
}

/// Undo [`standardize`].
pub fn destandardize(data: &Dataset, record: &StandardizationRecord) -> Result<Dataset> {
    let mut out = data.clone();
    for r in &mut out.records {
        r.x = record.apply(&data.x_names, &r.x, false)?;
        r.z = record.apply(&data.z_names, &r.z, false)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::SurvivalRecord;

    fn data(col: &[f64]) -> Dataset {
        let records = col
            .iter()
            .map(|&v| SurvivalRecord { time: 1.0, event: true, x: vec![v], z: vec![1.0, v] })
            .collect();
        Dataset::new(records, vec!["a".into()], vec![crate::models::INTERCEPT.into(), "a".into()]).unwrap()
    }

    #[test]
    fn two_point_column() {
        let (d, rec) = standardize(&data(&[1.0, 3.0])).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((d.records[0].x[0] + h).abs() < 1e-15);
        assert!((d.records[1].x[0] - h).abs() < 1e-15);
        assert_eq!(d.records[1].z[1], d.records[1].x[0]);
        assert_eq!(rec.columns["a"].sd, 2f64.sqrt());
    }

    #[test]
    fn constant_column_rejected() {
        assert!(matches!(standardize(&data(&[2.0, 2.0, 2.0])), Err(Error::Config(_))));
    }

    #[test]
    fn idempotent_and_invertible() {
        let raw = data(&[0.3, 5.0, -2.0, 7.5, 1.0]);
        let (s1, rec) = standardize(&raw).unwrap();
        let (s2, _) = standardize(&s1).unwrap();
        for (a, b) in s1.records.iter().zip(&s2.records) {
            assert!((a.x[0] - b.x[0]).abs() < 1e-12);
        }
        let back = destandardize(&s1, &rec).unwrap();
        for (a, b) in raw.records.iter().zip(&back.records) {
            assert!((a.x[0] - b.x[0]).abs() < 1e-12);
            assert!((a.z[1] - b.z[1]).abs() < 1e-12);
        }
    }
}
