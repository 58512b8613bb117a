use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archive::fmt_float;
use crate::error::{Error, Result};
use crate::models::{Dataset, SurvivalRecord, INTERCEPT};

/// Column roles for [`load_dataset`]. Covariate lists left empty default to
/// every column other than time and event, so by default `z = (1, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub time: String,
    pub event: String,
    pub x: Vec<String>,
    pub z: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self { time: "time".into(), event: "event".into(), x: Vec::new(), z: Vec::new() }
    }
}

fn parse_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse { row, column: column.to_string(), message: message.into() }
}

/// Load a CSV file with a header row. Row numbers in errors count data rows
/// from 1.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    read_dataset(std::fs::File::open(path)?, schema)
}

pub fn read_dataset<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let index: BTreeMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let find = |name: &str| index.get(name).copied().ok_or_else(|| parse_err(0, name, "missing column"));
    let time_col = find(&schema.time)?;
    let event_col = find(&schema.event)?;
    let others: Vec<String> = headers
        .iter()
        .filter(|h| **h != schema.time && **h != schema.event)
        .cloned()
        .collect();
    let x_names = if schema.x.is_empty() { others.clone() } else { schema.x.clone() };
    let z_cov = if schema.z.is_empty() { others } else { schema.z.clone() };
    let x_cols = x_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
    let z_cols = z_cov.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let cell = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(row, &headers[c], format!("not a finite number: {raw:?}")))
        };
        let time = cell(time_col)?;
        if !(time > 0.0) {
            return Err(parse_err(
                row,
                &schema.time,
                format!("time must be positive (propriety condition (i)), got {time}"),
            ));
        }
        let v = cell(event_col)?;
        let event = if v == 0.0 {
            false
        } else if v == 1.0 {
            true
        } else {
            return Err(parse_err(row, &schema.event, format!("event must be 0 or 1, got {v}")));
        };
        let x = x_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>>>()?;
        let mut z = vec![1.0];
        for &c in &z_cols {
            z.push(cell(c)?);
        }
        records.push(SurvivalRecord { time, event, x, z });
    }
    let z_names = std::iter::once(INTERCEPT.to_string()).chain(z_cov).collect();
    Dataset::new(records, x_names, z_names)
}

/// Write `time, event`, the `x` columns, then any `z` columns not already
/// written, with floats in round-trip precision.
pub fn write_dataset<W: std::io::Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let z_extra: Vec<(usize, &String)> = data
        .z_names
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, n)| !data.x_names.contains(n))
        .collect();
    let mut header = vec!["time".to_string(), "event".to_string()];
    header.extend(data.x_names.iter().cloned());
    header.extend(z_extra.iter().map(|(_, n)| (*n).clone()));
    w.write_record(&header)?;
    for r in &data.records {
        let mut row = vec![fmt_float(r.time), u8::from(r.event).to_string()];
        row.extend(r.x.iter().map(|v| fmt_float(*v)));
        row.extend(z_extra.iter().map(|(k, _)| fmt_float(r.z[*k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows_shared_covariates() {
        let csv = "time,event,age,grade\n1.5,1,0.3,1\n2.0,0,-0.1,0\n";
        let d = read_dataset(csv.as_bytes(), &Schema::default()).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.x_names, vec!["age", "grade"]);
        assert_eq!(d.z_names, vec![INTERCEPT, "age", "grade"]);
        assert_eq!(d.records[0].z, vec![1.0, 0.3, 1.0]);
        assert_eq!(d.records[1].x, vec![-0.1, 0.0]);
    }

    #[test]
    fn zero_time_is_rejected_with_location() {
        let csv = "time,event,a\n1.0,1,0\n0,1,2\n";
        match read_dataset(csv.as_bytes(), &Schema::default()) {
            Err(Error::Parse { row, column, message }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "time");
                assert!(message.contains("condition (i)"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_event_and_cells() {
        let s = Schema::default();
        assert!(matches!(read_dataset("time,event\n1,2\n".as_bytes(), &s), Err(Error::Parse { .. })));
        assert!(matches!(read_dataset("time,event,a\n1,1,x\n".as_bytes(), &s), Err(Error::Parse { row: 1, .. })));
        let missing = Schema { x: vec!["nope".into()], ..Schema::default() };
        assert!(matches!(read_dataset("time,event,a\n1,1,0\n".as_bytes(), &missing), Err(Error::Parse { row: 0, .. })));
    }

    #[test]
    fn separate_roles() {
        let schema = Schema { x: vec!["a".into()], z: vec!["b".into()], ..Schema::default() };
        let d = read_dataset("time,event,a,b\n1,1,5,6\n".as_bytes(), &schema).unwrap();
        assert_eq!(d.records[0].x, vec![5.0]);
        assert_eq!(d.records[0].z, vec![1.0, 6.0]);
    }

    #[test]
    fn write_read_round_trip() {
        let schema = Schema { x: vec!["a".into()], z: vec!["a".into(), "b".into()], ..Schema::default() };
        let d = read_dataset("time,event,a,b\n1.25,1,0.1,6\n3,0,-2,7\n".as_bytes(), &schema).unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), &schema).unwrap();
        assert_eq!(back, d);
    }
}
