//! Feature-matrix cache: CSV with an `id` column followed by feature columns.
//!
//! Values are written in Rust's shortest round-trip float format, so reading
//! the file back reproduces every bit. NaN is written as an empty cell.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

impl FeatureMatrix {
    /// Rows for `ids`, in the order given.
    pub fn rows_for(&self, ids: &[String]) -> Result<Array2<f64>> {
        let pos: std::collections::HashMap<&str, usize> = self.ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let idx = ids
            .iter()
            .map(|id| {
                pos.get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::InvalidArgument(format!("id {id} is not in the feature matrix")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.values.select(ndarray::Axis(0), &idx))
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.ids.iter().zip(self.values.rows()) {
            let mut rec = Vec::with_capacity(row.len() + 1);
            rec.push(id.clone());
            rec.extend(row.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<feature cache>", e))?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("id") {
            return Err(Error::MissingColumn("id".into()));
        }
        let names: Vec<String> = headers.iter().skip(1).map(String::from).collect();
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            ids.push(rec.get(0).unwrap_or_default().to_string());
            for (name, cell) in names.iter().zip(rec.iter().skip(1)) {
                flat.push(if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse().map_err(|_| Error::RowParse {
                        row,
                        field: name.clone(),
                        value: cell.to_string(),
                    })?
                });
            }
        }
        let values = Array2::from_shape_vec((ids.len(), names.len()), flat).map_err(|_| {
            Error::InvalidArgument("feature cache rows have inconsistent widths".into())
        })?;
        Ok(FeatureMatrix { ids, names, values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bit_exact_round_trip() {
        let m = FeatureMatrix {
            ids: vec!["a".into(), "b".into()],
            names: vec!["x".into(), "y".into()],
            values: array![[0.1 + 0.2, f64::NAN], [1e-300, -std::f64::consts::PI]],
        };
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = FeatureMatrix::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.ids, m.ids);
        for (a, b) in back.values.iter().zip(m.values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
