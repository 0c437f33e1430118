//! Predictions and analogy tables.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::anchor::AnchorResult;
use crate::error::{Error, Result};

/// Anchor columns of a prediction row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorColumns {
    pub anchor_id: String,
    pub pair_a: String,
    pub pair_b: String,
    pub distance: f64,
}

impl From<&AnchorResult> for AnchorColumns {
    fn from(a: &AnchorResult) -> Self {
        AnchorColumns {
            anchor_id: a.anchor_id.clone(),
            pair_a: a.pair_ids.0.clone(),
            pair_b: a.pair_ids.1.clone(),
            distance: a.distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub test_id: String,
    pub y_true: f64,
    pub y_pred: f64,
    /// Empty for non-transductive models.
    pub anchor: Option<AnchorColumns>,
}

pub const PREDICTIONS_HEADER: [&str; 7] = ["test_id", "y_true", "y_pred", "anchor_id", "pair_a", "pair_b", "distance"];
pub const ANALOGIES_HEADER: [&str; 6] = ["test_id", "anchor_id", "matched_pair_a", "matched_pair_b", "distance", "y_pred"];

/// Write `test_id,y_true,y_pred,anchor_id,pair_a,pair_b,distance`. Floats use
/// the shortest representation that reads back to the same bits.
pub fn write_predictions<W: Write>(rows: &[PredictionRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PREDICTIONS_HEADER)?;
    for r in rows {
        let (a, pa, pb, d) = match &r.anchor {
            Some(a) => (a.anchor_id.as_str(), a.pair_a.as_str(), a.pair_b.as_str(), a.distance.to_string()),
            None => ("", "", "", String::new()),
        };
        w.write_record([r.test_id.as_str(), &r.y_true.to_string(), &r.y_pred.to_string(), a, pa, pb, &d])?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))
}

pub fn write_predictions_file(rows: &[PredictionRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_predictions(rows, std::io::BufWriter::new(file))
}

pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<PredictionRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let [id, yt, yp] = [col("test_id")?, col("y_true")?, col("y_pred")?];
    let optional = |name: &str| headers.iter().position(|h| h == name);
    let (an, pa, pb, dist) = (optional("anchor_id"), optional("pair_a"), optional("pair_b"), optional("distance"));
    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize, field: &str| -> Result<f64> {
            let cell = rec.get(i).unwrap_or("");
            cell.parse().map_err(|_| Error::RowParse {
                row,
                field: field.to_string(),
                value: cell.to_string(),
            })
        };
        let get = |i: Option<usize>| i.and_then(|i| rec.get(i)).unwrap_or("");
        let anchor = if get(an).is_empty() {
            None
        } else {
            Some(AnchorColumns {
                anchor_id: get(an).to_string(),
                pair_a: get(pa).to_string(),
                pair_b: get(pb).to_string(),
                distance: num(dist.ok_or_else(|| Error::MissingColumn("distance".into()))?, "distance")?,
            })
        };
        rows.push(PredictionRow {
            test_id: rec.get(id).unwrap_or("").to_string(),
            y_true: num(yt, "y_true")?,
            y_pred: num(yp, "y_pred")?,
            anchor,
        });
    }
    Ok(rows)
}

pub fn read_predictions_file(path: &Path) -> Result<Vec<PredictionRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(std::io::BufReader::new(file))
}

/// One row per prediction that carries an anchor:
/// `test_id,anchor_id,matched_pair_a,matched_pair_b,distance,y_pred`.
pub fn export_analogies<W: Write>(rows: &[PredictionRow], writer: W) -> Result<usize> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ANALOGIES_HEADER)?;
    let mut n = 0;
    for r in rows {
        if let Some(a) = &r.anchor {
            w.write_record([
                r.test_id.as_str(),
                &a.anchor_id,
                &a.pair_a,
                &a.pair_b,
                &a.distance.to_string(),
                &r.y_pred.to_string(),
            ])?;
            n += 1;
        }
    }
    w.flush().map_err(|e| Error::io("<analogies>", e))?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, anchor: bool) -> PredictionRow {
        PredictionRow {
            test_id: id.into(),
            y_true: 1.25,
            y_pred: 0.1 + 0.2,
            anchor: anchor.then(|| AnchorColumns {
                anchor_id: "a1".into(),
                pair_a: "p".into(),
                pair_b: "q".into(),
                distance: 0.125,
            }),
        }
    }

    #[test]
    fn predictions_round_trip() {
        let rows = vec![row("t1", true), row("t2", false)];
        let mut buf = Vec::new();
        write_predictions(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("test_id,y_true,y_pred,anchor_id,pair_a,pair_b,distance\n"));
        assert!(text.contains("t2,1.25,0.30000000000000004,,,,\n"));
        assert_eq!(read_predictions(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn one_analogy_row_per_anchored_prediction() {
        let mut buf = Vec::new();
        assert_eq!(export_analogies(&[row("t1", true)], &mut buf).unwrap(), 1);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "test_id,anchor_id,matched_pair_a,matched_pair_b,distance,y_pred\nt1,a1,p,q,0.125,0.30000000000000004\n"
        );
    }
}
