use ndarray::Array2;

use super::{composition_features, feature_names, parse_formula, ElementTable, FeatureMatrix};
use crate::dataset::{Input, PropertyRecord};
use crate::error::{Error, Result};

/// Featurize every record in order. Formula inputs use composition
/// statistics over `table`; vector inputs pass through unchanged and are
/// named `f0, f1, ...`. Mixing the two kinds is an error.
pub fn featurize_records(records: &[PropertyRecord], table: &ElementTable) -> Result<FeatureMatrix> {
    let Some(first) = records.first() else {
        return Err(Error::Empty("records".into()));
    };
    let names = match &first.input {
        Input::Formula(_) => feature_names(table),
        Input::Features(v) => (0..v.len()).map(|i| format!("f{i}")).collect(),
    };
    let d = names.len();
    let mut values = Array2::zeros((records.len(), d));
    for (r, rec) in records.iter().enumerate() {
        let row = match (&rec.input, &first.input) {
            (Input::Formula(f), Input::Formula(_)) => composition_features(&parse_formula(f)?, table)?,
            (Input::Features(v), Input::Features(_)) => v.clone(),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "record {} mixes formula and vector inputs",
                    rec.id
                )))
            }
        };
        if row.len() != d {
            return Err(Error::Dimension { expected: d, got: row.len() });
        }
        values.row_mut(r).assign(&ndarray::ArrayView1::from(&row));
    }
    Ok(FeatureMatrix {
        ids: records.iter().map(|r| r.id.clone()).collect(),
        names,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, input: Input) -> PropertyRecord {
        PropertyRecord { id: id.into(), input, target: 1.0, dedup_key: None }
    }

    #[test]
    fn formula_rows_match_direct_features() {
        let table = ElementTable::builtin();
        let recs = vec![rec("x", Input::Formula("NaCl".into())), rec("y", Input::Formula("Fe2O3".into()))];
        let m = featurize_records(&recs, &table).unwrap();
        assert_eq!(m.values.nrows(), 2);
        let direct = composition_features(&parse_formula("Fe2O3").unwrap(), &table).unwrap();
        let got: Vec<f64> = m.values.row(1).to_vec();
        assert_eq!(got.len(), direct.len());
        assert!(got.iter().zip(&direct).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn vectors_pass_through_and_kinds_cannot_mix() {
        let table = ElementTable::builtin();
        let recs = vec![rec("a", Input::Features(vec![1.0, 2.0]))];
        let m = featurize_records(&recs, &table).unwrap();
        assert_eq!(m.names, vec!["f0", "f1"]);
        let mixed = vec![rec("a", Input::Features(vec![1.0])), rec("b", Input::Formula("Fe".into()))];
        assert!(featurize_records(&mixed, &table).is_err());
    }
}
