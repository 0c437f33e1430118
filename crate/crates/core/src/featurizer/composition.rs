use super::formula::CompositionMap;
use super::table::ElementTable;
use crate::error::{Error, Result};

/// Statistics emitted per elemental property, in output order.
pub const STATISTICS: [&str; 6] = ["mean", "sum", "min", "max", "range", "avgdev"];

/// Column names matching [`composition_features`] output.
pub fn feature_names(table: &ElementTable) -> Vec<String> {
    table
        .property_names()
        .iter()
        .flat_map(|p| STATISTICS.iter().map(move |s| format!("{s}_{p}")))
        .collect()
}

/// Composition-statistics vector of length `6 * P`.
///
/// With fractions `w_i = n_i / sum(n)`, each elemental property `p` yields
/// the fraction-weighted mean, the count-weighted sum, min, max, range and the
/// fraction-weighted mean absolute deviation from the weighted mean. If any
/// constituent element lacks property `p`, all six statistics for `p` are NaN.
pub fn composition_features(comp: &CompositionMap, table: &ElementTable) -> Result<Vec<f64>> {
    let rows: Vec<(&[f64], f64)> = comp
        .iter()
        .map(|(symbol, count)| {
            table
                .properties(symbol)
                .map(|p| (p, count))
                .ok_or_else(|| Error::UnknownElement(symbol.to_string()))
        })
        .collect::<Result<_>>()?;
    let total = comp.total();
    let mut out = Vec::with_capacity(6 * table.n_properties());
    for p in 0..table.n_properties() {
        if rows.iter().any(|(props, _)| props[p].is_nan()) {
            out.extend([f64::NAN; 6]);
            continue;
        }
        let mut mean = 0.0;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &(props, count) in &rows {
            let v = props[p];
            mean += count / total * v;
            sum += count * v;
            min = min.min(v);
            max = max.max(v);
        }
        let avgdev: f64 = rows
            .iter()
            .map(|&(props, count)| count / total * (props[p] - mean).abs())
            .sum();
        out.extend([mean, sum, min, max, max - min, avgdev]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurizer::formula::parse_formula;

    fn table(csv: &str) -> ElementTable {
        ElementTable::from_reader(csv.as_bytes()).unwrap()
    }

    #[test]
    fn single_element_is_degenerate() {
        let t = table("symbol,p\nFe,7.5\n");
        let f = composition_features(&parse_formula("Fe3").unwrap(), &t).unwrap();
        assert_eq!(f, vec![7.5, 22.5, 7.5, 7.5, 0.0, 0.0]);
    }

    #[test]
    fn two_element_hand_values() {
        let t = table("symbol,p\nAl,2\nB,4\n");
        let f = composition_features(&parse_formula("AlB").unwrap(), &t).unwrap();
        assert_eq!(f, vec![3.0, 6.0, 2.0, 4.0, 2.0, 1.0]);
    }

    #[test]
    fn atomic_number_mean_of_b4reu() {
        let t = ElementTable::builtin().select(&["atomic_number"]).unwrap();
        let f = composition_features(&parse_formula("B4ReU").unwrap(), &t).unwrap();
        let expected_mean = (4.0 * 5.0 + 75.0 + 92.0) / 6.0;
        assert!((f[0] - expected_mean).abs() < 1e-12);
        assert_eq!(f[1], 4.0 * 5.0 + 75.0 + 92.0);
        assert_eq!(f[2], 5.0);
        assert_eq!(f[3], 92.0);
        assert_eq!(f[4], 87.0);
    }

    #[test]
    fn nan_property_only_affects_its_block() {
        let t = table("symbol,a,b\nH,1,\nO,8,3\n");
        let f = composition_features(&parse_formula("H2O").unwrap(), &t).unwrap();
        assert!(f[..6].iter().all(|v| v.is_finite()));
        assert!(f[6..].iter().all(|v| v.is_nan()));
    }

    #[test]
    fn unknown_element_is_named() {
        let t = table("symbol,p\nH,1\n");
        match composition_features(&parse_formula("HO").unwrap(), &t) {
            Err(Error::UnknownElement(s)) => assert_eq!(s, "O"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn length_is_six_per_property() {
        let t = ElementTable::builtin();
        let f = composition_features(&parse_formula("NbSiIr").unwrap(), &t).unwrap();
        assert_eq!(f.len(), 6 * t.n_properties());
        assert_eq!(feature_names(&t).len(), f.len());
    }
}
