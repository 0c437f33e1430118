//! Labeled records, preprocessing, and the extrapolation split.
//!
//! The split holds out the highest-target fraction of the data as the OOD
//! test set, draws an in-distribution validation set uniformly from the rest
//! and trains on what remains.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurizer::{parse_formula, FeatureMatrix};
use crate::fingerprint::Fingerprint;

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Formula(String),
    Features(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyRecord {
    pub id: String,
    pub input: Input,
    pub target: f64,
    pub dedup_key: Option<f64>,
}

/// Where the model input lives in the CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputColumns {
    Formula(String),
    /// Explicit feature column names, in order.
    Features(Vec<String>),
    /// Every column whose name starts with the prefix, in header order.
    FeaturePrefix(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub id: String,
    pub input: InputColumns,
    pub target: String,
    pub dedup_key: Option<String>,
}

impl Schema {
    pub fn formula(id: &str, formula: &str, target: &str) -> Self {
        Schema {
            id: id.into(),
            input: InputColumns::Formula(formula.into()),
            target: target.into(),
            dedup_key: None,
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))
}

fn parse_cell(row: usize, field: &str, cell: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(f64::NAN);
    }
    cell.parse().map_err(|_| Error::RowParse {
        row,
        field: field.to_string(),
        value: cell.to_string(),
    })
}

/// Read records from a CSV file. Row indices in errors count data rows from 0.
pub fn load_records(path: &Path, schema: &Schema) -> Result<Vec<PropertyRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(std::io::BufReader::new(file), schema)
}

pub fn read_records<R: Read>(reader: R, schema: &Schema) -> Result<Vec<PropertyRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = column(&headers, &schema.id)?;
    let target_col = column(&headers, &schema.target)?;
    let dedup_col = schema
        .dedup_key
        .as_deref()
        .map(|k| column(&headers, k))
        .transpose()?;
    enum Cols {
        Formula(usize),
        Features(Vec<(usize, String)>),
    }
    let cols = match &schema.input {
        InputColumns::Formula(name) => Cols::Formula(column(&headers, name)?),
        InputColumns::Features(names) => Cols::Features(
            names
                .iter()
                .map(|n| Ok((column(&headers, n)?, n.clone())))
                .collect::<Result<_>>()?,
        ),
        InputColumns::FeaturePrefix(prefix) => {
            let found: Vec<(usize, String)> = headers
                .iter()
                .enumerate()
                .filter(|(_, h)| h.trim().starts_with(prefix.as_str()))
                .map(|(i, h)| (i, h.trim().to_string()))
                .collect();
            if found.is_empty() {
                return Err(Error::MissingColumn(format!("{prefix}*")));
            }
            Cols::Features(found)
        }
    };

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |i: usize| rec.get(i).unwrap_or("");
        let id = cell(id_col).trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let target_text = cell(target_col).trim();
        let target: f64 = target_text.parse().map_err(|_| Error::RowParse {
            row,
            field: schema.target.clone(),
            value: target_text.to_string(),
        })?;
        if !target.is_finite() {
            return Err(Error::RowParse {
                row,
                field: schema.target.clone(),
                value: target_text.to_string(),
            });
        }
        let dedup_key = match dedup_col {
            Some(i) => {
                let v = parse_cell(row, schema.dedup_key.as_deref().unwrap_or(""), cell(i))?;
                (!v.is_nan()).then_some(v)
            }
            None => None,
        };
        let input = match &cols {
            Cols::Formula(i) => Input::Formula(cell(*i).trim().to_string()),
            Cols::Features(fc) => Input::Features(
                fc.iter()
                    .map(|(i, name)| parse_cell(row, name, cell(*i)))
                    .collect::<Result<_>>()?,
            ),
        };
        records.push(PropertyRecord {
            id,
            input,
            target,
            dedup_key,
        });
    }
    Ok(records)
}

fn composition_key(record: &PropertyRecord) -> Result<String> {
    match &record.input {
        Input::Formula(f) => Ok(parse_formula(f)?.canonical_key()),
        Input::Features(v) => Ok(v.iter().map(|x| format!("{:016x}", x.to_bits())).collect()),
    }
}

/// Among records with the same canonical composition keep the one with the
/// smallest dedup key (e.g. lowest formation enthalpy). Survivors keep their
/// relative order. Feature-vector records are compared bit for bit.
pub fn dedup_min_by(records: Vec<PropertyRecord>) -> Result<Vec<PropertyRecord>> {
    let keys: Vec<String> = records.iter().map(composition_key).collect::<Result<_>>()?;
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, k) in keys.iter().enumerate() {
        groups.entry(k).or_default().push(i);
    }
    let mut missing = Vec::new();
    let mut keep = vec![true; records.len()];
    for members in groups.values().filter(|m| m.len() > 1) {
        let mut best: Option<(f64, usize)> = None;
        for &i in members {
            match records[i].dedup_key {
                None => missing.push(records[i].id.clone()),
                Some(k) => {
                    if best.is_none_or(|(bk, _)| k < bk) {
                        best = Some((k, i));
                    }
                }
            }
            keep[i] = false;
        }
        if let Some((_, i)) = best {
            keep[i] = true;
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingDedupKey(missing));
    }
    Ok(records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect())
}

/// Replace every target by its base-10 logarithm.
pub fn apply_log10(records: Vec<PropertyRecord>) -> Result<Vec<PropertyRecord>> {
    records
        .into_iter()
        .map(|mut r| {
            if !(r.target > 0.0) {
                return Err(Error::NonPositiveTarget {
                    id: r.id,
                    value: r.target,
                });
            }
            r.target = r.target.log10();
            Ok(r)
        })
        .collect()
}

/// Records plus the preprocessing applied to them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<PropertyRecord>,
    /// Targets are `log10` of the raw property.
    pub log10_targets: bool,
}

impl Dataset {
    pub fn new(records: Vec<PropertyRecord>) -> Self {
        Dataset {
            records,
            log10_targets: false,
        }
    }

    pub fn dedup(self) -> Result<Self> {
        Ok(Dataset {
            records: dedup_min_by(self.records)?,
            ..self
        })
    }

    pub fn log10(self) -> Result<Self> {
        Ok(Dataset {
            records: apply_log10(self.records)?,
            log10_targets: true,
        })
    }
}

/// Train / in-distribution validation / OOD test partition by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub ood: Vec<String>,
    pub support_max: f64,
    pub seed: u64,
    pub ood_frac: f64,
    pub val_frac: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<Fingerprint>,
}

impl SplitAssignment {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.ood.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

// Products like 0.05 * 2740 land a hair above the integer; the slack keeps
// ceil/round from jumping to the next count.
const COUNT_SLACK: f64 = 1e-9;

/// `ceil(frac * n)`.
pub fn ood_count(n: usize, frac: f64) -> usize {
    (frac * n as f64 - COUNT_SLACK).ceil().max(0.0) as usize
}

/// Round-half-up of `frac * n`.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + COUNT_SLACK).floor().max(0.0) as usize
}

/// Split records into train / val / OOD.
///
/// The `ceil(ood_frac * n)` records ranked highest by (target descending, id
/// ascending) form the OOD set, so among records tied at the cut value the
/// lexicographically smallest ids go OOD. The validation set is a seeded
/// uniform sample of `round(val_frac * (n - n_ood))` records from the
/// remainder (taken in record order). Id lists are sorted.
pub fn make_splits(
    records: &[PropertyRecord],
    ood_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<SplitAssignment> {
    for (name, f) in [("ood_frac", ood_frac), ("val_frac", val_frac)] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Split(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    let n = records.len();
    let n_ood = ood_count(n, ood_frac);
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| {
        records[b]
            .target
            .total_cmp(&records[a].target)
            .then_with(|| records[a].id.cmp(&records[b].id))
    });
    let ood_set: BTreeSet<usize> = ranked[..n_ood.min(n)].iter().copied().collect();
    let rest: Vec<usize> = (0..n).filter(|i| !ood_set.contains(i)).collect();
    let n_val = round_half_up(val_frac * rest.len() as f64);
    if n_ood == 0 || n_val == 0 || n_val >= rest.len() {
        return Err(Error::Split(format!(
            "{n} records give {n_ood} OOD / {n_val} validation / {} training rows; every set must be non-empty",
            rest.len().saturating_sub(n_val)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let val_set: BTreeSet<usize> = rand::seq::index::sample(&mut rng, rest.len(), n_val)
        .into_iter()
        .map(|k| rest[k])
        .collect();

    let ids = |it: &mut dyn Iterator<Item = usize>| -> Vec<String> {
        let mut v: Vec<String> = it.map(|i| records[i].id.clone()).collect();
        v.sort();
        v
    };
    let train_idx: Vec<usize> = rest.iter().copied().filter(|i| !val_set.contains(i)).collect();
    let support_max = train_idx
        .iter()
        .chain(val_set.iter())
        .map(|&i| records[i].target)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SplitAssignment {
        train: ids(&mut train_idx.into_iter()),
        val: ids(&mut val_set.into_iter()),
        ood: ids(&mut ood_set.into_iter()),
        support_max,
        seed,
        ood_frac,
        val_frac,
        config_fingerprint: None,
    })
}

/// Scaled feature rows with targets, ordered by id.
///
/// Row order is the id order, so index comparisons double as id comparisons
/// in every tie-break downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub ids: Vec<String>,
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    /// Checksum of the scaler that produced `x`, if any.
    pub scaler_checksum: Option<Fingerprint>,
}

impl LabeledSet {
    pub fn new(ids: Vec<String>, x: Array2<f64>, y: Vec<f64>) -> Result<Self> {
        if ids.len() != x.nrows() || y.len() != x.nrows() {
            return Err(Error::Dimension {
                expected: x.nrows(),
                got: ids.len().min(y.len()),
            });
        }
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
        if order.windows(2).any(|w| ids[w[0]] == ids[w[1]]) {
            let dup = order.windows(2).find(|w| ids[w[0]] == ids[w[1]]).map(|w| ids[w[0]].clone());
            return Err(Error::DuplicateId(dup.unwrap_or_default()));
        }
        Ok(LabeledSet {
            ids: order.iter().map(|&i| ids[i].clone()).collect(),
            x: x.select(Axis(0), &order),
            y: order.iter().map(|&i| y[i]).collect(),
            scaler_checksum: None,
        })
    }

    pub fn with_scaler_checksum(mut self, checksum: Fingerprint) -> Self {
        self.scaler_checksum = Some(checksum);
        self
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.x.row(i).to_slice().expect("standard layout")
    }

    pub fn y_min(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn y_max(&self) -> f64 {
        self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Labeled rows for `ids`, features taken from `features` and targets from `records`.
pub fn labeled_subset(features: &FeatureMatrix, records: &[PropertyRecord], ids: &[String]) -> Result<LabeledSet> {
    let targets: HashMap<&str, f64> = records.iter().map(|r| (r.id.as_str(), r.target)).collect();
    let y = ids
        .iter()
        .map(|id| {
            targets
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("id {id} has no record")))
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledSet::new(ids.to_vec(), features.rows_for(ids)?, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn formula_records(rows: &[(&str, &str, f64, Option<f64>)]) -> Vec<PropertyRecord> {
        rows.iter()
            .map(|&(id, f, t, k)| PropertyRecord {
                id: id.into(),
                input: Input::Formula(f.into()),
                target: t,
                dedup_key: k,
            })
            .collect()
    }

    fn numbered(targets: &[f64]) -> Vec<PropertyRecord> {
        targets
            .iter()
            .enumerate()
            .map(|(i, &t)| PropertyRecord {
                id: format!("r{i:05}"),
                input: Input::Features(vec![t]),
                target: t,
                dedup_key: None,
            })
            .collect()
    }

    #[test]
    fn loads_formula_row() {
        let csv = "id,formula,target\nm1,B4ReU,310.0\n";
        let recs = read_records(csv.as_bytes(), &Schema::formula("id", "formula", "target")).unwrap();
        assert_eq!(
            recs,
            formula_records(&[("m1", "B4ReU", 310.0, None)])
        );
    }

    #[test]
    fn empty_feature_cell_is_nan() {
        let csv = "id,f0,f1,f2,y\na,0.1,,3.0,1\n";
        let schema = Schema {
            id: "id".into(),
            input: InputColumns::FeaturePrefix("f".into()),
            target: "y".into(),
            dedup_key: None,
        };
        let recs = read_records(csv.as_bytes(), &schema).unwrap();
        let Input::Features(v) = &recs[0].input else { panic!() };
        assert_eq!(v[0], 0.1);
        assert!(v[1].is_nan());
        assert_eq!(v[2], 3.0);
    }

    #[test]
    fn duplicate_id_rejected() {
        let csv = "id,formula,target\nm1,Fe,1\nm1,Ni,2\n";
        assert!(matches!(
            read_records(csv.as_bytes(), &Schema::formula("id", "formula", "target")),
            Err(Error::DuplicateId(id)) if id == "m1"
        ));
    }

    #[test]
    fn missing_column_named() {
        let csv = "id,formula,y\nm1,Fe,1\n";
        assert!(matches!(
            read_records(csv.as_bytes(), &Schema::formula("id", "formula", "target")),
            Err(Error::MissingColumn(c)) if c == "target"
        ));
    }

    #[test]
    fn bad_target_reports_row() {
        let csv = "id,formula,target\nm1,Fe,1\nm2,Ni,abc\n";
        assert!(matches!(
            read_records(csv.as_bytes(), &Schema::formula("id", "formula", "target")),
            Err(Error::RowParse { row: 1, .. })
        ));
        let csv = "id,formula,target\nm1,Fe,NaN\n";
        assert!(read_records(csv.as_bytes(), &Schema::formula("id", "formula", "target")).is_err());
    }

    #[test]
    fn dedup_keeps_lowest_key() {
        let recs = formula_records(&[("a", "NbSiIr", 1.0, Some(-1.2)), ("b", "NbSiIr", 2.0, Some(-2.0))]);
        let out = dedup_min_by(recs).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "b");
    }

    #[test]
    fn dedup_uses_canonical_composition() {
        let recs = formula_records(&[("a", "IrNbSi", 1.0, Some(-1.2)), ("b", "NbSiIr", 2.0, Some(-2.0))]);
        assert_eq!(dedup_min_by(recs).unwrap()[0].id, "b");
    }

    #[test]
    fn dedup_noop_and_idempotent() {
        let recs = formula_records(&[
            ("a", "Fe", 1.0, None),
            ("b", "Ni", 2.0, None),
            ("c", "Fe2", 3.0, Some(0.5)),
            ("d", "FeNi", 4.0, None),
        ]);
        let unique = formula_records(&[("a", "Fe", 1.0, None), ("b", "Ni", 2.0, None)]);
        assert_eq!(dedup_min_by(unique.clone()).unwrap(), unique);
        // a and c share composition but a lacks a key
        assert!(matches!(dedup_min_by(recs), Err(Error::MissingDedupKey(ids)) if ids == vec!["a".to_string()]));

        let recs = formula_records(&[
            ("a", "Fe", 1.0, Some(0.1)),
            ("b", "Ni", 2.0, None),
            ("c", "Fe2", 3.0, Some(0.0)),
            ("d", "Ni2Fe2", 4.0, Some(1.0)),
            ("e", "NiFe", 5.0, Some(2.0)),
        ]);
        let once = dedup_min_by(recs).unwrap();
        let ids: Vec<&str> = once.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["b", "c", "d"]);
        assert_eq!(dedup_min_by(once.clone()).unwrap(), once);
    }

    #[test]
    fn log10_targets() {
        let recs = numbered(&[1000.0, 1.0, 47.4]);
        let out = apply_log10(recs).unwrap();
        assert_eq!(out[0].target, 3.0);
        assert_eq!(out[1].target, 0.0);
        assert!((out[2].target - 47.4f64.ln() / std::f64::consts::LN_10).abs() < 1e-14);
        assert!((out[2].target - 1.675_778_341_674_085_3).abs() < 1e-12);
        assert!(matches!(
            apply_log10(numbered(&[1.0, 0.0])),
            Err(Error::NonPositiveTarget { id, .. }) if id == "r00001"
        ));
    }

    #[test]
    fn split_counts_for_twenty() {
        let recs = numbered(&(1..=20).map(f64::from).collect::<Vec<_>>());
        let s = make_splits(&recs, 0.05, 0.05, 3).unwrap();
        assert_eq!(s.ood, vec!["r00019"]);
        assert_eq!(s.val.len(), 1);
        assert_eq!(s.train.len(), 18);
        assert_eq!(s.support_max, 19.0);
    }

    #[test]
    fn split_counts_match_arithmetic() {
        assert_eq!(ood_count(2740, 0.05), 137);
        assert_eq!(round_half_up(0.05 * 2603.0), 130);
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(ood_count(20, 0.05), 1);
        assert_eq!(ood_count(21, 0.05), 2);
    }

    #[test]
    fn ties_at_cut_prefer_small_ids() {
        // five records tied at the top value, three OOD slots
        let mut targets: Vec<f64> = (0..55).map(f64::from).collect();
        targets.extend([100.0; 5]);
        let recs = numbered(&targets);
        let s = make_splits(&recs, 0.05, 0.05, 1).unwrap();
        assert_eq!(s.ood, vec!["r00055", "r00056", "r00057"]);
        assert_eq!(s.support_max, 100.0);
    }

    #[test]
    fn split_is_deterministic() {
        let recs = numbered(&(0..100).map(|i| (i * 37 % 101) as f64).collect::<Vec<_>>());
        let a = make_splits(&recs, 0.05, 0.05, 9).unwrap();
        let b = make_splits(&recs, 0.05, 0.05, 9).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = make_splits(&recs, 0.05, 0.05, 10).unwrap();
        assert_eq!(a.ood, c.ood);
    }

    #[test]
    fn too_small_is_an_error() {
        assert!(matches!(make_splits(&numbered(&[1.0, 2.0]), 0.05, 0.05, 0), Err(Error::Split(_))));
    }
}
