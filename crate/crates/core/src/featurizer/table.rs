use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

const BUILTIN_TABLE: &str = include_str!("../../data/elements.csv");

/// Elemental descriptors, one row per element symbol.
///
/// CSV layout: header `symbol,<prop1>,...,<propP>`; empty cells are unknown
/// values and load as NaN.
#[derive(Debug, Clone)]
pub struct ElementTable {
    symbols: Vec<String>,
    property_names: Vec<String>,
    values: Vec<Vec<f64>>,
    lookup: HashMap<String, usize>,
}

impl ElementTable {
    /// The table shipped with the crate: 118 elements and 22 descriptors.
    pub fn builtin() -> Self {
        Self::from_reader(BUILTIN_TABLE.as_bytes()).expect("builtin element table is valid")
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0).map(str::trim) != Some("symbol") {
            return Err(Error::MissingColumn("symbol".into()));
        }
        let property_names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
        let mut symbols = Vec::new();
        let mut values = Vec::new();
        let mut lookup = HashMap::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let symbol = record.get(0).unwrap_or("").trim().to_string();
            let mut props = Vec::with_capacity(property_names.len());
            for (name, cell) in property_names.iter().zip(record.iter().skip(1)) {
                let cell = cell.trim();
                let v = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse().map_err(|_| Error::RowParse {
                        row,
                        field: name.clone(),
                        value: cell.to_string(),
                    })?
                };
                props.push(v);
            }
            if props.len() != property_names.len() {
                return Err(Error::Dimension {
                    expected: property_names.len(),
                    got: props.len(),
                });
            }
            if lookup.insert(symbol.clone(), symbols.len()).is_some() {
                return Err(Error::DuplicateId(symbol));
            }
            symbols.push(symbol);
            values.push(props);
        }
        Ok(ElementTable {
            symbols,
            property_names,
            values,
            lookup,
        })
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn property_names(&self) -> &[String] {
        &self.property_names
    }

    pub fn n_properties(&self) -> usize {
        self.property_names.len()
    }

    pub fn properties(&self, symbol: &str) -> Option<&[f64]> {
        self.lookup.get(symbol).map(|&i| self.values[i].as_slice())
    }

    /// Keep only the named properties, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let cols: Vec<usize> = names
            .iter()
            .map(|n| {
                self.property_names
                    .iter()
                    .position(|p| p == n)
                    .ok_or_else(|| Error::MissingColumn((*n).to_string()))
            })
            .collect::<Result<_>>()?;
        Ok(ElementTable {
            symbols: self.symbols.clone(),
            property_names: names.iter().map(|s| s.to_string()).collect(),
            values: self
                .values
                .iter()
                .map(|row| cols.iter().map(|&c| row[c]).collect())
                .collect(),
            lookup: self.lookup.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_all_elements() {
        let t = ElementTable::builtin();
        assert_eq!(t.symbols().len(), 118);
        assert_eq!(t.properties("Fe").unwrap()[0], 26.0);
        assert_eq!(t.properties("U").unwrap()[0], 92.0);
        for s in super::super::formula::ELEMENT_SYMBOLS {
            assert!(t.properties(s).is_some(), "{s}");
        }
    }

    #[test]
    fn empty_cells_are_nan() {
        let t = ElementTable::from_reader("symbol,a,b\nH,1,\nHe,,2\n".as_bytes()).unwrap();
        assert!(t.properties("H").unwrap()[1].is_nan());
        assert_eq!(t.properties("He").unwrap()[1], 2.0);
    }

    #[test]
    fn requires_symbol_column() {
        assert!(matches!(
            ElementTable::from_reader("name,a\nH,1\n".as_bytes()),
            Err(Error::MissingColumn(_))
        ));
    }
}
