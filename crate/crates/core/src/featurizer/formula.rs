//! Chemical formula parsing.
//!
//! Grammar (whitespace not allowed):
//!
//! ```text
//! formula := item+
//! item    := element count? | '(' formula ')' count? | '[' formula ']' count?
//! element := [A-Z][a-z]*
//! count   := [0-9]+ ('.' [0-9]+)?
//! ```
//!
//! Groups nest to any depth and repeated elements are summed.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// The 118 element symbols, in atomic-number order.
pub const ELEMENT_SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

pub fn is_element(symbol: &str) -> bool {
    ELEMENT_SYMBOLS.contains(&symbol)
}

/// Element symbol to (positive) amount.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompositionMap(BTreeMap<String, f64>);

impl CompositionMap {
    /// Build from explicit pairs; symbols must be known and amounts positive.
    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (symbol, count) in pairs {
            let symbol = symbol.into();
            if !is_element(&symbol) {
                return Err(Error::UnknownElement(symbol));
            }
            if !(count > 0.0 && count.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "amount of {symbol} must be positive, got {count}"
                )));
            }
            *map.entry(symbol).or_insert(0.0) += count;
        }
        if map.is_empty() {
            return Err(Error::Empty("composition has no elements".into()));
        }
        Ok(CompositionMap(map))
    }

    pub fn get(&self, symbol: &str) -> Option<f64> {
        self.0.get(symbol).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entries in alphabetical symbol order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> + '_ {
        self.0.iter().map(|(s, &c)| (s.as_str(), c))
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    /// Every amount multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        CompositionMap(self.0.iter().map(|(s, &c)| (s.clone(), c * factor)).collect())
    }

    /// Canonical string used to decide whether two formulas describe the same
    /// composition.
    ///
    /// Integral amounts are reduced by their gcd (`Nb2Si2Ir2` -> `Ir1Nb1Si1`);
    /// otherwise amounts are normalized to fractions summing to one and printed
    /// with nine decimals.
    pub fn canonical_key(&self) -> String {
        let integral: Option<Vec<u64>> = self
            .0
            .values()
            .map(|&c| {
                let r = c.round();
                ((c - r).abs() < 1e-9 && r >= 1.0).then_some(r as u64)
            })
            .collect();
        match integral {
            Some(counts) => {
                let g = counts.iter().copied().fold(0, gcd);
                self.0
                    .keys()
                    .zip(&counts)
                    .map(|(s, c)| format!("{s}{}", c / g))
                    .collect()
            }
            None => {
                let total = self.total();
                self.0
                    .iter()
                    .map(|(s, c)| format!("{s}{:.9}", c / total))
                    .collect()
            }
        }
    }
}

impl fmt::Display for CompositionMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (s, c) in &self.0 {
            if c.fract() == 0.0 && *c == 1.0 {
                write!(f, "{s}")?;
            } else {
                write!(f, "{s}{c}")?;
            }
        }
        Ok(())
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Parse a formula such as `B4ReU`, `Ca(OH)2` or `Fe0.5Ni0.5`.
pub fn parse_formula(formula: &str) -> Result<CompositionMap> {
    let mut parser = Parser {
        src: formula,
        bytes: formula.as_bytes(),
        pos: 0,
    };
    let entries = parser.group(None)?;
    if entries.is_empty() {
        return Err(parser.error(0, "empty formula"));
    }
    Ok(CompositionMap(entries))
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Formula {
            formula: self.src.to_string(),
            offset,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Parse items until `closing` (or end of input when `None`).
    fn group(&mut self, closing: Option<(u8, usize)>) -> Result<BTreeMap<String, f64>> {
        let mut out: BTreeMap<String, f64> = BTreeMap::new();
        loop {
            let Some(c) = self.peek() else {
                if let Some((_, open)) = closing {
                    return Err(self.error(open, "unclosed group"));
                }
                return Ok(out);
            };
            match c {
                b'(' | b'[' => {
                    let open = self.pos;
                    self.pos += 1;
                    let close = if c == b'(' { b')' } else { b']' };
                    let inner = self.group(Some((close, open)))?;
                    if inner.is_empty() {
                        return Err(self.error(open, "empty group"));
                    }
                    let mult = self.count()?.unwrap_or(1.0);
                    for (s, n) in inner {
                        *out.entry(s).or_insert(0.0) += n * mult;
                    }
                }
                b')' | b']' => {
                    match closing {
                        Some((expected, _)) if expected == c => {
                            self.pos += 1;
                            return Ok(out);
                        }
                        _ => return Err(self.error(self.pos, "unmatched closing bracket")),
                    }
                }
                b'A'..=b'Z' => {
                    let start = self.pos;
                    self.pos += 1;
                    while matches!(self.peek(), Some(b'a'..=b'z')) {
                        self.pos += 1;
                    }
                    let symbol = &self.src[start..self.pos];
                    if !is_element(symbol) {
                        return Err(self.error(start, format!("unknown element `{symbol}`")));
                    }
                    let n = self.count()?.unwrap_or(1.0);
                    *out.entry(symbol.to_string()).or_insert(0.0) += n;
                }
                b'-' => return Err(self.error(self.pos, "negative count")),
                _ => {
                    let ch = self.src[self.pos..].chars().next().unwrap_or('?');
                    return Err(self.error(self.pos, format!("unexpected character `{ch}`")));
                }
            }
        }
    }

    fn count(&mut self) -> Result<Option<f64>> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            let frac_start = self.pos;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
            if frac_start == self.pos {
                return Err(self.error(start, "malformed decimal count"));
            }
        }
        if start == self.pos {
            return Ok(None);
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text
            .parse()
            .map_err(|_| self.error(start, format!("malformed count `{text}`")))?;
        if value <= 0.0 {
            return Err(self.error(start, "count must be positive"));
        }
        Ok(Some(value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(pairs: &[(&str, f64)]) -> CompositionMap {
        CompositionMap::from_pairs(pairs.iter().map(|&(s, c)| (s, c))).unwrap()
    }

    #[test]
    fn parses_plain_formula() {
        assert_eq!(
            parse_formula("B4ReU").unwrap(),
            comp(&[("B", 4.0), ("Re", 1.0), ("U", 1.0)])
        );
    }

    #[test]
    fn parses_group_multiplier() {
        assert_eq!(
            parse_formula("Ca(OH)2").unwrap(),
            comp(&[("Ca", 1.0), ("O", 2.0), ("H", 2.0)])
        );
    }

    #[test]
    fn parses_decimal_counts() {
        assert_eq!(
            parse_formula("Fe0.5Ni0.5").unwrap(),
            comp(&[("Fe", 0.5), ("Ni", 0.5)])
        );
    }

    #[test]
    fn nested_groups_and_repeats_sum() {
        assert_eq!(
            parse_formula("K4[Fe(CN)6]").unwrap(),
            comp(&[("K", 4.0), ("Fe", 1.0), ("C", 6.0), ("N", 6.0)])
        );
        assert_eq!(
            parse_formula("CH3COOH").unwrap(),
            comp(&[("C", 2.0), ("H", 4.0), ("O", 2.0)])
        );
    }

    #[test]
    fn permutation_invariant() {
        assert_eq!(parse_formula("B4ReU").unwrap(), parse_formula("UReB4").unwrap());
    }

    fn offset_of(s: &str) -> usize {
        match parse_formula(s) {
            Err(Error::Formula { offset, .. }) => offset,
            other => panic!("expected formula error for {s}, got {other:?}"),
        }
    }

    #[test]
    fn error_offsets() {
        assert_eq!(offset_of("FeXx2"), 2);
        assert_eq!(offset_of("Ca(OH2"), 2);
        assert_eq!(offset_of("CaOH)2"), 4);
        assert_eq!(offset_of("Fe0Ni"), 2);
        assert_eq!(offset_of("Fe-1"), 2);
        assert_eq!(offset_of(""), 0);
        assert_eq!(offset_of("fe"), 0);
    }

    #[test]
    fn canonical_keys() {
        let a = parse_formula("IrNbSi").unwrap();
        let b = parse_formula("NbSiIr").unwrap();
        let c = parse_formula("Nb2Si2Ir2").unwrap();
        assert_eq!(a.canonical_key(), "Ir1Nb1Si1");
        assert_eq!(a.canonical_key(), b.canonical_key());
        assert_eq!(a.canonical_key(), c.canonical_key());
        let d = parse_formula("Fe0.5Ni0.5").unwrap();
        let e = parse_formula("Fe0.25Ni0.25").unwrap();
        assert_eq!(d.canonical_key(), e.canonical_key());
        assert_ne!(d.canonical_key(), parse_formula("FeNi2").unwrap().canonical_key());
    }
}
