//! Seeded compositional regression tasks with a known linear ground truth.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Input, PropertyRecord};
use crate::error::{Error, Result};
use crate::featurizer::CompositionMap;

/// Elements whose descriptor rows are fully populated in the built-in table.
pub const TASK_ELEMENTS: [&str; 8] = ["Li", "Al", "Si", "Ti", "Fe", "Cu", "Ga", "Sn"];
pub const FIXTURE_ELEMENTS: [&str; 12] = ["Li", "Be", "B", "Na", "Al", "Si", "Ti", "Fe", "Ni", "Cu", "Zr", "Sn"];

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionTask {
    pub elements: Vec<String>,
    pub n: usize,
    pub max_components: usize,
    pub max_count: u32,
    /// Noise standard deviation as a fraction of the noiseless target range.
    pub noise_frac: f64,
    /// Added to every target; keeps fixtures strictly positive when needed.
    pub offset: f64,
    pub seed: u64,
}

impl CompositionTask {
    /// 200 formulas over eight elements with 1% noise.
    pub fn standard(seed: u64) -> Self {
        CompositionTask {
            elements: TASK_ELEMENTS.iter().map(|s| s.to_string()).collect(),
            n: 200,
            max_components: 4,
            max_count: 6,
            noise_frac: 0.01,
            offset: 0.0,
            seed,
        }
    }

    /// The 500-row end-to-end fixture.
    pub fn fixture(seed: u64) -> Self {
        CompositionTask {
            elements: FIXTURE_ELEMENTS.iter().map(|s| s.to_string()).collect(),
            n: 500,
            max_components: 4,
            max_count: 8,
            noise_frac: 0.01,
            offset: 1.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub records: Vec<PropertyRecord>,
    pub formulas: Vec<String>,
    /// One weight per element; the clean target is the fraction-weighted sum.
    pub coefficients: Vec<f64>,
    pub noise_sd: f64,
}

fn formula_string(elements: &[String], counts: &[(usize, u32)]) -> String {
    counts
        .iter()
        .map(|&(e, c)| if c == 1 { elements[e].clone() } else { format!("{}{}", elements[e], c) })
        .collect()
}

/// Draw `n` distinct compositions (by reduced stoichiometry) and label each
/// with `sum_e w_e * fraction_e + noise + offset`.
pub fn generate(task: &CompositionTask) -> Result<SyntheticData> {
    let k = task.elements.len();
    if k < 2 || task.max_components < 1 || task.max_count < 1 {
        return Err(Error::InvalidArgument("task needs at least two elements and positive limits".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
    let coefficients: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..10.0)).collect();
    let mut seen = BTreeSet::new();
    let mut formulas = Vec::with_capacity(task.n);
    let mut clean = Vec::with_capacity(task.n);
    let max_tries = 1000 * task.n.max(1);
    let mut tries = 0;
    while formulas.len() < task.n {
        tries += 1;
        if tries > max_tries {
            return Err(Error::InvalidArgument(format!(
                "could not draw {} distinct compositions from {k} elements",
                task.n
            )));
        }
        let parts = rng.random_range(1..=task.max_components.min(k));
        let mut picked = sample(&mut rng, k, parts).into_vec();
        picked.sort_unstable();
        let counts: Vec<(usize, u32)> = picked.iter().map(|&e| (e, rng.random_range(1..=task.max_count))).collect();
        let comp = CompositionMap::from_pairs(counts.iter().map(|&(e, c)| (task.elements[e].clone(), f64::from(c))))?;
        if !seen.insert(comp.canonical_key()) {
            continue;
        }
        let total = comp.total();
        let y: f64 = counts.iter().map(|&(e, c)| coefficients[e] * f64::from(c) / total).sum();
        formulas.push(formula_string(&task.elements, &counts));
        clean.push(y);
    }
    let lo = clean.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let noise_sd = task.noise_frac * (hi - lo);
    let noise = Normal::new(0.0, noise_sd.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let width = (task.n.max(1) - 1).to_string().len();
    let records = formulas
        .iter()
        .zip(&clean)
        .enumerate()
        .map(|(i, (f, &y))| PropertyRecord {
            id: format!("syn-{i:0width$}"),
            input: Input::Formula(f.clone()),
            target: y + noise.sample(&mut rng) + task.offset,
            dedup_key: None,
        })
        .collect();
    Ok(SyntheticData {
        records,
        formulas,
        coefficients,
        noise_sd,
    })
}

/// `id,formula,target` with shortest round-trip floats.
pub fn write_formula_csv<W: Write>(records: &[PropertyRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "formula", "target"])?;
    for r in records {
        let Input::Formula(f) = &r.input else {
            return Err(Error::InvalidArgument(format!("record {} has no formula", r.id)));
        };
        w.write_record([r.id.as_str(), f.as_str(), &r.target.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<synthetic>", e))
}

pub fn write_formula_csv_file(records: &[PropertyRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_formula_csv(records, std::io::BufWriter::new(file))
}
