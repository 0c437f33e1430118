//! Regenerate the shipped 500-row fixture: `cargo run --example make_fixture -- data/synthetic_500.csv`.

use std::path::PathBuf;

use transduce_core::synthetic::{generate, write_formula_csv_file, CompositionTask};

fn main() -> Result<(), transduce_core::Error> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("data/synthetic_500.csv"));
    let data = generate(&CompositionTask::fixture(500))?;
    write_formula_csv_file(&data.records, &out)?;
    println!("wrote {} rows to {}", data.records.len(), out.display());
    Ok(())
}
