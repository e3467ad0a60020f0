//! Writes a synthetic train/test pair matching `schemas/synthetic.json`.
//!
//! cargo run -p ids-core --example make_synthetic -- data/synthetic

use std::fs;
use std::path::PathBuf;

use ids_core::synth::{to_csv, Generator, SyntheticConfig};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data/synthetic".into()));
    fs::create_dir_all(&dir)?;
    let g = Generator::new(SyntheticConfig::default(), 1);
    fs::write(dir.join("train.csv"), to_csv(&g.dataset(2000, 0, 2)))?;
    fs::write(dir.join("test.csv"), to_csv(&g.dataset(800, 200, 3)))?;
    println!("wrote {}/train.csv (2000 normal) and test.csv (800 normal, 200 attack)", dir.display());
    Ok(())
}
