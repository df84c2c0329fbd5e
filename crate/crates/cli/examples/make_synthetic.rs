//! Writes the three-class synthetic image directory used by
//! `configs/synthetic.toml`.
//!
//! Usage: `cargo run -p complens-cli --example make_synthetic -- [DIR] [PER_CLASS] [NOISE] [SEED]`

use std::path::PathBuf;

use complens_cli::synthetic::write_synthetic_dataset;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().map_or("data/synthetic", String::as_str));
    let per_class: usize = args.get(1).map_or(Ok(150), |s| s.parse())?;
    let noise: f64 = args.get(2).map_or(Ok(0.5), |s| s.parse())?;
    let seed: u64 = args.get(3).map_or(Ok(0), |s| s.parse())?;
    write_synthetic_dataset(&dir, per_class, noise, seed)?;
    println!("wrote {} images to {}", 3 * per_class, dir.display());
    Ok(())
}
