//! Dev utility: generate the bundled synthetic toy dataset.
//!
//! The checked-in `data/toy/` tree was produced by
//! `cargo run -p semaff-cli --bin toygen -- --out data/toy --seed 42`.

use std::path::PathBuf;

use clap::Parser;
use semaff_core::synth::{toy_dataset, DatasetSpec};

#[derive(Parser)]
#[command(name = "toygen", about = "Generate a synthetic toolkit dataset")]
struct Args {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    languages: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
}

fn main() {
    let args = Args::parse();
    let spec = DatasetSpec {
        languages: args.languages,
        dim: args.dim,
        seed: args.seed,
        ..Default::default()
    };
    let dataset = toy_dataset(&spec);
    match dataset.write_to_dir(&args.out) {
        Ok(config) => println!("wrote dataset, config at {}", config.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
