//! Regenerates the ground-truth garage map shipped under `scenarios/worlds`.
//!
//! Usage: cargo run -p nigelpark --example make_worlds [out_dir]

use std::path::PathBuf;

use nigelpark::worlds::garage_map;
use nigelpark_core::mapping::save_map;

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("scenarios/worlds"));
    let path = out.join("garage_map.yaml");
    save_map(&garage_map(), &path).expect("write map");
    println!("wrote {}", path.display());
}
