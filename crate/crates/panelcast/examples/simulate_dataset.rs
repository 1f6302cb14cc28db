//! Generate a synthetic attestations/census/zipmap CSV triple on disk, the
//! same files the `panelcast simulate` subcommand writes.
//!
//! Run with: cargo run --example simulate_dataset --release -- out/synthetic

use panelcast::cli::{cmd_simulate, RunConfig};

fn main() -> panelcast::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/synthetic".to_string());
    let cfg = RunConfig {
        out_dir: out.clone().into(),
        sim_units: 10,
        sim_days: 217,
        sim_true_lag: 7,
        seed: 42,
        ..RunConfig::default()
    };
    cmd_simulate(&cfg)?;
    println!("wrote attestations.csv, census.csv, zipmap.csv, truth.json, manifest.json to {out}");
    println!("next: panelcast run-all --attestations {out}/attestations.csv --census {out}/census.csv --zipmap {out}/zipmap.csv --out out/run");
    Ok(())
}
