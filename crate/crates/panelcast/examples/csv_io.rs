//! CSV surfaces: write the raw triple, load and validate it, aggregate to a
//! panel, and round-trip the panel file - including what the validators
//! reject.
//!
//! Run with: cargo run --example csv_io --release

use panelcast::ingest::{
    build_panel, load_attestations, load_census, load_zip_map, Frequency, PanelDataset,
};
use panelcast::simulate::{simulate_raw, SimConfig};

fn main() -> panelcast::Result<()> {
    let dir = std::env::temp_dir().join("panelcast_csv_io");
    std::fs::create_dir_all(&dir).expect("temp dir");

    // Write a synthetic triple through plain text, as an external producer would.
    let data = simulate_raw(&SimConfig::new(4, 90, 5))?;
    let att_path = dir.join("attestations.csv");
    let census_path = dir.join("census.csv");
    let zip_path = dir.join("zipmap.csv");
    let mut att = String::from("date,zip,n_onsite,n_symptomatic\n");
    for r in &data.attestations {
        att.push_str(&format!(
            "{},{},{},{}\n",
            r.date, r.zip, r.n_onsite, r.n_symptomatic
        ));
    }
    std::fs::write(&att_path, att).expect("write");
    let mut census = String::from("date,unit_id,census\n");
    for r in &data.census {
        census.push_str(&format!("{},{},{}\n", r.date, r.unit_id, r.census));
    }
    std::fs::write(&census_path, census).expect("write");
    let mut zips = String::from("zip,unit_id,population,market_share_weight\n");
    for e in &data.zipmap.entries {
        zips.push_str(&format!(
            "{},{},{},{}\n",
            e.zip, e.unit_id, e.population, e.market_share_weight
        ));
    }
    std::fs::write(&zip_path, zips).expect("write");

    // Load, validate, aggregate.
    let zipmap = load_zip_map(&zip_path)?;
    let attestations = load_attestations(&att_path)?;
    let census = load_census(&census_path)?;
    let panel = build_panel(&attestations, &census, &zipmap, Frequency::Daily, false)?;
    println!(
        "loaded {} attestation rows over {} zips -> panel {} units x {} days",
        attestations.len(),
        zipmap.entries.len(),
        panel.n_units(),
        panel.n_periods()
    );

    // Counts are conserved through aggregation.
    let record_total: u64 = attestations.iter().map(|r| r.n_symptomatic).sum();
    let panel_total: f64 = panel.x.iter().flatten().sum();
    println!("symptomatic total: records {record_total}, panel {panel_total}");

    // Panel CSV round trip.
    let panel_path = dir.join("panel.csv");
    panel.write_csv(&panel_path)?;
    let reloaded = PanelDataset::read_csv(&panel_path)?;
    println!(
        "panel.csv round trip: {} cells, identical = {}",
        reloaded.n_units() * reloaded.n_periods(),
        reloaded.y == panel.y && reloaded.x == panel.x
    );

    // The validators at work: a duplicated zip row is rejected.
    let mut bad = String::from("zip,unit_id,population,market_share_weight\n");
    bad.push_str("02215,H1,1000,0.5\n02215,H1,1000,0.5\n");
    let bad_path = dir.join("bad_zipmap.csv");
    std::fs::write(&bad_path, bad).expect("write");
    match load_zip_map(&bad_path) {
        Err(err) => println!("duplicate zip correctly rejected: {err}"),
        Ok(_) => println!("unexpected: duplicate zip accepted"),
    }
    Ok(())
}
