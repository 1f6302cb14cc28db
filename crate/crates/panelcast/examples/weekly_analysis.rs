//! Secondary weekly path: sum a daily panel into ISO weeks (partial
//! boundary weeks dropped) and run the non-causality test at the weekly
//! frequency, where the sample is much shorter.
//!
//! Run with: cargo run --example weekly_analysis --release

use panelcast::granger::dh_test_weekly;
use panelcast::linmod::ModelSpec;
use panelcast::simulate::{simulate_panel, SimConfig};

fn main() -> panelcast::Result<()> {
    let mut cfg = SimConfig::new(10, 420, 11);
    cfg.beta_true = vec![0.6; 10];
    cfg.gamma_true = vec![0.4; 10];
    cfg.rw_step = 0.1;
    let (panel, _) = simulate_panel(&cfg)?;
    let weekly = panel.aggregate_weekly()?;
    println!(
        "daily panel: {} days -> weekly panel: {} weeks (Mondays {} .. {})\n",
        panel.n_periods(),
        weekly.n_periods(),
        weekly.calendar.first().unwrap(),
        weekly.calendar.last().unwrap()
    );

    let result = dh_test_weekly(&weekly, &ModelSpec::new(1))?;
    print!("{}", result.render_report());
    Ok(())
}
