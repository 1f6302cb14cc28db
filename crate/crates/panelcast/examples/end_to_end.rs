//! Full pipeline in memory: simulate a panel with known causal structure,
//! smooth and log it, pick the lag order by BIC, fit every unit, test panel
//! non-causality, forecast the holdout week, and score against persistence.
//!
//! Run with: cargo run --example end_to_end --release

use panelcast::evaluate::{describe_panel, evaluate_forecasts, render_table};
use panelcast::forecast::{forecast_panel, persistence_forecast, ExogenousPolicy};
use panelcast::granger::dh_test;
use panelcast::linmod::{fit_panel, select_lag, ModelSpec};
use panelcast::preprocess::{split_train_holdout, transform_panel, TransformSpec};
use panelcast::simulate::{simulate_raw, SimConfig};

fn main() -> panelcast::Result<()> {
    // A ten-unit network over 217 days with a 7-day causal delay from
    // symptoms to census.
    let sim = SimConfig::reference_scale(42);
    let data = simulate_raw(&sim)?;
    let panel = data.panel;
    println!(
        "simulated {} units x {} days, true lag {} days\n",
        panel.n_units(),
        panel.n_periods(),
        sim.true_lag
    );

    // Smooth with a 7-day trailing window, log with offset 1.
    let tpanel = transform_panel(&panel, &TransformSpec::default())?;
    let (train, holdout) = split_train_holdout(&tpanel, 7)?;

    // Lag order by BIC on the training window.
    let (k, curve) = select_lag(&train, 7, &ModelSpec::new(1))?;
    println!("BIC lag sweep:");
    for (order, bic) in &curve {
        let marker = if *order == k { "  <- selected" } else { "" };
        println!("  K = {order}: {bic:.1}{marker}");
    }
    println!();

    // Heterogeneous per-unit fits and the panel non-causality test.
    let fits = fit_panel(&train, &ModelSpec::new(k))?;
    let result = dh_test(&fits)?;
    print!("{}", result.render_report());
    println!();

    // Recursive 7-day forecast, scored on the raw count scale.
    let forecasts = forecast_panel(&fits, &train, 7, &ExogenousPolicy::HoldLast)?;
    let report = evaluate_forecasts(&forecasts, &holdout)?;
    let baseline_fs = persistence_forecast(&train.base, 7, tpanel.spec.log_offset);
    let baseline = evaluate_forecasts(&baseline_fs, &holdout)?;

    let description = describe_panel(&panel, &data.zipmap)?;
    print!("{}", render_table(&description, Some(&report)));
    println!(
        "\nnetwork holdout: model MAE {:.2} (WMAPE {:.2}%) vs persistence MAE {:.2} (WMAPE {:.2}%)",
        report.network_mae,
        report.network_wmape * 100.0,
        baseline.network_mae,
        baseline.network_wmape * 100.0
    );
    Ok(())
}
