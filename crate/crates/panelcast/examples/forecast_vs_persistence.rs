//! Hold out the final week, forecast it recursively, and compare against
//! the persistence baseline, per unit and for the network.
//!
//! Run with: cargo run --example forecast_vs_persistence --release

use panelcast::evaluate::evaluate_forecasts;
use panelcast::forecast::{forecast_panel, persistence_forecast, ExogenousPolicy};
use panelcast::linmod::{fit_panel, select_lag, ModelSpec};
use panelcast::preprocess::{split_train_holdout, transform_panel, TransformSpec};
use panelcast::simulate::{simulate_panel, SimConfig};

fn main() -> panelcast::Result<()> {
    let (panel, truth) = simulate_panel(&SimConfig::reference_scale(7))?;
    // Indicator smoothed; the target stays on its own scale since forecasts
    // are scored on raw counts.
    let tspec = TransformSpec {
        smooth_target: false,
        ..TransformSpec::default()
    };
    let tpanel = transform_panel(&panel, &tspec)?;
    let (train, holdout) = split_train_holdout(&tpanel, 7)?;
    let (k, _) = select_lag(&train, 7, &ModelSpec::new(1))?;
    println!(
        "selected lag order K = {k} (true causal delay {})\n",
        truth.true_lag
    );

    let fits = fit_panel(&train, &ModelSpec::new(k))?;
    let forecasts = forecast_panel(&fits, &train, 7, &ExogenousPolicy::HoldLast)?;
    let model = evaluate_forecasts(&forecasts, &holdout)?;
    let baseline_fs = persistence_forecast(&train.base, 7, tpanel.spec.log_offset);
    let baseline = evaluate_forecasts(&baseline_fs, &holdout)?;

    println!(
        "{:<8} {:>12} {:>12} {:>14} {:>14}",
        "unit", "model MAE", "naive MAE", "model WMAPE", "naive WMAPE"
    );
    let fmt = |w: Option<f64>| match w {
        Some(v) => format!("{:.1}%", v * 100.0),
        None => "n/a".into(),
    };
    for (m, b) in model.per_unit.iter().zip(&baseline.per_unit) {
        println!(
            "{:<8} {:>12.2} {:>12.2} {:>14} {:>14}",
            m.unit_id,
            m.mae,
            b.mae,
            fmt(m.wmape),
            fmt(b.wmape)
        );
    }
    println!(
        "{:<8} {:>12.2} {:>12.2} {:>13.1}% {:>13.1}%",
        "network",
        model.network_mae,
        baseline.network_mae,
        model.network_wmape * 100.0,
        baseline.network_wmape * 100.0
    );
    Ok(())
}
