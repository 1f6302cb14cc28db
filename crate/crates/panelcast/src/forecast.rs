//! Recursive multi-step forecasting and back-transformation to counts.
//!
//! Forecasts iterate the fitted lag equation: predicted values feed later
//! steps as if observed. Future indicator values are not modeled, so a
//! policy fills them in - either holding the last smoothed-log observation
//! flat or substituting caller-provided what-if paths. Predictions are
//! mapped back to the count scale with `exp(.) - offset`, clipped at zero.
//! No lognormal bias correction is applied on the back-transform.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PanelDataset;
use crate::linmod::{PanelFit, UnitFit};
use crate::preprocess::TransformedPanel;

/// How the indicator's unobserved future values are filled during recursion.
#[derive(Debug, Clone, PartialEq)]
pub enum ExogenousPolicy {
    /// Repeat the final observed smoothed-log value.
    HoldLast,
    /// Use caller-provided paths (N x h, transformed scale).
    Provided(Vec<Vec<f64>>),
}

/// Per-unit and network h-step predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    /// Last training period.
    pub origin: NaiveDate,
    /// Steps ahead.
    pub horizon: usize,
    /// Dates of the forecast periods.
    pub dates: Vec<NaiveDate>,
    /// Unit ids in panel order.
    pub unit_ids: Vec<String>,
    /// N x h predicted counts (raw scale, non-negative).
    pub per_unit: Vec<Vec<f64>>,
    /// Network prediction: per-step sum over units.
    pub network: Vec<f64>,
    /// N x h predictions on the smoothed-log scale, for diagnostics.
    pub transformed_scale: Vec<Vec<f64>>,
}

/// Forecast one unit `h` steps ahead on the transformed scale.
///
/// `y_history` and `x_history` are the transformed training series.
/// Predicted target values feed later steps; indicator values beyond the
/// last observation follow `policy` (`unit_index` selects the provided path).
pub fn forecast_unit(
    fit: &UnitFit,
    y_history: &[f64],
    x_history: &[f64],
    horizon: usize,
    policy: &ExogenousPolicy,
    unit_index: usize,
) -> Result<Vec<f64>> {
    let k = fit.gamma.len();
    if horizon == 0 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    if y_history.len() < k || x_history.len() < k {
        return Err(Error::HistoryTooShort {
            needed: k,
            got: y_history.len().min(x_history.len()),
        });
    }
    if let ExogenousPolicy::Provided(paths) = policy {
        let path = paths.get(unit_index).ok_or(Error::Alignment(format!(
            "no provided indicator path for unit index {unit_index}"
        )))?;
        if path.len() < horizon {
            return Err(Error::LengthMismatch {
                left: path.len(),
                right: horizon,
            });
        }
    }

    let t_last = y_history.len();
    let mut forecasts = Vec::with_capacity(horizon);
    for step in 1..=horizon {
        let mut value = fit.alpha;
        for lag in 1..=k {
            // Index into the combined observed + predicted target series.
            let idx = t_last + step - 1 - lag; // 0-based position of y_{t+step-lag}
            let y_lag = if idx < t_last {
                y_history[idx]
            } else {
                forecasts[idx - t_last]
            };
            value += fit.gamma[lag - 1] * y_lag;

            let x_lag = if step <= lag {
                x_history[x_history.len() + step - 1 - lag]
            } else {
                match policy {
                    ExogenousPolicy::HoldLast => *x_history.last().unwrap(),
                    ExogenousPolicy::Provided(paths) => paths[unit_index][step - lag - 1],
                }
            };
            value += fit.beta[lag - 1] * x_lag;
        }
        forecasts.push(value);
    }
    Ok(forecasts)
}

/// Forecast every unit, back-transform to counts, and sum to the network.
pub fn forecast_panel(
    panel_fit: &PanelFit,
    tpanel: &TransformedPanel,
    horizon: usize,
    policy: &ExogenousPolicy,
) -> Result<ForecastSet> {
    if panel_fit.fits.len() != tpanel.n_units() {
        return Err(Error::Alignment(format!(
            "{} fits for {} units",
            panel_fit.fits.len(),
            tpanel.n_units()
        )));
    }
    let offset = tpanel.spec.log_offset;
    let n = tpanel.n_units();
    let mut per_unit = Vec::with_capacity(n);
    let mut transformed = Vec::with_capacity(n);
    for (i, fit) in panel_fit.fits.iter().enumerate() {
        if fit.unit_id != tpanel.units[i].id {
            return Err(Error::Alignment(format!(
                "fit order mismatch: '{}' vs '{}'",
                fit.unit_id, tpanel.units[i].id
            )));
        }
        let path = forecast_unit(fit, &tpanel.y[i], &tpanel.x[i], horizon, policy, i)?;
        let counts: Vec<f64> = path.iter().map(|v| (v.exp() - offset).max(0.0)).collect();
        per_unit.push(counts);
        transformed.push(path);
    }
    let network = (0..horizon)
        .map(|s| per_unit.iter().map(|u| u[s]).sum())
        .collect();

    let origin = *tpanel.calendar.last().unwrap();
    let step = tpanel.frequency.step_days();
    let dates = (1..=horizon)
        .map(|s| origin + Duration::days(step * s as i64))
        .collect();

    Ok(ForecastSet {
        origin,
        horizon,
        dates,
        unit_ids: tpanel.units.iter().map(|u| u.id.clone()).collect(),
        per_unit,
        network,
        transformed_scale: transformed,
    })
}

/// Naive baseline: repeat each unit's last observed count across the horizon.
pub fn persistence_forecast(panel: &PanelDataset, horizon: usize, log_offset: f64) -> ForecastSet {
    let n = panel.n_units();
    let last: Vec<f64> = (0..n).map(|i| *panel.y[i].last().unwrap()).collect();
    let per_unit: Vec<Vec<f64>> = last.iter().map(|&v| vec![v; horizon]).collect();
    let network = vec![last.iter().sum(); horizon];
    let transformed_scale = last
        .iter()
        .map(|&v| vec![(v + log_offset).ln(); horizon])
        .collect();
    let origin = *panel.calendar.last().unwrap();
    let step = panel.frequency.step_days();
    ForecastSet {
        origin,
        horizon,
        dates: (1..=horizon)
            .map(|s| origin + Duration::days(step * s as i64))
            .collect(),
        unit_ids: panel.units.iter().map(|u| u.id.clone()).collect(),
        per_unit,
        network,
        transformed_scale,
    }
}

/// Exact proportional change in the target implied by doubling the
/// indicator in a natural-log/log model: `2^beta - 1`.
pub fn interpret_doubling(beta: f64) -> f64 {
    2f64.powf(beta) - 1.0
}

/// Doubling-effect interpretation of one indicator coefficient, carrying
/// both the exact value and the common shortcut reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingEffect {
    /// The indicator coefficient.
    pub coefficient: f64,
    /// Exact proportional change: 2^coefficient - 1.
    pub exact: f64,
    /// Shortcut reading that quotes the coefficient itself as the
    /// proportional change.
    pub approximate: f64,
}

impl DoublingEffect {
    /// Interpret a coefficient.
    pub fn of(coefficient: f64) -> Self {
        DoublingEffect {
            coefficient,
            exact: interpret_doubling(coefficient),
            approximate: coefficient,
        }
    }

    /// One-line description quoting both readings.
    pub fn describe(&self) -> String {
        format!(
            "doubling the indicator is associated with a {:+.2}% change in the target \
             (exact 2^b - 1); reading the coefficient b = {:.4} directly as the effect \
             gives {:+.2}%",
            self.exact * 100.0,
            self.coefficient,
            self.approximate * 100.0
        )
    }
}

/// Tidy per-unit series for external plotting: observed counts, in-sample
/// fitted values, and forecasts, one row per (unit, date, series).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    /// Unit id.
    pub unit_id: String,
    /// Period date.
    pub date: NaiveDate,
    /// One of "observed", "fitted", "forecast".
    pub series: String,
    /// Count-scale value.
    pub value: f64,
}

/// Assemble plot-ready rows: raw observed series over the full base
/// calendar, back-transformed in-sample fitted values, and the forecast.
pub fn plot_data(
    panel_fit: &PanelFit,
    tpanel: &TransformedPanel,
    forecasts: &ForecastSet,
) -> Result<Vec<PlotRow>> {
    let offset = tpanel.spec.log_offset;
    let k = panel_fit.spec.lag_order;
    let mut rows = Vec::new();
    for (i, unit) in tpanel.units.iter().enumerate() {
        for (t, date) in tpanel.base.calendar.iter().enumerate() {
            rows.push(PlotRow {
                unit_id: unit.id.clone(),
                date: *date,
                series: "observed".into(),
                value: tpanel.base.y[i][t],
            });
        }
        let fit = &panel_fit.fits[i];
        // In-sample one-step fitted values on the transformed grid.
        for t in k..tpanel.n_periods() {
            let mut value = fit.alpha;
            for lag in 1..=k {
                value += fit.gamma[lag - 1] * tpanel.y[i][t - lag];
                value += fit.beta[lag - 1] * tpanel.x[i][t - lag];
            }
            rows.push(PlotRow {
                unit_id: unit.id.clone(),
                date: tpanel.calendar[t],
                series: "fitted".into(),
                value: (value.exp() - offset).max(0.0),
            });
        }
        for (s, date) in forecasts.dates.iter().enumerate() {
            rows.push(PlotRow {
                unit_id: unit.id.clone(),
                date: *date,
                series: "forecast".into(),
                value: forecasts.per_unit[i][s],
            });
        }
    }
    Ok(rows)
}
