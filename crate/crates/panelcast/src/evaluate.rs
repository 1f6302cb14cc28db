//! Forecast scoring (MAE, WMAPE) and descriptive panel statistics.
//!
//! WMAPE is the ratio form `sum |error| / sum actual` - the actual-weighted
//! MAPE - which stays finite when individual days have (near-)zero actuals.
//! Network scores are computed on the summed series, not by averaging unit
//! scores. Descriptive standard deviations use the population (n)
//! denominator, as descriptive tables conventionally do.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::ForecastSet;
use crate::ingest::{PanelDataset, ZipMap};
use crate::preprocess::HoldoutSlice;

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Config("mae needs at least one observation".into()));
    }
    Ok(actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).abs())
        .sum::<f64>()
        / actual.len() as f64)
}

/// Weighted mean absolute percentage error: `sum |a - p| / sum a`.
pub fn wmape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    let denom: f64 = actual.iter().sum();
    if denom <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let num: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).abs())
        .sum();
    Ok(num / denom)
}

/// One unit's holdout scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitScore {
    /// Unit id.
    pub unit_id: String,
    /// Mean absolute error.
    pub mae: f64,
    /// WMAPE; `None` when the unit's actuals sum to zero.
    pub wmape: Option<f64>,
}

/// Holdout scores per unit and for the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Forecast horizon.
    pub horizon: usize,
    /// Last training period.
    pub origin: NaiveDate,
    /// Per-unit scores in panel order.
    pub per_unit: Vec<UnitScore>,
    /// MAE of the summed network series.
    pub network_mae: f64,
    /// WMAPE of the summed network series.
    pub network_wmape: f64,
}

/// Score a forecast set against raw-scale holdout actuals.
pub fn evaluate_forecasts(forecasts: &ForecastSet, holdout: &HoldoutSlice) -> Result<EvalReport> {
    if forecasts.unit_ids != holdout.unit_ids {
        return Err(Error::Alignment(
            "forecast and holdout unit sets differ".into(),
        ));
    }
    if forecasts.horizon != holdout.horizon() {
        return Err(Error::Alignment(format!(
            "forecast horizon {} vs holdout length {}",
            forecasts.horizon,
            holdout.horizon()
        )));
    }
    if forecasts.dates != holdout.dates {
        return Err(Error::Alignment(
            "forecast dates do not match holdout dates".into(),
        ));
    }

    let mut per_unit = Vec::with_capacity(forecasts.unit_ids.len());
    for (i, unit_id) in forecasts.unit_ids.iter().enumerate() {
        let unit_mae = mae(&holdout.y[i], &forecasts.per_unit[i])?;
        let unit_wmape = match wmape(&holdout.y[i], &forecasts.per_unit[i]) {
            Ok(v) => Some(v),
            Err(Error::ZeroDenominator) => None,
            Err(e) => return Err(e),
        };
        per_unit.push(UnitScore {
            unit_id: unit_id.clone(),
            mae: unit_mae,
            wmape: unit_wmape,
        });
    }

    let h = forecasts.horizon;
    let network_actual: Vec<f64> = (0..h)
        .map(|s| holdout.y.iter().map(|u| u[s]).sum())
        .collect();
    let network_mae = mae(&network_actual, &forecasts.network)?;
    let network_wmape = wmape(&network_actual, &forecasts.network)?;

    Ok(EvalReport {
        horizon: h,
        origin: forecasts.origin,
        per_unit,
        network_mae,
        network_wmape,
    })
}

/// One unit's descriptive statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitDescription {
    /// Unit id.
    pub unit_id: String,
    /// Mean of the target counts over the calendar.
    pub census_mean: f64,
    /// Population-denominator SD of the target counts.
    pub census_sd: f64,
    /// Mean of the indicator counts.
    pub symptoms_mean: f64,
    /// Population-denominator SD of the indicator counts.
    pub symptoms_sd: f64,
    /// Mean daily attestation coverage over the weighted service-area
    /// population; `None` when coverage or population data are missing.
    pub employee_share_of_population: Option<f64>,
}

/// Descriptive statistics for every unit plus network totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDescription {
    /// Per-unit rows in panel order.
    pub per_unit: Vec<UnitDescription>,
    /// Statistics of the per-period network sums.
    pub network: UnitDescription,
    /// Which SD denominator the table uses ("population", i.e. n).
    pub sd_denominator: String,
}

fn mean_sd(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-unit means and SDs of both series, plus the attestation-coverage
/// share of the market-share-weighted service-area population.
pub fn describe_panel(panel: &PanelDataset, zipmap: &ZipMap) -> Result<PanelDescription> {
    panel.validate()?;
    let t = panel.n_periods();
    let mut per_unit = Vec::with_capacity(panel.n_units());
    for (i, unit) in panel.units.iter().enumerate() {
        let (census_mean, census_sd) = mean_sd(&panel.y[i]);
        let (symptoms_mean, symptoms_sd) = mean_sd(&panel.x[i]);
        let weighted_pop = zipmap.weighted_population(&unit.id);
        let share = unit
            .mean_daily_onsite
            .filter(|_| weighted_pop > 0.0)
            .map(|onsite| onsite / weighted_pop);
        per_unit.push(UnitDescription {
            unit_id: unit.id.clone(),
            census_mean,
            census_sd,
            symptoms_mean,
            symptoms_sd,
            employee_share_of_population: share,
        });
    }

    let network_y: Vec<f64> = (0..t).map(|s| panel.y.iter().map(|u| u[s]).sum()).collect();
    let network_x: Vec<f64> = (0..t).map(|s| panel.x.iter().map(|u| u[s]).sum()).collect();
    let (census_mean, census_sd) = mean_sd(&network_y);
    let (symptoms_mean, symptoms_sd) = mean_sd(&network_x);
    let total_pop: f64 = panel
        .units
        .iter()
        .map(|u| zipmap.weighted_population(&u.id))
        .sum();
    let total_onsite: Option<f64> = panel
        .units
        .iter()
        .map(|u| u.mean_daily_onsite)
        .sum::<Option<f64>>();
    let network_share = total_onsite
        .filter(|_| total_pop > 0.0)
        .map(|onsite| onsite / total_pop);

    Ok(PanelDescription {
        per_unit,
        sd_denominator: "population".into(),
        network: UnitDescription {
            unit_id: "network".into(),
            census_mean,
            census_sd,
            symptoms_mean,
            symptoms_sd,
            employee_share_of_population: network_share,
        },
    })
}

fn fmt_share(share: Option<f64>) -> String {
    match share {
        Some(s) => format!("{:.1}%", s * 100.0),
        None => "n/a".into(),
    }
}

fn fmt_wmape(wmape: Option<f64>) -> String {
    match wmape {
        Some(w) => format!("{:.1}%", w * 100.0),
        None => "n/a".into(),
    }
}

/// Aligned-column text table: one row per unit plus a network row, with
/// holdout scores appended when available.
pub fn render_table(description: &PanelDescription, eval: Option<&EvalReport>) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<12} {:>16} {:>16} {:>8} {:>14}\n",
        "unit", "census mean (SD)", "sympt mean (SD)", "share", "MAE (WMAPE)"
    ));
    let score_for = |unit_id: &str| -> String {
        match eval {
            None => String::new(),
            Some(report) => report
                .per_unit
                .iter()
                .find(|u| u.unit_id == unit_id)
                .map(|u| format!("{:.1} ({})", u.mae, fmt_wmape(u.wmape)))
                .unwrap_or_default(),
        }
    };
    for row in &description.per_unit {
        s.push_str(&format!(
            "{:<12} {:>16} {:>16} {:>8} {:>14}\n",
            row.unit_id,
            format!("{:.1} ({:.1})", row.census_mean, row.census_sd),
            format!("{:.1} ({:.1})", row.symptoms_mean, row.symptoms_sd),
            fmt_share(row.employee_share_of_population),
            score_for(&row.unit_id),
        ));
    }
    let net = &description.network;
    let net_score = match eval {
        None => String::new(),
        Some(report) => format!(
            "{:.1} ({:.1}%)",
            report.network_mae,
            report.network_wmape * 100.0
        ),
    };
    s.push_str(&format!(
        "{:<12} {:>16} {:>16} {:>8} {:>14}\n",
        "network",
        format!("{:.1} ({:.1})", net.census_mean, net.census_sd),
        format!("{:.1} ({:.1})", net.symptoms_mean, net.symptoms_sd),
        fmt_share(net.employee_share_of_population),
        net_score,
    ));
    s
}
