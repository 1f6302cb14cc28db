//! Smoothing and log transforms, and the train/holdout split.
//!
//! The pipeline smooths each series with a trailing moving average and then
//! takes natural logs with an offset. The moving average is causal on
//! purpose: a centered window would leak future observations into the
//! forecasting design.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Frequency, PanelDataset, UnitMeta};

/// Smoothing and log-transform settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    /// Trailing moving-average window length in periods.
    pub ma_window: usize,
    /// Offset added before taking logs; must be positive if the data
    /// contain zeros.
    pub log_offset: f64,
    /// Smooth the target series as well as the indicator. When false, the
    /// target is only logged (aligned to the same smoothed grid).
    pub smooth_target: bool,
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            ma_window: 7,
            log_offset: 1.0,
            smooth_target: true,
        }
    }
}

impl TransformSpec {
    /// Validate field-level invariants.
    pub fn validate(&self) -> Result<()> {
        if self.ma_window < 1 {
            return Err(Error::Config("ma_window must be >= 1".into()));
        }
        if !self.log_offset.is_finite() || self.log_offset < 0.0 {
            return Err(Error::Config("log_offset must be >= 0".into()));
        }
        Ok(())
    }
}

/// Panel on the smoothed-log scale, carrying the raw panel it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPanel {
    /// Raw panel the transform was applied to.
    pub base: PanelDataset,
    /// Unit descriptors (same order as `base`).
    pub units: Vec<UnitMeta>,
    /// Calendar of the T' transformed periods (each window's last period).
    pub calendar: Vec<NaiveDate>,
    /// N x T' transformed target series.
    pub y: Vec<Vec<f64>>,
    /// N x T' transformed indicator series.
    pub x: Vec<Vec<f64>>,
    /// Settings the transform was produced with.
    pub spec: TransformSpec,
    /// Periods consumed by the moving-average warm-up (ma_window - 1).
    pub t_offset: usize,
    /// Period length inherited from the base panel.
    pub frequency: Frequency,
}

impl TransformedPanel {
    /// Number of units N.
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    /// Number of transformed periods T'.
    pub fn n_periods(&self) -> usize {
        self.calendar.len()
    }
}

/// Raw-scale actuals for the final periods of a split, used for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSlice {
    /// Unit ids, in panel order.
    pub unit_ids: Vec<String>,
    /// Holdout dates.
    pub dates: Vec<NaiveDate>,
    /// N x h raw-scale target counts.
    pub y: Vec<Vec<f64>>,
}

impl HoldoutSlice {
    /// Holdout length h.
    pub fn horizon(&self) -> usize {
        self.dates.len()
    }
}

/// Trailing moving average: `out[j] = mean(series[j .. j + window))`,
/// length `series.len() - window + 1`.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 1 {
        return Err(Error::Config("window must be >= 1".into()));
    }
    if series.len() < window {
        return Err(Error::SeriesTooShort {
            needed: window,
            got: series.len(),
        });
    }
    let inv = 1.0 / window as f64;
    Ok(series
        .windows(window)
        .map(|w| w.iter().sum::<f64>() * inv)
        .collect())
}

/// Elementwise `ln(v + offset)`.
pub fn log_transform(series: &[f64], offset: f64) -> Result<Vec<f64>> {
    series
        .iter()
        .map(|&v| {
            if v + offset > 0.0 {
                Ok((v + offset).ln())
            } else {
                Err(Error::NonpositiveLog { value: v, offset })
            }
        })
        .collect()
}

/// Inverse of [`log_transform`]: elementwise `exp(u) - offset`.
pub fn inverse_log_transform(series: &[f64], offset: f64) -> Vec<f64> {
    series.iter().map(|&u| u.exp() - offset).collect()
}

/// Smooth and log every unit's series. The base panel is left untouched.
pub fn transform_panel(panel: &PanelDataset, spec: &TransformSpec) -> Result<TransformedPanel> {
    spec.validate()?;
    panel.validate()?;
    if panel.n_periods() < spec.ma_window {
        return Err(Error::SeriesTooShort {
            needed: spec.ma_window,
            got: panel.n_periods(),
        });
    }
    let t_offset = spec.ma_window - 1;
    let with_unit = |unit: &str, e: Error| -> Error {
        match e {
            Error::NonpositiveLog { value, offset } => Error::InvalidRecord(format!(
                "unit '{unit}': cannot take log of non-positive value {value} (offset {offset}); \
                 raise log_offset or exclude the unit"
            )),
            other => other,
        }
    };

    let mut ty = Vec::with_capacity(panel.n_units());
    let mut tx = Vec::with_capacity(panel.n_units());
    for (i, unit) in panel.units.iter().enumerate() {
        let xs = moving_average(&panel.x[i], spec.ma_window)?;
        let xs = log_transform(&xs, spec.log_offset).map_err(|e| with_unit(&unit.id, e))?;
        let ys = if spec.smooth_target {
            moving_average(&panel.y[i], spec.ma_window)?
        } else {
            panel.y[i][t_offset..].to_vec()
        };
        let ys = log_transform(&ys, spec.log_offset).map_err(|e| with_unit(&unit.id, e))?;
        tx.push(xs);
        ty.push(ys);
    }

    Ok(TransformedPanel {
        base: panel.clone(),
        units: panel.units.clone(),
        calendar: panel.calendar[t_offset..].to_vec(),
        y: ty,
        x: tx,
        spec: *spec,
        t_offset,
        frequency: panel.frequency,
    })
}

/// Minimum training length accepted by [`split_train_holdout`]: enough for a
/// lag-1 model to satisfy both the estimation and fixed-T moment conditions.
pub const MIN_TRAIN_LEN: usize = 10;

/// Split off the final `holdout_len` periods. The training part keeps the
/// transformed scale; the holdout is returned as raw-scale actuals, which is
/// the scale forecasts are scored on.
pub fn split_train_holdout(
    tpanel: &TransformedPanel,
    holdout_len: usize,
) -> Result<(TransformedPanel, HoldoutSlice)> {
    if holdout_len == 0 {
        return Err(Error::Config("holdout length must be >= 1".into()));
    }
    let t_prime = tpanel.n_periods();
    if t_prime < holdout_len + MIN_TRAIN_LEN {
        return Err(Error::InsufficientLength(format!(
            "{t_prime} transformed periods cannot supply a {holdout_len}-period holdout \
             plus at least {MIN_TRAIN_LEN} training periods"
        )));
    }
    let train_len = t_prime - holdout_len;
    let base_len = tpanel.t_offset + train_len;

    let train = TransformedPanel {
        base: PanelDataset {
            units: tpanel.base.units.clone(),
            calendar: tpanel.base.calendar[..base_len].to_vec(),
            y: tpanel
                .base
                .y
                .iter()
                .map(|s| s[..base_len].to_vec())
                .collect(),
            x: tpanel
                .base
                .x
                .iter()
                .map(|s| s[..base_len].to_vec())
                .collect(),
            frequency: tpanel.base.frequency,
        },
        units: tpanel.units.clone(),
        calendar: tpanel.calendar[..train_len].to_vec(),
        y: tpanel.y.iter().map(|s| s[..train_len].to_vec()).collect(),
        x: tpanel.x.iter().map(|s| s[..train_len].to_vec()).collect(),
        spec: tpanel.spec,
        t_offset: tpanel.t_offset,
        frequency: tpanel.frequency,
    };

    // Raw-scale actuals for the trailing periods; the transformed calendar's
    // index t maps to base index t + t_offset.
    let holdout = HoldoutSlice {
        unit_ids: tpanel.units.iter().map(|u| u.id.clone()).collect(),
        dates: tpanel.calendar[train_len..].to_vec(),
        y: tpanel
            .base
            .y
            .iter()
            .map(|s| s[base_len..].to_vec())
            .collect(),
    };
    Ok((train, holdout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::UnitMeta;
    use proptest::prelude::*;

    fn panel_of(y: Vec<Vec<f64>>, x: Vec<Vec<f64>>) -> PanelDataset {
        let t = y[0].len();
        let start = NaiveDate::from_ymd_opt(2020, 4, 2).unwrap();
        PanelDataset {
            units: (0..y.len())
                .map(|i| UnitMeta::bare(format!("H{}", i + 1)))
                .collect(),
            calendar: (0..t)
                .map(|k| start + chrono::Duration::days(k as i64))
                .collect(),
            y,
            x,
            frequency: Frequency::Daily,
        }
    }

    #[test]
    fn constant_series_average_is_constant() {
        let out = moving_average(&[5.0; 8], 7).unwrap();
        assert_eq!(out, vec![5.0, 5.0]);
    }

    #[test]
    fn window_one_is_identity() {
        let out = moving_average(&[0.0, 7.0, 14.0], 1).unwrap();
        assert_eq!(out, vec![0.0, 7.0, 14.0]);
    }

    #[test]
    fn ramp_matches_hand_summation() {
        // (1+2+...+7)/7 = 4 and (2+...+8)/7 = 5.
        let series: Vec<f64> = (1..=8).map(f64::from).collect();
        let out = moving_average(&series, 7).unwrap();
        assert!((out[0] - 4.0).abs() < 1e-12);
        assert!((out[1] - 5.0).abs() < 1e-12);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn too_short_series_is_rejected() {
        assert!(matches!(
            moving_average(&[1.0, 2.0], 3).unwrap_err(),
            Error::SeriesTooShort { needed: 3, got: 2 }
        ));
    }

    #[test]
    fn log_of_zero_with_unit_offset() {
        assert_eq!(log_transform(&[0.0], 1.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn log_of_e_minus_one() {
        let out = log_transform(&[std::f64::consts::E - 1.0], 1.0).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_rejects_nonpositive_argument() {
        assert!(log_transform(&[0.0], 0.0).is_err());
    }

    #[test]
    fn constant_panel_transforms_to_log_constants() {
        let panel = panel_of(vec![vec![10.0; 10]], vec![vec![2.0; 10]]);
        let spec = TransformSpec::default();
        let tp = transform_panel(&panel, &spec).unwrap();
        assert_eq!(tp.n_periods(), 4);
        assert_eq!(tp.t_offset, 6);
        for t in 0..tp.n_periods() {
            assert!((tp.y[0][t] - 11.0f64.ln()).abs() < 1e-12);
            assert!((tp.x[0][t] - 3.0f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn window_one_offset_zero_is_pure_log() {
        let panel = panel_of(vec![vec![1.0, 2.0, 4.0]], vec![vec![8.0, 16.0, 32.0]]);
        let spec = TransformSpec {
            ma_window: 1,
            log_offset: 0.0,
            smooth_target: true,
        };
        let tp = transform_panel(&panel, &spec).unwrap();
        assert_eq!(tp.y[0], vec![0.0, 2.0f64.ln(), 4.0f64.ln()]);
        assert_eq!(tp.x[0], vec![8.0f64.ln(), 16.0f64.ln(), 32.0f64.ln()]);
    }

    #[test]
    fn transform_composes_the_scalar_ops() {
        // Compositional oracle: column-wise MA then log must reproduce the
        // panel transform exactly.
        let y: Vec<f64> = (0..20)
            .map(|k| (k as f64 * 1.3).sin().abs() * 9.0)
            .collect();
        let x: Vec<f64> = (0..20)
            .map(|k| (k as f64 * 0.7).cos().abs() * 4.0)
            .collect();
        let panel = panel_of(vec![y.clone()], vec![x.clone()]);
        let spec = TransformSpec::default();
        let tp = transform_panel(&panel, &spec).unwrap();
        let oracle_y = log_transform(&moving_average(&y, 7).unwrap(), 1.0).unwrap();
        let oracle_x = log_transform(&moving_average(&x, 7).unwrap(), 1.0).unwrap();
        assert_eq!(tp.y[0], oracle_y);
        assert_eq!(tp.x[0], oracle_x);
    }

    #[test]
    fn transform_leaves_base_unmodified() {
        let panel = panel_of(vec![vec![3.0; 12]], vec![vec![1.0; 12]]);
        let copy = panel.clone();
        let _ = transform_panel(&panel, &TransformSpec::default()).unwrap();
        assert_eq!(panel, copy);
    }

    #[test]
    fn unsmoothed_target_aligns_with_smoothed_indicator() {
        let y: Vec<f64> = (1..=12).map(f64::from).collect();
        let panel = panel_of(vec![y], vec![vec![2.0; 12]]);
        let spec = TransformSpec {
            smooth_target: false,
            ..TransformSpec::default()
        };
        let tp = transform_panel(&panel, &spec).unwrap();
        assert_eq!(tp.y[0].len(), tp.x[0].len());
        // y kept raw: first transformed value is ln(1 + y[6]) = ln(8).
        assert!((tp.y[0][0] - 8.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn split_lengths_and_partition() {
        let t = 40;
        let y: Vec<f64> = (0..t).map(|k| 5.0 + (k as f64 * 0.2).sin()).collect();
        let panel = panel_of(vec![y.clone()], vec![y]);
        let tp = transform_panel(&panel, &TransformSpec::default()).unwrap();
        let (train, holdout) = split_train_holdout(&tp, 7).unwrap();
        assert_eq!(train.n_periods(), tp.n_periods() - 7);
        assert_eq!(holdout.horizon(), 7);
        // Partition oracle: train calendar + holdout dates = full calendar.
        let mut joined = train.calendar.clone();
        joined.extend(&holdout.dates);
        assert_eq!(joined, tp.calendar);
        // Holdout carries raw-scale values.
        let base_t = panel.n_periods();
        assert_eq!(holdout.y[0], panel.y[0][base_t - 7..]);
    }

    #[test]
    fn zero_holdout_is_rejected() {
        let panel = panel_of(vec![vec![2.0; 30]], vec![vec![1.0; 30]]);
        let tp = transform_panel(&panel, &TransformSpec::default()).unwrap();
        assert!(matches!(
            split_train_holdout(&tp, 0).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn oversized_holdout_is_rejected() {
        let panel = panel_of(vec![vec![2.0; 20]], vec![vec![1.0; 20]]);
        let tp = transform_panel(&panel, &TransformSpec::default()).unwrap();
        assert!(matches!(
            split_train_holdout(&tp, 12).unwrap_err(),
            Error::InsufficientLength(_)
        ));
    }

    proptest! {
        #[test]
        fn moving_average_within_bounds(
            series in proptest::collection::vec(0.0..1e6f64, 1..60),
            window in 1usize..10,
        ) {
            prop_assume!(series.len() >= window);
            let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in moving_average(&series, window).unwrap() {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }

        #[test]
        fn moving_average_preserves_monotonicity(
            increments in proptest::collection::vec(0.0..100.0f64, 2..40),
            window in 1usize..8,
        ) {
            prop_assume!(increments.len() >= window);
            let mut series = Vec::with_capacity(increments.len());
            let mut acc = 0.0;
            for inc in &increments {
                acc += inc;
                series.push(acc);
            }
            let out = moving_average(&series, window).unwrap();
            for w in out.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9);
            }
        }

        #[test]
        fn log_round_trip(series in proptest::collection::vec(0.0..1e9f64, 1..50)) {
            let logged = log_transform(&series, 1.0).unwrap();
            let back = inverse_log_transform(&logged, 1.0);
            for (a, b) in series.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn log_preserves_order(series in proptest::collection::vec(0.0..1e6f64, 2..50)) {
            let logged = log_transform(&series, 1.0).unwrap();
            let mut order_in: Vec<usize> = (0..series.len()).collect();
            let mut order_out = order_in.clone();
            order_in.sort_by(|&a, &b| series[a].partial_cmp(&series[b]).unwrap());
            order_out.sort_by(|&a, &b| logged[a].partial_cmp(&logged[b]).unwrap());
            prop_assert_eq!(order_in, order_out);
        }
    }
}
