//! Panel Granger non-causality test for heterogeneous units.
//!
//! The null hypothesis is that the indicator's lags carry no predictive
//! information for any unit (beta_i = 0 for all i). Per-unit Wald statistics
//! are averaged into W-bar and standardized two ways: the large-T asymptotic
//! Z and a fixed-T variant that corrects the mean and variance for the
//! effective sample length. The fixed-T statistic is the headline number
//! here because small panels over-reject under the asymptotic one.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::ingest::{Frequency, PanelDataset};
use crate::linmod::{fit_panel, ModelSpec, PanelFit};
use crate::preprocess::{transform_panel, TransformSpec};

/// Default significance threshold.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Outcome of the panel non-causality test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerResult {
    /// Lag order K.
    pub lag_order: usize,
    /// Number of units N.
    pub n_units: usize,
    /// Common effective sample length.
    pub t_eff: usize,
    /// Mean of the per-unit Wald statistics.
    pub w_bar: f64,
    /// Large-T standardized statistic.
    pub z_asymptotic: f64,
    /// Fixed-T standardized statistic.
    pub z_fixed_t: f64,
    /// p-value of the asymptotic statistic against the standard normal.
    pub p_asymptotic: f64,
    /// p-value of the fixed-T statistic against the standard normal.
    pub p_fixed_t: f64,
    /// Per-unit Wald statistics.
    pub per_unit_wald: Vec<(String, f64)>,
    /// Significance threshold the decision uses.
    pub alpha: f64,
    /// Reject the non-causality null (based on the fixed-T p-value).
    pub reject: bool,
}

/// Standardize a mean Wald statistic.
///
/// Returns `(z_asymptotic, z_fixed_t)`:
/// `z_asy = sqrt(N / 2K) (w_bar - K)` and
/// `z_fix = sqrt(N/(2K) * (T-3K-5)/(T-3K-3)) * ((T-3K-3)/(T-3K-1) * w_bar - K)`
/// with T the effective length.
pub fn dh_standardize(w_bar: f64, n_units: usize, t_eff: usize, lag_order: usize) -> (f64, f64) {
    let n = n_units as f64;
    let k = lag_order as f64;
    let t = t_eff as f64;
    let z_asy = (n / (2.0 * k)).sqrt() * (w_bar - k);
    let z_fix = (n / (2.0 * k) * (t - 3.0 * k - 5.0) / (t - 3.0 * k - 3.0)).sqrt()
        * ((t - 3.0 * k - 3.0) / (t - 3.0 * k - 1.0) * w_bar - k);
    (z_asy, z_fix)
}

fn normal_p_value(z: f64, two_tailed: bool) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    if two_tailed {
        2.0 * (1.0 - normal.cdf(z.abs()))
    } else {
        1.0 - normal.cdf(z)
    }
}

/// Run the test on an already-fitted panel at [`DEFAULT_ALPHA`].
pub fn dh_test(fits: &PanelFit) -> Result<GrangerResult> {
    dh_test_with_alpha(fits, DEFAULT_ALPHA)
}

/// Run the test on an already-fitted panel at a caller-chosen threshold.
pub fn dh_test_with_alpha(fits: &PanelFit, alpha: f64) -> Result<GrangerResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config("alpha must lie in (0, 1)".into()));
    }
    let n_units = fits.fits.len();
    if n_units == 0 {
        return Err(Error::UnbalancedPanel("no fitted units".into()));
    }
    let t_eff = fits.fits[0].t_eff;
    if fits.fits.iter().any(|f| f.t_eff != t_eff) {
        let lengths: Vec<String> = fits
            .fits
            .iter()
            .map(|f| format!("{}={}", f.unit_id, f.t_eff))
            .collect();
        return Err(Error::UnbalancedPanel(lengths.join(", ")));
    }
    let k = fits.spec.lag_order;
    if t_eff <= 5 + 3 * k {
        return Err(Error::MomentCondition {
            needed: 5 + 3 * k,
            t_eff,
            lag_order: k,
        });
    }

    let per_unit_wald: Vec<(String, f64)> = fits
        .fits
        .iter()
        .map(|f| (f.unit_id.clone(), f.wald))
        .collect();
    let w_bar = per_unit_wald.iter().map(|(_, w)| w).sum::<f64>() / n_units as f64;
    let (z_asymptotic, z_fixed_t) = dh_standardize(w_bar, n_units, t_eff, k);
    let p_asymptotic = normal_p_value(z_asymptotic, fits.spec.two_tailed);
    let p_fixed_t = normal_p_value(z_fixed_t, fits.spec.two_tailed);

    Ok(GrangerResult {
        lag_order: k,
        n_units,
        t_eff,
        w_bar,
        z_asymptotic,
        z_fixed_t,
        p_asymptotic,
        p_fixed_t,
        per_unit_wald,
        alpha,
        reject: p_fixed_t <= alpha,
    })
}

/// One-call path for the weekly secondary analysis: log-transform a weekly
/// count panel (no extra smoothing; the weekly sums already smooth) and run
/// the test.
pub fn dh_test_weekly(panel: &PanelDataset, spec: &ModelSpec) -> Result<GrangerResult> {
    if panel.frequency != Frequency::Weekly {
        return Err(Error::Config(
            "dh_test_weekly requires a weekly panel; aggregate first".into(),
        ));
    }
    let tspec = TransformSpec {
        ma_window: 1,
        log_offset: 1.0,
        smooth_target: true,
    };
    let tpanel = transform_panel(panel, &tspec)?;
    let fits = fit_panel(&tpanel, spec)?;
    dh_test(&fits)
}

impl GrangerResult {
    /// One-page human-readable report.
    pub fn render_report(&self) -> String {
        let mut s = String::new();
        s.push_str("Panel Granger non-causality test (heterogeneous units)\n");
        s.push_str("=======================================================\n");
        s.push_str(&format!(
            "units N = {}, effective length T = {}, lag order K = {}\n\n",
            self.n_units, self.t_eff, self.lag_order
        ));
        s.push_str(&format!(
            "mean Wald statistic      W-bar = {:.6}\n",
            self.w_bar
        ));
        s.push_str(&format!(
            "asymptotic statistic     Z     = {:+.6}   p = {:.6}\n",
            self.z_asymptotic, self.p_asymptotic
        ));
        s.push_str(&format!(
            "fixed-T statistic        Z~    = {:+.6}   p = {:.6}\n\n",
            self.z_fixed_t, self.p_fixed_t
        ));
        s.push_str(&format!(
            "decision at alpha = {}: {} the null that the indicator's lags\n",
            self.alpha,
            if self.reject {
                "REJECT"
            } else {
                "do not reject"
            }
        ));
        s.push_str("carry no predictive information for any unit (fixed-T p-value)\n\n");
        s.push_str("per-unit Wald statistics\n");
        s.push_str("------------------------\n");
        for (unit, wald) in &self.per_unit_wald {
            s.push_str(&format!("  {unit:<12} {wald:>12.6}\n"));
        }
        s.push_str(
            "\nnote: p-values assume cross-sectional independence across units;\n\
             units that co-move regionally can make the test over-reject.\n",
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmod::UnitFit;
    use nalgebra::DMatrix;

    fn fit_with_wald(unit: &str, wald: f64, t_eff: usize, k: usize) -> UnitFit {
        UnitFit {
            unit_id: unit.into(),
            alpha: 0.0,
            gamma: vec![0.0; k],
            beta: vec![0.0; k],
            cov: DMatrix::identity(2 * k + 1, 2 * k + 1),
            rss_unrestricted: 1.0,
            rss_restricted: 1.0,
            sigma2: 1.0,
            t_eff,
            wald,
        }
    }

    fn panel_of_walds(walds: &[f64], t_eff: usize, k: usize) -> PanelFit {
        PanelFit {
            spec: ModelSpec::new(k),
            fits: walds
                .iter()
                .enumerate()
                .map(|(i, &w)| fit_with_wald(&format!("H{}", i + 1), w, t_eff, k))
                .collect(),
            bic_total: 0.0,
            loglik_total: 0.0,
            n_obs_total: walds.len() * t_eff,
        }
    }

    #[test]
    fn centered_w_bar_gives_zero_asymptotic_z() {
        let k = 2;
        let fits = panel_of_walds(&[2.0; 10], 200, k);
        let result = dh_test(&fits).unwrap();
        assert!(result.z_asymptotic.abs() < 1e-12);
        assert!((result.p_asymptotic - 1.0).abs() < 1e-12);
    }

    #[test]
    fn statistics_increase_with_w_bar() {
        let mut prev: Option<(f64, f64)> = None;
        for w in [1.0, 2.0, 3.0, 5.0, 9.0] {
            let fits = panel_of_walds(&[w; 10], 200, 2);
            let r = dh_test(&fits).unwrap();
            if let Some((za, zf)) = prev {
                assert!(r.z_asymptotic > za);
                assert!(r.z_fixed_t > zf);
            }
            prev = Some((r.z_asymptotic, r.z_fixed_t));
        }
    }

    #[test]
    fn unit_order_does_not_matter() {
        let walds = [0.5, 1.5, 2.5, 3.5, 4.5];
        let a = dh_test(&panel_of_walds(&walds, 100, 1)).unwrap();
        let mut rev = walds;
        rev.reverse();
        let b = dh_test(&panel_of_walds(&rev, 100, 1)).unwrap();
        assert_eq!(a.w_bar, b.w_bar);
        assert_eq!(a.z_asymptotic, b.z_asymptotic);
        assert_eq!(a.z_fixed_t, b.z_fixed_t);
        assert_eq!(a.p_fixed_t, b.p_fixed_t);
    }

    #[test]
    fn fixed_t_converges_to_asymptotic() {
        let (za, zf) = dh_standardize(2.7, 10, 100_000, 2);
        assert!((za - zf).abs() < 0.01, "za {za} zf {zf}");
    }

    #[test]
    fn unbalanced_panel_is_rejected() {
        let mut fits = panel_of_walds(&[1.0, 2.0], 100, 1);
        fits.fits[1].t_eff = 90;
        assert!(matches!(
            dh_test(&fits).unwrap_err(),
            Error::UnbalancedPanel(_)
        ));
    }

    #[test]
    fn moment_condition_enforced() {
        // K = 2 needs T_eff > 11.
        let fits = panel_of_walds(&[1.0; 4], 11, 2);
        assert!(matches!(
            dh_test(&fits).unwrap_err(),
            Error::MomentCondition { needed: 11, .. }
        ));
    }

    #[test]
    fn weekly_requires_weekly_frequency() {
        use crate::ingest::{Frequency, UnitMeta};
        let start = chrono::NaiveDate::from_ymd_opt(2020, 4, 6).unwrap();
        let panel = PanelDataset {
            units: vec![UnitMeta::bare("H1")],
            calendar: (0..30).map(|k| start + chrono::Duration::days(k)).collect(),
            y: vec![vec![1.0; 30]],
            x: vec![vec![1.0; 30]],
            frequency: Frequency::Daily,
        };
        assert!(matches!(
            dh_test_weekly(&panel, &ModelSpec::new(1)).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn weekly_moment_condition_applies() {
        use crate::ingest::{Frequency, UnitMeta};
        // 10 weekly periods, K = 2: T_eff = 8 <= 11.
        let start = chrono::NaiveDate::from_ymd_opt(2020, 4, 6).unwrap();
        let t = 10;
        let panel = PanelDataset {
            units: vec![UnitMeta::bare("H1"), UnitMeta::bare("H2")],
            calendar: (0..t)
                .map(|k| start + chrono::Duration::days(7 * k))
                .collect(),
            y: vec![
                (0..t)
                    .map(|k| (k as f64 * 0.73).sin().abs() * 3.0 + 1.0)
                    .collect(),
                (0..t)
                    .map(|k| (k as f64 * 1.17).sin().abs() * 4.0 + 2.0)
                    .collect(),
            ],
            x: vec![
                (0..t)
                    .map(|k| (k as f64 * 1.31).cos().abs() * 2.0)
                    .collect(),
                (0..t)
                    .map(|k| (k as f64 * 0.59).cos().abs() * 3.0)
                    .collect(),
            ],
            frequency: Frequency::Weekly,
        };
        let err = dh_test_weekly(&panel, &ModelSpec::new(2)).unwrap_err();
        assert!(
            matches!(
                err,
                Error::MomentCondition { .. } | Error::SeriesTooShort { .. }
            ),
            "got {err:?}"
        );
    }

    #[test]
    fn report_contains_headline_numbers() {
        let fits = panel_of_walds(&[4.0; 10], 200, 2);
        let r = dh_test(&fits).unwrap();
        let report = r.render_report();
        assert!(report.contains("W-bar"));
        assert!(report.contains("fixed-T"));
        assert!(report.contains("H1"));
        assert!(report.contains("cross-sectional independence"));
    }
}
