//! Per-unit lagged least squares with heterogeneous coefficients.
//!
//! Each unit is regressed on its own lags and the indicator's lags with a
//! common lag order K but unit-specific coefficients. The solver is a thin
//! (Householder) QR; the normal equations are never formed or inverted
//! explicitly. Restricted refits with the indicator block removed supply the
//! Wald statistic for the per-unit non-causality null.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::preprocess::TransformedPanel;

/// Estimation settings shared by all units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Lag order K, applied to both the target's own lags and the
    /// indicator's lags.
    pub lag_order: usize,
    /// Include a per-unit intercept.
    pub include_intercept: bool,
    /// Confidence level for reported intervals, in (0, 1).
    pub ci_level: f64,
    /// Two-tailed tests and intervals.
    pub two_tailed: bool,
}

impl ModelSpec {
    /// Spec with lag order `lag_order` and conventional defaults
    /// (intercept, 95% two-tailed intervals).
    pub fn new(lag_order: usize) -> Self {
        ModelSpec {
            lag_order,
            include_intercept: true,
            ci_level: 0.95,
            two_tailed: true,
        }
    }

    /// Number of coefficients per unit.
    pub fn n_params(&self) -> usize {
        2 * self.lag_order + usize::from(self.include_intercept)
    }

    /// Validate field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.lag_order < 1 {
            return Err(Error::Config("lag order must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.ci_level) || self.ci_level <= 0.0 {
            return Err(Error::Config("ci_level must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One unit's fitted lagged regression.
#[derive(Debug, Clone)]
pub struct UnitFit {
    /// Unit identifier.
    pub unit_id: String,
    /// Intercept estimate (0 when the model has no intercept).
    pub alpha: f64,
    /// Own-lag coefficients, lags 1..=K.
    pub gamma: Vec<f64>,
    /// Indicator-lag coefficients, lags 1..=K.
    pub beta: Vec<f64>,
    /// Coefficient covariance, p x p in design-column order.
    pub cov: DMatrix<f64>,
    /// Residual sum of squares of the unrestricted fit.
    pub rss_unrestricted: f64,
    /// Residual sum of squares with the indicator block removed.
    pub rss_restricted: f64,
    /// Residual variance estimate rss / (T_eff - p).
    pub sigma2: f64,
    /// Rows in the estimation sample.
    pub t_eff: usize,
    /// Wald statistic for the joint nullity of the indicator lags.
    pub wald: f64,
}

impl UnitFit {
    /// Coefficients in design order: intercept (if any), own lags, indicator lags.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(1 + self.gamma.len() + self.beta.len());
        if self.cov.nrows() == 1 + 2 * self.gamma.len() {
            out.push(self.alpha);
        }
        out.extend_from_slice(&self.gamma);
        out.extend_from_slice(&self.beta);
        out
    }

    /// Design-column index of the indicator coefficient at `lag` (1-based).
    pub fn beta_index(&self, lag: usize) -> Option<usize> {
        let k = self.beta.len();
        if lag == 0 || lag > k {
            return None;
        }
        let intercept = usize::from(self.cov.nrows() == 1 + 2 * k);
        Some(intercept + k + lag - 1)
    }
}

/// All units' fits under a common [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct PanelFit {
    /// Settings the fits were produced with.
    pub spec: ModelSpec,
    /// One fit per unit, in panel order.
    pub fits: Vec<UnitFit>,
    /// Pooled Gaussian BIC (lower is better).
    pub bic_total: f64,
    /// Pooled Gaussian profile log-likelihood.
    pub loglik_total: f64,
    /// Total estimation rows across units.
    pub n_obs_total: usize,
}

/// Plain least-squares output.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Coefficients minimizing the residual norm.
    pub coeffs: DVector<f64>,
    /// sigma2 * (X'X)^-1, from the R factor of the QR decomposition.
    pub cov: DMatrix<f64>,
    /// Residual sum of squares.
    pub rss: f64,
    /// rss / (rows - cols).
    pub sigma2: f64,
}

/// Response vector and lag-design matrix for one unit.
///
/// Row r of the design is `[1, y[t-1..t-K], x[t-1..t-K]]` for response
/// `y[t]`, t = K..T'-1, so T_eff = T' - K.
pub fn build_lag_matrix(
    y: &[f64],
    x: &[f64],
    lag_order: usize,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    build_lag_matrix_aligned(y, x, lag_order, 0, true)
}

/// As [`build_lag_matrix`] but dropping the first `skip` response rows, so
/// models of different lag orders can share a common estimation sample.
pub(crate) fn build_lag_matrix_aligned(
    y: &[f64],
    x: &[f64],
    lag_order: usize,
    skip: usize,
    include_intercept: bool,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if lag_order < 1 {
        return Err(Error::Config("lag order must be >= 1".into()));
    }
    if y.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: x.len(),
        });
    }
    let t_prime = y.len();
    let needed = 3 * lag_order + 2 + skip;
    if t_prime < needed {
        return Err(Error::SeriesTooShort {
            needed,
            got: t_prime,
        });
    }
    let t_eff = t_prime - lag_order - skip;
    let p = 2 * lag_order + usize::from(include_intercept);

    let mut response = DVector::zeros(t_eff);
    let mut design = DMatrix::zeros(t_eff, p);
    for r in 0..t_eff {
        let t = lag_order + skip + r;
        response[r] = y[t];
        let mut c = 0;
        if include_intercept {
            design[(r, c)] = 1.0;
            c += 1;
        }
        for k in 1..=lag_order {
            design[(r, c)] = y[t - k];
            c += 1;
        }
        for k in 1..=lag_order {
            design[(r, c)] = x[t - k];
            c += 1;
        }
    }
    Ok((response, design))
}

/// Least squares via thin QR.
///
/// Coefficients solve `R c = Q' y`; the covariance uses
/// `(X'X)^-1 = R^-1 R^-T`. A vanishing diagonal element of R flags the first
/// design column linearly dependent on its predecessors.
pub fn ols(response: &DVector<f64>, design: &DMatrix<f64>) -> Result<OlsFit> {
    let rows = design.nrows();
    let cols = design.ncols();
    if response.len() != rows {
        return Err(Error::LengthMismatch {
            left: response.len(),
            right: rows,
        });
    }
    if rows < cols + 1 {
        return Err(Error::SeriesTooShort {
            needed: cols + 1,
            got: rows,
        });
    }

    let qr = design.clone().qr();
    let r = qr.r();
    let max_diag = (0..cols).map(|j| r[(j, j)].abs()).fold(0.0f64, f64::max);
    let tol = f64::EPSILON * rows.max(cols) as f64 * max_diag.max(f64::MIN_POSITIVE);
    if let Some(col) = (0..cols).find(|&j| r[(j, j)].abs() <= tol) {
        return Err(Error::RankDeficient {
            column: col,
            hint: None,
        });
    }

    let q = qr.q();
    let qty = q.transpose() * response;
    let coeffs = r.solve_upper_triangular(&qty).ok_or(Error::RankDeficient {
        column: 0,
        hint: None,
    })?;

    let residuals = response - design * &coeffs;
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let sigma2 = rss / (rows - cols) as f64;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(cols, cols))
        .ok_or(Error::RankDeficient {
            column: 0,
            hint: None,
        })?;
    let cov = &r_inv * r_inv.transpose() * sigma2;

    Ok(OlsFit {
        coeffs,
        cov,
        rss,
        sigma2,
    })
}

/// Fit one unit: unrestricted lagged regression plus the restricted refit
/// with the indicator block removed, and the Wald statistic
/// `(rss_r - rss_u) / (rss_u / (T_eff - p))`.
pub fn fit_unit(unit_id: &str, y: &[f64], x: &[f64], spec: &ModelSpec) -> Result<UnitFit> {
    spec.validate()?;
    let k = spec.lag_order;
    let (response, design) = build_lag_matrix_aligned(y, x, k, 0, spec.include_intercept)?;
    let t_eff = response.len();
    let p = design.ncols();

    let with_unit = |e: Error| match e {
        Error::RankDeficient { column, .. } => Error::RankDeficient {
            column,
            hint: Some(format!(
                "unit '{unit_id}'; a constant or all-zero series produces collinear lags - \
                 raise log_offset or exclude the unit"
            )),
        },
        other => other,
    };

    let unrestricted = ols(&response, &design).map_err(with_unit)?;

    // Restricted model: intercept + own lags only.
    let restricted_cols = p - k;
    let restricted_design = design.columns(0, restricted_cols).into_owned();
    let restricted = ols(&response, &restricted_design).map_err(with_unit)?;

    let rss_u = unrestricted.rss;
    let rss_r = restricted.rss;
    let dof = (t_eff - p) as f64;
    let wald = if rss_u > 0.0 {
        ((rss_r - rss_u) / (rss_u / dof)).max(0.0)
    } else if rss_r > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };

    let intercept = usize::from(spec.include_intercept);
    let coeffs = &unrestricted.coeffs;
    Ok(UnitFit {
        unit_id: unit_id.to_string(),
        alpha: if spec.include_intercept {
            coeffs[0]
        } else {
            0.0
        },
        gamma: (0..k).map(|j| coeffs[intercept + j]).collect(),
        beta: (0..k).map(|j| coeffs[intercept + k + j]).collect(),
        cov: unrestricted.cov,
        rss_unrestricted: rss_u,
        rss_restricted: rss_r,
        sigma2: unrestricted.sigma2,
        t_eff,
        wald,
    })
}

/// Fit every unit of a transformed panel under a common spec.
pub fn fit_panel(tpanel: &TransformedPanel, spec: &ModelSpec) -> Result<PanelFit> {
    let ids: Vec<&str> = tpanel.units.iter().map(|u| u.id.as_str()).collect();
    fit_named_arrays(&ids, &tpanel.y, &tpanel.x, spec)
}

/// Fit parallel arrays of already-transformed series, naming units U1, U2, ...
/// Used by Monte Carlo experiments that bypass the panel plumbing.
pub fn fit_arrays(y: &[Vec<f64>], x: &[Vec<f64>], spec: &ModelSpec) -> Result<PanelFit> {
    let ids: Vec<String> = (1..=y.len()).map(|i| format!("U{i}")).collect();
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    fit_named_arrays(&id_refs, y, x, spec)
}

fn fit_named_arrays(
    ids: &[&str],
    y: &[Vec<f64>],
    x: &[Vec<f64>],
    spec: &ModelSpec,
) -> Result<PanelFit> {
    if ids.len() != y.len() || y.len() != x.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: x.len(),
        });
    }
    let mut fits = Vec::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        fits.push(fit_unit(id, &y[i], &x[i], spec)?);
    }
    let n_obs_total: usize = fits.iter().map(|f| f.t_eff).sum();
    let loglik_total: f64 = fits.iter().map(gaussian_profile_loglik).sum();
    let mut panel_fit = PanelFit {
        spec: *spec,
        fits,
        bic_total: 0.0,
        loglik_total,
        n_obs_total,
    };
    panel_fit.bic_total = bic(&panel_fit);
    Ok(panel_fit)
}

fn gaussian_profile_loglik(fit: &UnitFit) -> f64 {
    let t = fit.t_eff as f64;
    -0.5 * t * ((2.0 * std::f64::consts::PI * fit.rss_unrestricted / t).ln() + 1.0)
}

/// Two-tailed t confidence interval for one coefficient (design-column
/// index: intercept, own lags, indicator lags).
pub fn confidence_interval(fit: &UnitFit, coeff_index: usize, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config("confidence level must lie in (0, 1)".into()));
    }
    let coeffs = fit.coefficients();
    if coeff_index >= coeffs.len() {
        return Err(Error::IndexOutOfRange {
            index: coeff_index,
            len: coeffs.len(),
        });
    }
    let estimate = coeffs[coeff_index];
    let se = fit.cov[(coeff_index, coeff_index)].max(0.0).sqrt();
    if se == 0.0 {
        return Ok((estimate, estimate));
    }
    let dof = (fit.t_eff - coeffs.len()) as f64;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Config(format!("invalid t distribution: {e}")))?;
    let q = t.inverse_cdf(1.0 - (1.0 - level) / 2.0);
    Ok((estimate - q * se, estimate + q * se))
}

/// One coefficient with its confidence bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientInterval {
    /// Point estimate.
    pub estimate: f64,
    /// Lower bound.
    pub lo: f64,
    /// Upper bound.
    pub hi: f64,
}

/// Serializable view of one unit's fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitFitReport {
    /// Unit id.
    pub unit_id: String,
    /// Intercept with bounds.
    pub alpha: CoefficientInterval,
    /// Own-lag coefficients with bounds, lags 1..=K.
    pub gamma: Vec<CoefficientInterval>,
    /// Indicator-lag coefficients with bounds, lags 1..=K.
    pub beta: Vec<CoefficientInterval>,
    /// Wald statistic for the indicator block.
    pub wald: f64,
    /// Unrestricted residual sum of squares.
    pub rss_unrestricted: f64,
    /// Restricted residual sum of squares.
    pub rss_restricted: f64,
    /// Residual variance estimate.
    pub sigma2: f64,
    /// Estimation rows.
    pub t_eff: usize,
}

/// Serializable view of a whole panel fit, including the lag sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Lag order of the fits.
    pub lag_order: usize,
    /// Confidence level of the intervals.
    pub ci_level: f64,
    /// Units fitted.
    pub n_units: usize,
    /// Total estimation rows.
    pub n_obs_total: usize,
    /// Pooled BIC of the reported fit.
    pub bic_total: f64,
    /// Pooled Gaussian profile log-likelihood.
    pub loglik_total: f64,
    /// (lag order, BIC) pairs from the selection sweep, or just the fitted
    /// point when the order was fixed by the caller.
    pub bic_curve: Vec<(usize, f64)>,
    /// Per-unit coefficient tables.
    pub units: Vec<UnitFitReport>,
}

impl FitReport {
    /// Build the report, computing intervals at the spec's level.
    pub fn from_panel_fit(pf: &PanelFit, bic_curve: Option<&[(usize, f64)]>) -> Result<Self> {
        let level = pf.spec.ci_level;
        let k = pf.spec.lag_order;
        let mut units = Vec::with_capacity(pf.fits.len());
        for fit in &pf.fits {
            let interval = |idx: usize| -> Result<CoefficientInterval> {
                let (lo, hi) = confidence_interval(fit, idx, level)?;
                Ok(CoefficientInterval {
                    estimate: fit.coefficients()[idx],
                    lo,
                    hi,
                })
            };
            let intercept = usize::from(pf.spec.include_intercept);
            let alpha = if pf.spec.include_intercept {
                interval(0)?
            } else {
                CoefficientInterval {
                    estimate: 0.0,
                    lo: 0.0,
                    hi: 0.0,
                }
            };
            let gamma = (0..k)
                .map(|j| interval(intercept + j))
                .collect::<Result<Vec<_>>>()?;
            let beta = (0..k)
                .map(|j| interval(intercept + k + j))
                .collect::<Result<Vec<_>>>()?;
            units.push(UnitFitReport {
                unit_id: fit.unit_id.clone(),
                alpha,
                gamma,
                beta,
                wald: fit.wald,
                rss_unrestricted: fit.rss_unrestricted,
                rss_restricted: fit.rss_restricted,
                sigma2: fit.sigma2,
                t_eff: fit.t_eff,
            });
        }
        Ok(FitReport {
            lag_order: k,
            ci_level: level,
            n_units: pf.fits.len(),
            n_obs_total: pf.n_obs_total,
            bic_total: pf.bic_total,
            loglik_total: pf.loglik_total,
            bic_curve: bic_curve
                .map(<[(usize, f64)]>::to_vec)
                .unwrap_or_else(|| vec![(k, pf.bic_total)]),
            units,
        })
    }
}

/// Pooled Gaussian BIC: `sum_i T_eff,i ln(rss_i / T_eff,i) + p_total ln(n_obs_total)`.
pub fn bic(panel_fit: &PanelFit) -> f64 {
    let p_total = (panel_fit.fits.len() * panel_fit.spec.n_params()) as f64;
    let fit_term: f64 = panel_fit
        .fits
        .iter()
        .map(|f| {
            let t = f.t_eff as f64;
            t * (f.rss_unrestricted / t).ln()
        })
        .sum();
    fit_term + p_total * (panel_fit.n_obs_total as f64).ln()
}

/// Sweep lag orders 1..=k_max and pick the BIC minimizer.
///
/// Every candidate is scored on the common response rows implied by `k_max`
/// (the first `k_max - K` rows of each shorter model are dropped), so the
/// BIC values are comparable. Ties break toward the smaller order.
pub fn select_lag(
    tpanel: &TransformedPanel,
    k_max: usize,
    template: &ModelSpec,
) -> Result<(usize, Vec<(usize, f64)>)> {
    let ids: Vec<&str> = tpanel.units.iter().map(|u| u.id.as_str()).collect();
    select_lag_named(&ids, &tpanel.y, &tpanel.x, k_max, template)
}

/// As [`select_lag`] but on parallel arrays of already-transformed series.
pub fn select_lag_arrays(
    y: &[Vec<f64>],
    x: &[Vec<f64>],
    k_max: usize,
    template: &ModelSpec,
) -> Result<(usize, Vec<(usize, f64)>)> {
    let ids: Vec<String> = (1..=y.len()).map(|i| format!("U{i}")).collect();
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    select_lag_named(&id_refs, y, x, k_max, template)
}

fn select_lag_named(
    ids: &[&str],
    y: &[Vec<f64>],
    x: &[Vec<f64>],
    k_max: usize,
    template: &ModelSpec,
) -> Result<(usize, Vec<(usize, f64)>)> {
    if k_max < 1 {
        return Err(Error::Config("k_max must be >= 1".into()));
    }
    let t_prime = y.first().map(Vec::len).unwrap_or(0);
    let needed = 3 * k_max + 2;
    if t_prime < needed {
        let limiting = ids.first().copied().unwrap_or_default();
        return Err(Error::InsufficientLength(format!(
            "lag sweep to k_max={k_max} needs at least {needed} transformed periods, \
             got {t_prime} (unit '{limiting}')"
        )));
    }

    let mut curve = Vec::with_capacity(k_max);
    let mut best: Option<(usize, f64)> = None;
    for k in 1..=k_max {
        let spec = ModelSpec {
            lag_order: k,
            ..*template
        };
        let skip = k_max - k;
        let mut n_obs_total = 0usize;
        let mut fit_term = 0.0f64;
        for (i, unit) in ids.iter().enumerate() {
            let (response, design) =
                build_lag_matrix_aligned(&y[i], &x[i], k, skip, spec.include_intercept)?;
            let fit = ols(&response, &design).map_err(|e| match e {
                Error::RankDeficient { column, .. } => Error::RankDeficient {
                    column,
                    hint: Some(format!("unit '{unit}' at lag order {k}")),
                },
                other => other,
            })?;
            let t_eff = response.len();
            n_obs_total += t_eff;
            fit_term += t_eff as f64 * (fit.rss / t_eff as f64).ln();
        }
        let p_total = (ids.len() * spec.n_params()) as f64;
        let bic_k = fit_term + p_total * (n_obs_total as f64).ln();
        curve.push((k, bic_k));
        if best.is_none_or(|(_, b)| bic_k < b) {
            best = Some((k, bic_k));
        }
    }
    Ok((best.unwrap().0, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn rng(seed: u64) -> Xoshiro256PlusPlus {
        Xoshiro256PlusPlus::seed_from_u64(seed)
    }

    fn normal_vec(rng: &mut Xoshiro256PlusPlus, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn snorm(rng: &mut Xoshiro256PlusPlus) -> f64 {
        StandardNormal.sample(rng)
    }

    /// Independent normal-equations solver with compensated (Neumaier)
    /// accumulation and partial-pivot elimination. Kept free of nalgebra so
    /// it exercises a different code path than the implementation.
    #[allow(clippy::needless_range_loop)]
    fn normal_equations_oracle(response: &[f64], design: &[Vec<f64>]) -> Vec<f64> {
        fn dot(a: impl Iterator<Item = (f64, f64)>) -> f64 {
            let mut sum = 0.0;
            let mut comp = 0.0;
            for (x, y) in a {
                let term = x * y;
                let t = sum + term;
                comp += if sum.abs() >= term.abs() {
                    (sum - t) + term
                } else {
                    (term - t) + sum
                };
                sum = t;
            }
            sum + comp
        }
        let n = design.len();
        let p = design[0].len();
        let mut a = vec![vec![0.0f64; p + 1]; p];
        for i in 0..p {
            for j in 0..p {
                a[i][j] = dot((0..n).map(|r| (design[r][i], design[r][j])));
            }
            a[i][p] = dot((0..n).map(|r| (design[r][i], response[r])));
        }
        // Gaussian elimination with partial pivoting.
        for col in 0..p {
            let pivot = (col..p)
                .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            for row in col + 1..p {
                let factor = a[row][col] / a[col][col];
                for j in col..=p {
                    a[row][j] -= factor * a[col][j];
                }
            }
        }
        let mut coeffs = vec![0.0f64; p];
        for row in (0..p).rev() {
            let mut acc = a[row][p];
            for j in row + 1..p {
                acc -= a[row][j] * coeffs[j];
            }
            coeffs[row] = acc / a[row][row];
        }
        coeffs
    }

    #[test]
    fn lag_matrix_shapes() {
        let y: Vec<f64> = (0..10).map(f64::from).collect();
        let x: Vec<f64> = (0..10).map(|v| f64::from(v) * 2.0).collect();
        let (response, design) = build_lag_matrix(&y, &x, 1).unwrap();
        assert_eq!(response.len(), 9);
        assert_eq!((design.nrows(), design.ncols()), (9, 3));

        let y: Vec<f64> = (0..217).map(f64::from).collect();
        let x = y.clone();
        let (response, design) = build_lag_matrix(&y, &x, 7).unwrap();
        assert_eq!(response.len(), 210);
        assert_eq!(design.ncols(), 15);
    }

    #[test]
    fn lag_matrix_columns_are_shifted_series() {
        // Shift oracle: y-lag column k at row r equals y[K + r - k].
        let mut r = rng(7);
        let y = normal_vec(&mut r, 30);
        let x = normal_vec(&mut r, 30);
        let k_order = 3;
        let (response, design) = build_lag_matrix(&y, &x, k_order).unwrap();
        for row in 0..response.len() {
            let t = k_order + row;
            assert_eq!(response[row], y[t]);
            for k in 1..=k_order {
                assert_eq!(design[(row, k)], y[t - k]);
                assert_eq!(design[(row, k_order + k)], x[t - k]);
            }
        }
    }

    #[test]
    fn ols_recovers_exact_coefficients() {
        let mut r = rng(11);
        let n = 40;
        let truth = [1.5, -2.0, 0.25];
        let design = DMatrix::from_fn(n, 3, |row, col| {
            if col == 0 {
                1.0
            } else {
                (row * col) as f64 * 0.1 + if col == 2 { r.gen::<f64>() } else { 0.0 }
            }
        });
        let response = &design * DVector::from_column_slice(&truth);
        let fit = ols(&response, &design).unwrap();
        for (a, b) in fit.coeffs.iter().zip(truth.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!(fit.rss < 1e-18);
    }

    #[test]
    fn intercept_only_ols_is_the_mean() {
        let response = DVector::from_column_slice(&[1.0, 2.0, 6.0]);
        let design = DMatrix::from_element(3, 1, 1.0);
        let fit = ols(&response, &design).unwrap();
        assert!((fit.coeffs[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn ols_matches_normal_equations_oracle() {
        let mut r = rng(23);
        for _ in 0..20 {
            let n = 50;
            let p = 5;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let mut row = vec![1.0];
                    row.extend(normal_vec(&mut r, p - 1));
                    row
                })
                .collect();
            let response: Vec<f64> = (0..n)
                .map(|i| {
                    let signal: f64 = rows[i]
                        .iter()
                        .enumerate()
                        .map(|(j, v)| v * (j as f64 - 1.5))
                        .sum();
                    signal + 0.1 * snorm(&mut r)
                })
                .collect();
            let design = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
            let fit = ols(&DVector::from_column_slice(&response), &design).unwrap();
            let oracle = normal_equations_oracle(&response, &rows);
            for (a, b) in fit.coeffs.iter().zip(&oracle) {
                let scale = b.abs().max(1.0);
                assert!((a - b).abs() / scale < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn ols_residuals_orthogonal_to_design() {
        let mut r = rng(31);
        let n = 80;
        let p = 6;
        let design = DMatrix::from_fn(n, p, |_, j| {
            if j == 0 {
                1.0
            } else {
                StandardNormal.sample(&mut r)
            }
        });
        let response = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut r));
        let fit = ols(&response, &design).unwrap();
        let resid = &response - &design * &fit.coeffs;
        let gram = design.transpose() * resid;
        let scale: f64 = response.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
        for v in gram.iter() {
            assert!(v.abs() < 1e-8 * scale.max(1.0));
        }
    }

    #[test]
    fn rank_deficiency_reports_dependent_column() {
        // Third column duplicates the second.
        let design = DMatrix::from_fn(10, 3, |i, j| match j {
            0 => 1.0,
            _ => (i + 1) as f64,
        });
        let response = DVector::from_element(10, 1.0);
        match ols(&response, &design).unwrap_err() {
            Error::RankDeficient { column, .. } => assert_eq!(column, 2),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn restricted_rss_never_below_unrestricted() {
        let mut r = rng(43);
        for rep in 0..25 {
            let t = 60 + rep;
            let x = normal_vec(&mut r, t);
            let mut y = vec![0.0; t];
            for i in 1..t {
                y[i] = 0.4 * y[i - 1] + 0.2 * x[i - 1] + snorm(&mut r);
            }
            let fit = fit_unit("u", &y, &x, &ModelSpec::new(2)).unwrap();
            assert!(fit.rss_restricted >= fit.rss_unrestricted - 1e-9);
            assert!(fit.wald >= 0.0);
        }
    }

    #[test]
    fn null_wald_below_extreme_quantile() {
        // Single long draw under independence: the Wald should sit far below
        // the 99.9% quantile of its null law, K * F(K, T_eff - 2K - 1).
        use statrs::distribution::FisherSnedecor;
        let mut r = rng(59);
        let t = 2000;
        let x = normal_vec(&mut r, t);
        let mut y = vec![0.0; t];
        for i in 1..t {
            y[i] = 0.5 * y[i - 1] + snorm(&mut r);
        }
        let k = 2;
        let fit = fit_unit("u", &y, &x, &ModelSpec::new(k)).unwrap();
        let dof = (fit.t_eff - 2 * k - 1) as f64;
        let f = FisherSnedecor::new(k as f64, dof).unwrap();
        let q999 = k as f64 * f.inverse_cdf(0.999);
        assert!(
            fit.wald < q999,
            "wald {} not below null 99.9% quantile {q999}",
            fit.wald
        );
    }

    #[test]
    fn synthetic_truth_recovered_within_three_se() {
        let mut r = rng(61);
        let t = 400;
        let x = normal_vec(&mut r, t);
        let mut y = vec![0.0; t];
        for i in 1..t {
            y[i] = 0.5 * y[i - 1] + 1.0 * x[i - 1] + 0.05 * snorm(&mut r);
        }
        let fit = fit_unit("u", &y, &x, &ModelSpec::new(1)).unwrap();
        let idx = fit.beta_index(1).unwrap();
        let se = fit.cov[(idx, idx)].sqrt();
        assert!(
            (fit.beta[0] - 1.0).abs() < 3.0 * se,
            "beta {} se {se}",
            fit.beta[0]
        );
        assert!((fit.gamma[0] - 0.5).abs() < 0.05);
    }

    #[test]
    fn wald_invariant_to_indicator_rescaling() {
        let mut r = rng(67);
        let t = 150;
        let x = normal_vec(&mut r, t);
        let mut y = vec![0.0; t];
        for i in 2..t {
            y[i] = 0.3 * y[i - 1] + 0.5 * x[i - 2] + snorm(&mut r);
        }
        let base = fit_unit("u", &y, &x, &ModelSpec::new(2)).unwrap();
        for scale in [1e-3, 0.5, 7.0, 1e4] {
            let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
            let fit = fit_unit("u", &y, &xs, &ModelSpec::new(2)).unwrap();
            assert!(
                (fit.wald - base.wald).abs() < 1e-8 * base.wald.max(1.0),
                "scale {scale}: {} vs {}",
                fit.wald,
                base.wald
            );
        }
    }

    #[test]
    fn fits_are_deterministic() {
        let mut r = rng(71);
        let t = 90;
        let x = normal_vec(&mut r, t);
        let y = normal_vec(&mut r, t);
        let a = fit_unit("u", &y, &x, &ModelSpec::new(3)).unwrap();
        let b = fit_unit("u", &y, &x, &ModelSpec::new(3)).unwrap();
        assert_eq!(a.coefficients(), b.coefficients());
        assert_eq!(a.wald.to_bits(), b.wald.to_bits());
        assert_eq!(a.rss_unrestricted.to_bits(), b.rss_unrestricted.to_bits());
    }

    #[test]
    fn degenerate_interval_at_zero_variance() {
        let mut r = rng(73);
        let t = 50;
        let x = normal_vec(&mut r, t);
        let mut y = vec![0.0; t];
        for i in 1..t {
            y[i] = 0.25 * y[i - 1] + 2.0 * x[i - 1]; // no noise
        }
        let fit = fit_unit("u", &y, &x, &ModelSpec::new(1)).unwrap();
        let idx = fit.beta_index(1).unwrap();
        let (lo, hi) = confidence_interval(&fit, idx, 0.95).unwrap();
        assert!((lo - hi).abs() < 1e-9);
        assert!((lo - 2.0).abs() < 1e-7);
    }

    #[test]
    fn interval_matches_t_table() {
        // Frozen quantile: two-tailed 95% with 10 residual dof is 2.228139
        // (standard t tables). Build a fit with t_eff - p = 10.
        let mut r = rng(79);
        let k = 1;
        let t_prime = 14; // t_eff = 13, p = 3 -> dof 10
        let x = normal_vec(&mut r, t_prime);
        let mut y = normal_vec(&mut r, t_prime);
        for i in 1..t_prime {
            y[i] += 0.3 * y[i - 1];
        }
        let fit = fit_unit("u", &y, &x, &ModelSpec::new(k)).unwrap();
        assert_eq!(fit.t_eff - 3, 10);
        let idx = fit.beta_index(1).unwrap();
        let se = fit.cov[(idx, idx)].sqrt();
        let (lo, hi) = confidence_interval(&fit, idx, 0.95).unwrap();
        let halfwidth = (hi - lo) / 2.0;
        assert!(
            (halfwidth - 2.228139 * se).abs() < 1e-6 * se.max(1e-12),
            "halfwidth {halfwidth}, se {se}"
        );
    }

    #[test]
    fn wider_level_contains_narrower() {
        let mut r = rng(83);
        let t = 60;
        let x = normal_vec(&mut r, t);
        let mut y = vec![0.0; t];
        for i in 1..t {
            y[i] = 0.4 * y[i - 1] + 0.6 * x[i - 1] + 0.5 * snorm(&mut r);
        }
        let fit = fit_unit("u", &y, &x, &ModelSpec::new(1)).unwrap();
        let idx = fit.beta_index(1).unwrap();
        let (lo95, hi95) = confidence_interval(&fit, idx, 0.95).unwrap();
        let (lo99, hi99) = confidence_interval(&fit, idx, 0.99).unwrap();
        assert!(lo99 < lo95 && hi99 > hi95);
    }

    #[test]
    fn interval_index_out_of_range() {
        let mut r = rng(89);
        let x = normal_vec(&mut r, 40);
        let y = normal_vec(&mut r, 40);
        let fit = fit_unit("u", &y, &x, &ModelSpec::new(1)).unwrap();
        assert!(matches!(
            confidence_interval(&fit, 3, 0.95).unwrap_err(),
            Error::IndexOutOfRange { index: 3, len: 3 }
        ));
    }

    #[test]
    fn bic_prefers_fewer_parameters_at_equal_fit() {
        // Penalty monotonicity: identical RSS, different parameter counts.
        let base = UnitFit {
            unit_id: "u".into(),
            alpha: 0.0,
            gamma: vec![0.0],
            beta: vec![0.0],
            cov: DMatrix::identity(3, 3),
            rss_unrestricted: 10.0,
            rss_restricted: 10.0,
            sigma2: 0.1,
            t_eff: 100,
            wald: 0.0,
        };
        let small = PanelFit {
            spec: ModelSpec::new(1),
            fits: vec![base.clone()],
            bic_total: 0.0,
            loglik_total: 0.0,
            n_obs_total: 100,
        };
        let mut wide_fit = base;
        wide_fit.gamma = vec![0.0; 2];
        wide_fit.beta = vec![0.0; 2];
        let wide = PanelFit {
            spec: ModelSpec::new(2),
            fits: vec![wide_fit],
            bic_total: 0.0,
            loglik_total: 0.0,
            n_obs_total: 100,
        };
        assert!(bic(&small) < bic(&wide));
    }

    #[test]
    fn lag_sweep_returns_full_curve() {
        use crate::ingest::{Frequency, PanelDataset, UnitMeta};
        use crate::preprocess::{transform_panel, TransformSpec};
        let mut r = rng(97);
        let t = 120;
        let x: Vec<f64> = (0..t).map(|_| snorm(&mut r).abs() * 3.0).collect();
        let y: Vec<f64> = (0..t).map(|_| snorm(&mut r).abs() * 5.0).collect();
        let start = chrono::NaiveDate::from_ymd_opt(2020, 4, 2).unwrap();
        let panel = PanelDataset {
            units: vec![UnitMeta::bare("H1")],
            calendar: (0..t)
                .map(|k| start + chrono::Duration::days(k as i64))
                .collect(),
            y: vec![y],
            x: vec![x],
            frequency: Frequency::Daily,
        };
        let spec = TransformSpec {
            ma_window: 1,
            log_offset: 1.0,
            smooth_target: true,
        };
        let tp = transform_panel(&panel, &spec).unwrap();
        let (k_opt, curve) = select_lag(&tp, 6, &ModelSpec::new(1)).unwrap();
        assert_eq!(curve.len(), 6);
        assert!((1..=6).contains(&k_opt));
        let min = curve
            .iter()
            .cloned()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(min.0, k_opt);
    }
}
