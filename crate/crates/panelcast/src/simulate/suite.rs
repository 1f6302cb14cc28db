//! Monte Carlo validation experiments against the synthetic ground truth.
//!
//! Five experiments pin the statistical behavior of the pipeline: test size
//! and null normality, test power, BIC lag recovery, coefficient recovery
//! with CI coverage, and holdout forecast quality against the persistence
//! baseline. Replications run on independent derived substreams, so results
//! are identical for any thread count.

use rand_distr::Distribution;
use rand_xoshiro::Xoshiro256PlusPlus;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::Result;
use crate::evaluate::evaluate_forecasts;
use crate::forecast::{forecast_panel, persistence_forecast, ExogenousPolicy};
use crate::granger::dh_test;
use crate::linmod::{confidence_interval, fit_arrays, fit_panel, select_lag, ModelSpec};
use crate::preprocess::{split_train_holdout, transform_panel, TransformSpec};
use crate::simulate::{derive_seed, simulate_panel, SimConfig};

/// Nominal size band for the fixed-T statistic at alpha = 0.05.
pub const SIZE_BAND: (f64, f64) = (0.03, 0.07);
/// KS significance level the null-normality check runs at.
pub const KS_LEVEL: f64 = 0.01;
/// Minimum rejection rate under the causal alternative.
pub const POWER_MIN: f64 = 0.90;
/// Minimum fraction of runs recovering the true lag order.
pub const LAG_RECOVERY_MIN: f64 = 0.80;
/// Minimum fraction of runs with the true coefficient inside +-3 SE.
pub const COEFFICIENT_3SE_MIN: f64 = 0.99;
/// Acceptable band for 95% CI coverage of the true coefficient.
pub const COVERAGE_BAND: (f64, f64) = (0.92, 0.98);
/// Minimum fraction of panels where the model beats persistence.
pub const BEAT_PERSISTENCE_MIN: f64 = 0.90;
/// Maximum acceptable median network WMAPE on reference-scale panels.
pub const MEDIAN_WMAPE_MAX: f64 = 0.10;

/// Replication counts and seeding for one suite run.
#[derive(Debug, Clone)]
pub struct SuiteConfig {
    /// Master seed; replication r of experiment e uses substream (e, r).
    pub seed: u64,
    /// Worker threads.
    pub jobs: usize,
    /// Replications of the size / null-normality experiment.
    pub size_replications: usize,
    /// Replications of the power experiment.
    pub power_replications: usize,
    /// Replications of the lag-recovery experiment.
    pub lag_recovery_replications: usize,
    /// Replications of the coefficient-recovery experiment.
    pub coefficient_replications: usize,
    /// Replications of the forecast-quality experiment.
    pub forecast_replications: usize,
}

impl SuiteConfig {
    /// Full-size suite.
    pub fn new(seed: u64) -> Self {
        SuiteConfig {
            seed,
            jobs: default_jobs(),
            size_replications: 1000,
            power_replications: 200,
            lag_recovery_replications: 200,
            coefficient_replications: 300,
            forecast_replications: 100,
        }
    }

    /// Reduced replication counts for quick smoke runs.
    pub fn quick(seed: u64) -> Self {
        SuiteConfig {
            seed,
            jobs: default_jobs(),
            size_replications: 100,
            power_replications: 40,
            lag_recovery_replications: 30,
            coefficient_replications: 50,
            forecast_replications: 20,
        }
    }

    /// No replications at all; the suite reports nothing and passes.
    pub fn empty(seed: u64) -> Self {
        SuiteConfig {
            seed,
            jobs: 1,
            size_replications: 0,
            power_replications: 0,
            lag_recovery_replications: 0,
            coefficient_replications: 0,
            forecast_replications: 0,
        }
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Deterministic indexed map over a worker pool: results are ordered by
/// index regardless of scheduling.
pub fn parallel_map<R, F>(jobs: usize, count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    let jobs = jobs.max(1).min(count.max(1));
    if jobs <= 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let mut slots: Vec<Option<R>> = (0..count).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots_ref = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let value = f(i);
                let mut guard = slots_ref.lock().unwrap();
                guard[i] = Some(value);
            });
        }
    });
    slots.into_iter().map(|s| s.unwrap()).collect()
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov machinery for the null-normality check.

/// Two-sided KS statistic of a sample against a CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, v) in sorted.iter().enumerate() {
        let f = cdf(*v);
        let upper = (i as f64 + 1.0) / n - f;
        let lower = f - i as f64 / n;
        d = d.max(upper).max(lower);
    }
    d
}

/// Asymptotic Kolmogorov p-value with the Stephens small-sample correction.
pub fn kolmogorov_p(d: f64, n: usize) -> f64 {
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut p = 0.0;
    for k in 1..101 {
        let term =
            2.0 * (-1.0f64).powi(k - 1) * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Standard normal CDF.
pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(x)
}

// ---------------------------------------------------------------------------
// Direct Gaussian lag-process generator for the size/power experiments.

/// Gaussian panel on the transformed scale: `y` is an AR(1) with optional
/// feedthrough from one lag of an AR(1) indicator.
#[derive(Debug, Clone, Copy)]
pub struct GaussianArxSpec {
    /// Units.
    pub n_units: usize,
    /// Effective estimation rows after a lag-order-`fit_lag` fit.
    pub t_eff: usize,
    /// Lag order the panel will be fitted with.
    pub fit_lag: usize,
    /// AR(1) coefficient of the target.
    pub ar_coef: f64,
    /// Coefficient on the indicator lag (0 under the null).
    pub beta: f64,
    /// Which indicator lag carries the signal.
    pub beta_lag: usize,
    /// AR(1) coefficient of the indicator.
    pub x_ar_coef: f64,
}

/// Generate the (y, x) series, each of length `t_eff + fit_lag`.
pub fn gen_arx_panel(spec: &GaussianArxSpec, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    use rand::SeedableRng;
    use rand_distr::StandardNormal;
    const BURN: usize = 50;
    let len = spec.t_eff + spec.fit_lag;
    let total = len + BURN.max(spec.beta_lag + 1);
    let mut ys = Vec::with_capacity(spec.n_units);
    let mut xs = Vec::with_capacity(spec.n_units);
    for unit in 0..spec.n_units {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, 90, unit as u64));
        let snorm = |r: &mut Xoshiro256PlusPlus| -> f64 { StandardNormal.sample(r) };
        let mut x = vec![0.0f64; total];
        for t in 1..total {
            x[t] = spec.x_ar_coef * x[t - 1] + snorm(&mut rng);
        }
        let mut y = vec![0.0f64; total];
        for t in 1..total {
            let x_signal = if t >= spec.beta_lag {
                x[t - spec.beta_lag]
            } else {
                0.0
            };
            y[t] = spec.ar_coef * y[t - 1] + spec.beta * x_signal + snorm(&mut rng);
        }
        ys.push(y[BURN..].to_vec());
        xs.push(x[BURN..].to_vec());
    }
    (ys, xs)
}

// ---------------------------------------------------------------------------
// Experiments.

/// Size / null-normality outcome.
#[derive(Debug, Clone)]
pub struct SizeOutcome {
    /// Replications run.
    pub replications: usize,
    /// Fraction rejecting at alpha = 0.05 under the null.
    pub rejection_rate: f64,
    /// Fixed-T statistics, one per replication.
    pub z_samples: Vec<f64>,
    /// KS statistic of the statistics against the standard normal.
    pub ks_statistic: f64,
    /// KS p-value.
    pub ks_p_value: f64,
}

/// Null panels (beta = 0): rejection rate and normality of the statistic.
pub fn size_experiment(replications: usize, seed: u64, jobs: usize) -> Result<SizeOutcome> {
    let spec = GaussianArxSpec {
        n_units: 10,
        t_eff: 200,
        fit_lag: 2,
        ar_coef: 0.5,
        beta: 0.0,
        beta_lag: 1,
        x_ar_coef: 0.5,
    };
    let runs = parallel_map(jobs, replications, |rep| {
        let (y, x) = gen_arx_panel(&spec, derive_seed(seed, 10, rep as u64));
        let fits = fit_arrays(&y, &x, &ModelSpec::new(spec.fit_lag)).expect("null panel fit");
        let r = dh_test(&fits).expect("dh test");
        (r.z_fixed_t, r.reject)
    });
    let z_samples: Vec<f64> = runs.iter().map(|(z, _)| *z).collect();
    let rejections = runs.iter().filter(|(_, rej)| *rej).count();
    let d = if z_samples.is_empty() {
        0.0
    } else {
        ks_statistic(&z_samples, standard_normal_cdf)
    };
    Ok(SizeOutcome {
        replications,
        rejection_rate: if replications == 0 {
            0.0
        } else {
            rejections as f64 / replications as f64
        },
        ks_p_value: if z_samples.is_empty() {
            1.0
        } else {
            kolmogorov_p(d, z_samples.len())
        },
        ks_statistic: d,
        z_samples,
    })
}

/// Power outcome.
#[derive(Debug, Clone)]
pub struct PowerOutcome {
    /// Replications run.
    pub replications: usize,
    /// Fraction rejecting at alpha = 0.05 under the alternative.
    pub rejection_rate: f64,
}

/// Causal panels (beta = 0.5 on lag 1): rejection rate.
pub fn power_experiment(replications: usize, seed: u64, jobs: usize) -> Result<PowerOutcome> {
    let spec = GaussianArxSpec {
        n_units: 10,
        t_eff: 200,
        fit_lag: 2,
        ar_coef: 0.5,
        beta: 0.5,
        beta_lag: 1,
        x_ar_coef: 0.5,
    };
    let rejects = parallel_map(jobs, replications, |rep| {
        let (y, x) = gen_arx_panel(&spec, derive_seed(seed, 20, rep as u64));
        let fits = fit_arrays(&y, &x, &ModelSpec::new(spec.fit_lag)).expect("causal panel fit");
        dh_test(&fits).expect("dh test").reject
    });
    let hits = rejects.iter().filter(|r| **r).count();
    Ok(PowerOutcome {
        replications,
        rejection_rate: if replications == 0 {
            0.0
        } else {
            hits as f64 / replications as f64
        },
    })
}

/// Lag-recovery outcome.
#[derive(Debug, Clone)]
pub struct LagRecoveryOutcome {
    /// Replications run.
    pub replications: usize,
    /// True lag order the panels were generated with.
    pub true_lag: usize,
    /// Fraction of runs whose BIC sweep returned exactly the true order.
    pub recovery_rate: f64,
    /// Selected-order histogram as (order, count).
    pub histogram: Vec<(usize, usize)>,
}

/// Panels with a known causal delay: does the BIC sweep find it?
pub fn lag_recovery_experiment(
    replications: usize,
    seed: u64,
    jobs: usize,
) -> Result<LagRecoveryOutcome> {
    const TRUE_LAG: usize = 3;
    const K_MAX: usize = 10;
    let picks = parallel_map(jobs, replications, |rep| {
        let mut cfg = SimConfig::new(10, 300, derive_seed(seed, 30, rep as u64));
        cfg.true_lag = TRUE_LAG;
        cfg.beta_true = vec![0.5; cfg.n_units];
        cfg.gamma_true = vec![0.5; cfg.n_units];
        let (panel, _) = simulate_panel(&cfg).expect("simulated panel");
        // Estimation grid matches the generating equation: no smoothing.
        let tspec = TransformSpec {
            ma_window: 1,
            log_offset: 1.0,
            smooth_target: true,
        };
        let tpanel = transform_panel(&panel, &tspec).expect("transform");
        let (k_opt, _) = select_lag(&tpanel, K_MAX, &ModelSpec::new(1)).expect("lag sweep");
        k_opt
    });
    let mut histogram = vec![0usize; K_MAX + 1];
    for k in &picks {
        histogram[*k] += 1;
    }
    let recovered = picks.iter().filter(|k| **k == TRUE_LAG).count();
    Ok(LagRecoveryOutcome {
        replications,
        true_lag: TRUE_LAG,
        recovery_rate: if replications == 0 {
            0.0
        } else {
            recovered as f64 / replications as f64
        },
        histogram: histogram
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c > 0)
            .collect(),
    })
}

/// Coefficient-recovery outcome.
#[derive(Debug, Clone)]
pub struct CoefficientRecoveryOutcome {
    /// Replications run.
    pub replications: usize,
    /// True coefficient value at the true lag.
    pub beta_true: f64,
    /// Fraction of runs with the estimate within +-3 SE of the truth.
    pub within_3se_rate: f64,
    /// Fraction of runs whose 95% CI covered the truth.
    pub ci_coverage: f64,
}

/// Single-unit panels with beta = 0.5 at lag 7: estimate accuracy and
/// CI calibration.
pub fn coefficient_recovery_experiment(
    replications: usize,
    seed: u64,
    jobs: usize,
) -> Result<CoefficientRecoveryOutcome> {
    const BETA: f64 = 0.5;
    const LAG: usize = 7;
    let outcomes = parallel_map(jobs, replications, |rep| {
        let mut cfg = SimConfig::new(1, 500, derive_seed(seed, 40, rep as u64));
        cfg.true_lag = LAG;
        cfg.beta_true = vec![BETA];
        cfg.gamma_true = vec![0.5];
        let (panel, _) = simulate_panel(&cfg).expect("simulated panel");
        let tspec = TransformSpec {
            ma_window: 1,
            log_offset: 1.0,
            smooth_target: true,
        };
        let tpanel = transform_panel(&panel, &tspec).expect("transform");
        let pf = fit_panel(&tpanel, &ModelSpec::new(LAG)).expect("fit");
        let fit = &pf.fits[0];
        let idx = fit.beta_index(LAG).expect("beta index");
        let estimate = fit.beta[LAG - 1];
        let se = fit.cov[(idx, idx)].max(0.0).sqrt();
        let (lo, hi) = confidence_interval(fit, idx, 0.95).expect("ci");
        let within = (estimate - BETA).abs() <= 3.0 * se;
        let covered = lo <= BETA && BETA <= hi;
        (within, covered)
    });
    let within = outcomes.iter().filter(|(w, _)| *w).count();
    let covered = outcomes.iter().filter(|(_, c)| *c).count();
    let denom = replications.max(1) as f64;
    Ok(CoefficientRecoveryOutcome {
        replications,
        beta_true: BETA,
        within_3se_rate: within as f64 / denom,
        ci_coverage: covered as f64 / denom,
    })
}

/// Forecast-quality outcome.
#[derive(Debug, Clone)]
pub struct ForecastQualityOutcome {
    /// Replications run.
    pub replications: usize,
    /// Fraction of panels where the model's network WMAPE beat persistence.
    pub beat_persistence_rate: f64,
    /// Median network WMAPE of the model.
    pub median_wmape: f64,
    /// Model network WMAPE per panel.
    pub wmapes: Vec<f64>,
}

/// Reference-scale panels, 7-day holdout: full pipeline against persistence.
pub fn forecast_experiment(
    replications: usize,
    seed: u64,
    jobs: usize,
) -> Result<ForecastQualityOutcome> {
    const HOLDOUT: usize = 7;
    const K_MAX: usize = 7;
    let scores = parallel_map(jobs, replications, |rep| {
        let cfg = SimConfig::reference_scale(derive_seed(seed, 50, rep as u64));
        let (panel, _) = simulate_panel(&cfg).expect("simulated panel");
        // Smooth the indicator only: forecasts are scored on raw counts, so
        // the target keeps its own scale and a current-day anchor.
        let tspec = TransformSpec {
            smooth_target: false,
            ..TransformSpec::default()
        };
        let tpanel = transform_panel(&panel, &tspec).expect("transform");
        let (train, holdout) = split_train_holdout(&tpanel, HOLDOUT).expect("split");
        let (k_opt, _) = select_lag(&train, K_MAX, &ModelSpec::new(1)).expect("lag sweep");
        let pf = fit_panel(&train, &ModelSpec::new(k_opt)).expect("fit");
        let fs =
            forecast_panel(&pf, &train, HOLDOUT, &ExogenousPolicy::HoldLast).expect("forecast");
        let model = evaluate_forecasts(&fs, &holdout).expect("evaluate");
        let baseline_fs = persistence_forecast(&train.base, HOLDOUT, tpanel.spec.log_offset);
        let baseline = evaluate_forecasts(&baseline_fs, &holdout).expect("evaluate baseline");
        (model.network_wmape, baseline.network_wmape)
    });
    let beats = scores.iter().filter(|(m, b)| m < b).count();
    let wmapes: Vec<f64> = scores.iter().map(|(m, _)| *m).collect();
    let mut sorted = wmapes.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    Ok(ForecastQualityOutcome {
        replications,
        beat_persistence_rate: if replications == 0 {
            0.0
        } else {
            beats as f64 / replications as f64
        },
        median_wmape: median,
        wmapes,
    })
}

// ---------------------------------------------------------------------------
// Suite assembly.

/// One suite check.
#[derive(Debug, Clone)]
pub struct SuiteEntry {
    /// Check name.
    pub name: String,
    /// Observed value, formatted.
    pub observed: String,
    /// Threshold description.
    pub threshold: String,
    /// Whether the check passed.
    pub pass: bool,
}

/// Outcome of a full suite run.
#[derive(Debug, Clone, Default)]
pub struct SuiteReport {
    /// One entry per executed check (empty when no replications ran).
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    /// All executed checks passed (vacuously true when none ran).
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    /// One line per check.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&format!(
                "[{}] {}: {} (requires {})\n",
                if e.pass { "PASS" } else { "FAIL" },
                e.name,
                e.observed,
                e.threshold
            ));
        }
        if self.entries.is_empty() {
            s.push_str("no experiments requested\n");
        }
        s
    }
}

/// Run every experiment with non-zero replications and check thresholds.
pub fn run_oracle_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut entries = Vec::new();

    if cfg.size_replications > 0 {
        let outcome = size_experiment(cfg.size_replications, cfg.seed, cfg.jobs)?;
        entries.push(SuiteEntry {
            name: "size: null rejection rate at alpha=0.05".into(),
            observed: format!("{:.4}", outcome.rejection_rate),
            threshold: format!("within [{}, {}]", SIZE_BAND.0, SIZE_BAND.1),
            pass: outcome.rejection_rate >= SIZE_BAND.0 && outcome.rejection_rate <= SIZE_BAND.1,
        });
        entries.push(SuiteEntry {
            name: "size: KS of fixed-T statistic vs standard normal".into(),
            observed: format!("D={:.4}, p={:.4}", outcome.ks_statistic, outcome.ks_p_value),
            threshold: format!("p > {KS_LEVEL}"),
            pass: outcome.ks_p_value > KS_LEVEL,
        });
    }

    if cfg.power_replications > 0 {
        let outcome = power_experiment(cfg.power_replications, cfg.seed, cfg.jobs)?;
        entries.push(SuiteEntry {
            name: "power: causal rejection rate".into(),
            observed: format!("{:.4}", outcome.rejection_rate),
            threshold: format!(">= {POWER_MIN}"),
            pass: outcome.rejection_rate >= POWER_MIN,
        });
    }

    if cfg.lag_recovery_replications > 0 {
        let outcome = lag_recovery_experiment(cfg.lag_recovery_replications, cfg.seed, cfg.jobs)?;
        entries.push(SuiteEntry {
            name: format!("lag recovery: exact order {} selected", outcome.true_lag),
            observed: format!("{:.4}", outcome.recovery_rate),
            threshold: format!(">= {LAG_RECOVERY_MIN}"),
            pass: outcome.recovery_rate >= LAG_RECOVERY_MIN,
        });
    }

    if cfg.coefficient_replications > 0 {
        let outcome =
            coefficient_recovery_experiment(cfg.coefficient_replications, cfg.seed, cfg.jobs)?;
        entries.push(SuiteEntry {
            name: "coefficient recovery: estimate within 3 SE".into(),
            observed: format!("{:.4}", outcome.within_3se_rate),
            threshold: format!(">= {COEFFICIENT_3SE_MIN}"),
            pass: outcome.within_3se_rate >= COEFFICIENT_3SE_MIN,
        });
        entries.push(SuiteEntry {
            name: "coefficient recovery: 95% CI coverage".into(),
            observed: format!("{:.4}", outcome.ci_coverage),
            threshold: format!("within [{}, {}]", COVERAGE_BAND.0, COVERAGE_BAND.1),
            pass: outcome.ci_coverage >= COVERAGE_BAND.0 && outcome.ci_coverage <= COVERAGE_BAND.1,
        });
    }

    if cfg.forecast_replications > 0 {
        let outcome = forecast_experiment(cfg.forecast_replications, cfg.seed, cfg.jobs)?;
        entries.push(SuiteEntry {
            name: "forecast: beats persistence".into(),
            observed: format!("{:.4}", outcome.beat_persistence_rate),
            threshold: format!(">= {BEAT_PERSISTENCE_MIN}"),
            pass: outcome.beat_persistence_rate >= BEAT_PERSISTENCE_MIN,
        });
        entries.push(SuiteEntry {
            name: "forecast: median network WMAPE".into(),
            observed: format!("{:.4}", outcome.median_wmape),
            threshold: format!("<= {MEDIAN_WMAPE_MAX}"),
            pass: outcome.median_wmape <= MEDIAN_WMAPE_MAX,
        });
    }

    Ok(SuiteReport { entries })
}
