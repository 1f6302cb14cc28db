//! Synthetic attestation/census panels with known causal structure.
//!
//! The generator is the repository's ground truth: a latent per-unit
//! infection prevalence drives binomially sampled symptom counts, and the
//! census follows the same log1p lag equation the estimator fits, so
//! coefficient- and lag-recovery experiments are sharp. Optional reporting
//! bias distorts only the observed symptom series, leaving the causal path
//! intact (an errors-in-variables stress).
//!
//! All randomness flows from one 64-bit seed through xoshiro256++ streams;
//! substreams are derived per (seed, purpose, index) with a SplitMix64 step,
//! so outputs are identical across runs, platforms, and thread counts.

pub mod suite;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::SeedableRng;
use rand_distr::{Binomial, Distribution, Hypergeometric, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    Frequency, PanelDataset, RawAttestationRecord, RawCensusRecord, UnitMeta, ZipEntry, ZipMap,
};

/// Latent prevalence dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfectionProcess {
    /// Log-prevalence follows a clamped Gaussian random walk.
    LogRandomWalk,
    /// A compartmental wave with noisy transmission.
    SeirLike,
}

/// Reporting-bias knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    /// Probability a weekend report is dropped, in [0, 1].
    pub weekday_dropout: f64,
    /// Probability any report is dropped, in [0, 1].
    pub underreport: f64,
}

/// Generator configuration. `seed` fully determines the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of units N.
    pub n_units: usize,
    /// Number of emitted days.
    pub n_days: usize,
    /// Master seed.
    pub seed: u64,
    /// Latent prevalence dynamics.
    pub infection_process: InfectionProcess,
    /// Causal delay from symptoms to census, in days.
    pub true_lag: usize,
    /// Per-unit symptom-to-census log-log coefficient.
    pub beta_true: Vec<f64>,
    /// Per-unit census persistence, each in (-1, 1).
    pub gamma_true: Vec<f64>,
    /// On-site employees per unit (constant across days).
    pub employees_per_unit: u64,
    /// Probability a prevalent infection is reported as symptoms, in [0, 1].
    pub symptom_report_prob: f64,
    /// Optional reporting bias applied to the observed symptom series.
    pub bias: Option<BiasConfig>,
    /// Per-unit initial prevalence, each in (0, 0.5).
    pub prevalence0: Vec<f64>,
    /// Per-unit target mean census level; sets the intercepts.
    pub census_scale: Vec<f64>,
    /// Gaussian noise SD in the census log equation.
    pub noise_sigma: f64,
    /// Random-walk step SD of the log-prevalence process.
    pub rw_step: f64,
    /// First emitted calendar day.
    pub start_date: NaiveDate,
}

/// Default first emitted day.
pub fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 4, 2).unwrap()
}

fn geometric_grid(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n)
        .map(|i| hi * (lo / hi).powf(i as f64 / (n - 1) as f64))
        .collect()
}

impl SimConfig {
    /// Uniform-coefficient config with documented defaults.
    pub fn new(n_units: usize, n_days: usize, seed: u64) -> Self {
        SimConfig {
            n_units,
            n_days,
            seed,
            infection_process: InfectionProcess::LogRandomWalk,
            true_lag: 7,
            beta_true: vec![0.4; n_units],
            gamma_true: vec![0.6; n_units],
            employees_per_unit: 700,
            symptom_report_prob: 0.5,
            bias: None,
            prevalence0: geometric_grid(0.02, 0.0005, n_units),
            census_scale: geometric_grid(60.0, 3.0, n_units),
            noise_sigma: 0.05,
            rw_step: 0.05,
            start_date: default_start_date(),
        }
    }

    /// Ten heterogeneous units over 217 days, shaped like the motivating
    /// deployment: a mid-size hospital network's pandemic spring-to-fall
    /// window with sustained epidemic waves and a smooth, persistent census.
    pub fn reference_scale(seed: u64) -> Self {
        SimConfig::reference_with(10, 217, seed)
    }

    /// The reference-deployment shape at a chosen panel size.
    pub fn reference_with(n_units: usize, n_days: usize, seed: u64) -> Self {
        let mut cfg = SimConfig::new(n_units, n_days, seed);
        cfg.infection_process = InfectionProcess::SeirLike;
        cfg.noise_sigma = 0.02;
        cfg.census_scale = geometric_grid(60.0, 5.0, n_units);
        cfg
    }

    /// Validate invariants.
    pub fn validate(&self) -> Result<()> {
        if self.n_units == 0 || self.n_days == 0 {
            return Err(Error::Config("n_units and n_days must be >= 1".into()));
        }
        if self.true_lag == 0 {
            return Err(Error::Config("true_lag must be >= 1".into()));
        }
        if self.employees_per_unit == 0 {
            return Err(Error::Config("employees_per_unit must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.symptom_report_prob) {
            return Err(Error::Config(
                "symptom_report_prob must lie in [0, 1]".into(),
            ));
        }
        for field in [
            (&self.beta_true, "beta_true"),
            (&self.gamma_true, "gamma_true"),
            (&self.prevalence0, "prevalence0"),
            (&self.census_scale, "census_scale"),
        ] {
            if field.0.len() != self.n_units {
                return Err(Error::Config(format!(
                    "{} must have one entry per unit ({} != {})",
                    field.1,
                    field.0.len(),
                    self.n_units
                )));
            }
        }
        if self.gamma_true.iter().any(|g| g.abs() >= 1.0) {
            return Err(Error::Config(
                "gamma_true entries must lie in (-1, 1)".into(),
            ));
        }
        if self.prevalence0.iter().any(|p| !(*p > 0.0 && *p < 0.5)) {
            return Err(Error::Config(
                "prevalence0 entries must lie in (0, 0.5)".into(),
            ));
        }
        if self.census_scale.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config(
                "census_scale entries must be finite and >= 0".into(),
            ));
        }
        if let Some(bias) = &self.bias {
            if !(0.0..=1.0).contains(&bias.weekday_dropout)
                || !(0.0..=1.0).contains(&bias.underreport)
            {
                return Err(Error::Config(
                    "bias probabilities must lie in [0, 1]".into(),
                ));
            }
        }
        if self.noise_sigma < 0.0 || self.rw_step < 0.0 {
            return Err(Error::Config("noise_sigma and rw_step must be >= 0".into()));
        }
        Ok(())
    }

    fn unit_ids(&self) -> Vec<String> {
        let width = self.n_units.to_string().len();
        (1..=self.n_units)
            .map(|i| format!("H{i:0w$}", w = width))
            .collect()
    }
}

/// Generating parameters behind a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    /// Master seed.
    pub seed: u64,
    /// Latent process.
    pub infection_process: InfectionProcess,
    /// Causal delay in days.
    pub true_lag: usize,
    /// Per-unit intercepts of the census log equation.
    pub alpha: Vec<f64>,
    /// Per-unit persistence coefficients.
    pub gamma: Vec<f64>,
    /// Per-unit symptom coefficients.
    pub beta: Vec<f64>,
    /// Census noise SD.
    pub noise_sigma: f64,
    /// Bias applied to the observed symptom series, if any.
    pub bias: Option<BiasConfig>,
}

/// Derive a substream seed from (seed, purpose, index) with SplitMix64.
pub fn derive_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((index.wrapping_add(1)).wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const PURPOSE_LATENT: u64 = 0;
const PURPOSE_CENSUS: u64 = 1;
const PURPOSE_OBSERVE: u64 = 2;
const PURPOSE_SPLIT: u64 = 3;

fn substream(cfg_seed: u64, purpose: u64, index: usize) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(derive_seed(cfg_seed, purpose, index as u64))
}

fn snorm(rng: &mut Xoshiro256PlusPlus) -> f64 {
    StandardNormal.sample(rng)
}

const BURN_IN: usize = 60;
const PREV_FLOOR: f64 = 1e-6;
const PREV_CEIL: f64 = 0.5;

fn latent_prevalence(cfg: &SimConfig, unit: usize, total_days: usize) -> Vec<f64> {
    let mut rng = substream(cfg.seed, PURPOSE_LATENT, unit);
    match cfg.infection_process {
        InfectionProcess::LogRandomWalk => {
            let mut level = cfg.prevalence0[unit].ln();
            let (lo, hi) = (PREV_FLOOR.ln(), PREV_CEIL.ln());
            (0..total_days)
                .map(|_| {
                    level = (level + cfg.rw_step * snorm(&mut rng)).clamp(lo, hi);
                    level.exp()
                })
                .collect()
        }
        InfectionProcess::SeirLike => {
            // Compartmental waves: transmission cycles slowly (period ~5
            // months, unit-specific phase) with daily jitter, and immunity
            // wanes, so prevalence rises and falls in sustained multi-week
            // waves instead of diffusing. The wave shape is scaled to the
            // unit's baseline prevalence.
            use rand::Rng;
            let population = 100_000.0;
            let incubation_rate = 1.0 / 3.0;
            let recovery_rate = 1.0 / 7.0;
            let waning_rate = 0.02;
            let wave_period = 150.0;
            let reference_prevalence = 0.01;
            let phase: f64 = rng.gen::<f64>() * wave_period;
            let mut s = population * 0.9;
            let mut e = population * reference_prevalence;
            let mut i = population * reference_prevalence;
            let mut r = population * 0.1 - e - i;
            let mut out = Vec::with_capacity(total_days);
            for t in 0..total_days {
                let cycle = (std::f64::consts::TAU * (t as f64 + phase) / wave_period).sin();
                let r0 = (1.1 + 0.7 * cycle) * (0.03 * snorm(&mut rng)).exp();
                let beta_t = r0 * recovery_rate;
                let new_exposed = (beta_t * s * i / population).min(s);
                let new_infectious = incubation_rate * e;
                let new_recovered = recovery_rate * i;
                let new_susceptible = waning_rate * r.max(0.0);
                s += new_susceptible - new_exposed;
                e += new_exposed - new_infectious;
                i = (i + new_infectious - new_recovered).max(population * PREV_FLOOR);
                r += new_recovered - new_susceptible;
                let scaled = i / population * cfg.prevalence0[unit] / reference_prevalence;
                out.push(scaled.clamp(PREV_FLOOR, PREV_CEIL));
            }
            out
        }
    }
}

/// Everything the generator produces for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    /// The aligned panel (observed symptom series in `x`).
    pub panel: PanelDataset,
    /// Generating parameters.
    pub truth: SimTruth,
    /// Per-zip attestation rows reproducing `panel.x` under aggregation.
    pub attestations: Vec<RawAttestationRecord>,
    /// Census rows reproducing `panel.y`.
    pub census: Vec<RawCensusRecord>,
    /// Zip map used by the attestation rows.
    pub zipmap: ZipMap,
}

/// Generate a panel plus its generating truth.
pub fn simulate_panel(cfg: &SimConfig) -> Result<(PanelDataset, SimTruth)> {
    let data = simulate_core(cfg, false)?;
    Ok((data.panel, data.truth))
}

/// Generate the panel together with raw CSV-shaped records: per-zip
/// attestations, per-unit census rows, and the zip map.
pub fn simulate_raw(cfg: &SimConfig) -> Result<SimulatedData> {
    simulate_core(cfg, true)
}

const ZIPS_PER_UNIT: usize = 3;
const ZIP_WEIGHTS: [f64; ZIPS_PER_UNIT] = [0.5, 0.3, 0.2];

fn simulate_core(cfg: &SimConfig, with_records: bool) -> Result<SimulatedData> {
    cfg.validate()?;
    let total_days = BURN_IN.max(cfg.true_lag) + cfg.n_days;
    let emit_from = total_days - cfg.n_days;
    let n = cfg.n_units;
    let unit_ids = cfg.unit_ids();

    let mut alpha = Vec::with_capacity(n);
    let mut x_obs = vec![vec![0.0f64; cfg.n_days]; n];
    let mut y_out = vec![vec![0.0f64; cfg.n_days]; n];
    let mut x_true_all = vec![vec![0u64; total_days]; n];

    for unit in 0..n {
        let prevalence = latent_prevalence(cfg, unit, total_days);

        // True symptomatic counts (drawn on the latent stream).
        let mut latent_rng = substream(cfg.seed, PURPOSE_LATENT, n + unit);
        for (t, prev) in prevalence.iter().enumerate() {
            let p = (prev * cfg.symptom_report_prob).clamp(0.0, 1.0);
            x_true_all[unit][t] = if p > 0.0 {
                Binomial::new(cfg.employees_per_unit, p)
                    .expect("valid binomial")
                    .sample(&mut latent_rng)
            } else {
                0
            };
        }

        // Intercept hits the target census scale at the initial prevalence.
        let expected_x0 =
            cfg.employees_per_unit as f64 * cfg.symptom_report_prob * cfg.prevalence0[unit];
        let a = (1.0 - cfg.gamma_true[unit]) * (1.0 + cfg.census_scale[unit]).ln()
            - cfg.beta_true[unit] * (1.0 + expected_x0).ln();
        alpha.push(a);

        // Census recursion on the log1p scale, rounded to counts each step.
        let mut census_rng = substream(cfg.seed, PURPOSE_CENSUS, unit);
        let mut y_prev = cfg.census_scale[unit].round().max(0.0);
        for t in 0..total_days {
            let x_lag = if t >= cfg.true_lag {
                x_true_all[unit][t - cfg.true_lag]
            } else {
                x_true_all[unit][0]
            };
            let log_next = a
                + cfg.gamma_true[unit] * (1.0 + y_prev).ln()
                + cfg.beta_true[unit] * (1.0 + x_lag as f64).ln()
                + cfg.noise_sigma * snorm(&mut census_rng);
            let y_t = (log_next.exp() - 1.0).round().max(0.0);
            if t >= emit_from {
                y_out[unit][t - emit_from] = y_t;
            }
            y_prev = y_t;
        }

        // Observed symptoms: thin the true counts by the bias schedule.
        let mut obs_rng = substream(cfg.seed, PURPOSE_OBSERVE, unit);
        for t in 0..cfg.n_days {
            let date = cfg.start_date + Duration::days(t as i64);
            let keep = keep_probability(cfg.bias.as_ref(), date);
            let x_true = x_true_all[unit][emit_from + t];
            x_obs[unit][t] = if keep >= 1.0 || x_true == 0 {
                x_true as f64
            } else if keep <= 0.0 {
                0.0
            } else {
                Binomial::new(x_true, keep)
                    .expect("valid binomial")
                    .sample(&mut obs_rng) as f64
            };
        }
    }

    let calendar: Vec<NaiveDate> = (0..cfg.n_days)
        .map(|t| cfg.start_date + Duration::days(t as i64))
        .collect();
    let units: Vec<UnitMeta> = unit_ids
        .iter()
        .map(|id| UnitMeta {
            id: id.clone(),
            mean_daily_onsite: Some(cfg.employees_per_unit as f64),
        })
        .collect();
    let panel = PanelDataset {
        units,
        calendar: calendar.clone(),
        y: y_out,
        x: x_obs,
        frequency: Frequency::Daily,
    };
    panel.validate()?;

    let truth = SimTruth {
        seed: cfg.seed,
        infection_process: cfg.infection_process,
        true_lag: cfg.true_lag,
        alpha,
        gamma: cfg.gamma_true.clone(),
        beta: cfg.beta_true.clone(),
        noise_sigma: cfg.noise_sigma,
        bias: cfg.bias,
    };

    let (attestations, census, zipmap) = if with_records {
        render_records(cfg, &panel, &unit_ids)?
    } else {
        (Vec::new(), Vec::new(), ZipMap::default())
    };

    Ok(SimulatedData {
        panel,
        truth,
        attestations,
        census,
        zipmap,
    })
}

fn keep_probability(bias: Option<&BiasConfig>, date: NaiveDate) -> f64 {
    match bias {
        None => 1.0,
        Some(b) => {
            let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
            let mut keep = 1.0 - b.underreport;
            if weekend {
                keep *= 1.0 - b.weekday_dropout;
            }
            keep
        }
    }
}

/// Largest-remainder split of `total` across `weights`, preserving the sum.
fn proportional_split(total: u64, weights: &[f64]) -> Vec<u64> {
    let weight_sum: f64 = weights.iter().sum();
    let mut parts: Vec<u64> = weights
        .iter()
        .map(|w| ((total as f64) * w / weight_sum).floor() as u64)
        .collect();
    let mut assigned: u64 = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = (total as f64) * weights[a] / weight_sum - parts[a] as f64;
        let rb = (total as f64) * weights[b] / weight_sum - parts[b] as f64;
        rb.partial_cmp(&ra).unwrap()
    });
    let len = parts.len();
    let mut cursor = 0;
    while assigned < total {
        parts[order[cursor % len]] += 1;
        assigned += 1;
        cursor += 1;
    }
    parts
}

fn render_records(
    cfg: &SimConfig,
    panel: &PanelDataset,
    unit_ids: &[String],
) -> Result<(Vec<RawAttestationRecord>, Vec<RawCensusRecord>, ZipMap)> {
    let mut entries = Vec::with_capacity(cfg.n_units * ZIPS_PER_UNIT);
    let unit_population = cfg.employees_per_unit * 40;
    for (unit, unit_id) in unit_ids.iter().enumerate() {
        let pops = proportional_split(unit_population, &ZIP_WEIGHTS);
        for (j, pop) in pops.iter().enumerate() {
            entries.push(ZipEntry {
                zip: format!("{:05}", 10_000 + 10 * unit + j),
                unit_id: unit_id.clone(),
                population: *pop,
                market_share_weight: 0.9 - 0.2 * j as f64,
            });
        }
    }
    let zipmap = ZipMap::new(entries)?;

    let onsite_split = proportional_split(cfg.employees_per_unit, &ZIP_WEIGHTS);
    let mut attestations = Vec::with_capacity(cfg.n_units * ZIPS_PER_UNIT * cfg.n_days);
    let mut census = Vec::with_capacity(cfg.n_units * cfg.n_days);
    for (unit, unit_id) in unit_ids.iter().enumerate() {
        let mut split_rng = substream(cfg.seed, PURPOSE_SPLIT, unit);
        for (t, date) in panel.calendar.iter().enumerate() {
            census.push(RawCensusRecord {
                date: *date,
                unit_id: unit_id.clone(),
                census: panel.y[unit][t] as u64,
            });

            // Scatter the day's symptomatic count across the unit's zips
            // without exceeding any zip's on-site headcount.
            let mut remaining_sympt = panel.x[unit][t] as u64;
            let mut remaining_onsite = cfg.employees_per_unit;
            for (j, onsite_j) in onsite_split.iter().enumerate() {
                let sympt_j = if j + 1 == onsite_split.len() {
                    remaining_sympt
                } else if remaining_sympt == 0 {
                    0
                } else {
                    Hypergeometric::new(remaining_onsite, remaining_sympt, *onsite_j)
                        .expect("valid hypergeometric")
                        .sample(&mut split_rng)
                };
                attestations.push(RawAttestationRecord {
                    date: *date,
                    zip: format!("{:05}", 10_000 + 10 * unit + j),
                    n_onsite: *onsite_j,
                    n_symptomatic: sympt_j,
                });
                remaining_sympt -= sympt_j;
                remaining_onsite -= onsite_j;
            }
        }
    }
    Ok((attestations, census, zipmap))
}
