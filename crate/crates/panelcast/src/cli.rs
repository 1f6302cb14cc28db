//! Command orchestration behind the `panelcast` binary.
//!
//! Each command reads its inputs, runs the corresponding pipeline stage, and
//! writes JSON/CSV artifacts plus a human-readable summary into the output
//! directory, accompanied by a manifest recording a config hash and input
//! file hashes. Outputs are byte-identical across runs on identical inputs;
//! wall-clock timestamps only appear when explicitly enabled.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluate::{describe_panel, evaluate_forecasts, render_table, EvalReport};
use crate::forecast::{
    forecast_panel, persistence_forecast, plot_data, DoublingEffect, ExogenousPolicy, ForecastSet,
};
use crate::granger::{dh_test_weekly, dh_test_with_alpha, GrangerResult};
use crate::ingest::{
    build_panel, load_attestations, load_census, load_zip_map, unmapped_zips, Frequency,
    PanelDataset, ZipMap,
};
use crate::linmod::{fit_panel, select_lag, FitReport, ModelSpec, PanelFit};
use crate::preprocess::{split_train_holdout, transform_panel, TransformSpec, TransformedPanel};
use crate::simulate::{simulate_raw, SimConfig};

/// Version stamped into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// How future indicator values are filled, as named on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExogPolicyChoice {
    /// Hold the last smoothed-log observation flat.
    HoldLast,
    /// Read what-if paths from `exog_csv`.
    Provided,
}

impl std::str::FromStr for ExogPolicyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "hold_last" => Ok(ExogPolicyChoice::HoldLast),
            "provided" => Ok(ExogPolicyChoice::Provided),
            other => Err(Error::Config(format!(
                "unknown exogenous policy '{other}' (expected 'hold_last' or 'provided')"
            ))),
        }
    }
}

/// Resolved run configuration. Flags override config-file values, which
/// override these defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Attestation CSV path.
    pub attestations: Option<PathBuf>,
    /// Census CSV path.
    pub census: Option<PathBuf>,
    /// Zip map CSV path.
    pub zipmap: Option<PathBuf>,
    /// Pre-built panel CSV path (commands downstream of ingest).
    pub panel: Option<PathBuf>,
    /// Output directory for artifacts.
    pub out_dir: PathBuf,
    /// Panel frequency for ingest / test.
    pub frequency: Frequency,
    /// Moving-average window.
    pub ma_window: usize,
    /// Log offset.
    pub log_offset: f64,
    /// Smooth the target series too.
    pub smooth_target: bool,
    /// Upper bound of the lag sweep.
    pub k_max: usize,
    /// Fixed lag order; skips the sweep when set.
    pub lag_order: Option<usize>,
    /// Holdout length for evaluation and run-all.
    pub holdout_len: usize,
    /// Forecast horizon for the forecast command.
    pub horizon: usize,
    /// Exogenous fill policy.
    pub exog_policy: ExogPolicyChoice,
    /// What-if indicator paths (CSV `unit_id,step,value`, transformed scale).
    pub exog_csv: Option<PathBuf>,
    /// Downgrade unmapped attestation zips to a warning.
    pub allow_unmapped: bool,
    /// Significance threshold.
    pub alpha: f64,
    /// Confidence level for intervals.
    pub ci_level: f64,
    /// Seed for the simulate command.
    pub seed: u64,
    /// Worker threads for replication-level parallelism.
    pub jobs: usize,
    /// Stamp wall-clock timestamps into manifests.
    pub timestamps: bool,
    /// Emit plot_data.csv from forecast-producing commands.
    pub plot_data: bool,
    /// Rolling-origin one-step evaluation instead of one-shot.
    pub rolling: bool,
    /// Units for the simulate command.
    pub sim_units: usize,
    /// Days for the simulate command.
    pub sim_days: usize,
    /// Causal delay for the simulate command.
    pub sim_true_lag: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            attestations: None,
            census: None,
            zipmap: None,
            panel: None,
            out_dir: PathBuf::from("out"),
            frequency: Frequency::Daily,
            ma_window: 7,
            log_offset: 1.0,
            smooth_target: true,
            k_max: 7,
            lag_order: None,
            holdout_len: 7,
            horizon: 7,
            exog_policy: ExogPolicyChoice::HoldLast,
            exog_csv: None,
            allow_unmapped: false,
            alpha: 0.05,
            ci_level: 0.95,
            seed: 20200402,
            jobs: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            timestamps: false,
            plot_data: false,
            rolling: false,
            sim_units: 10,
            sim_days: 217,
            sim_true_lag: 7,
        }
    }
}

impl RunConfig {
    /// Apply one `key = value` pair from a config file.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value '{value}' for key '{what}'"));
        match key {
            "attestations" => self.attestations = Some(PathBuf::from(value)),
            "census" => self.census = Some(PathBuf::from(value)),
            "zipmap" => self.zipmap = Some(PathBuf::from(value)),
            "panel" => self.panel = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "frequency" => self.frequency = value.parse()?,
            "ma_window" => self.ma_window = value.parse().map_err(|_| bad(key))?,
            "log_offset" => self.log_offset = value.parse().map_err(|_| bad(key))?,
            "smooth_target" => self.smooth_target = parse_bool(value).ok_or_else(|| bad(key))?,
            "k_max" => self.k_max = value.parse().map_err(|_| bad(key))?,
            "lag_order" => self.lag_order = Some(value.parse().map_err(|_| bad(key))?),
            "holdout_len" => self.holdout_len = value.parse().map_err(|_| bad(key))?,
            "horizon" => self.horizon = value.parse().map_err(|_| bad(key))?,
            "exog_policy" => self.exog_policy = value.parse()?,
            "exog_csv" => self.exog_csv = Some(PathBuf::from(value)),
            "allow_unmapped" => self.allow_unmapped = parse_bool(value).ok_or_else(|| bad(key))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad(key))?,
            "ci_level" => self.ci_level = value.parse().map_err(|_| bad(key))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            "jobs" => self.jobs = value.parse().map_err(|_| bad(key))?,
            "timestamps" => self.timestamps = parse_bool(value).ok_or_else(|| bad(key))?,
            "plot_data" => self.plot_data = parse_bool(value).ok_or_else(|| bad(key))?,
            "rolling" => self.rolling = parse_bool(value).ok_or_else(|| bad(key))?,
            "sim_units" => self.sim_units = value.parse().map_err(|_| bad(key))?,
            "sim_days" => self.sim_days = value.parse().map_err(|_| bad(key))?,
            "sim_true_lag" => self.sim_true_lag = value.parse().map_err(|_| bad(key))?,
            unknown => {
                return Err(Error::Config(format!("unknown config key '{unknown}'")));
            }
        }
        Ok(())
    }

    /// Apply every pair of a parsed config file.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        for (key, value) in parse_config_file(path)? {
            self.apply_kv(&key, &value)?;
        }
        Ok(())
    }

    fn transform_spec(&self) -> TransformSpec {
        TransformSpec {
            ma_window: self.ma_window,
            log_offset: self.log_offset,
            smooth_target: self.smooth_target,
        }
    }

    fn model_spec(&self, lag_order: usize) -> ModelSpec {
        ModelSpec {
            lag_order,
            include_intercept: true,
            ci_level: self.ci_level,
            two_tailed: true,
        }
    }

    /// Canonical `key = value` listing (sorted), used for the config hash.
    pub fn canonical(&self) -> BTreeMap<String, String> {
        let opt_path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|v| v.display().to_string())
                .unwrap_or_default()
        };
        let mut m = BTreeMap::new();
        m.insert("attestations".into(), opt_path(&self.attestations));
        m.insert("census".into(), opt_path(&self.census));
        m.insert("zipmap".into(), opt_path(&self.zipmap));
        m.insert("panel".into(), opt_path(&self.panel));
        m.insert("out_dir".into(), self.out_dir.display().to_string());
        m.insert(
            "frequency".into(),
            match self.frequency {
                Frequency::Daily => "daily".into(),
                Frequency::Weekly => "weekly".into(),
            },
        );
        m.insert("ma_window".into(), self.ma_window.to_string());
        m.insert("log_offset".into(), self.log_offset.to_string());
        m.insert("smooth_target".into(), self.smooth_target.to_string());
        m.insert("k_max".into(), self.k_max.to_string());
        m.insert(
            "lag_order".into(),
            self.lag_order.map(|k| k.to_string()).unwrap_or_default(),
        );
        m.insert("holdout_len".into(), self.holdout_len.to_string());
        m.insert("horizon".into(), self.horizon.to_string());
        m.insert(
            "exog_policy".into(),
            match self.exog_policy {
                ExogPolicyChoice::HoldLast => "hold_last".into(),
                ExogPolicyChoice::Provided => "provided".into(),
            },
        );
        m.insert("exog_csv".into(), opt_path(&self.exog_csv));
        m.insert("allow_unmapped".into(), self.allow_unmapped.to_string());
        m.insert("alpha".into(), self.alpha.to_string());
        m.insert("ci_level".into(), self.ci_level.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("plot_data".into(), self.plot_data.to_string());
        m.insert("rolling".into(), self.rolling.to_string());
        m.insert("sim_units".into(), self.sim_units.to_string());
        m.insert("sim_days".into(), self.sim_days.to_string());
        m.insert("sim_true_lag".into(), self.sim_true_lag.to_string());
        m
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Some(true),
        "false" | "no" | "0" | "off" => Some(false),
        _ => None,
    }
}

/// Parse a flat `key = value` config file. `#` starts a comment.
pub fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: idx as u64 + 1,
            message: "expected 'key = value'".into(),
        })?;
        pairs.push((key.trim().to_ascii_lowercase(), value.trim().to_string()));
    }
    Ok(pairs)
}

// ---------------------------------------------------------------------------
// Artifact plumbing.

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[derive(Debug, Clone, Serialize)]
struct ManifestEntry {
    name: String,
    bytes: u64,
    fnv64: String,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest {
    schema_version: u32,
    command: String,
    config_hash: String,
    config: BTreeMap<String, String>,
    inputs: Vec<ManifestEntry>,
    outputs: Vec<ManifestEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at: Option<String>,
}

#[derive(Serialize)]
struct Artifact<T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

struct ArtifactSink {
    out_dir: PathBuf,
    written: Vec<ManifestEntry>,
}

impl ArtifactSink {
    fn new(out_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
            path: out_dir.to_path_buf(),
            source,
        })?;
        Ok(ArtifactSink {
            out_dir: out_dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out_dir.join(name);
        crate::ingest::write_file(&path, bytes)?;
        self.written.push(ManifestEntry {
            name: name.to_string(),
            bytes: bytes.len() as u64,
            fnv64: format!("{:016x}", fnv1a64(bytes)),
        });
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        self.write_bytes(name, text.as_bytes())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, body: T) -> Result<()> {
        let artifact = Artifact {
            schema_version: SCHEMA_VERSION,
            body,
        };
        let mut text = serde_json::to_string_pretty(&artifact)
            .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
        text.push('\n');
        self.write_text(name, &text)
    }

    fn finish(mut self, command: &str, cfg: &RunConfig, inputs: &[&Path]) -> Result<()> {
        let config = cfg.canonical();
        let canonical: String = config.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let mut input_entries = Vec::new();
        for path in inputs {
            let bytes = std::fs::read(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            input_entries.push(ManifestEntry {
                name: path.display().to_string(),
                bytes: bytes.len() as u64,
                fnv64: format!("{:016x}", fnv1a64(&bytes)),
            });
        }
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config_hash: format!("{:016x}", fnv1a64(canonical.as_bytes())),
            config,
            inputs: input_entries,
            outputs: std::mem::take(&mut self.written),
            generated_at: cfg
                .timestamps
                .then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
        text.push('\n');
        let path = self.out_dir.join("manifest.json");
        crate::ingest::write_file(&path, text.as_bytes())
    }
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("missing required path: {what}")))
}

fn must_exist(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        })
    }
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces.

struct Inputs {
    attestations: PathBuf,
    census: PathBuf,
    zipmap: PathBuf,
}

fn resolve_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let inputs = Inputs {
        attestations: require(&cfg.attestations, "attestations")?.to_path_buf(),
        census: require(&cfg.census, "census")?.to_path_buf(),
        zipmap: require(&cfg.zipmap, "zipmap")?.to_path_buf(),
    };
    must_exist(&inputs.attestations)?;
    must_exist(&inputs.census)?;
    must_exist(&inputs.zipmap)?;
    Ok(inputs)
}

fn ingest_panel(cfg: &RunConfig, inputs: &Inputs) -> Result<(PanelDataset, ZipMap)> {
    let zipmap = load_zip_map(&inputs.zipmap)?;
    let attestations = load_attestations(&inputs.attestations)?;
    let census = load_census(&inputs.census)?;
    if cfg.allow_unmapped {
        let offending = unmapped_zips(&attestations, &zipmap);
        if !offending.is_empty() {
            eprintln!(
                "warning: excluding {} unmapped zip(s): {}",
                offending.len(),
                offending.join(", ")
            );
        }
    }
    let panel = build_panel(
        &attestations,
        &census,
        &zipmap,
        cfg.frequency,
        cfg.allow_unmapped,
    )?;
    Ok((panel, zipmap))
}

fn load_panel(cfg: &RunConfig) -> Result<(PanelDataset, PathBuf)> {
    let path = require(&cfg.panel, "panel")?.to_path_buf();
    must_exist(&path)?;
    let panel = PanelDataset::read_csv(&path)?;
    Ok((panel, path))
}

type LagChoice = (usize, Option<Vec<(usize, f64)>>);

/// Resolve the lag order: fixed when configured, otherwise a BIC sweep.
fn resolve_lag(cfg: &RunConfig, tpanel: &TransformedPanel) -> Result<LagChoice> {
    match cfg.lag_order {
        Some(k) => Ok((k, None)),
        None => {
            let (k, curve) = select_lag(tpanel, cfg.k_max, &cfg.model_spec(1))?;
            Ok((k, Some(curve)))
        }
    }
}

fn exogenous_policy(
    cfg: &RunConfig,
    tpanel: &TransformedPanel,
    horizon: usize,
) -> Result<ExogenousPolicy> {
    match cfg.exog_policy {
        ExogPolicyChoice::HoldLast => Ok(ExogenousPolicy::HoldLast),
        ExogPolicyChoice::Provided => {
            let path = require(&cfg.exog_csv, "exog_csv")?;
            must_exist(path)?;
            let paths = read_exog_paths(path, tpanel, horizon)?;
            Ok(ExogenousPolicy::Provided(paths))
        }
    }
}

fn read_exog_paths(
    path: &Path,
    tpanel: &TransformedPanel,
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut paths = vec![vec![f64::NAN; horizon]; tpanel.n_units()];
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if idx == 0 || line.is_empty() {
            continue; // header
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx as u64 + 1,
                message: "expected unit_id,step,value".into(),
            });
        }
        let unit = tpanel
            .units
            .iter()
            .position(|u| u.id == parts[0])
            .ok_or_else(|| {
                Error::Alignment(format!("unknown unit '{}' in {}", parts[0], path.display()))
            })?;
        let step: usize = parts[1].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: idx as u64 + 1,
            message: format!("bad step '{}'", parts[1]),
        })?;
        if step == 0 || step > horizon {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx as u64 + 1,
                message: format!("step {step} outside 1..={horizon}"),
            });
        }
        paths[unit][step - 1] = parts[2].parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: idx as u64 + 1,
            message: format!("bad value '{}'", parts[2]),
        })?;
    }
    for (i, row) in paths.iter().enumerate() {
        if row.iter().any(|v| v.is_nan()) {
            return Err(Error::Alignment(format!(
                "incomplete indicator path for unit '{}'",
                tpanel.units[i].id
            )));
        }
    }
    Ok(paths)
}

fn forecast_csv(fs: &ForecastSet) -> String {
    let mut s = String::from("unit_id,date,predicted_census\n");
    for (i, unit) in fs.unit_ids.iter().enumerate() {
        for (step, date) in fs.dates.iter().enumerate() {
            s.push_str(&format!("{unit},{date},{}\n", fs.per_unit[i][step]));
        }
    }
    for (step, date) in fs.dates.iter().enumerate() {
        s.push_str(&format!("network,{date},{}\n", fs.network[step]));
    }
    s
}

fn plot_csv(rows: &[crate::forecast::PlotRow]) -> String {
    let mut s = String::from("unit_id,date,series,value\n");
    for row in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            row.unit_id, row.date, row.series, row.value
        ));
    }
    s
}

fn fit_summary_text(report: &FitReport, fits: &PanelFit) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "lagged panel fit: K = {}, {} units, {} rows, BIC {:.3}\n\n",
        report.lag_order, report.n_units, report.n_obs_total, report.bic_total
    ));
    if report.bic_curve.len() > 1 {
        s.push_str("lag sweep (order -> BIC):\n");
        for (k, b) in &report.bic_curve {
            let marker = if *k == report.lag_order {
                "  <- selected"
            } else {
                ""
            };
            s.push_str(&format!("  {k:>3}  {b:>14.3}{marker}\n"));
        }
        s.push('\n');
    }
    let k = report.lag_order;
    let pct = |v: f64| 100.0 * v;
    s.push_str(&format!(
        "{:<12} {:>10} {:>22} {:>12}\n",
        "unit",
        format!("b[lag {k}]"),
        format!("{:.0}% CI", pct(report.ci_level)),
        "Wald"
    ));
    for unit in &report.units {
        let b = &unit.beta[k - 1];
        s.push_str(&format!(
            "{:<12} {:>10.4} {:>22} {:>12.4}\n",
            unit.unit_id,
            b.estimate,
            format!("({:.4}, {:.4})", b.lo, b.hi),
            unit.wald
        ));
    }
    s.push('\n');
    for fit in &fits.fits {
        let effect = DoublingEffect::of(fit.beta[k - 1]);
        s.push_str(&format!("{}: {}\n", fit.unit_id, effect.describe()));
    }
    s
}

// ---------------------------------------------------------------------------
// Commands.

/// Generate a synthetic dataset triple plus the generating truth.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let mut sim = SimConfig::reference_with(cfg.sim_units, cfg.sim_days, cfg.seed);
    sim.true_lag = cfg.sim_true_lag;
    let data = simulate_raw(&sim)?;

    let mut sink = ArtifactSink::new(&cfg.out_dir)?;
    let mut att = String::from("date,zip,n_onsite,n_symptomatic\n");
    for r in &data.attestations {
        att.push_str(&format!(
            "{},{},{},{}\n",
            r.date, r.zip, r.n_onsite, r.n_symptomatic
        ));
    }
    sink.write_text("attestations.csv", &att)?;

    let mut census = String::from("date,unit_id,census\n");
    for r in &data.census {
        census.push_str(&format!("{},{},{}\n", r.date, r.unit_id, r.census));
    }
    sink.write_text("census.csv", &census)?;

    let mut zipmap = String::from("zip,unit_id,population,market_share_weight\n");
    for e in &data.zipmap.entries {
        zipmap.push_str(&format!(
            "{},{},{},{}\n",
            e.zip, e.unit_id, e.population, e.market_share_weight
        ));
    }
    sink.write_text("zipmap.csv", &zipmap)?;
    sink.write_json("truth.json", &data.truth)?;
    sink.finish("simulate", cfg, &[])?;

    println!(
        "simulated {} units x {} days (seed {}) -> {}",
        cfg.sim_units,
        cfg.sim_days,
        cfg.seed,
        cfg.out_dir.display()
    );
    Ok(())
}

/// Load and validate the CSV triple and write the aligned panel.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<()> {
    let inputs = resolve_inputs(cfg)?;
    let (panel, _zipmap) = ingest_panel(cfg, &inputs)?;

    let mut sink = ArtifactSink::new(&cfg.out_dir)?;
    let panel_path = cfg.out_dir.join("panel.csv");
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| Error::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;
    panel.write_csv(&panel_path)?;
    let bytes = std::fs::read(&panel_path).map_err(|source| Error::Io {
        path: panel_path.clone(),
        source,
    })?;
    sink.written.push(ManifestEntry {
        name: "panel.csv".into(),
        bytes: bytes.len() as u64,
        fnv64: format!("{:016x}", fnv1a64(&bytes)),
    });

    let total_y: f64 = panel.y.iter().flatten().sum();
    let total_x: f64 = panel.x.iter().flatten().sum();
    let summary = format!(
        "panel: {} units x {} {} periods, {} .. {}\ntotal target count {total_y}, total indicator count {total_x}\n",
        panel.n_units(),
        panel.n_periods(),
        match panel.frequency {
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
        },
        panel.calendar.first().unwrap(),
        panel.calendar.last().unwrap(),
    );
    sink.write_text("ingest_summary.txt", &summary)?;
    sink.finish(
        "ingest",
        cfg,
        &[&inputs.attestations, &inputs.census, &inputs.zipmap],
    )?;
    print!("{summary}");
    Ok(())
}

/// Transform, select the lag order, fit every unit, and write the fit report.
pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let (panel, panel_path) = load_panel(cfg)?;
    let tpanel = transform_panel(&panel, &cfg.transform_spec())?;
    let (k, curve) = resolve_lag(cfg, &tpanel)?;
    let pf = fit_panel(&tpanel, &cfg.model_spec(k))?;
    let report = FitReport::from_panel_fit(&pf, curve.as_deref())?;

    let mut sink = ArtifactSink::new(&cfg.out_dir)?;
    sink.write_json("fit.json", &report)?;
    let summary = fit_summary_text(&report, &pf);
    sink.write_text("fit_summary.txt", &summary)?;
    sink.finish("fit", cfg, &[&panel_path])?;
    print!("{summary}");
    Ok(())
}

/// Run the panel non-causality test and write the report.
pub fn cmd_test(cfg: &RunConfig) -> Result<()> {
    let (panel, panel_path) = load_panel(cfg)?;
    let result = granger_on_panel(cfg, &panel)?;

    let mut sink = ArtifactSink::new(&cfg.out_dir)?;
    sink.write_json("granger.json", &result)?;
    let report = result.render_report();
    sink.write_text("granger_report.txt", &report)?;
    sink.finish("test", cfg, &[&panel_path])?;
    print!("{report}");
    Ok(())
}

fn granger_on_panel(cfg: &RunConfig, panel: &PanelDataset) -> Result<GrangerResult> {
    match cfg.frequency {
        Frequency::Weekly => {
            let weekly = if panel.frequency == Frequency::Weekly {
                panel.clone()
            } else {
                panel.aggregate_weekly()?
            };
            let k = match cfg.lag_order {
                Some(k) => k,
                None => {
                    let tspec = TransformSpec {
                        ma_window: 1,
                        log_offset: cfg.log_offset.max(1.0),
                        smooth_target: true,
                    };
                    let tpanel = transform_panel(&weekly, &tspec)?;
                    let k_cap = cfg.k_max.min(weekly.n_periods().saturating_sub(2) / 3);
                    select_lag(&tpanel, k_cap.max(1), &cfg.model_spec(1))?.0
                }
            };
            let mut result = dh_test_weekly(&weekly, &cfg.model_spec(k))?;
            result.alpha = cfg.alpha;
            result.reject = result.p_fixed_t <= cfg.alpha;
            Ok(result)
        }
        Frequency::Daily => {
            let tpanel = transform_panel(panel, &cfg.transform_spec())?;
            let (k, _) = resolve_lag(cfg, &tpanel)?;
            let pf = fit_panel(&tpanel, &cfg.model_spec(k))?;
            dh_test_with_alpha(&pf, cfg.alpha)
        }
    }
}

/// Fit on the full panel and forecast `horizon` periods ahead.
pub fn cmd_forecast(cfg: &RunConfig) -> Result<()> {
    if cfg.horizon == 0 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    let (panel, panel_path) = load_panel(cfg)?;
    let tpanel = transform_panel(&panel, &cfg.transform_spec())?;
    let (k, _) = resolve_lag(cfg, &tpanel)?;
    let pf = fit_panel(&tpanel, &cfg.model_spec(k))?;
    let policy = exogenous_policy(cfg, &tpanel, cfg.horizon)?;
    let fs = forecast_panel(&pf, &tpanel, cfg.horizon, &policy)?;

    let mut sink = ArtifactSink::new(&cfg.out_dir)?;
    sink.write_json("forecast.json", &fs)?;
    sink.write_text("forecast.csv", &forecast_csv(&fs))?;
    if cfg.plot_data {
        let rows = plot_data(&pf, &tpanel, &fs)?;
        sink.write_text("plot_data.csv", &plot_csv(&rows))?;
    }
    sink.finish("forecast", cfg, &[&panel_path])?;
    println!(
        "forecast {} steps from {} for {} units (K = {k}); counts are exp(.) - {} \
         clipped at 0, with no lognormal bias correction",
        cfg.horizon,
        fs.origin,
        fs.unit_ids.len(),
        cfg.log_offset
    );
    Ok(())
}

/// Backtest: split a holdout, fit on the training window, score forecasts.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let (panel, panel_path) = load_panel(cfg)?;
    let zipmap = match &cfg.zipmap {
        Some(path) => {
            must_exist(path)?;
            load_zip_map(path)?
        }
        None => ZipMap::default(),
    };
    let outcome = backtest(cfg, &panel)?;
    let description = describe_panel(&panel, &zipmap)?;

    let mut sink = ArtifactSink::new(&cfg.out_dir)?;
    sink.write_json("eval.json", &outcome.report)?;
    sink.write_json("description.json", &description)?;
    sink.write_json("forecast.json", &outcome.forecasts)?;
    let mut table = render_table(&description, Some(&outcome.report));
    table.push_str(&format!(
        "\nnetwork: model MAE {:.3}, WMAPE {:.2}% | persistence MAE {:.3}, WMAPE {:.2}% | K = {}{}\n",
        outcome.report.network_mae,
        outcome.report.network_wmape * 100.0,
        outcome.baseline.network_mae,
        outcome.baseline.network_wmape * 100.0,
        outcome.lag_order,
        if cfg.rolling { " (rolling origin)" } else { "" },
    ));
    sink.write_text("eval_table.txt", &table)?;
    sink.finish("evaluate", cfg, &[&panel_path])?;
    print!("{table}");
    Ok(())
}

struct BacktestOutcome {
    report: EvalReport,
    baseline: EvalReport,
    forecasts: ForecastSet,
    lag_order: usize,
}

fn backtest(cfg: &RunConfig, panel: &PanelDataset) -> Result<BacktestOutcome> {
    let tpanel = transform_panel(panel, &cfg.transform_spec())?;
    let (train, holdout) = split_train_holdout(&tpanel, cfg.holdout_len)?;
    let (k, _) = resolve_lag(cfg, &train)?;
    let spec = cfg.model_spec(k);

    let forecasts = if cfg.rolling {
        rolling_one_step_forecasts(cfg, &tpanel, &spec)?
    } else {
        let pf = fit_panel(&train, &spec)?;
        let policy = exogenous_policy(cfg, &train, cfg.holdout_len)?;
        forecast_panel(&pf, &train, cfg.holdout_len, &policy)?
    };
    let report = evaluate_forecasts(&forecasts, &holdout)?;
    let baseline_fs = persistence_forecast(&train.base, cfg.holdout_len, cfg.log_offset);
    let baseline = evaluate_forecasts(&baseline_fs, &holdout)?;
    Ok(BacktestOutcome {
        report,
        baseline,
        forecasts,
        lag_order: k,
    })
}

/// Refit at every holdout step on all data through the previous period and
/// keep the one-step-ahead forecasts. Steps are independent refits, so they
/// run on the worker pool bounded by `--jobs`.
fn rolling_one_step_forecasts(
    cfg: &RunConfig,
    tpanel: &TransformedPanel,
    spec: &ModelSpec,
) -> Result<ForecastSet> {
    let h = cfg.holdout_len;
    let n = tpanel.n_units();
    let steps = crate::simulate::suite::parallel_map(cfg.jobs, h, |step| {
        let remaining = h - step;
        let (train, _) = split_train_holdout(tpanel, remaining)?;
        let pf = fit_panel(&train, spec)?;
        let fs = forecast_panel(&pf, &train, 1, &ExogenousPolicy::HoldLast)?;
        Ok::<_, Error>((*train.calendar.last().unwrap(), fs))
    });
    let mut per_unit = vec![Vec::with_capacity(h); n];
    let mut transformed = vec![Vec::with_capacity(h); n];
    let mut dates = Vec::with_capacity(h);
    let mut origin = None;
    for step in steps {
        let (train_end, fs) = step?;
        if origin.is_none() {
            origin = Some(train_end);
        }
        dates.push(fs.dates[0]);
        for i in 0..n {
            per_unit[i].push(fs.per_unit[i][0]);
            transformed[i].push(fs.transformed_scale[i][0]);
        }
    }
    let network = (0..h)
        .map(|s| per_unit.iter().map(|u| u[s]).sum())
        .collect();
    Ok(ForecastSet {
        origin: origin.unwrap(),
        horizon: h,
        dates,
        unit_ids: tpanel.units.iter().map(|u| u.id.clone()).collect(),
        per_unit,
        network,
        transformed_scale: transformed,
    })
}

/// Full chain: ingest, transform, lag sweep, fit, test, forecast, evaluate.
pub fn cmd_run_all(cfg: &RunConfig) -> Result<()> {
    let inputs = resolve_inputs(cfg)?;
    let (panel, zipmap) = ingest_panel(cfg, &inputs)?;

    let mut sink = ArtifactSink::new(&cfg.out_dir)?;
    let panel_path = cfg.out_dir.join("panel.csv");
    panel.write_csv(&panel_path)?;
    let bytes = std::fs::read(&panel_path).map_err(|source| Error::Io {
        path: panel_path.clone(),
        source,
    })?;
    sink.written.push(ManifestEntry {
        name: "panel.csv".into(),
        bytes: bytes.len() as u64,
        fnv64: format!("{:016x}", fnv1a64(&bytes)),
    });

    // Fit + lag sweep on the training window.
    let tpanel = transform_panel(&panel, &cfg.transform_spec())?;
    let (train, _holdout) = split_train_holdout(&tpanel, cfg.holdout_len)?;
    let (k, curve) = resolve_lag(cfg, &train)?;
    let pf = fit_panel(&train, &cfg.model_spec(k))?;
    let fit_report = FitReport::from_panel_fit(&pf, curve.as_deref())?;
    sink.write_json("fit.json", &fit_report)?;
    sink.write_text("fit_summary.txt", &fit_summary_text(&fit_report, &pf))?;

    // Non-causality test on the training fits.
    let granger = dh_test_with_alpha(&pf, cfg.alpha)?;
    sink.write_json("granger.json", &granger)?;
    sink.write_text("granger_report.txt", &granger.render_report())?;

    // Holdout forecast and scores.
    let outcome = backtest(cfg, &panel)?;
    sink.write_json("forecast.json", &outcome.forecasts)?;
    sink.write_text("forecast.csv", &forecast_csv(&outcome.forecasts))?;
    if cfg.plot_data {
        let rows = plot_data(&pf, &train, &outcome.forecasts)?;
        sink.write_text("plot_data.csv", &plot_csv(&rows))?;
    }
    sink.write_json("eval.json", &outcome.report)?;
    let description = describe_panel(&panel, &zipmap)?;
    sink.write_json("description.json", &description)?;
    let mut table = render_table(&description, Some(&outcome.report));
    table.push_str(&format!(
        "\nnetwork: model MAE {:.3}, WMAPE {:.2}% | persistence MAE {:.3}, WMAPE {:.2}%\n",
        outcome.report.network_mae,
        outcome.report.network_wmape * 100.0,
        outcome.baseline.network_mae,
        outcome.baseline.network_wmape * 100.0,
    ));
    sink.write_text("eval_table.txt", &table)?;

    let summary = format!(
        "run-all: {} units, {} periods, K = {k}, {} at alpha = {}\nnetwork holdout MAE {:.3} (WMAPE {:.2}%)\n",
        panel.n_units(),
        panel.n_periods(),
        if granger.reject {
            "non-causality REJECTED"
        } else {
            "non-causality not rejected"
        },
        cfg.alpha,
        outcome.report.network_mae,
        outcome.report.network_wmape * 100.0,
    );
    sink.write_text("run_summary.txt", &summary)?;
    sink.finish(
        "run-all",
        cfg,
        &[&inputs.attestations, &inputs.census, &inputs.zipmap],
    )?;
    print!("{summary}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_hash_is_stable() {
        // Published FNV-1a test vector.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn config_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# comment\nma_window = 5\nfrequency = weekly\nsmooth_target = false\n\nk_max = 3 # inline\n",
        )
        .unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.ma_window, 5);
        assert_eq!(cfg.frequency, Frequency::Weekly);
        assert!(!cfg.smooth_target);
        assert_eq!(cfg.k_max, 3);
    }

    #[test]
    fn unknown_config_key_is_config_error() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_kv("no_such_key", "1").unwrap_err();
        assert_eq!(err.class(), crate::error::ErrorClass::Config);
    }

    #[test]
    fn missing_file_is_data_error() {
        let cfg = RunConfig {
            attestations: Some(PathBuf::from("/nonexistent/a.csv")),
            census: Some(PathBuf::from("/nonexistent/c.csv")),
            zipmap: Some(PathBuf::from("/nonexistent/z.csv")),
            ..RunConfig::default()
        };
        let err = cmd_run_all(&cfg).unwrap_err();
        assert_eq!(err.class(), crate::error::ErrorClass::Data);
        assert!(err.to_string().contains("/nonexistent/a.csv"));
    }
}
