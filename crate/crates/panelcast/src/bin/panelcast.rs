//! Thin command-line front end; all work happens in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use panelcast::cli::{self, ExogPolicyChoice, RunConfig};
use panelcast::error::ErrorClass;
use panelcast::ingest::Frequency;

#[derive(Parser)]
#[command(
    name = "panelcast",
    version,
    about = "Heterogeneous-panel lagged regression, panel Granger non-causality testing, \
             BIC lag selection, and short-horizon count forecasting",
    after_help = "Config file: flat `key = value` lines ('#' comments). Keys mirror the \
                  long flags: attestations, census, zipmap, panel, out_dir, frequency, \
                  ma_window, log_offset, smooth_target, k_max, lag_order, holdout_len, \
                  horizon, exog_policy, exog_csv, allow_unmapped, alpha, ci_level, seed, \
                  jobs, timestamps, plot_data, rolling, sim_units, sim_days, sim_true_lag. \
                  Flags override file values. Exit codes: 2 config error, 3 data error, \
                  4 numerical error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct CommonArgs {
    /// Flat key = value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replication-level parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Stamp wall-clock timestamps into manifests (off keeps runs byte-identical).
    #[arg(long)]
    timestamps: bool,
}

#[derive(Args, Default)]
struct TransformArgs {
    /// Trailing moving-average window (periods).
    #[arg(long)]
    ma_window: Option<usize>,
    /// Offset added before taking logs.
    #[arg(long)]
    log_offset: Option<f64>,
    /// Smooth the target series as well as the indicator.
    #[arg(long)]
    smooth_target: Option<bool>,
}

#[derive(Args, Default)]
struct LagArgs {
    /// Upper bound of the BIC lag sweep.
    #[arg(long)]
    k_max: Option<usize>,
    /// Fixed lag order (skips the sweep).
    #[arg(long)]
    lag: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic attestations/census/zipmap triple with known truth.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Units to simulate.
        #[arg(long)]
        units: Option<usize>,
        /// Days to simulate.
        #[arg(long)]
        days: Option<usize>,
        /// Causal delay from symptoms to census, in days.
        #[arg(long)]
        true_lag: Option<usize>,
        /// Seed (fully determines the output).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate the CSV triple and emit an aligned panel.
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        inputs: InputArgs,
        /// Panel frequency.
        #[arg(long)]
        frequency: Option<Frequency>,
        /// Exclude (rather than reject) attestation zips missing from the map.
        #[arg(long)]
        allow_unmapped: bool,
    },
    /// Select the lag order by BIC and fit every unit's lagged regression.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Panel CSV produced by `ingest`.
        #[arg(long)]
        panel: Option<PathBuf>,
        #[command(flatten)]
        transform: TransformArgs,
        #[command(flatten)]
        lag: LagArgs,
        /// Confidence level for reported intervals.
        #[arg(long)]
        ci_level: Option<f64>,
    },
    /// Run the panel Granger non-causality test.
    Test {
        #[command(flatten)]
        common: CommonArgs,
        /// Panel CSV produced by `ingest`.
        #[arg(long)]
        panel: Option<PathBuf>,
        #[command(flatten)]
        transform: TransformArgs,
        #[command(flatten)]
        lag: LagArgs,
        /// Run at daily or weekly frequency (weekly aggregates first).
        #[arg(long)]
        frequency: Option<Frequency>,
        /// Significance threshold.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Fit on the full panel and forecast ahead.
    Forecast {
        #[command(flatten)]
        common: CommonArgs,
        /// Panel CSV produced by `ingest`.
        #[arg(long)]
        panel: Option<PathBuf>,
        #[command(flatten)]
        transform: TransformArgs,
        #[command(flatten)]
        lag: LagArgs,
        /// Steps ahead.
        #[arg(long)]
        horizon: Option<usize>,
        /// Fill policy for future indicator values.
        #[arg(long)]
        exog_policy: Option<String>,
        /// What-if indicator paths (CSV unit_id,step,value on the transformed scale).
        #[arg(long)]
        exog_csv: Option<PathBuf>,
        /// Also emit plot_data.csv (observed + fitted + forecast rows).
        #[arg(long)]
        plot_data: bool,
    },
    /// Backtest: hold out the final window, fit before it, score forecasts.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Panel CSV produced by `ingest`.
        #[arg(long)]
        panel: Option<PathBuf>,
        /// Zip map CSV (enables the population-share column).
        #[arg(long)]
        zipmap: Option<PathBuf>,
        #[command(flatten)]
        transform: TransformArgs,
        #[command(flatten)]
        lag: LagArgs,
        /// Holdout length in periods.
        #[arg(long)]
        holdout: Option<usize>,
        /// Refit at every holdout step and score one-step forecasts.
        #[arg(long)]
        rolling: bool,
    },
    /// Chain ingest, lag sweep, fit, test, forecast, and evaluation.
    RunAll {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        transform: TransformArgs,
        #[command(flatten)]
        lag: LagArgs,
        /// Panel frequency.
        #[arg(long)]
        frequency: Option<Frequency>,
        /// Exclude (rather than reject) attestation zips missing from the map.
        #[arg(long)]
        allow_unmapped: bool,
        /// Holdout length in periods.
        #[arg(long)]
        holdout: Option<usize>,
        /// Significance threshold.
        #[arg(long)]
        alpha: Option<f64>,
        /// Also emit plot_data.csv.
        #[arg(long)]
        plot_data: bool,
    },
}

#[derive(Args, Default)]
struct InputArgs {
    /// Attestation counts CSV (date,zip,n_onsite,n_symptomatic).
    #[arg(long)]
    attestations: Option<PathBuf>,
    /// Census CSV (date,unit_id,census).
    #[arg(long)]
    census: Option<PathBuf>,
    /// Zip map CSV (zip,unit_id,population,market_share_weight).
    #[arg(long)]
    zipmap: Option<PathBuf>,
}

fn base_config(common: &CommonArgs) -> Result<RunConfig, panelcast::error::Error> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    if common.timestamps {
        cfg.timestamps = true;
    }
    Ok(cfg)
}

fn apply_transform(cfg: &mut RunConfig, t: &TransformArgs) {
    if let Some(w) = t.ma_window {
        cfg.ma_window = w;
    }
    if let Some(o) = t.log_offset {
        cfg.log_offset = o;
    }
    if let Some(s) = t.smooth_target {
        cfg.smooth_target = s;
    }
}

fn apply_lag(cfg: &mut RunConfig, l: &LagArgs) {
    if let Some(k) = l.k_max {
        cfg.k_max = k;
    }
    if let Some(k) = l.lag {
        cfg.lag_order = Some(k);
    }
}

fn apply_inputs(cfg: &mut RunConfig, i: &InputArgs) {
    if let Some(p) = &i.attestations {
        cfg.attestations = Some(p.clone());
    }
    if let Some(p) = &i.census {
        cfg.census = Some(p.clone());
    }
    if let Some(p) = &i.zipmap {
        cfg.zipmap = Some(p.clone());
    }
}

fn run() -> Result<(), panelcast::error::Error> {
    match Cli::parse().command {
        Command::Simulate {
            common,
            units,
            days,
            true_lag,
            seed,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(u) = units {
                cfg.sim_units = u;
            }
            if let Some(d) = days {
                cfg.sim_days = d;
            }
            if let Some(l) = true_lag {
                cfg.sim_true_lag = l;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cli::cmd_simulate(&cfg)
        }
        Command::Ingest {
            common,
            inputs,
            frequency,
            allow_unmapped,
        } => {
            let mut cfg = base_config(&common)?;
            apply_inputs(&mut cfg, &inputs);
            if let Some(f) = frequency {
                cfg.frequency = f;
            }
            if allow_unmapped {
                cfg.allow_unmapped = true;
            }
            cli::cmd_ingest(&cfg)
        }
        Command::Fit {
            common,
            panel,
            transform,
            lag,
            ci_level,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(p) = panel {
                cfg.panel = Some(p);
            }
            apply_transform(&mut cfg, &transform);
            apply_lag(&mut cfg, &lag);
            if let Some(c) = ci_level {
                cfg.ci_level = c;
            }
            cli::cmd_fit(&cfg)
        }
        Command::Test {
            common,
            panel,
            transform,
            lag,
            frequency,
            alpha,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(p) = panel {
                cfg.panel = Some(p);
            }
            apply_transform(&mut cfg, &transform);
            apply_lag(&mut cfg, &lag);
            if let Some(f) = frequency {
                cfg.frequency = f;
            }
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            cli::cmd_test(&cfg)
        }
        Command::Forecast {
            common,
            panel,
            transform,
            lag,
            horizon,
            exog_policy,
            exog_csv,
            plot_data,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(p) = panel {
                cfg.panel = Some(p);
            }
            apply_transform(&mut cfg, &transform);
            apply_lag(&mut cfg, &lag);
            if let Some(h) = horizon {
                cfg.horizon = h;
            }
            if let Some(policy) = exog_policy {
                cfg.exog_policy = policy.parse::<ExogPolicyChoice>()?;
            }
            if let Some(p) = exog_csv {
                cfg.exog_csv = Some(p);
            }
            if plot_data {
                cfg.plot_data = true;
            }
            cli::cmd_forecast(&cfg)
        }
        Command::Evaluate {
            common,
            panel,
            zipmap,
            transform,
            lag,
            holdout,
            rolling,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(p) = panel {
                cfg.panel = Some(p);
            }
            if let Some(z) = zipmap {
                cfg.zipmap = Some(z);
            }
            apply_transform(&mut cfg, &transform);
            apply_lag(&mut cfg, &lag);
            if let Some(h) = holdout {
                cfg.holdout_len = h;
            }
            if rolling {
                cfg.rolling = true;
            }
            cli::cmd_evaluate(&cfg)
        }
        Command::RunAll {
            common,
            inputs,
            transform,
            lag,
            frequency,
            allow_unmapped,
            holdout,
            alpha,
            plot_data,
        } => {
            let mut cfg = base_config(&common)?;
            apply_inputs(&mut cfg, &inputs);
            apply_transform(&mut cfg, &transform);
            apply_lag(&mut cfg, &lag);
            if let Some(f) = frequency {
                cfg.frequency = f;
            }
            if allow_unmapped {
                cfg.allow_unmapped = true;
            }
            if let Some(h) = holdout {
                cfg.holdout_len = h;
            }
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            if plot_data {
                cfg.plot_data = true;
            }
            cli::cmd_run_all(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}
