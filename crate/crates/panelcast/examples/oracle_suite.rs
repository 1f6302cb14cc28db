//! Monte Carlo validation suite: test size and null normality, power,
//! lag recovery, coefficient recovery, and forecast quality.
//!
//! Run with: cargo run --example oracle_suite --release
//! Pass `quick` for reduced replication counts, or a number to reseed:
//! cargo run --example oracle_suite --release -- quick 7

use panelcast::simulate::suite::{run_oracle_suite, SuiteConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let quick = args.iter().any(|a| a == "quick");
    let seed = args
        .iter()
        .find_map(|a| a.parse::<u64>().ok())
        .unwrap_or(20200402);

    let cfg = if quick {
        SuiteConfig::quick(seed)
    } else {
        SuiteConfig::new(seed)
    };
    println!(
        "running suite: seed {seed}, jobs {}, replications (size {}, power {}, lag {}, coef {}, forecast {})",
        cfg.jobs,
        cfg.size_replications,
        cfg.power_replications,
        cfg.lag_recovery_replications,
        cfg.coefficient_replications,
        cfg.forecast_replications
    );
    let started = std::time::Instant::now();
    match run_oracle_suite(&cfg) {
        Ok(report) => {
            print!("{}", report.render());
            println!(
                "suite {} in {:.1}s",
                if report.all_pass() {
                    "PASSED"
                } else {
                    "FAILED"
                },
                started.elapsed().as_secs_f64()
            );
            if !report.all_pass() {
                std::process::exit(1);
            }
        }
        Err(err) => {
            eprintln!("suite error: {err}");
            std::process::exit(1);
        }
    }
}
