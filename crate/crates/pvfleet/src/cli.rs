//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 invalid data or config, 3 runtime
//! failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::fleet::{compute_metrics, read_aggregate_csv};
use crate::profiles::{
    dataset_summary, import_gross_meter_csv, read_capacity_map_csv, read_profiles_csv,
    validate_and_filter, write_profiles_csv, INTERVALS_PER_DAY,
};
use crate::scenario::{read_config, run_suite, Sensitivity};
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pvfleet",
    version,
    about = "Household PV-battery investment and grid-utilisation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a normalised profiles CSV against the dataset invariants.
    Validate {
        /// Normalised profiles CSV.
        data: PathBuf,
    },
    /// Print aggregate statistics of a normalised profiles CSV.
    Summary {
        data: PathBuf,
    },
    /// Run the scenario suite described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses all cores (overrides the config).
        #[arg(long)]
        workers: Option<usize>,
        /// Feed-in fractions to sweep (overrides the config; repeatable).
        #[arg(long = "fit", value_name = "FRACTION")]
        fit: Vec<f64>,
        /// Sensitivity preset (overrides the config).
        #[arg(long, value_enum)]
        sensitivity: Option<Sensitivity>,
        /// Dump per-household interval-level dispatch traces.
        #[arg(long)]
        trace: bool,
        /// Reserved: the model is deterministic and seed-free.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute the operational metrics of an aggregate profile CSV.
    Metrics {
        /// Profile CSV: timestamp_iso8601,net_kw.
        profile: PathBuf,
        /// Underlying-demand profile CSV; defaults to the profile itself.
        #[arg(long)]
        underlying: Option<PathBuf>,
        /// Write metrics.csv and curves.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a gross-meter export into the normalised layout.
    ConvertAusgrid {
        /// Raw gross-meter CSV (long or vendor wide layout).
        raw: PathBuf,
        /// Sidecar capacity map: household_id,declared_kwp.
        capacities: PathBuf,
        /// Output path for the normalised CSV.
        #[arg(long, default_value = "profiles.csv")]
        out: PathBuf,
    },
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_invalid_input() {
                2
            } else {
                3
            }
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Validate { data } => cmd_validate(&data),
        Command::Summary { data } => cmd_summary(&data),
        Command::Run {
            config,
            out,
            workers,
            fit,
            sensitivity,
            trace,
            seed,
        } => cmd_run(&config, out, workers, fit, sensitivity, trace, seed),
        Command::Metrics {
            profile,
            underlying,
            out,
        } => cmd_metrics(&profile, underlying.as_deref(), out.as_deref()),
        Command::ConvertAusgrid {
            raw,
            capacities,
            out,
        } => cmd_convert(&raw, &capacities, &out),
    }
}

fn cmd_validate(data: &std::path::Path) -> Result<i32> {
    let (dataset, import_report) = read_profiles_csv(data)?;
    let total = dataset.len();
    let (kept, rejections) = validate_and_filter(dataset);
    for e in &import_report.row_errors {
        println!("row {}: {}", e.line, e.message);
    }
    if import_report.row_error_count > import_report.row_errors.len() as u64 {
        println!(
            "... and {} more skipped rows",
            import_report.row_error_count - import_report.row_errors.len() as u64
        );
    }
    for r in &rejections.rejected {
        println!("household {} rejected: {}", r.household_id, r.reason);
    }
    println!(
        "{} of {} households valid, {} rejected, {} rows skipped",
        kept.len(),
        total,
        rejections.rejected.len(),
        import_report.row_error_count
    );
    let clean = rejections.is_clean() && import_report.row_error_count == 0 && !kept.is_empty();
    Ok(if clean { 0 } else { 2 })
}

fn cmd_summary(data: &std::path::Path) -> Result<i32> {
    let (dataset, _) = read_profiles_csv(data)?;
    let (dataset, rejections) = validate_and_filter(dataset);
    if !rejections.is_clean() {
        println!("note: {} households excluded by validation", rejections.rejected.len());
    }
    let s = dataset_summary(&dataset)?;
    println!("households: {}", s.households);
    println!("total annual demand: {:.2} MWh", s.total_demand_mwh);
    println!("mean annual demand: {:.2} MWh/household", s.mean_demand_mwh);
    println!(
        "mean PV capacity factor: {:.1} %",
        s.mean_capacity_factor * 100.0
    );
    println!(
        "aggregate peak demand: {:.1} kW at {} ({})",
        s.peak_demand_kw,
        s.peak_timestamp.format("%Y-%m-%dT%H:%M:%S"),
        crate::fleet::Season::of_month(chrono::Datelike::month(&s.peak_timestamp)),
    );
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config_path: &std::path::Path,
    out: Option<PathBuf>,
    workers: Option<usize>,
    fit: Vec<f64>,
    sensitivity: Option<Sensitivity>,
    trace: bool,
    seed: Option<u64>,
) -> Result<i32> {
    if seed.is_some() {
        log::warn!("--seed is reserved; the model is deterministic and seed-free");
    }
    let mut config = read_config(config_path)?;
    if let Some(out) = out {
        config.out_dir = out;
    }
    if let Some(workers) = workers {
        config.workers = workers;
    }
    if !fit.is_empty() {
        config.fit_fractions = fit;
    }
    if let Some(s) = sensitivity {
        config.sensitivity = s;
    }
    if trace {
        config.trace = true;
    }
    let suite = config.build()?;
    let manifest = run_suite(&suite)?;
    println!(
        "ran {} scenario(s) over {} households in {:.1} s",
        manifest.scenarios.len(),
        manifest.households,
        manifest.wall_clock_seconds
    );
    println!("outputs in {}", suite.out_dir.display());
    Ok(0)
}

fn interval_label(k: usize) -> String {
    format!("{:02}:{:02}", k / 2, (k % 2) * 30)
}

fn top_bins(histogram: &[f64]) -> String {
    let mut indexed: Vec<(usize, f64)> = histogram.iter().cloned().enumerate().collect();
    indexed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    indexed
        .iter()
        .take(3)
        .filter(|(_, v)| *v > 0.0)
        .map(|(k, v)| format!("{} ({v:.0}%)", interval_label(*k)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn cmd_metrics(
    profile_path: &std::path::Path,
    underlying_path: Option<&std::path::Path>,
    out: Option<&std::path::Path>,
) -> Result<i32> {
    let profile = read_aggregate_csv(profile_path, "profile", 0)?;
    let underlying = match underlying_path {
        Some(p) => read_aggregate_csv(p, "underlying", 0)?,
        None => profile.clone(),
    };
    let m = compute_metrics(&profile, &underlying)?;
    println!(
        "intervals: {} ({} days)",
        profile.intervals(),
        profile.intervals() / INTERVALS_PER_DAY
    );
    println!("annual grid-imports: {:.3} MWh", m.imports_mwh);
    if let Some(dep) = m.grid_dependency {
        println!("grid dependency: {:.1} %", dep * 100.0);
    }
    println!(
        "annual peak demand: {:.2} kW at {} ({})",
        m.peak_demand_kw,
        m.peak_timestamp.format("%Y-%m-%dT%H:%M:%S"),
        m.peak_season
    );
    println!("annual grid-exports: {:.3} MWh", m.exports_mwh);
    match m.peak_feed_in_of_underlying_peak {
        Some(frac) => println!(
            "annual peak feed-in: {:.2} kW ({:.0}% of underlying peak)",
            m.peak_feed_in_kw,
            frac * 100.0
        ),
        None => println!("annual peak feed-in: {:.2} kW", m.peak_feed_in_kw),
    }
    println!("peak timing: {}", top_bins(&m.peak_timing_histogram_pct));
    println!(
        "minimum timing: {}",
        top_bins(&m.minimum_timing_histogram_pct)
    );
    println!("peak ramp up: {:.2} kW/min", m.peak_ramp_up_kw_per_min);
    println!("peak ramp down: {:.2} kW/min", m.peak_ramp_down_kw_per_min);

    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::scenario::write_standalone_metrics(dir, &profile, &m)?;
        println!("wrote {}", dir.display());
    }
    Ok(0)
}

fn cmd_convert(
    raw: &std::path::Path,
    capacities: &std::path::Path,
    out: &std::path::Path,
) -> Result<i32> {
    let caps = read_capacity_map_csv(capacities)?;
    let (dataset, report) = import_gross_meter_csv(raw, &caps)?;
    let total = dataset.len();
    let (kept, rejections) = validate_and_filter(dataset);
    for w in &report.warnings {
        println!("warning: {w}");
    }
    if report.row_error_count > 0 {
        println!("{} rows skipped (first few follow)", report.row_error_count);
        for e in report.row_errors.iter().take(10) {
            println!("  row {}: {}", e.line, e.message);
        }
    }
    for r in &rejections.rejected {
        println!("household {} excluded: {}", r.household_id, r.reason);
    }
    write_profiles_csv(&kept, out)?;
    println!(
        "converted {} of {} households into {}",
        kept.len(),
        total,
        out.display()
    );
    Ok(0)
}
