//! Scenario orchestration: sweep feed-in-tariff fractions over the whole
//! fleet, aggregate per year, classify grid-operation stages, compute the
//! metrics suite and write plot-ready outputs plus a reproducibility
//! manifest.

mod config;
mod outputs;

pub use config::{parse_config, read_config, RunConfig};
pub use outputs::{ManifestScenario, MetricsRow, RunManifest};

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dispatch::TechnicalParams;
use crate::finance::ScenarioParams;
use crate::fleet::{
    aggregate_underlying, classify_stage, compute_metrics, AggregateProfile, StageLabel,
    YearMetrics,
};
use crate::investor::{
    simulate_household_with, CandidateGrid, InvestmentRecord,
};
use crate::profiles::{power_kw, read_profiles_from_reader, validate_and_filter, FleetDataset};
use crate::{Error, Result};

/// Sensitivity presets: overrides of the four growth/discount parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Sensitivity {
    Reference,
    Low,
    High,
}

impl Sensitivity {
    pub fn name(&self) -> &'static str {
        match self {
            Sensitivity::Reference => "reference",
            Sensitivity::Low => "low",
            Sensitivity::High => "high",
        }
    }
}

/// Apply a sensitivity preset; all other fields are untouched.
pub fn apply_sensitivity(base: &ScenarioParams, preset: Sensitivity) -> ScenarioParams {
    let mut params = base.clone();
    match preset {
        Sensitivity::Reference => {}
        Sensitivity::Low => {
            params.discount_rate = 0.10;
            params.tariff_growth = 0.02;
            params.pv_cost_growth = -0.03;
            params.battery_cost_growth = -0.04;
        }
        Sensitivity::High => {
            params.discount_rate = 0.02;
            params.tariff_growth = 0.08;
            params.pv_cost_growth = -0.09;
            params.battery_cost_growth = -0.12;
        }
    }
    params
}

/// Everything a suite run needs: base parameters, the scenarios to sweep,
/// input and output locations.
#[derive(Debug, Clone)]
pub struct ScenarioSuite {
    pub base: ScenarioParams,
    pub tech: TechnicalParams,
    pub grid: CandidateGrid,
    pub fit_fractions: Vec<f64>,
    pub sensitivity: Sensitivity,
    pub dataset_path: PathBuf,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub trace: bool,
}

/// Scenario name for a feed-in fraction, e.g. 0.25 → "FiT25".
pub fn fit_label(fit_fraction: f64) -> String {
    let pct = fit_fraction * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("FiT{}", pct.round() as i64)
    } else {
        format!("FiT{pct:.1}")
    }
}

/// One scenario-year of the fleet: averages, stage, aggregate profile and
/// metrics.
#[derive(Debug, Clone)]
pub struct ScenarioYearReport {
    /// Simulation year (1-based).
    pub t: u32,
    pub calendar_year: i32,
    pub avg_pv_kw: f64,
    pub avg_battery_kwh: f64,
    pub stage: StageLabel,
    pub profile: AggregateProfile,
    pub metrics: YearMetrics,
}

/// One installed investment with the household's cumulative capacities.
#[derive(Debug, Clone)]
pub struct InvestmentLogRow {
    pub household_id: String,
    pub record: InvestmentRecord,
    pub cumulative_pv_kw: f64,
    pub cumulative_battery_kwh: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub name: String,
    pub fit_fraction: f64,
    pub years: Vec<ScenarioYearReport>,
    pub investments: Vec<InvestmentLogRow>,
}

/// Households per aggregation chunk. Fixed so that the floating-point
/// summation order is identical for any worker count.
const AGGREGATION_CHUNK: usize = 16;

struct ChunkOutcome {
    residual_kwh: Vec<Vec<f64>>,
    pv_sum: Vec<f64>,
    battery_sum: Vec<f64>,
    investments: Vec<InvestmentLogRow>,
}

/// Simulate every household under one scenario and aggregate the fleet.
/// Households run in parallel; aggregation order is deterministic.
pub fn run_scenario(
    dataset: &FleetDataset,
    name: &str,
    params: &ScenarioParams,
    tech: &TechnicalParams,
    grid: &CandidateGrid,
    underlying: &AggregateProfile,
    trace_dir: Option<&Path>,
) -> Result<ScenarioResult> {
    let start_date = dataset
        .start_date()
        .ok_or_else(|| Error::InvalidData("scenario run on an empty dataset".to_string()))?;
    let sim_years = params.sim_years as usize;
    let intervals = dataset.households[0].intervals();

    let chunk_results: Vec<Result<ChunkOutcome>> = dataset
        .households
        .par_chunks(AGGREGATION_CHUNK)
        .map(|households| {
            let mut outcome = ChunkOutcome {
                residual_kwh: vec![vec![0.0; intervals]; sim_years],
                pv_sum: vec![0.0; sim_years],
                battery_sum: vec![0.0; sim_years],
                investments: Vec::new(),
            };
            for household in households {
                let mut trace_error: Option<Error> = None;
                let mut trace_writer = match trace_dir {
                    Some(dir) => {
                        let path = dir.join(format!("{}.csv", household.household_id));
                        let mut w = csv::Writer::from_path(&path)
                            .map_err(|e| Error::InvalidData(format!("trace {}: {e}", path.display())))?;
                        w.write_record([
                            "calendar_year",
                            "timestamp",
                            "grid_import_kwh",
                            "grid_export_kwh",
                            "pv_direct_use_kwh",
                            "battery_charge_in_kwh",
                            "battery_discharge_out_kwh",
                            "soc_kwh",
                        ])
                        .map_err(|e| Error::InvalidData(format!("trace write: {e}")))?;
                        Some(w)
                    }
                    None => None,
                };
                let sim = simulate_household_with(
                    household,
                    params,
                    tech,
                    grid.clone(),
                    |t, dispatch| {
                        if let (Some(w), None) = (&mut trace_writer, &trace_error) {
                            let year = params.calendar_year(t);
                            for i in 0..dispatch.intervals() {
                                let row = [
                                    year.to_string(),
                                    household.timestamp(i).format("%Y-%m-%dT%H:%M:%S").to_string(),
                                    dispatch.grid_import[i].to_string(),
                                    dispatch.grid_export[i].to_string(),
                                    dispatch.pv_direct_use[i].to_string(),
                                    dispatch.battery_charge_in[i].to_string(),
                                    dispatch.battery_discharge_out[i].to_string(),
                                    dispatch.soc[i].to_string(),
                                ];
                                if let Err(e) = w.write_record(row) {
                                    trace_error =
                                        Some(Error::InvalidData(format!("trace write: {e}")));
                                    break;
                                }
                            }
                        }
                    },
                );
                if let Some(e) = trace_error {
                    return Err(e);
                }
                for (y, year) in sim.years.iter().enumerate() {
                    outcome.pv_sum[y] += year.pv_nameplate_kw;
                    outcome.battery_sum[y] += year.battery_nameplate_kwh;
                    let acc = &mut outcome.residual_kwh[y];
                    for (a, r) in acc.iter_mut().zip(&year.residual_kwh) {
                        *a += r;
                    }
                }
                outcome
                    .investments
                    .extend(sim.years.iter().filter_map(|year| {
                        year.investment.as_ref().map(|record| InvestmentLogRow {
                            household_id: sim.household_id.clone(),
                            record: record.clone(),
                            cumulative_pv_kw: year.pv_nameplate_kw,
                            cumulative_battery_kwh: year.battery_nameplate_kwh,
                        })
                    }));
            }
            Ok(outcome)
        })
        .collect();

    let mut residual_kwh = vec![vec![0.0f64; intervals]; sim_years];
    let mut pv_sum = vec![0.0f64; sim_years];
    let mut battery_sum = vec![0.0f64; sim_years];
    let mut investments = Vec::new();
    for chunk in chunk_results {
        let chunk = chunk?;
        for y in 0..sim_years {
            pv_sum[y] += chunk.pv_sum[y];
            battery_sum[y] += chunk.battery_sum[y];
            let acc = &mut residual_kwh[y];
            for (a, r) in acc.iter_mut().zip(&chunk.residual_kwh[y]) {
                *a += r;
            }
        }
        investments.extend(chunk.investments);
    }

    let n = dataset.households.len() as f64;
    let mut years = Vec::with_capacity(sim_years);
    for (y, residual) in residual_kwh.into_iter().enumerate() {
        let t = y as u32 + 1;
        let calendar_year = params.calendar_year(t);
        let profile = AggregateProfile {
            scenario: name.to_string(),
            year: calendar_year,
            start_date,
            net_kw: residual.into_iter().map(power_kw).collect(),
        };
        let metrics = compute_metrics(&profile, underlying)?;
        let avg_pv_kw = pv_sum[y] / n;
        let avg_battery_kwh = battery_sum[y] / n;
        years.push(ScenarioYearReport {
            t,
            calendar_year,
            avg_pv_kw,
            avg_battery_kwh,
            stage: classify_stage(avg_pv_kw, avg_battery_kwh),
            profile,
            metrics,
        });
    }

    Ok(ScenarioResult {
        name: name.to_string(),
        fit_fraction: params.fit_fraction,
        years,
        investments,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the semantic run inputs (parameters, grid, scenarios, preset);
/// output locations and worker counts do not affect results and are
/// excluded.
fn config_hash(suite: &ScenarioSuite) -> Result<String> {
    let semantic = serde_json::json!({
        "base": suite.base,
        "tech": suite.tech,
        "grid": suite.grid,
        "fit_fractions": suite.fit_fractions,
        "sensitivity": suite.sensitivity.name(),
    });
    Ok(sha256_hex(
        serde_json::to_string(&semantic)
            .map_err(|e| Error::Invalid(format!("config hash: {e}")))?
            .as_bytes(),
    ))
}

/// Run the whole suite end-to-end and write all outputs.
///
/// Fails before any scenario output is written if the dataset is unreadable,
/// fails validation entirely, or the output directory cannot be created.
pub fn run_suite(suite: &ScenarioSuite) -> Result<RunManifest> {
    let started = Instant::now();
    suite.base.validate()?;
    suite.tech.validate()?;
    suite.grid.validate()?;
    if suite.fit_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidConfig("fit_fractions must lie in [0, 1]".to_string()));
    }

    let raw = fs::read(&suite.dataset_path).map_err(|e| Error::io(&suite.dataset_path, e))?;
    let dataset_fingerprint = sha256_hex(&raw);
    let (dataset, import_report) = read_profiles_from_reader(
        &raw[..],
        &format!("normalised csv import: {}", suite.dataset_path.display()),
    )?;
    drop(raw);
    if import_report.row_error_count > 0 {
        log::warn!(
            "{} rows skipped while reading {}",
            import_report.row_error_count,
            suite.dataset_path.display()
        );
    }
    let (dataset, rejections) = validate_and_filter(dataset);
    for rejected in &rejections.rejected {
        log::warn!(
            "household {} excluded: {}",
            rejected.household_id,
            rejected.reason
        );
    }
    if dataset.is_empty() {
        return Err(Error::InvalidData(format!(
            "no valid households in {}",
            suite.dataset_path.display()
        )));
    }

    fs::create_dir_all(&suite.out_dir).map_err(|e| Error::io(&suite.out_dir, e))?;
    for fit in &suite.fit_fractions {
        let dir = suite.out_dir.join(fit_label(*fit));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        if suite.trace {
            let trace = dir.join("trace");
            fs::create_dir_all(&trace).map_err(|e| Error::io(&trace, e))?;
        }
    }

    let params_base = apply_sensitivity(&suite.base, suite.sensitivity);
    let underlying = aggregate_underlying(&dataset, params_base.sim_start_year)?;
    let underlying_metrics = compute_metrics(&underlying, &underlying)?;

    let run_all = || -> Result<Vec<ScenarioResult>> {
        let mut results = Vec::with_capacity(suite.fit_fractions.len());
        for fit in &suite.fit_fractions {
            let name = fit_label(*fit);
            let mut params = params_base.clone();
            params.fit_fraction = *fit;
            let trace_dir = suite.trace.then(|| suite.out_dir.join(&name).join("trace"));
            results.push(run_scenario(
                &dataset,
                &name,
                &params,
                &suite.tech,
                &suite.grid,
                &underlying,
                trace_dir.as_deref(),
            )?);
        }
        Ok(results)
    };
    let results = if suite.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(suite.workers)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
        pool.install(run_all)?
    } else {
        run_all()?
    };

    // shared outputs
    let underlying_metrics_path = suite.out_dir.join("underlying_metrics.csv");
    outputs::write_metrics_csv(
        &underlying_metrics_path,
        [MetricsRow {
            scenario: "underlying",
            calendar_year: params_base.sim_start_year,
            stage: "-".to_string(),
            avg_pv_kw: 0.0,
            avg_battery_kwh: 0.0,
            metrics: &underlying_metrics,
        }],
    )?;
    let underlying_curves_path = suite.out_dir.join("underlying_curves.csv");
    outputs::write_curves_csv(
        &underlying_curves_path,
        [(
            "underlying",
            params_base.sim_start_year,
            &underlying_metrics,
        )],
    )?;
    let stage_table_path = suite.out_dir.join("stage_table.csv");
    outputs::write_stage_table(&stage_table_path, &results)?;

    let mut manifest_scenarios = Vec::with_capacity(results.len());
    for result in &results {
        let dir = suite.out_dir.join(&result.name);
        let annual = dir.join("annual_series.csv");
        outputs::write_annual_series(&annual, result)?;
        let metrics = dir.join("metrics.csv");
        outputs::write_metrics_csv(&metrics, result.years.iter().map(MetricsRow::from))?;
        let curves = dir.join("curves.csv");
        outputs::write_curves_csv(
            &curves,
            result
                .years
                .iter()
                .map(|y| (result.name.as_str(), y.calendar_year, &y.metrics)),
        )?;
        let investments = dir.join("investments.csv");
        outputs::write_investments_csv(
            &investments,
            &result.investments,
            params_base.sim_start_year,
        )?;
        manifest_scenarios.push(ManifestScenario {
            name: result.name.clone(),
            fit_fraction: result.fit_fraction,
            files: [&annual, &metrics, &curves, &investments]
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
        });
    }

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(suite)?,
        dataset_fingerprint,
        households: dataset.len(),
        sensitivity: suite.sensitivity.name().to_string(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        shared_outputs: [
            &underlying_metrics_path,
            &underlying_curves_path,
            &stage_table_path,
        ]
        .iter()
        .map(|p| p.display().to_string())
        .collect(),
        scenarios: manifest_scenarios,
    };
    outputs::write_manifest(&suite.out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Write a standalone metrics.csv and curves.csv for one profile (the
/// `metrics` subcommand surface).
pub fn write_standalone_metrics(
    dir: &Path,
    profile: &AggregateProfile,
    metrics: &YearMetrics,
) -> Result<()> {
    outputs::write_metrics_csv(
        &dir.join("metrics.csv"),
        [MetricsRow {
            scenario: &profile.scenario,
            calendar_year: profile.year,
            stage: "-".to_string(),
            avg_pv_kw: 0.0,
            avg_battery_kwh: 0.0,
            metrics,
        }],
    )?;
    outputs::write_curves_csv(
        &dir.join("curves.csv"),
        [(profile.scenario.as_str(), profile.year, metrics)],
    )
}
