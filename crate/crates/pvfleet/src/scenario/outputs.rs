//! CSV and manifest writers for scenario runs. Floats are written in their
//! shortest round-trippable form so reruns produce byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::fleet::YearMetrics;
use crate::scenario::{InvestmentLogRow, ScenarioResult, ScenarioYearReport};
use crate::{Error, Result};

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush()
        .map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const MONTHS: [&str; 12] = [
    "jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec",
];

pub fn write_annual_series(path: &Path, result: &ScenarioResult) -> Result<()> {
    let mut w = create(path)?;
    w.write_record([
        "calendar_year",
        "stage",
        "avg_pv_kw",
        "avg_battery_kwh",
        "imports_mwh",
        "exports_mwh",
    ])
    .map_err(|e| Error::InvalidData(e.to_string()))?;
    for y in &result.years {
        w.write_record([
            y.calendar_year.to_string(),
            y.stage.to_string(),
            y.avg_pv_kw.to_string(),
            y.avg_battery_kwh.to_string(),
            y.metrics.imports_mwh.to_string(),
            y.metrics.exports_mwh.to_string(),
        ])
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    }
    finish(w, path)
}

pub struct MetricsRow<'a> {
    pub scenario: &'a str,
    pub calendar_year: i32,
    pub stage: String,
    pub avg_pv_kw: f64,
    pub avg_battery_kwh: f64,
    pub metrics: &'a YearMetrics,
}

impl<'a> From<&'a ScenarioYearReport> for MetricsRow<'a> {
    fn from(y: &'a ScenarioYearReport) -> Self {
        MetricsRow {
            scenario: &y.profile.scenario,
            calendar_year: y.calendar_year,
            stage: y.stage.to_string(),
            avg_pv_kw: y.avg_pv_kw,
            avg_battery_kwh: y.avg_battery_kwh,
            metrics: &y.metrics,
        }
    }
}

pub fn write_metrics_csv<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = MetricsRow<'a>>,
) -> Result<()> {
    let mut w = create(path)?;
    let mut header: Vec<String> = [
        "scenario",
        "calendar_year",
        "stage",
        "avg_pv_kw",
        "avg_battery_kwh",
        "imports_mwh",
        "grid_dependency",
        "peak_demand_kw",
        "peak_demand_time",
        "peak_demand_season",
        "exports_mwh",
        "peak_feed_in_kw",
        "peak_feed_in_over_underlying_peak",
        "peak_ramp_up_kw_per_min",
        "peak_ramp_down_kw_per_min",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(MONTHS.iter().map(|m| format!("imports_{m}_mwh")));
    w.write_record(&header)
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    for row in rows {
        let m = row.metrics;
        let mut rec: Vec<String> = vec![
            row.scenario.to_string(),
            row.calendar_year.to_string(),
            row.stage.clone(),
            row.avg_pv_kw.to_string(),
            row.avg_battery_kwh.to_string(),
            m.imports_mwh.to_string(),
            opt(m.grid_dependency),
            m.peak_demand_kw.to_string(),
            m.peak_timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
            m.peak_season.to_string(),
            m.exports_mwh.to_string(),
            m.peak_feed_in_kw.to_string(),
            opt(m.peak_feed_in_of_underlying_peak),
            m.peak_ramp_up_kw_per_min.to_string(),
            m.peak_ramp_down_kw_per_min.to_string(),
        ];
        rec.extend(m.monthly_imports_mwh.iter().map(|v| v.to_string()));
        w.write_record(&rec)
            .map_err(|e| Error::InvalidData(e.to_string()))?;
    }
    finish(w, path)
}

/// Long-format dump of histograms and duration curves for plotting.
pub fn write_curves_csv<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (&'a str, i32, &'a YearMetrics)>,
) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["scenario", "calendar_year", "kind", "ordinal", "value"])
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    for (scenario, year, m) in rows {
        let mut emit = |kind: &str, values: &[f64]| -> Result<()> {
            for (i, v) in values.iter().enumerate() {
                w.write_record([
                    scenario,
                    &year.to_string(),
                    kind,
                    &i.to_string(),
                    &v.to_string(),
                ])
                .map_err(|e| Error::InvalidData(e.to_string()))?;
            }
            Ok(())
        };
        emit("peak_timing_histogram_pct", &m.peak_timing_histogram_pct)?;
        emit(
            "minimum_timing_histogram_pct",
            &m.minimum_timing_histogram_pct,
        )?;
        emit("load_duration_kw", &m.load_duration_kw)?;
        emit("ramp_duration_kw_per_min", &m.ramp_duration_kw_per_min)?;
    }
    finish(w, path)
}

pub fn write_investments_csv(
    path: &Path,
    rows: &[InvestmentLogRow],
    sim_start_year: i32,
) -> Result<()> {
    let mut w = create(path)?;
    w.write_record([
        "household_id",
        "calendar_year",
        "pv_added_kw",
        "battery_added_kwh",
        "npv",
        "dpp_years",
        "cost",
        "cumulative_pv_kw",
        "cumulative_battery_kwh",
    ])
    .map_err(|e| Error::InvalidData(e.to_string()))?;
    for row in rows {
        w.write_record([
            row.household_id.clone(),
            (sim_start_year + row.record.year as i32 - 1).to_string(),
            row.record.pv_added_kw.to_string(),
            row.record.battery_added_kwh.to_string(),
            row.record.npv.to_string(),
            row.record.payback.to_string(),
            row.record.cost.to_string(),
            row.cumulative_pv_kw.to_string(),
            row.cumulative_battery_kwh.to_string(),
        ])
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    }
    finish(w, path)
}

/// Stage-by-year grid across scenarios, one column per scenario.
pub fn write_stage_table(path: &Path, results: &[ScenarioResult]) -> Result<()> {
    let mut w = create(path)?;
    let mut header = vec!["calendar_year".to_string()];
    header.extend(results.iter().map(|r| r.name.clone()));
    w.write_record(&header)
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    let years = results.first().map(|r| r.years.len()).unwrap_or(0);
    for y in 0..years {
        let mut rec = vec![results[0].years[y].calendar_year.to_string()];
        rec.extend(results.iter().map(|r| r.years[y].stage.to_string()));
        w.write_record(&rec)
            .map_err(|e| Error::InvalidData(e.to_string()))?;
    }
    finish(w, path)
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestScenario {
    pub name: String,
    pub fit_fraction: f64,
    pub files: Vec<String>,
}

/// Reproducibility record of one suite run: identical config and data yield
/// identical result files (the manifest itself carries the wall clock).
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub dataset_fingerprint: String,
    pub households: usize,
    pub sensitivity: String,
    pub wall_clock_seconds: f64,
    pub shared_outputs: Vec<String>,
    pub scenarios: Vec<ManifestScenario>,
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::InvalidData(format!("manifest: {e}")))?;
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(json.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| Error::io(path, e))
}
