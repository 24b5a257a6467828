//! The run configuration file: a flat TOML document whose keys mirror the
//! reference parameter table. Every field has the reference default, so an
//! empty config (plus a dataset path) reproduces the reference scenario
//! suite.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dispatch::TechnicalParams;
use crate::finance::ScenarioParams;
use crate::investor::CandidateGrid;
use crate::scenario::{ScenarioSuite, Sensitivity};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Normalised profiles CSV to simulate.
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Feed-in tariff fractions to sweep, one scenario each.
    pub fit_fractions: Vec<f64>,
    pub sensitivity: Sensitivity,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    /// Dump per-household interval-level dispatch traces.
    pub trace: bool,

    // economics
    pub usage_charge_start: f64,
    pub daily_charge_start: f64,
    pub tariff_growth: f64,
    pub discount_rate: f64,
    pub pv_cost_start: f64,
    pub battery_cost_start: f64,
    pub pv_cost_growth: f64,
    pub battery_cost_growth: f64,
    pub fit_capacity_limit_kw: f64,
    pub horizon_years: u32,
    pub payback_threshold_years: u32,
    pub sim_years: u32,
    pub sim_start_year: i32,

    // technical model
    pub battery_power_limit_kw: f64,
    pub round_trip_efficiency: f64,
    pub depth_of_discharge: f64,
    pub pv_end_of_life_fraction: f64,
    pub pv_lifetime_years: u32,
    pub battery_end_of_life_fraction: f64,
    pub battery_lifetime_years: u32,

    // candidate search grid
    pub pv_max_kw: f64,
    pub battery_max_kwh: f64,
    pub pv_step_kw: f64,
    pub battery_step_kwh: f64,
    pub expansion_factor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ScenarioParams::default();
        let t = TechnicalParams::default();
        let g = CandidateGrid::default();
        RunConfig {
            dataset: None,
            out_dir: PathBuf::from("out"),
            fit_fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            sensitivity: Sensitivity::Reference,
            workers: 0,
            trace: false,
            usage_charge_start: p.usage_charge_start,
            daily_charge_start: p.daily_charge_start,
            tariff_growth: p.tariff_growth,
            discount_rate: p.discount_rate,
            pv_cost_start: p.pv_cost_start,
            battery_cost_start: p.battery_cost_start,
            pv_cost_growth: p.pv_cost_growth,
            battery_cost_growth: p.battery_cost_growth,
            fit_capacity_limit_kw: p.fit_capacity_limit_kw,
            horizon_years: p.horizon_years,
            payback_threshold_years: p.payback_threshold_years,
            sim_years: p.sim_years,
            sim_start_year: p.sim_start_year,
            battery_power_limit_kw: t.battery_power_limit_kw,
            round_trip_efficiency: t.round_trip_efficiency,
            depth_of_discharge: t.depth_of_discharge,
            pv_end_of_life_fraction: t.pv_end_of_life_fraction,
            pv_lifetime_years: t.pv_lifetime_years,
            battery_end_of_life_fraction: t.battery_end_of_life_fraction,
            battery_lifetime_years: t.battery_lifetime_years,
            pv_max_kw: g.pv_max_kw,
            battery_max_kwh: g.battery_max_kwh,
            pv_step_kw: g.pv_step_kw,
            battery_step_kwh: g.battery_step_kwh,
            expansion_factor: g.expansion_factor,
        }
    }
}

impl RunConfig {
    pub fn scenario_params(&self) -> ScenarioParams {
        ScenarioParams {
            usage_charge_start: self.usage_charge_start,
            fit_fraction: ScenarioParams::default().fit_fraction,
            daily_charge_start: self.daily_charge_start,
            tariff_growth: self.tariff_growth,
            discount_rate: self.discount_rate,
            pv_cost_start: self.pv_cost_start,
            battery_cost_start: self.battery_cost_start,
            pv_cost_growth: self.pv_cost_growth,
            battery_cost_growth: self.battery_cost_growth,
            fit_capacity_limit_kw: self.fit_capacity_limit_kw,
            horizon_years: self.horizon_years,
            payback_threshold_years: self.payback_threshold_years,
            sim_years: self.sim_years,
            sim_start_year: self.sim_start_year,
        }
    }

    pub fn technical_params(&self) -> TechnicalParams {
        TechnicalParams {
            battery_power_limit_kw: self.battery_power_limit_kw,
            round_trip_efficiency: self.round_trip_efficiency,
            depth_of_discharge: self.depth_of_discharge,
            pv_end_of_life_fraction: self.pv_end_of_life_fraction,
            pv_lifetime_years: self.pv_lifetime_years,
            battery_end_of_life_fraction: self.battery_end_of_life_fraction,
            battery_lifetime_years: self.battery_lifetime_years,
        }
    }

    pub fn candidate_grid(&self) -> CandidateGrid {
        CandidateGrid {
            pv_max_kw: self.pv_max_kw,
            battery_max_kwh: self.battery_max_kwh,
            pv_step_kw: self.pv_step_kw,
            battery_step_kwh: self.battery_step_kwh,
            expansion_factor: self.expansion_factor,
        }
    }

    /// Validate and assemble the executable suite.
    pub fn build(self) -> Result<ScenarioSuite> {
        let dataset = self.dataset.clone().ok_or_else(|| {
            Error::InvalidConfig("config needs a dataset path (key `dataset`)".to_string())
        })?;
        let base = self.scenario_params();
        base.validate()?;
        let tech = self.technical_params();
        tech.validate()?;
        let grid = self.candidate_grid();
        grid.validate()?;
        if self.fit_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidConfig(
                "fit_fractions must lie in [0, 1]".to_string(),
            ));
        }
        Ok(ScenarioSuite {
            base,
            tech,
            grid,
            fit_fractions: self.fit_fractions.clone(),
            sensitivity: self.sensitivity,
            dataset_path: dataset,
            out_dir: self.out_dir.clone(),
            workers: self.workers,
            trace: self.trace,
        })
    }
}

/// Parse a TOML config document; unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))
}

pub fn read_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
