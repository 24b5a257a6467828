//! Fleet aggregation, grid-operation stage classification, and the
//! operational metrics suite (load duration curves, diurnal peak/minimum
//! timing histograms, ramp-rate duration curves, monthly imports).

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::profiles::{
    interval_timestamp, power_kw, FleetDataset, INTERVALS_PER_DAY, INTERVAL_HOURS,
};
use crate::{Error, Result};

/// Fleet-level net grid power per interval (kW): positive imports, negative
/// exports.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateProfile {
    pub scenario: String,
    /// Calendar year this profile represents.
    pub year: i32,
    pub start_date: NaiveDate,
    pub net_kw: Vec<f64>,
}

impl AggregateProfile {
    pub fn intervals(&self) -> usize {
        self.net_kw.len()
    }

    pub fn timestamp(&self, interval: usize) -> NaiveDateTime {
        interval_timestamp(self.start_date, interval)
    }
}

/// Interval-wise sum of household residual energy series, converted to kW.
pub fn aggregate<'a, I>(
    residual_kwh: I,
    start_date: NaiveDate,
    scenario: &str,
    year: i32,
) -> Result<AggregateProfile>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut net_kw: Option<Vec<f64>> = None;
    for series in residual_kwh {
        match &mut net_kw {
            None => net_kw = Some(series.iter().map(|&kwh| power_kw(kwh)).collect()),
            Some(acc) => {
                if acc.len() != series.len() {
                    return Err(Error::InvalidData(format!(
                        "aggregate: household series length {} does not match {}",
                        series.len(),
                        acc.len()
                    )));
                }
                for (a, &kwh) in acc.iter_mut().zip(series) {
                    *a += power_kw(kwh);
                }
            }
        }
    }
    let net_kw =
        net_kw.ok_or_else(|| Error::InvalidData("aggregate of zero households".to_string()))?;
    Ok(AggregateProfile {
        scenario: scenario.to_string(),
        year,
        start_date,
        net_kw,
    })
}

/// Aggregate underlying demand of a dataset (no PV or battery effects).
pub fn aggregate_underlying(dataset: &FleetDataset, year: i32) -> Result<AggregateProfile> {
    let start_date = dataset
        .start_date()
        .ok_or_else(|| Error::InvalidData("aggregate of an empty dataset".to_string()))?;
    aggregate(
        dataset.households.iter().map(|h| h.demand.as_slice()),
        start_date,
        "underlying",
        year,
    )
}

/// Capacity class of one axis of the grid-operation stage label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapacityClass {
    None,
    Small,
    Medium,
    Large,
    ExtraLarge,
}

impl CapacityClass {
    fn code(self) -> Option<&'static str> {
        match self {
            CapacityClass::None => None,
            CapacityClass::Small => Some("S"),
            CapacityClass::Medium => Some("M"),
            CapacityClass::Large => Some("L"),
            CapacityClass::ExtraLarge => Some("XL"),
        }
    }

    pub fn rank(self) -> u8 {
        match self {
            CapacityClass::None => 0,
            CapacityClass::Small => 1,
            CapacityClass::Medium => 2,
            CapacityClass::Large => 3,
            CapacityClass::ExtraLarge => 4,
        }
    }
}

/// Grid-operation stage: per-axis classes of the fleet-average installed PV
/// and battery capacity per household.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageLabel {
    pub pv: CapacityClass,
    pub battery: CapacityClass,
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.pv.code(), self.battery.code()) {
            (None, _) => write!(f, "-"),
            (Some(pv), None) => write!(f, "PV_{pv}"),
            (Some(pv), Some(b)) => write!(f, "PV_{pv}:B_{b}"),
        }
    }
}

fn classify_axis(value: f64, edges: [f64; 4]) -> CapacityClass {
    let [s, m, l, xl] = edges;
    // Bins are half-open and lower-inclusive, so a value sitting exactly on
    // an edge belongs to the class above it.
    if value < s {
        CapacityClass::None
    } else if value < m {
        CapacityClass::Small
    } else if value < l {
        CapacityClass::Medium
    } else if value < xl {
        CapacityClass::Large
    } else {
        CapacityClass::ExtraLarge
    }
}

/// Classify the fleet state from average installed capacities per household.
pub fn classify_stage(avg_pv_kw: f64, avg_battery_kwh: f64) -> StageLabel {
    StageLabel {
        pv: classify_axis(avg_pv_kw, [0.5, 4.0, 8.0, 12.0]),
        battery: classify_axis(avg_battery_kwh, [0.5, 10.0, 20.0, 30.0]),
    }
}

/// Southern-hemisphere season of a month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Season {
    Summer,
    Autumn,
    Winter,
    Spring,
}

impl Season {
    pub fn of_month(month: u32) -> Season {
        match month {
            12 | 1 | 2 => Season::Summer,
            3..=5 => Season::Autumn,
            6..=8 => Season::Winter,
            _ => Season::Spring,
        }
    }
}

impl fmt::Display for Season {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Season::Summer => "Summer",
            Season::Autumn => "Autumn",
            Season::Winter => "Winter",
            Season::Spring => "Spring",
        };
        write!(f, "{name}")
    }
}

/// The operational metrics of one scenario-year aggregate profile.
#[derive(Debug, Clone, PartialEq)]
pub struct YearMetrics {
    pub imports_mwh: f64,
    /// Residual imports over underlying imports; `None` when the underlying
    /// profile has no imports.
    pub grid_dependency: Option<f64>,
    pub peak_demand_kw: f64,
    pub peak_timestamp: NaiveDateTime,
    pub peak_season: Season,
    pub exports_mwh: f64,
    pub peak_feed_in_kw: f64,
    /// Peak feed-in as a fraction of the underlying annual peak demand.
    pub peak_feed_in_of_underlying_peak: Option<f64>,
    /// Share of days (in %) whose diurnal maximum falls in each of the 48
    /// intervals; ties resolve to the earliest interval.
    pub peak_timing_histogram_pct: Vec<f64>,
    pub minimum_timing_histogram_pct: Vec<f64>,
    pub peak_ramp_up_kw_per_min: f64,
    pub peak_ramp_down_kw_per_min: f64,
    /// Monthly import totals in MWh, indexed January..December.
    pub monthly_imports_mwh: [f64; 12],
    /// Net power sorted descending (kW).
    pub load_duration_kw: Vec<f64>,
    /// Interval-to-interval ramps sorted descending (kW/min).
    pub ramp_duration_kw_per_min: Vec<f64>,
}

/// Compute the full metrics suite for a profile against the underlying
/// (pre-PV) aggregate on the same interval grid.
pub fn compute_metrics(
    profile: &AggregateProfile,
    underlying: &AggregateProfile,
) -> Result<YearMetrics> {
    let n = profile.net_kw.len();
    if n == 0 || n % INTERVALS_PER_DAY != 0 {
        return Err(Error::InvalidData(format!(
            "metrics need a whole number of {INTERVALS_PER_DAY}-interval days, got {n} intervals"
        )));
    }
    if underlying.net_kw.len() != n || underlying.start_date != profile.start_date {
        return Err(Error::InvalidData(
            "profile and underlying cover different interval grids".to_string(),
        ));
    }
    if profile.net_kw.iter().any(|v| !v.is_finite())
        || underlying.net_kw.iter().any(|v| !v.is_finite())
    {
        return Err(Error::InvalidData(
            "metrics input contains non-finite values".to_string(),
        ));
    }

    let energy_mwh = |kw: f64| kw * INTERVAL_HOURS / 1000.0;
    let imports_mwh: f64 = profile.net_kw.iter().filter(|v| **v > 0.0).map(|v| energy_mwh(*v)).sum();
    let exports_mwh: f64 = profile
        .net_kw
        .iter()
        .filter(|v| **v < 0.0)
        .map(|v| energy_mwh(-*v))
        .sum();
    let underlying_imports_mwh: f64 = underlying
        .net_kw
        .iter()
        .filter(|v| **v > 0.0)
        .map(|v| energy_mwh(*v))
        .sum();
    let grid_dependency = if underlying_imports_mwh > 0.0 {
        Some(imports_mwh / underlying_imports_mwh)
    } else {
        None
    };

    let mut peak_idx = 0usize;
    let mut peak = f64::NEG_INFINITY;
    let mut trough = f64::INFINITY;
    for (i, &v) in profile.net_kw.iter().enumerate() {
        if v > peak {
            peak = v;
            peak_idx = i;
        }
        if v < trough {
            trough = v;
        }
    }
    let peak_timestamp = profile.timestamp(peak_idx);
    let peak_feed_in_kw = (-trough).max(0.0);
    let underlying_peak = underlying.net_kw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let peak_feed_in_of_underlying_peak = if underlying_peak > 0.0 {
        Some(peak_feed_in_kw / underlying_peak)
    } else {
        None
    };

    // Diurnal peak/minimum timing histograms over the day grid.
    let days = n / INTERVALS_PER_DAY;
    let mut peak_counts = vec![0u32; INTERVALS_PER_DAY];
    let mut min_counts = vec![0u32; INTERVALS_PER_DAY];
    let mut monthly_imports_mwh = [0.0f64; 12];
    for d in 0..days {
        let day = &profile.net_kw[d * INTERVALS_PER_DAY..(d + 1) * INTERVALS_PER_DAY];
        let mut max_k = 0usize;
        let mut min_k = 0usize;
        for (k, &v) in day.iter().enumerate() {
            if v > day[max_k] {
                max_k = k;
            }
            if v < day[min_k] {
                min_k = k;
            }
        }
        peak_counts[max_k] += 1;
        min_counts[min_k] += 1;

        let date = profile.start_date + chrono::Duration::days(d as i64);
        let month_idx = (date.month() - 1) as usize;
        monthly_imports_mwh[month_idx] += day
            .iter()
            .filter(|v| **v > 0.0)
            .map(|v| energy_mwh(*v))
            .sum::<f64>();
    }
    let to_pct = |counts: Vec<u32>| {
        counts
            .into_iter()
            .map(|c| 100.0 * f64::from(c) / days as f64)
            .collect::<Vec<f64>>()
    };

    // Ramps between consecutive intervals, expressed per minute.
    let mut ramps: Vec<f64> = profile
        .net_kw
        .windows(2)
        .map(|w| (w[1] - w[0]) / (INTERVAL_HOURS * 60.0))
        .collect();
    let peak_ramp_up = ramps.iter().cloned().fold(0.0f64, f64::max);
    let peak_ramp_down = ramps.iter().cloned().fold(0.0f64, f64::min);

    let mut load_duration = profile.net_kw.clone();
    load_duration.sort_unstable_by(|a, b| b.total_cmp(a));
    ramps.sort_unstable_by(|a, b| b.total_cmp(a));

    Ok(YearMetrics {
        imports_mwh,
        grid_dependency,
        peak_demand_kw: peak,
        peak_timestamp,
        peak_season: Season::of_month(peak_timestamp.month()),
        exports_mwh,
        peak_feed_in_kw,
        peak_feed_in_of_underlying_peak,
        peak_timing_histogram_pct: to_pct(peak_counts),
        minimum_timing_histogram_pct: to_pct(min_counts),
        peak_ramp_up_kw_per_min: peak_ramp_up,
        peak_ramp_down_kw_per_min: peak_ramp_down,
        monthly_imports_mwh,
        load_duration_kw: load_duration,
        ramp_duration_kw_per_min: ramps,
    })
}

/// Histogram mass (in %) inside a closed interval-of-day window given as
/// "HH:MM" interval start times, e.g. 02:30–05:30. Wraps past midnight when
/// `from` is later than `to`.
pub fn histogram_window_pct(histogram_pct: &[f64], from: (u32, u32), to: (u32, u32)) -> f64 {
    let slot = |(h, m): (u32, u32)| ((h * 60 + m) / 30) as usize % INTERVALS_PER_DAY;
    let a = slot(from);
    let b = slot(to);
    let mut sum = 0.0;
    let mut k = a;
    loop {
        sum += histogram_pct[k];
        if k == b {
            break;
        }
        k = (k + 1) % INTERVALS_PER_DAY;
    }
    sum
}

/// Overlay the fleet's residual-minus-underlying delta, scaled from the
/// sample to a population, onto a system demand series.
pub fn scale_to_population(
    profile: &AggregateProfile,
    underlying: &AggregateProfile,
    sample_size: usize,
    population: usize,
    system_demand_kw: &[f64],
) -> Result<Vec<f64>> {
    if sample_size == 0 {
        return Err(Error::Invalid("sample size must be positive".to_string()));
    }
    if profile.net_kw.len() != underlying.net_kw.len()
        || profile.net_kw.len() != system_demand_kw.len()
    {
        return Err(Error::InvalidData(
            "population scaling needs equal-length profile, underlying and system series"
                .to_string(),
        ));
    }
    let factor = population as f64 / sample_size as f64;
    Ok(system_demand_kw
        .iter()
        .zip(&profile.net_kw)
        .zip(&underlying.net_kw)
        .map(|((sys, p), u)| sys + (p - u) * factor)
        .collect())
}

/// Read an aggregate profile CSV: `timestamp_iso8601,net_kw` with header,
/// contiguous half-hourly rows starting at midnight.
pub fn read_aggregate_csv(path: &Path, scenario: &str, year: i32) -> Result<AggregateProfile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_aggregate_from_reader(BufReader::new(file), scenario, year)
}

pub fn read_aggregate_from_reader(
    reader: impl Read,
    scenario: &str,
    year: i32,
) -> Result<AggregateProfile> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut start: Option<NaiveDateTime> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut first = true;
    for record in csv_reader.records() {
        let record = record.map_err(|e| Error::InvalidData(format!("profile csv: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let ts_text = record.get(0).unwrap_or("");
        let ts = match NaiveDateTime::parse_from_str(ts_text.trim(), "%Y-%m-%dT%H:%M:%S")
            .or_else(|_| NaiveDateTime::parse_from_str(ts_text.trim(), "%Y-%m-%d %H:%M:%S"))
        {
            Ok(t) => t,
            Err(_) if first => {
                first = false;
                continue; // header row
            }
            Err(_) => {
                return Err(Error::InvalidData(format!(
                    "profile csv line {line}: unparseable timestamp {ts_text:?}"
                )));
            }
        };
        first = false;
        let value: f64 = record
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::InvalidData(format!("profile csv line {line}: unparseable value")))?;
        if !value.is_finite() {
            return Err(Error::InvalidData(format!(
                "profile csv line {line}: non-finite value"
            )));
        }
        match start {
            None => {
                if ts.time().hour() != 0 || ts.time().minute() != 0 {
                    return Err(Error::InvalidData(
                        "profile csv must start at midnight".to_string(),
                    ));
                }
                start = Some(ts);
            }
            Some(s) => {
                let expected = s + chrono::Duration::minutes(30 * values.len() as i64);
                if ts != expected {
                    return Err(Error::InvalidData(format!(
                        "profile csv line {line}: expected timestamp {expected}, got {ts}"
                    )));
                }
            }
        }
        values.push(value);
    }
    let start = start.ok_or_else(|| Error::InvalidData("profile csv has no data rows".to_string()))?;
    Ok(AggregateProfile {
        scenario: scenario.to_string(),
        year,
        start_date: start.date(),
        net_kw: values,
    })
}
