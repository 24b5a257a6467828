//! Household demand and insolation time series: ingestion, normalisation,
//! validation and the canonical CSV interchange format.
//!
//! The canonical input is the normalised layout, one row per
//! (household, interval): `household_id,timestamp_iso8601,demand_kwh,insolation_kwh_per_kwp`.
//! Gross-meter exports (long rows tagged with a consumption/generation
//! channel, or the vendor wide layout with 48 interval columns per day) are
//! converted through [`import_gross_meter_csv`], which normalises generation
//! by each household's declared PV capacity.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};

use crate::{Error, Result};

pub const INTERVALS_PER_DAY: usize = 48;
pub const DAYS_PER_YEAR: usize = 365;
pub const INTERVALS_PER_YEAR: usize = INTERVALS_PER_DAY * DAYS_PER_YEAR;

/// Length of one metering interval in hours.
pub const INTERVAL_HOURS: f64 = 0.5;

/// Maximum plausible normalised generation in one interval: a 1 kW_P array
/// cannot produce more than 0.5 kWh in half an hour.
pub const MAX_INSOLATION_KWH_PER_KWP: f64 = INTERVAL_HOURS;

/// Energy-to-power conversion, stated once and used everywhere:
/// power (kW) = interval energy (kWh) × 2.
pub fn power_kw(interval_energy_kwh: f64) -> f64 {
    interval_energy_kwh / INTERVAL_HOURS
}

pub const CSV_HEADER: [&str; 4] = [
    "household_id",
    "timestamp_iso8601",
    "demand_kwh",
    "insolation_kwh_per_kwp",
];

/// One household's year of half-hourly data.
///
/// `demand` is metered consumption in kWh per interval; `insolation` is PV
/// generation normalised by declared capacity (kWh per kW_P per interval).
/// Missing intervals are stored as NaN so that [`validate_and_filter`] can
/// report them; a profile that passes validation contains exactly
/// [`INTERVALS_PER_YEAR`] finite values per series.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdProfile {
    pub household_id: String,
    pub demand: Vec<f64>,
    pub insolation: Vec<f64>,
    pub start_date: NaiveDate,
}

impl HouseholdProfile {
    pub fn intervals(&self) -> usize {
        self.demand.len()
    }

    pub fn annual_demand_kwh(&self) -> f64 {
        self.demand.iter().sum()
    }

    pub fn annual_insolation_kwh_per_kwp(&self) -> f64 {
        self.insolation.iter().sum()
    }

    /// Naive local timestamp of the start of interval `i`.
    pub fn timestamp(&self, interval: usize) -> NaiveDateTime {
        interval_timestamp(self.start_date, interval)
    }

    fn first_violation(&self) -> Option<Violation> {
        if self.demand.len() != INTERVALS_PER_YEAR || self.insolation.len() != INTERVALS_PER_YEAR {
            return Some(Violation::WrongIntervalCount {
                expected: INTERVALS_PER_YEAR,
                actual: self.demand.len().max(self.insolation.len()),
            });
        }
        for i in 0..self.demand.len() {
            let d = self.demand[i];
            let s = self.insolation[i];
            if d.is_nan() || s.is_nan() {
                return Some(Violation::Gap { interval: i });
            }
            if d < 0.0 || s < 0.0 {
                return Some(Violation::NegativeValue { interval: i });
            }
            if s > MAX_INSOLATION_KWH_PER_KWP {
                return Some(Violation::InsolationAboveCap { interval: i });
            }
        }
        None
    }
}

pub fn interval_timestamp(start_date: NaiveDate, interval: usize) -> NaiveDateTime {
    start_date
        .and_hms_opt(0, 0, 0)
        .expect("midnight is always valid")
        + chrono::Duration::minutes(interval as i64 * 30)
}

/// An ordered collection of household profiles. Ordering is stable and
/// defines the deterministic aggregation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FleetDataset {
    pub households: Vec<HouseholdProfile>,
    pub provenance: String,
}

impl FleetDataset {
    pub fn len(&self) -> usize {
        self.households.len()
    }

    pub fn is_empty(&self) -> bool {
        self.households.is_empty()
    }

    pub fn start_date(&self) -> Option<NaiveDate> {
        self.households.first().map(|h| h.start_date)
    }
}

/// First rule violated by a household, as reported by [`validate_and_filter`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    WrongIntervalCount { expected: usize, actual: usize },
    Gap { interval: usize },
    NegativeValue { interval: usize },
    InsolationAboveCap { interval: usize },
    DuplicateHouseholdId,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongIntervalCount { expected, actual } => {
                write!(f, "wrong interval count: expected {expected}, got {actual}")
            }
            Violation::Gap { interval } => write!(f, "gap at interval {interval}"),
            Violation::NegativeValue { interval } => {
                write!(f, "negative value at interval {interval}")
            }
            Violation::InsolationAboveCap { interval } => write!(
                f,
                "insolation above {MAX_INSOLATION_KWH_PER_KWP} kWh/kW_P at interval {interval}"
            ),
            Violation::DuplicateHouseholdId => write!(f, "duplicate household id"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedHousehold {
    pub household_id: String,
    pub reason: Violation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionReport {
    pub rejected: Vec<RejectedHousehold>,
}

impl RejectionReport {
    pub fn is_clean(&self) -> bool {
        self.rejected.is_empty()
    }
}

/// A rejected input row (the row is skipped, not fatal).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

const MAX_STORED_ROW_ERRORS: usize = 1000;

/// Non-fatal findings from an import: skipped rows and warnings.
#[derive(Debug, Clone, Default)]
pub struct ImportReport {
    pub row_errors: Vec<RowError>,
    pub row_error_count: u64,
    pub warnings: Vec<String>,
}

impl ImportReport {
    fn push_row_error(&mut self, line: u64, message: String) {
        self.row_error_count += 1;
        if self.row_errors.len() < MAX_STORED_ROW_ERRORS {
            self.row_errors.push(RowError { line, message });
        }
    }

    fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("{message}");
        self.warnings.push(message);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ChannelTag {
    /// General consumption ("GC").
    ConsumptionGeneral,
    /// Controlled-load consumption ("CL"); added onto demand.
    ConsumptionControlled,
    /// Gross PV generation ("GG").
    Generation,
}

impl ChannelTag {
    fn parse(tag: &str) -> Option<ChannelTag> {
        match tag.trim().to_ascii_uppercase().as_str() {
            "GC" | "CONSUMPTION" | "DEMAND" => Some(ChannelTag::ConsumptionGeneral),
            "CL" | "CONTROLLED_LOAD" => Some(ChannelTag::ConsumptionControlled),
            "GG" | "GENERATION" | "GROSS_GENERATION" => Some(ChannelTag::Generation),
            _ => None,
        }
    }

    fn bit(self) -> u8 {
        match self {
            ChannelTag::ConsumptionGeneral => 1,
            ChannelTag::ConsumptionControlled => 2,
            ChannelTag::Generation => 4,
        }
    }
}

/// Minutes since the calendar epoch used for slot arithmetic.
fn minutes_of(ts: NaiveDateTime) -> i64 {
    i64::from(ts.date().num_days_from_ce()) * 24 * 60
        + i64::from(ts.hour()) * 60
        + i64::from(ts.minute())
}

fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    let text = text.trim();
    NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(text, "%Y-%m-%d %H:%M:%S"))
        .ok()
        .filter(|ts| ts.second() == 0)
}

/// Accepts `d/m/yyyy` (vendor exports) and `yyyy-mm-dd`.
fn parse_date(text: &str) -> Option<NaiveDate> {
    let text = text.trim();
    if let Ok(d) = NaiveDate::parse_from_str(text, "%Y-%m-%d") {
        return Some(d);
    }
    let mut parts = text.splitn(3, '/');
    let day: u32 = parts.next()?.trim().parse().ok()?;
    let month: u32 = parts.next()?.trim().parse().ok()?;
    let year: i32 = parts.next()?.trim().parse().ok()?;
    NaiveDate::from_ymd_opt(year, month, day)
}

fn parse_energy(text: &str) -> std::result::Result<f64, String> {
    let value: f64 = text
        .trim()
        .parse()
        .map_err(|_| format!("unparseable energy value {text:?}"))?;
    if !value.is_finite() {
        return Err(format!("non-finite energy value {text:?}"));
    }
    Ok(value)
}

/// One metered value at one interval for one household.
struct PointRow {
    household: u32,
    line: u64,
    minutes: i64,
    tag: ChannelTag,
    value: f64,
}

/// One vendor wide-format record: a day of 48 interval values. Absent cells
/// are NaN.
struct DayRow {
    household: u32,
    line: u64,
    date: NaiveDate,
    tag: ChannelTag,
    values: [f64; 48],
}

/// One normalised-layout record carrying both series.
struct NormRow {
    household: u32,
    line: u64,
    minutes: i64,
    demand: f64,
    insolation: f64,
}

#[derive(Default)]
struct HouseholdIndex {
    ids: Vec<String>,
    by_id: HashMap<String, u32>,
}

impl HouseholdIndex {
    fn intern(&mut self, id: &str) -> u32 {
        if let Some(&i) = self.by_id.get(id) {
            return i;
        }
        let i = self.ids.len() as u32;
        self.ids.push(id.to_string());
        self.by_id.insert(id.to_string(), i);
        i
    }
}

struct SlotGrid {
    demand: Vec<f64>,
    generation: Vec<f64>,
    seen: Vec<u8>,
}

impl SlotGrid {
    fn new() -> SlotGrid {
        SlotGrid {
            demand: vec![f64::NAN; INTERVALS_PER_YEAR],
            generation: vec![f64::NAN; INTERVALS_PER_YEAR],
            seen: vec![0; INTERVALS_PER_YEAR],
        }
    }
}

fn slot_for(minutes: i64, anchor_minutes: i64) -> std::result::Result<usize, String> {
    let delta = minutes - anchor_minutes;
    if delta % 30 != 0 {
        return Err("timestamp not on a 30-minute boundary".to_string());
    }
    let slot = delta / 30;
    if !(0..INTERVALS_PER_YEAR as i64).contains(&slot) {
        return Err("timestamp outside the 365-day window".to_string());
    }
    Ok(slot as usize)
}

fn apply_point(
    grids: &mut [SlotGrid],
    anchor_minutes: i64,
    row: &PointRow,
    report: &mut ImportReport,
) {
    let slot = match slot_for(row.minutes, anchor_minutes) {
        Ok(s) => s,
        Err(msg) => {
            report.push_row_error(row.line, msg);
            return;
        }
    };
    let grid = &mut grids[row.household as usize];
    let bit = row.tag.bit();
    if grid.seen[slot] & bit != 0 {
        report.push_row_error(row.line, format!("duplicate reading for interval {slot}"));
        return;
    }
    grid.seen[slot] |= bit;
    match row.tag {
        ChannelTag::ConsumptionGeneral | ChannelTag::ConsumptionControlled => {
            // GC and CL are distinct consumption channels and sum into demand.
            if grid.demand[slot].is_nan() {
                grid.demand[slot] = row.value;
            } else {
                grid.demand[slot] += row.value;
            }
        }
        ChannelTag::Generation => grid.generation[slot] = row.value,
    }
}

/// Read a sidecar capacity map: `household_id,declared_kwp` with header.
pub fn read_capacity_map(reader: impl Read) -> Result<BTreeMap<String, f64>> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut map = BTreeMap::new();
    for (idx, record) in csv_reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::InvalidData(format!("capacity map: {e}")))?;
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let id = record.get(0).unwrap_or("").trim();
        let raw = record.get(1).unwrap_or("").trim();
        if idx == 0 && raw.parse::<f64>().is_err() {
            // header row
            continue;
        }
        let value: f64 = raw.parse().map_err(|_| {
            Error::InvalidData(format!(
                "capacity map line {}: unparseable capacity {raw:?}",
                idx + 1
            ))
        })?;
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::InvalidData(format!(
                "capacity map line {}: declared capacity for household {id} must be positive",
                idx + 1
            )));
        }
        match map.entry(id.to_string()) {
            Entry::Vacant(e) => {
                e.insert(value);
            }
            Entry::Occupied(_) => {
                return Err(Error::InvalidData(format!(
                    "capacity map: duplicate entry for household {id}"
                )));
            }
        }
    }
    Ok(map)
}

pub fn read_capacity_map_csv(path: &Path) -> Result<BTreeMap<String, f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_capacity_map(BufReader::new(file))
}

/// Convert a gross-meter export into a [`FleetDataset`], normalising the
/// generation channel by each household's declared PV capacity.
///
/// Two layouts are accepted, detected from the header:
/// long rows `household_id,timestamp,channel,energy_kwh` (channel one of
/// GC/CL/GG), or the vendor wide layout with a `Consumption Category` column
/// and 48 interval columns per day. For the wide layout the embedded
/// `Generator Capacity` column is used for any household missing from the
/// sidecar map.
pub fn import_gross_meter_csv(
    path: &Path,
    declared_capacities: &BTreeMap<String, f64>,
) -> Result<(FleetDataset, ImportReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    import_gross_meter_from_reader(
        BufReader::new(file),
        declared_capacities,
        &format!("gross-meter import: {}", path.display()),
    )
}

pub fn import_gross_meter_from_reader(
    reader: impl Read,
    declared_capacities: &BTreeMap<String, f64>,
    provenance: &str,
) -> Result<(FleetDataset, ImportReport)> {
    let mut report = ImportReport::default();
    let mut index = HouseholdIndex::default();
    let mut points: Vec<PointRow> = Vec::new();
    let mut days: Vec<DayRow> = Vec::new();
    let mut embedded_capacity: HashMap<u32, f64> = HashMap::new();

    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);

    let mut header: Option<csv::StringRecord> = None;
    let mut wide_cols: Option<(usize, usize, usize, usize)> = None; // customer, capacity, category, date
    for record in csv_reader.records() {
        let record = record.map_err(|e| Error::InvalidData(format!("gross-meter csv: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if header.is_none() {
            let lowered: Vec<String> = record
                .iter()
                .map(|f| f.trim().to_ascii_lowercase())
                .collect();
            let find = |name: &str| lowered.iter().position(|f| f == name);
            if let (Some(cust), Some(cat), Some(date)) = (
                find("customer").or_else(|| find("household_id")),
                find("consumption category"),
                find("date"),
            ) {
                let cap = find("generator capacity").unwrap_or(usize::MAX);
                wide_cols = Some((cust, cap, cat, date));
                header = Some(record);
                continue;
            }
            if lowered.iter().any(|f| f == "channel") {
                header = Some(record);
                continue;
            }
            return Err(Error::InvalidData(
                "gross-meter csv: unrecognised header; expected long rows \
                 (household_id,timestamp,channel,energy_kwh) or a wide layout \
                 with a 'Consumption Category' column"
                    .to_string(),
            ));
        }

        if let Some((cust_col, cap_col, cat_col, date_col)) = wide_cols {
            let id = record.get(cust_col).unwrap_or("").trim();
            if id.is_empty() {
                report.push_row_error(line, "missing customer id".to_string());
                continue;
            }
            let tag = match ChannelTag::parse(record.get(cat_col).unwrap_or("")) {
                Some(t) => t,
                None => {
                    report.push_row_error(
                        line,
                        format!(
                            "unknown channel tag {:?}",
                            record.get(cat_col).unwrap_or("")
                        ),
                    );
                    continue;
                }
            };
            let date = match parse_date(record.get(date_col).unwrap_or("")) {
                Some(d) => d,
                None => {
                    report.push_row_error(
                        line,
                        format!("unparseable date {:?}", record.get(date_col).unwrap_or("")),
                    );
                    continue;
                }
            };
            let household = index.intern(id);
            if cap_col != usize::MAX {
                if let Ok(cap) = record.get(cap_col).unwrap_or("").trim().parse::<f64>() {
                    embedded_capacity.entry(household).or_insert(cap);
                }
            }
            let mut values = [f64::NAN; INTERVALS_PER_DAY];
            let mut bad_cell = None;
            for (k, slot_value) in values.iter_mut().enumerate() {
                let cell = record.get(date_col + 1 + k).unwrap_or("").trim();
                if cell.is_empty() {
                    continue;
                }
                match parse_energy(cell) {
                    Ok(v) => *slot_value = v,
                    Err(msg) => {
                        bad_cell = Some(msg);
                        break;
                    }
                }
            }
            if let Some(msg) = bad_cell {
                report.push_row_error(line, msg);
                continue;
            }
            days.push(DayRow {
                household,
                line,
                date,
                tag,
                values,
            });
        } else {
            // long layout: household_id,timestamp,channel,energy_kwh
            let id = record.get(0).unwrap_or("").trim();
            let ts = record.get(1).unwrap_or("");
            let tag_text = record.get(2).unwrap_or("");
            let value_text = record.get(3).unwrap_or("");
            if id.is_empty() {
                report.push_row_error(line, "missing household id".to_string());
                continue;
            }
            let minutes = match parse_timestamp(ts) {
                Some(t) => minutes_of(t),
                None => {
                    report.push_row_error(line, format!("unparseable timestamp {ts:?}"));
                    continue;
                }
            };
            let tag = match ChannelTag::parse(tag_text) {
                Some(t) => t,
                None => {
                    report.push_row_error(line, format!("unknown channel tag {tag_text:?}"));
                    continue;
                }
            };
            let value = match parse_energy(value_text) {
                Ok(v) => v,
                Err(msg) => {
                    report.push_row_error(line, msg);
                    continue;
                }
            };
            points.push(PointRow {
                household: index.intern(id),
                line,
                minutes,
                tag,
                value,
            });
        }
    }

    if points.is_empty() && days.is_empty() {
        report.warn(format!("{provenance}: no data rows; empty dataset"));
        return Ok((
            FleetDataset {
                households: Vec::new(),
                provenance: provenance.to_string(),
            },
            report,
        ));
    }

    let anchor_minutes = points
        .iter()
        .map(|r| r.minutes - r.minutes.rem_euclid(24 * 60))
        .chain(
            days.iter()
                .map(|r| i64::from(r.date.num_days_from_ce()) * 24 * 60),
        )
        .min()
        .expect("nonempty rows");
    let start_date = NaiveDate::from_num_days_from_ce_opt((anchor_minutes / (24 * 60)) as i32)
        .ok_or_else(|| Error::InvalidData("gross-meter csv: date out of range".to_string()))?;

    let mut grids: Vec<SlotGrid> = (0..index.ids.len()).map(|_| SlotGrid::new()).collect();
    for row in &points {
        apply_point(&mut grids, anchor_minutes, row, &mut report);
    }
    for day in &days {
        let day_minutes = i64::from(day.date.num_days_from_ce()) * 24 * 60;
        for (k, &value) in day.values.iter().enumerate() {
            if value.is_nan() {
                continue;
            }
            apply_point(
                &mut grids,
                anchor_minutes,
                &PointRow {
                    household: day.household,
                    line: day.line,
                    minutes: day_minutes + (k as i64) * 30,
                    tag: day.tag,
                    value,
                },
                &mut report,
            );
        }
    }

    // Normalise generation into insolation; a household with generation data
    // but no declared capacity is a hard error.
    let mut households = Vec::with_capacity(index.ids.len());
    for (i, grid) in grids.into_iter().enumerate() {
        let id = &index.ids[i];
        let has_generation = grid.generation.iter().any(|v| !v.is_nan());
        let capacity = declared_capacities
            .get(id)
            .copied()
            .or_else(|| embedded_capacity.get(&(i as u32)).copied());
        let insolation = if has_generation {
            let capacity = capacity.ok_or_else(|| {
                Error::InvalidData(format!(
                    "no declared PV capacity for household {id} with generation data"
                ))
            })?;
            if !capacity.is_finite() || capacity <= 0.0 {
                return Err(Error::InvalidData(format!(
                    "declared PV capacity for household {id} must be positive, got {capacity}"
                )));
            }
            grid.generation.iter().map(|g| g / capacity).collect()
        } else {
            grid.generation
        };
        households.push(HouseholdProfile {
            household_id: id.clone(),
            demand: grid.demand,
            insolation,
            start_date,
        });
    }
    households.sort_by(|a, b| a.household_id.cmp(&b.household_id));

    Ok((
        FleetDataset {
            households,
            provenance: provenance.to_string(),
        },
        report,
    ))
}

/// Read the canonical normalised CSV layout.
pub fn read_profiles_csv(path: &Path) -> Result<(FleetDataset, ImportReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_profiles_from_reader(
        BufReader::new(file),
        &format!("normalised csv import: {}", path.display()),
    )
}

pub fn read_profiles_from_reader(
    reader: impl Read,
    provenance: &str,
) -> Result<(FleetDataset, ImportReport)> {
    let mut report = ImportReport::default();
    let mut index = HouseholdIndex::default();
    let mut rows: Vec<NormRow> = Vec::new();

    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut first = true;
    for record in csv_reader.records() {
        let record = record.map_err(|e| Error::InvalidData(format!("profiles csv: {e}")))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if first {
            first = false;
            let looks_like_header = record
                .get(1)
                .map(|f| parse_timestamp(f).is_none())
                .unwrap_or(true);
            if looks_like_header {
                continue;
            }
        }
        let id = record.get(0).unwrap_or("").trim();
        if id.is_empty() {
            report.push_row_error(line, "missing household id".to_string());
            continue;
        }
        let minutes = match parse_timestamp(record.get(1).unwrap_or("")) {
            Some(t) => minutes_of(t),
            None => {
                report.push_row_error(
                    line,
                    format!("unparseable timestamp {:?}", record.get(1).unwrap_or("")),
                );
                continue;
            }
        };
        let demand = match record.get(2).map(parse_energy) {
            Some(Ok(v)) => v,
            _ => {
                report.push_row_error(line, "unparseable demand value".to_string());
                continue;
            }
        };
        let insolation = match record.get(3).map(parse_energy) {
            Some(Ok(v)) => v,
            _ => {
                report.push_row_error(line, "unparseable insolation value".to_string());
                continue;
            }
        };
        rows.push(NormRow {
            household: index.intern(id),
            line,
            minutes,
            demand,
            insolation,
        });
    }

    if rows.is_empty() {
        report.warn(format!("{provenance}: no data rows; empty dataset"));
        return Ok((
            FleetDataset {
                households: Vec::new(),
                provenance: provenance.to_string(),
            },
            report,
        ));
    }

    let anchor_minutes = rows
        .iter()
        .map(|r| r.minutes - r.minutes.rem_euclid(24 * 60))
        .min()
        .expect("nonempty rows");
    let start_date = NaiveDate::from_num_days_from_ce_opt((anchor_minutes / (24 * 60)) as i32)
        .ok_or_else(|| Error::InvalidData("profiles csv: date out of range".to_string()))?;

    let mut grids: Vec<SlotGrid> = (0..index.ids.len()).map(|_| SlotGrid::new()).collect();
    for row in &rows {
        let slot = match slot_for(row.minutes, anchor_minutes) {
            Ok(s) => s,
            Err(msg) => {
                report.push_row_error(row.line, msg);
                continue;
            }
        };
        let grid = &mut grids[row.household as usize];
        if grid.seen[slot] != 0 {
            report.push_row_error(row.line, format!("duplicate row for interval {slot}"));
            continue;
        }
        grid.seen[slot] = 1;
        grid.demand[slot] = row.demand;
        grid.generation[slot] = row.insolation;
    }

    let mut households: Vec<HouseholdProfile> = index
        .ids
        .iter()
        .zip(grids)
        .map(|(id, grid)| HouseholdProfile {
            household_id: id.clone(),
            demand: grid.demand,
            insolation: grid.generation,
            start_date,
        })
        .collect();
    households.sort_by(|a, b| a.household_id.cmp(&b.household_id));

    Ok((
        FleetDataset {
            households,
            provenance: provenance.to_string(),
        },
        report,
    ))
}

/// Write the canonical normalised CSV layout. Floats use the shortest
/// round-trippable representation, so export → import reproduces values
/// bit-for-bit.
pub fn write_profiles_csv(dataset: &FleetDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_profiles_to_writer(dataset, BufWriter::new(file))
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

pub fn write_profiles_to_writer(dataset: &FleetDataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io_err = |e: csv::Error| Error::InvalidData(format!("profiles csv write: {e}"));
    w.write_record(CSV_HEADER).map_err(io_err)?;
    for household in &dataset.households {
        for i in 0..household.intervals() {
            w.write_record([
                household.household_id.as_str(),
                &household.timestamp(i).format("%Y-%m-%dT%H:%M:%S").to_string(),
                &household.demand[i].to_string(),
                &household.insolation[i].to_string(),
            ])
            .map_err(io_err)?;
        }
    }
    w.flush()
        .map_err(|e| Error::InvalidData(format!("profiles csv write: {e}")))?;
    Ok(())
}

/// Keep only households satisfying every profile invariant; rejections are
/// reported, not errors. Idempotent.
pub fn validate_and_filter(dataset: FleetDataset) -> (FleetDataset, RejectionReport) {
    let mut report = RejectionReport::default();
    let mut seen_ids: HashMap<String, ()> = HashMap::new();
    let mut kept = Vec::with_capacity(dataset.households.len());
    for household in dataset.households {
        if seen_ids.contains_key(&household.household_id) {
            report.rejected.push(RejectedHousehold {
                household_id: household.household_id,
                reason: Violation::DuplicateHouseholdId,
            });
            continue;
        }
        seen_ids.insert(household.household_id.clone(), ());
        match household.first_violation() {
            Some(reason) => report.rejected.push(RejectedHousehold {
                household_id: household.household_id,
                reason,
            }),
            None => kept.push(household),
        }
    }
    (
        FleetDataset {
            households: kept,
            provenance: dataset.provenance,
        },
        report,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub households: usize,
    pub total_demand_mwh: f64,
    pub mean_demand_mwh: f64,
    /// Mean over households of annual insolation sum divided by 8760 h.
    pub mean_capacity_factor: f64,
    pub peak_demand_kw: f64,
    pub peak_timestamp: NaiveDateTime,
}

/// Aggregate statistics over a validated dataset.
pub fn dataset_summary(dataset: &FleetDataset) -> Result<DatasetSummary> {
    let first = dataset
        .households
        .first()
        .ok_or_else(|| Error::InvalidData("dataset summary of an empty dataset".to_string()))?;
    let intervals = first.intervals();
    let start_date = first.start_date;
    for h in &dataset.households {
        if h.intervals() != intervals || h.insolation.len() != intervals || h.start_date != start_date
        {
            return Err(Error::InvalidData(format!(
                "household {} covers a different interval grid",
                h.household_id
            )));
        }
    }

    let hours_per_year = intervals as f64 * INTERVAL_HOURS;
    let mut total_demand_kwh = 0.0;
    let mut capacity_factor_sum = 0.0;
    let mut interval_sums = vec![0.0f64; intervals];
    for h in &dataset.households {
        total_demand_kwh += h.annual_demand_kwh();
        capacity_factor_sum += h.annual_insolation_kwh_per_kwp() / hours_per_year;
        for (acc, d) in interval_sums.iter_mut().zip(&h.demand) {
            *acc += d;
        }
    }
    let (peak_interval, peak_kwh) = interval_sums
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });

    let n = dataset.households.len() as f64;
    Ok(DatasetSummary {
        households: dataset.households.len(),
        total_demand_mwh: total_demand_kwh / 1000.0,
        mean_demand_mwh: total_demand_kwh / 1000.0 / n,
        mean_capacity_factor: capacity_factor_sum / n,
        peak_demand_kw: power_kw(peak_kwh),
        peak_timestamp: interval_timestamp(start_date, peak_interval),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn start() -> NaiveDate {
        NaiveDate::from_ymd_opt(2012, 7, 1).unwrap()
    }

    fn constant_profile(id: &str, demand: f64, insolation: f64) -> HouseholdProfile {
        HouseholdProfile {
            household_id: id.to_string(),
            demand: vec![demand; INTERVALS_PER_YEAR],
            insolation: vec![insolation; INTERVALS_PER_YEAR],
            start_date: start(),
        }
    }

    #[test]
    fn gross_import_normalises_by_declared_capacity() {
        let raw = "household_id,timestamp,channel,energy_kwh\n\
                   h1,2012-07-01T00:00:00,GC,0.2\n\
                   h1,2012-07-01T00:00:00,GG,0.6\n";
        let caps = BTreeMap::from([("h1".to_string(), 2.0)]);
        let (ds, report) = import_gross_meter_from_reader(raw.as_bytes(), &caps, "test").unwrap();
        assert_eq!(report.row_error_count, 0);
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.households[0].insolation[0], 0.3);
        assert_eq!(ds.households[0].demand[0], 0.2);
    }

    #[test]
    fn gross_import_unknown_channel_is_row_error_with_line() {
        let raw = "household_id,timestamp,channel,energy_kwh\n\
                   h1,2012-07-01T00:00:00,GC,0.2\n\
                   h1,2012-07-01T00:30:00,XX,0.2\n";
        let caps = BTreeMap::new();
        let (_, report) = import_gross_meter_from_reader(raw.as_bytes(), &caps, "test").unwrap();
        assert_eq!(report.row_error_count, 1);
        assert_eq!(report.row_errors[0].line, 3);
        assert!(report.row_errors[0].message.contains("unknown channel tag"));
    }

    #[test]
    fn gross_import_missing_capacity_is_hard_error_naming_household() {
        let raw = "household_id,timestamp,channel,energy_kwh\n\
                   h9,2012-07-01T00:00:00,GG,0.6\n";
        let caps = BTreeMap::new();
        let err = import_gross_meter_from_reader(raw.as_bytes(), &caps, "test").unwrap_err();
        assert!(err.to_string().contains("h9"), "{err}");
    }

    #[test]
    fn gross_import_controlled_load_adds_to_demand() {
        let raw = "household_id,timestamp,channel,energy_kwh\n\
                   h1,2012-07-01T00:00:00,GC,0.2\n\
                   h1,2012-07-01T00:00:00,CL,0.15\n";
        let caps = BTreeMap::new();
        let (ds, report) = import_gross_meter_from_reader(raw.as_bytes(), &caps, "test").unwrap();
        assert_eq!(report.row_error_count, 0);
        assert_eq!(ds.households[0].demand[0], 0.35);
    }

    #[test]
    fn gross_import_duplicate_channel_reading_is_row_error() {
        let raw = "household_id,timestamp,channel,energy_kwh\n\
                   h1,2012-07-01T00:00:00,GC,0.2\n\
                   h1,2012-07-01T00:00:00,GC,0.4\n";
        let caps = BTreeMap::new();
        let (ds, report) = import_gross_meter_from_reader(raw.as_bytes(), &caps, "test").unwrap();
        assert_eq!(report.row_error_count, 1);
        assert_eq!(ds.households[0].demand[0], 0.2, "first reading wins");
    }

    #[test]
    fn gross_import_wide_layout() {
        let mut header = String::from("Customer,Generator Capacity,Postcode,Consumption Category,date");
        for k in 0..48 {
            header.push_str(&format!(",c{k}"));
        }
        let mut gc = String::from("42,3.5,2000,GC,1/07/2012");
        let mut gg = String::from("42,3.5,2000,GG,1/07/2012");
        for k in 0..48 {
            gc.push_str(&format!(",{}", 0.1 + k as f64 * 0.01));
            gg.push_str(",0.7");
        }
        let raw = format!("{header}\n{gc}\n{gg}\n");
        let caps = BTreeMap::new();
        let (ds, report) =
            import_gross_meter_from_reader(raw.as_bytes(), &caps, "test").unwrap();
        assert_eq!(report.row_error_count, 0);
        assert_eq!(ds.len(), 1);
        let h = &ds.households[0];
        assert_eq!(h.start_date, start());
        assert_eq!(h.demand[0], 0.1);
        assert!((h.insolation[5] - 0.2).abs() < 1e-12); // 0.7 / 3.5
        assert!(h.demand[48].is_nan(), "second day untouched");
    }

    #[test]
    fn empty_file_gives_empty_dataset_with_warning() {
        let (ds, report) = read_profiles_from_reader(&b""[..], "test").unwrap();
        assert!(ds.is_empty());
        assert_eq!(report.warnings.len(), 1);
        let caps = BTreeMap::new();
        let (ds, report) = import_gross_meter_from_reader(&b""[..], &caps, "test").unwrap();
        assert!(ds.is_empty());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn validate_rejects_gap_negative_and_cap_violations() {
        let mut gap = constant_profile("gap", 0.5, 0.1);
        gap.demand[1234] = f64::NAN;
        let mut neg = constant_profile("neg", 0.5, 0.1);
        neg.demand[7] = -0.25;
        let mut hot = constant_profile("hot", 0.5, 0.1);
        hot.insolation[99] = 0.51;
        let short = HouseholdProfile {
            household_id: "short".to_string(),
            demand: vec![0.5; 10],
            insolation: vec![0.1; 10],
            start_date: start(),
        };
        let clean = constant_profile("clean", 0.5, 0.1);
        let ds = FleetDataset {
            households: vec![gap, neg, hot, short, clean],
            provenance: String::new(),
        };
        let (kept, report) = validate_and_filter(ds);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.households[0].household_id, "clean");
        let reasons: Vec<String> = report
            .rejected
            .iter()
            .map(|r| format!("{}:{}", r.household_id, r.reason))
            .collect();
        assert!(reasons[0].starts_with("gap:gap at interval 1234"), "{reasons:?}");
        assert!(reasons[1].contains("negative value"), "{reasons:?}");
        assert!(reasons[2].contains("insolation above"), "{reasons:?}");
        assert!(reasons[3].contains("wrong interval count"), "{reasons:?}");
    }

    #[test]
    fn validate_is_idempotent_and_identity_on_clean_data() {
        let ds = FleetDataset {
            households: vec![constant_profile("a", 0.4, 0.2), constant_profile("b", 0.1, 0.0)],
            provenance: "p".to_string(),
        };
        let (once, report) = validate_and_filter(ds.clone());
        assert!(report.is_clean());
        assert_eq!(once, ds);
        let (twice, report2) = validate_and_filter(once.clone());
        assert!(report2.is_clean());
        assert_eq!(twice, once);
    }

    #[test]
    fn summary_of_constant_household() {
        let ds = FleetDataset {
            households: vec![constant_profile("a", 0.5, 0.1)],
            provenance: String::new(),
        };
        let s = dataset_summary(&ds).unwrap();
        assert!((s.total_demand_mwh - 8.76).abs() < 1e-9);
        assert!((s.mean_demand_mwh - 8.76).abs() < 1e-9);
        assert!((s.peak_demand_kw - 1.0).abs() < 1e-12);
        // constant insolation 0.1 → annual 1752 kWh/kW_P → CF 0.2
        assert!((s.mean_capacity_factor - 0.2).abs() < 1e-9);
    }

    #[test]
    fn summary_is_additive_over_partitions() {
        let a = constant_profile("a", 0.3, 0.05);
        let b = constant_profile("b", 0.7, 0.15);
        let both = FleetDataset {
            households: vec![a.clone(), b.clone()],
            provenance: String::new(),
        };
        let only = |h: HouseholdProfile| FleetDataset {
            households: vec![h],
            provenance: String::new(),
        };
        let s = dataset_summary(&both).unwrap();
        let sa = dataset_summary(&only(a)).unwrap();
        let sb = dataset_summary(&only(b)).unwrap();
        assert!((s.total_demand_mwh - (sa.total_demand_mwh + sb.total_demand_mwh)).abs() < 1e-9);
        assert!((s.peak_demand_kw - (sa.peak_demand_kw + sb.peak_demand_kw)).abs() < 1e-9);
    }

    #[test]
    fn summary_of_empty_dataset_is_error() {
        let ds = FleetDataset::default();
        assert!(dataset_summary(&ds).is_err());
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        // awkward values that exercise shortest-float formatting
        let mut a = constant_profile("a", 0.1, 0.30000000000000004);
        a.demand[0] = 1.0 / 3.0;
        a.demand[1] = 5e-324; // smallest subnormal
        a.demand[2] = 1234.56789012345678;
        a.insolation[3] = 0.49999999999999994;
        let ds = FleetDataset {
            households: vec![a, constant_profile("b", 0.25, 0.125)],
            provenance: "roundtrip".to_string(),
        };
        let mut buf = Vec::new();
        write_profiles_to_writer(&ds, &mut buf).unwrap();
        let (back, report) = read_profiles_from_reader(&buf[..], "roundtrip").unwrap();
        assert_eq!(report.row_error_count, 0);
        assert_eq!(back.len(), ds.len());
        for (h0, h1) in ds.households.iter().zip(&back.households) {
            assert_eq!(h0.household_id, h1.household_id);
            assert_eq!(h0.start_date, h1.start_date);
            for i in 0..INTERVALS_PER_YEAR {
                assert_eq!(h0.demand[i].to_bits(), h1.demand[i].to_bits());
                assert_eq!(h0.insolation[i].to_bits(), h1.insolation[i].to_bits());
            }
        }
    }

    #[test]
    fn missing_interval_becomes_gap_rejection() {
        let ds = FleetDataset {
            households: vec![constant_profile("a", 0.5, 0.1)],
            provenance: String::new(),
        };
        let mut buf = Vec::new();
        write_profiles_to_writer(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // drop the row for 2012-07-01T13:00
        let filtered: String = text
            .lines()
            .filter(|l| !l.contains("2012-07-01T13:00:00"))
            .map(|l| format!("{l}\n"))
            .collect();
        let (back, _) = read_profiles_from_reader(filtered.as_bytes(), "t").unwrap();
        let (kept, report) = validate_and_filter(back);
        assert!(kept.is_empty());
        assert_eq!(report.rejected.len(), 1);
        assert!(report.rejected[0].reason.to_string().starts_with("gap"));
        assert_eq!(report.rejected[0].reason, Violation::Gap { interval: 26 });
    }

    proptest! {
        #[test]
        fn float_text_roundtrip_is_bit_exact(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let parsed: f64 = v.to_string().parse().unwrap();
            prop_assert_eq!(parsed.to_bits(), v.to_bits());
        }

        #[test]
        fn capacity_map_parser_never_panics(data in proptest::collection::vec(any::<u8>(), 0..512)) {
            let _ = read_capacity_map(&data[..]);
        }
    }
}
