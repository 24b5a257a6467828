//! Deterministic synthetic fleet used by integration tests: seasonal
//! southern-hemisphere demand (winter-heavy energy, synchronized summer
//! cooling peaks) and a daylight insolation arch, varied per household
//! without any randomness.

#![allow(dead_code)]

use chrono::{Datelike, NaiveDate};
use pvfleet::profiles::{FleetDataset, HouseholdProfile, INTERVALS_PER_DAY, INTERVALS_PER_YEAR};

pub const START_DATE: (i32, u32, u32) = (2012, 7, 1);

pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(START_DATE.0, START_DATE.1, START_DATE.2).unwrap()
}

/// Seasonality in [-1, 1]: +1 in mid-January (southern summer), -1 in
/// mid-July.
fn seasonality(date: NaiveDate) -> f64 {
    let doy = date.ordinal0() as f64;
    (std::f64::consts::TAU * (doy - 14.0) / 365.25).cos()
}

/// Hot summer days carry a synchronized afternoon cooling load across the
/// whole fleet.
fn is_hot_day(day: usize, s: f64) -> bool {
    s > 0.55 && day % 5 < 2
}

pub fn synthetic_profile(index: usize, annual_demand_mwh: f64) -> HouseholdProfile {
    let start = start_date();
    let demand_scale = 0.6 + 0.1 * (index % 11) as f64;
    let evening_shift = (index % 3) as i64 - 1;
    let pv_tilt = 0.90 + 0.02 * (index % 6) as f64;
    let cooling_scale = 0.8 + 0.04 * (index % 11) as f64;

    let mut demand = Vec::with_capacity(INTERVALS_PER_YEAR);
    let mut insolation = Vec::with_capacity(INTERVALS_PER_YEAR);
    for day in 0..365usize {
        let date = start + chrono::Duration::days(day as i64);
        let s = seasonality(date);
        let winter = 1.0 + 0.9 * (-s).max(0.0);
        let hot = is_hot_day(day, s);
        let daylight_halfwidth_h = 7.0 + 1.5 * s;
        let insolation_scale = 0.35 + 0.12 * s;
        for k in 0..INTERVALS_PER_DAY {
            // insolation: a daylight arch around 12:30 local time
            let hour = k as f64 * 0.5 + 0.25;
            let x = (hour - 12.5) / daylight_halfwidth_h;
            let ins = if x.abs() < 1.0 {
                insolation_scale * (std::f64::consts::FRAC_PI_2 * x).cos() * pv_tilt
            } else {
                0.0
            };
            insolation.push(ins);

            // demand: base load, overnight dip, morning and evening peaks
            // (winter-boosted), synchronized summer cooling
            let mut v = 0.10;
            if (2..10).contains(&k) {
                v -= 0.03;
            }
            if (13..=17).contains(&k) {
                v += 0.18 * winter;
            }
            let evening_start = 35 + evening_shift;
            let kk = k as i64;
            if kk >= evening_start && kk < evening_start + 9 {
                let w = 1.0 - (kk - (evening_start + 3)).abs() as f64 / 6.0;
                v += 0.38 * winter * w.max(0.3);
            }
            if hot && (28..=42).contains(&k) {
                v += 0.55 * cooling_scale;
            }
            demand.push(v);
        }
    }

    // Normalise to the target annual energy, keeping the shape.
    let target_kwh = annual_demand_mwh * demand_scale * 1000.0;
    let actual: f64 = demand.iter().sum();
    let factor = target_kwh / actual;
    for d in &mut demand {
        *d *= factor;
    }

    HouseholdProfile {
        household_id: format!("h{index:03}"),
        demand,
        insolation,
        start_date: start,
    }
}

pub fn synthetic_fleet(households: usize) -> FleetDataset {
    FleetDataset {
        households: (0..households).map(|i| synthetic_profile(i, 5.62)).collect(),
        provenance: "synthetic test fleet".to_string(),
    }
}

/// Write a synthetic fleet to a normalised CSV and return its path.
pub fn write_synthetic_csv(dir: &std::path::Path, households: usize) -> std::path::PathBuf {
    let path = dir.join("profiles.csv");
    pvfleet::profiles::write_profiles_csv(&synthetic_fleet(households), &path).unwrap();
    path
}
