use std::time::Instant;

fn main() {
    let mut demand = Vec::with_capacity(17520);
    let mut insolation = Vec::with_capacity(17520);
    for d in 0..365usize {
        let s = (std::f64::consts::TAU * (d as f64 - 14.0) / 365.25).cos();
        for k in 0..48usize {
            let hour = k as f64 * 0.5 + 0.25;
            let x: f64 = (hour - 12.5) / (7.0 + 1.5 * s);
            let ins = if x.abs() < 1.0 { (0.35 + 0.12 * s) * (std::f64::consts::FRAC_PI_2 * x).cos() } else { 0.0 };
            insolation.push(ins);
            demand.push(0.2 + 0.2 * ((k as f64 - 38.0) / 4.0).powi(2).min(1.0));
        }
    }
    let profile = pvfleet::profiles::HouseholdProfile {
        household_id: "bench".into(),
        demand,
        insolation,
        start_date: chrono::NaiveDate::from_ymd_opt(2012, 7, 1).unwrap(),
    };
    let params = pvfleet::finance::ScenarioParams::default();
    let tech = pvfleet::dispatch::TechnicalParams::default();

    // one household, full default grid, full 20 years
    let t0 = Instant::now();
    let sim = pvfleet::investor::simulate_household(&profile, &params, &tech, pvfleet::investor::CandidateGrid::default());
    let dt = t0.elapsed().as_secs_f64();
    let invested: Vec<_> = sim.years.iter().filter_map(|y| y.investment.as_ref().map(|r| (r.year, r.pv_added_kw, r.battery_added_kwh))).collect();
    println!("full-grid 20yr household: {dt:.2}s; investments: {invested:?}");
    println!("final pv {:.2} batt {:.2}", sim.years.last().unwrap().pv_nameplate_kw, sim.years.last().unwrap().battery_nameplate_kwh);
}
