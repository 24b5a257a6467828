//! Tariff trajectories, electricity bills, system costs, NPV and discounted
//! payback.
//!
//! Horizon years `n` and simulation years `t` are both 1-based; every tariff
//! grows geometrically with exponent `n + t - 2`, so year (n, t) and year
//! (n+1, t-1) price identically.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::{Error, Result};

/// Scenario-level economic parameters. Defaults are the reference case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Flat usage charge in year one ($/kWh).
    pub usage_charge_start: f64,
    /// Feed-in tariff as a fraction of the usage charge (the scenario knob).
    pub fit_fraction: f64,
    /// Fixed daily charge in year one ($/day).
    pub daily_charge_start: f64,
    /// Annual growth of all tariff charges and rebates (fraction/yr).
    pub tariff_growth: f64,
    pub discount_rate: f64,
    /// Installed PV system cost in year one ($/kW_P).
    pub pv_cost_start: f64,
    /// Installed battery system cost in year one ($/kWh).
    pub battery_cost_start: f64,
    pub pv_cost_growth: f64,
    pub battery_cost_growth: f64,
    /// Combined installed PV capacity above which exports earn nothing (kW_P).
    pub fit_capacity_limit_kw: f64,
    /// Financial horizon N for NPV and payback (years).
    pub horizon_years: u32,
    /// Maximum discounted payback that unlocks an investment (years).
    pub payback_threshold_years: u32,
    /// Length of the simulated adoption period (years).
    pub sim_years: u32,
    /// Calendar year of simulation year t = 1.
    pub sim_start_year: i32,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            usage_charge_start: 0.27,
            fit_fraction: 0.25,
            daily_charge_start: 0.95,
            tariff_growth: 0.05,
            discount_rate: 0.06,
            pv_cost_start: 1400.0,
            battery_cost_start: 900.0,
            pv_cost_growth: -0.059,
            battery_cost_growth: -0.08,
            fit_capacity_limit_kw: 5.0,
            horizon_years: 10,
            payback_threshold_years: 5,
            sim_years: 20,
            sim_start_year: 2018,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let rates_ok = self.tariff_growth > -1.0
            && self.discount_rate > -1.0
            && self.pv_cost_growth > -1.0
            && self.battery_cost_growth > -1.0;
        let ok = rates_ok
            && (0.0..=1.0).contains(&self.fit_fraction)
            && self.horizon_years >= 1
            && self.sim_years >= 1
            && self.usage_charge_start >= 0.0
            && self.daily_charge_start >= 0.0
            && self.pv_cost_start >= 0.0
            && self.battery_cost_start >= 0.0
            && self.fit_capacity_limit_kw >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "scenario parameters out of range (rates > -1, fit_fraction in [0,1], horizon >= 1, starts >= 0)"
                    .to_string(),
            ))
        }
    }

    /// Feed-in tariff in year one: `fit_fraction × usage_charge_start`.
    pub fn export_tariff_start(&self) -> f64 {
        self.fit_fraction * self.usage_charge_start
    }

    pub fn calendar_year(&self, t: u32) -> i32 {
        self.sim_start_year + t as i32 - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TariffKind {
    Import,
    Daily,
}

fn growth(rate: f64, exponent: u32) -> f64 {
    (1.0 + rate).powi(exponent as i32)
}

/// Tariff for horizon year `n` of simulation year `t`:
/// `start × (1 + tariff_growth)^(n + t - 2)`.
pub fn tariff_at(kind: TariffKind, n: u32, t: u32, params: &ScenarioParams) -> f64 {
    debug_assert!(n >= 1 && t >= 1);
    let start = match kind {
        TariffKind::Import => params.usage_charge_start,
        TariffKind::Daily => params.daily_charge_start,
    };
    start * growth(params.tariff_growth, n + t - 2)
}

/// Feed-in rate for a household whose combined installed PV is
/// `total_pv_kw`; zero above the eligibility limit (the boundary is
/// inclusive).
pub fn fit_rate(total_pv_kw: f64, n: u32, t: u32, params: &ScenarioParams) -> f64 {
    if total_pv_kw <= params.fit_capacity_limit_kw {
        params.export_tariff_start() * growth(params.tariff_growth, n + t - 2)
    } else {
        0.0
    }
}

/// Annual electricity bill: imports at the usage charge minus exports at the
/// feed-in rate plus 365 daily charges. May be negative (a net credit).
pub fn annual_bill(
    import_kwh: f64,
    export_kwh: f64,
    total_pv_kw: f64,
    n: u32,
    t: u32,
    params: &ScenarioParams,
) -> f64 {
    import_kwh * tariff_at(TariffKind::Import, n, t, params)
        - export_kwh * fit_rate(total_pv_kw, n, t, params)
        + 365.0 * tariff_at(TariffKind::Daily, n, t, params)
}

/// Upfront cost of an incremental installation in simulation year `t`.
pub fn system_cost(pv_add_kw: f64, battery_add_kwh: f64, t: u32, params: &ScenarioParams) -> f64 {
    debug_assert!(t >= 1);
    pv_add_kw * params.pv_cost_start * growth(params.pv_cost_growth, t - 1)
        + battery_add_kwh * params.battery_cost_start * growth(params.battery_cost_growth, t - 1)
}

/// Upfront cost plus the expected bill savings over the financial horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CashFlowSeries {
    pub upfront_cost: f64,
    /// Savings for horizon years 1..=N.
    pub annual_savings: Vec<f64>,
}

/// Discounted payback period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Payback {
    Years(u32),
    Never,
}

impl Payback {
    pub fn within(&self, threshold_years: u32) -> bool {
        match self {
            Payback::Years(n) => *n <= threshold_years,
            Payback::Never => false,
        }
    }
}

impl fmt::Display for Payback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payback::Years(n) => write!(f, "{n}"),
            Payback::Never => write!(f, "never"),
        }
    }
}

/// Slack for comparisons against the upfront cost, covering float roundoff
/// at exact-equality boundaries (sub-nanodollar scale).
pub(crate) const COST_EPSILON: f64 = 1e-9;

/// Net present value: discounted savings minus upfront cost.
pub fn npv(cash_flow: &CashFlowSeries, params: &ScenarioParams) -> f64 {
    let discounted: f64 = cash_flow
        .annual_savings
        .iter()
        .enumerate()
        .map(|(i, s)| s / growth(params.discount_rate, i as u32 + 1))
        .sum();
    discounted - cash_flow.upfront_cost
}

/// Smallest horizon year whose cumulative discounted savings cover the
/// upfront cost; zero-cost investments pay back immediately.
pub fn discounted_payback(cash_flow: &CashFlowSeries, params: &ScenarioParams) -> Payback {
    if cash_flow.upfront_cost <= COST_EPSILON {
        return Payback::Years(0);
    }
    let mut cumulative = 0.0;
    for (i, s) in cash_flow.annual_savings.iter().enumerate() {
        cumulative += s / growth(params.discount_rate, i as u32 + 1);
        if cumulative >= cash_flow.upfront_cost - COST_EPSILON {
            return Payback::Years(i as u32 + 1);
        }
    }
    Payback::Never
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> ScenarioParams {
        ScenarioParams::default()
    }

    #[test]
    fn tariff_examples() {
        let p = params();
        assert_eq!(tariff_at(TariffKind::Import, 1, 1, &p), 0.27);
        // 0.27 × 1.05² = 0.297675
        assert!((tariff_at(TariffKind::Import, 1, 3, &p) - 0.297675).abs() < 1e-9);
        // 0.95 × 1.05 = 0.9975
        assert!((tariff_at(TariffKind::Daily, 2, 1, &p) - 0.9975).abs() < 1e-9);
    }

    #[test]
    fn tariff_exponent_depends_only_on_sum() {
        let p = params();
        for n in 1..=20u32 {
            for t in 2..=20u32 {
                let a = tariff_at(TariffKind::Import, n, t, &p);
                let b = tariff_at(TariffKind::Import, n + 1, t - 1, &p);
                assert_eq!(a, b, "n={n} t={t}");
            }
        }
    }

    #[test]
    fn fit_rate_eligibility_boundary() {
        let p = ScenarioParams {
            fit_fraction: 0.25,
            ..params()
        };
        // 5 kW_P and under is eligible: 0.25 × 0.27 = 0.0675
        assert!((fit_rate(5.0, 1, 1, &p) - 0.0675).abs() < 1e-12);
        assert_eq!(fit_rate(5.5, 1, 1, &p), 0.0);
        assert_eq!(fit_rate(5.5, 7, 3, &p), 0.0);
        let zero = ScenarioParams {
            fit_fraction: 0.0,
            ..params()
        };
        assert_eq!(fit_rate(3.0, 1, 1, &zero), 0.0);
    }

    #[test]
    fn bill_examples() {
        let p = params();
        // 5000 × 0.27 + 365 × 0.95 = 1696.75
        let b = annual_bill(5000.0, 0.0, 0.0, 1, 1, &p);
        assert!((b - 1696.75).abs() < 1e-9);
        // zero energy → fixed charge only
        let b = annual_bill(0.0, 0.0, 0.0, 1, 1, &p);
        assert!((b - 365.0 * 0.95).abs() < 1e-9);
        // large exports make the bill negative; no floor applies
        let p100 = ScenarioParams {
            fit_fraction: 1.0,
            ..params()
        };
        let b = annual_bill(0.0, 10_000.0, 5.0, 1, 1, &p100);
        assert!(b < 0.0);
    }

    #[test]
    fn system_cost_examples() {
        let p = params();
        // 5 × 1400 + 13.5 × 900 = 19150
        assert!((system_cost(5.0, 13.5, 1, &p) - 19150.0).abs() < 1e-9);
        assert_eq!(system_cost(0.0, 0.0, 1, &p), 0.0);
        // one year of −5.9%/yr PV cost decline: 1400 × 0.941 = 1317.40
        assert!((system_cost(1.0, 0.0, 2, &p) - 1317.40).abs() < 1e-9);
    }

    #[test]
    fn npv_examples() {
        let p = params();
        let zero = CashFlowSeries {
            upfront_cost: 0.0,
            annual_savings: vec![0.0; 10],
        };
        assert_eq!(npv(&zero, &p), 0.0);

        // undiscounted limit: 10 years of S with R_d = 0 → 10S − C
        let p0 = ScenarioParams {
            discount_rate: 0.0,
            ..params()
        };
        let cf = CashFlowSeries {
            upfront_cost: 700.0,
            annual_savings: vec![100.0; 10],
        };
        assert!((npv(&cf, &p0) - 300.0).abs() < 1e-9);

        // annuity cross-check: S × [1 − (1+R)⁻¹⁰]/R − C
        let cf = CashFlowSeries {
            upfront_cost: 5000.0,
            annual_savings: vec![1000.0; 10],
        };
        let annuity = (1.0 - 1.06f64.powi(-10)) / 0.06;
        assert_relative_eq!(npv(&cf, &p), 1000.0 * annuity - 5000.0, epsilon = 1e-9);
        assert_relative_eq!(npv(&cf, &p), 2360.087, epsilon = 1e-3);
    }

    #[test]
    fn payback_examples() {
        let p = params();
        let free = CashFlowSeries {
            upfront_cost: 0.0,
            annual_savings: vec![1.0; 10],
        };
        assert_eq!(discounted_payback(&free, &p), Payback::Years(0));
        assert!(Payback::Years(0).within(p.payback_threshold_years));

        // 1060/1.06 = 1000 exactly; the inclusive boundary pays back in year 1
        let exact = CashFlowSeries {
            upfront_cost: 1000.0,
            annual_savings: vec![1060.0; 10],
        };
        assert_eq!(discounted_payback(&exact, &p), Payback::Years(1));

        let hopeless = CashFlowSeries {
            upfront_cost: 5000.0,
            annual_savings: vec![100.0; 10],
        };
        assert_eq!(discounted_payback(&hopeless, &p), Payback::Never);
        assert!(!Payback::Never.within(p.payback_threshold_years));
    }

    #[test]
    fn payback_year_has_nonnegative_partial_npv() {
        let p = params();
        let cf = CashFlowSeries {
            upfront_cost: 2500.0,
            annual_savings: (1..=10).map(|n| 300.0 + 25.0 * n as f64).collect(),
        };
        if let Payback::Years(n) = discounted_payback(&cf, &p) {
            assert!(n >= 1);
            let partial: f64 = cf.annual_savings[..n as usize]
                .iter()
                .enumerate()
                .map(|(i, s)| s / 1.06f64.powi(i as i32 + 1))
                .sum();
            assert!(partial - cf.upfront_cost >= -1e-9);
        } else {
            panic!("expected a finite payback");
        }
    }

    proptest! {
        #[test]
        fn npv_is_linear_in_savings(
            savings in proptest::collection::vec(-500.0..500.0f64, 10),
            scale in 0.1..5.0f64,
            cost in 0.0..10_000.0f64,
        ) {
            let p = params();
            let base = CashFlowSeries { upfront_cost: 0.0, annual_savings: savings.clone() };
            let scaled = CashFlowSeries {
                upfront_cost: 0.0,
                annual_savings: savings.iter().map(|s| s * scale).collect(),
            };
            prop_assert!((npv(&scaled, &p) - scale * npv(&base, &p)).abs() < 1e-6);
            let with_cost = CashFlowSeries { upfront_cost: cost, annual_savings: savings };
            prop_assert!((npv(&with_cost, &p) - (npv(&base, &p) - cost)).abs() < 1e-9);
        }

        #[test]
        fn payback_never_worsens_when_savings_rise(
            savings in proptest::collection::vec(0.0..400.0f64, 10),
            bump_at in 0usize..10,
            bump in 0.0..500.0f64,
            cost in 1.0..5000.0f64,
        ) {
            let p = params();
            let base = CashFlowSeries { upfront_cost: cost, annual_savings: savings.clone() };
            let mut raised = savings;
            raised[bump_at] += bump;
            let better = CashFlowSeries { upfront_cost: cost, annual_savings: raised };
            let a = discounted_payback(&base, &p);
            let b = discounted_payback(&better, &p);
            let rank = |pb: Payback| match pb {
                Payback::Years(n) => n,
                Payback::Never => u32::MAX,
            };
            prop_assert!(rank(b) <= rank(a));
        }

        #[test]
        fn scaling_tariff_starts_scales_bills(
            k in 0.1..4.0f64,
            import in 0.0..9000.0f64,
            export in 0.0..9000.0f64,
            n in 1u32..10,
            t in 1u32..20,
        ) {
            let p = params();
            let scaled = ScenarioParams {
                usage_charge_start: p.usage_charge_start * k,
                daily_charge_start: p.daily_charge_start * k,
                ..p.clone()
            };
            // fit_fraction is relative, so scaling the usage charge scales the FiT too
            let b0 = annual_bill(import, export, 4.0, n, t, &p);
            let b1 = annual_bill(import, export, 4.0, n, t, &scaled);
            prop_assert!((b1 - k * b0).abs() < 1e-6 * b0.abs().max(1.0));
        }
    }
}
