//! Scenario filtering, bootstrap yield assignment and period roll-ups.

mod bootstrap;
mod rollup;
mod scenario;

pub use bootstrap::{
    assign_daily_yield, bootstrap_day, AssignmentPlan, RegisterPoint, YieldEstimate,
    DEFAULT_BOOTSTRAP,
};
pub use rollup::{
    annual_rollup, baseline_sn, baseline_sn_between, monthly_shares, ratio_series,
    register_in_force, scenario_daily_index, yield_irradiance_ratio, AnnualEstimate, InForce,
    SN_SPECIFIC_YIELD,
};
pub use scenario::{apply_scenario, AzimuthFilter, PanelConfig, Scenario, TiltFilter};
