use chrono::{Datelike, NaiveDate};

use super::YieldEstimate;
use crate::error::{Error, Result};
use crate::ingest::RegisterEntry;

/// Fixed specific yield of the legacy national estimate, kWh/kWp.
pub const SN_SPECIFIC_YIELD: f64 = 875.0;

#[derive(Debug, Clone)]
pub struct InForce<'a> {
    pub entries: Vec<&'a RegisterEntry>,
    /// kWp
    pub capacity: f64,
}

pub fn register_in_force(register: &[RegisterEntry], date: NaiveDate) -> InForce<'_> {
    let entries: Vec<&RegisterEntry> = register.iter().filter(|e| e.install_date <= date).collect();
    let capacity = entries.iter().map(|e| e.capacity).sum();
    InForce { entries, capacity }
}

/// Two-point capacity average times the fixed specific yield, kWh.
pub fn baseline_sn_between(register: &[RegisterEntry], first: NaiveDate, last: NaiveDate) -> f64 {
    let p1 = register_in_force(register, first).capacity;
    let p2 = register_in_force(register, last).capacity;
    (p1 + p2) / 2.0 * SN_SPECIFIC_YIELD
}

pub fn baseline_sn(register: &[RegisterEntry], year: i32) -> f64 {
    let first = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
    let last = NaiveDate::from_ymd_opt(year, 12, 31).expect("valid year");
    baseline_sn_between(register, first, last)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnualEstimate {
    pub first: NaiveDate,
    pub last: NaiveDate,
    pub n_days: usize,
    /// kWh
    pub energy: f64,
    /// Root-sum-square of daily sigmas, kWh.
    pub sigma: f64,
    /// kWh/kWp
    pub specific: f64,
    pub sigma_specific: f64,
    /// Mean of the capacities in force on the first and last day, kWp.
    pub mean_capacity: f64,
    /// kWh
    pub baseline_sn: f64,
}

/// Sums daily estimates over `[first, last]`, which must be covered exactly.
pub fn annual_rollup(
    daily: &[YieldEstimate],
    register: &[RegisterEntry],
    first: NaiveDate,
    last: NaiveDate,
) -> Result<AnnualEstimate> {
    let mut dated: Vec<(NaiveDate, &YieldEstimate)> = daily
        .iter()
        .map(|e| e.date.map(|d| (d, e)).ok_or(Error::EmptyInput))
        .collect::<Result<_>>()?;
    dated.sort_by_key(|(d, _)| *d);
    if let Some(w) = dated.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDay(w[0].0));
    }
    let missing: Vec<NaiveDate> = first
        .iter_days()
        .take_while(|d| *d <= last)
        .filter(|d| dated.binary_search_by_key(d, |(x, _)| *x).is_err())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingDays(missing));
    }
    let in_period: Vec<&YieldEstimate> = dated
        .iter()
        .filter(|(d, _)| (first..=last).contains(d))
        .map(|(_, e)| *e)
        .collect();
    let energy: f64 = in_period.iter().map(|e| e.mean_energy).sum();
    let sigma = in_period.iter().map(|e| e.sigma.powi(2)).sum::<f64>().sqrt();
    let mean_capacity = (register_in_force(register, first).capacity
        + register_in_force(register, last).capacity)
        / 2.0;
    let per_kwp = |v: f64| if mean_capacity > 0.0 { v / mean_capacity } else { 0.0 };
    Ok(AnnualEstimate {
        first,
        last,
        n_days: in_period.len(),
        energy,
        sigma,
        specific: per_kwp(energy),
        sigma_specific: per_kwp(sigma),
        mean_capacity,
        baseline_sn: mean_capacity * SN_SPECIFIC_YIELD,
    })
}

/// Percentage of the period total produced in each calendar month.
pub fn monthly_shares(daily: &[(NaiveDate, f64)]) -> [f64; 12] {
    let mut months = [0.0; 12];
    for (d, e) in daily {
        months[d.month0() as usize] += e;
    }
    let total: f64 = months.iter().sum();
    if total != 0.0 {
        for m in &mut months {
            *m = *m / total * 100.0;
        }
    }
    months
}

/// `factor * value / reference` per day; `None` where the reference is zero.
pub fn ratio_series(
    values: &[(NaiveDate, f64)],
    reference: &[(NaiveDate, f64)],
    factor: f64,
) -> Result<Vec<(NaiveDate, Option<f64>)>> {
    if values.len() != reference.len() {
        return Err(Error::MismatchedDates(values.len().min(reference.len())));
    }
    values
        .iter()
        .zip(reference)
        .enumerate()
        .map(|(i, ((d, v), (dr, r)))| {
            if d != dr {
                return Err(Error::MismatchedDates(i));
            }
            Ok((*d, (*r != 0.0).then(|| factor * (v / r))))
        })
        .collect()
}

pub fn scenario_daily_index(
    scenario: &[(NaiveDate, f64)],
    base: &[(NaiveDate, f64)],
) -> Result<Vec<(NaiveDate, Option<f64>)>> {
    ratio_series(scenario, base, 100.0)
}

/// Specific yield divided by a reference irradiance series.
pub fn yield_irradiance_ratio(
    specific: &[(NaiveDate, f64)],
    irradiance: &[(NaiveDate, f64)],
) -> Result<Vec<(NaiveDate, Option<f64>)>> {
    ratio_series(specific, irradiance, 1.0)
}
