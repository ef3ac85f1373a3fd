//! Downscaling of the national specific yield to register locations and
//! municipal aggregation.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::error::{Error, Result};

pub fn irradiance_offset(irradiance: f64, mean: f64) -> Result<f64> {
    if !(mean > 0.0) {
        return Err(Error::NoNationalIrradiance);
    }
    Ok(irradiance / mean - 1.0)
}

/// kWh/kWp
pub fn local_specific_yield(national: f64, offset: f64) -> f64 {
    let eta = national * (1.0 + offset);
    debug_assert!(eta >= -1e-12, "negative local yield {eta}");
    eta.max(0.0)
}

/// kWh
pub fn local_energy(capacity: f64, specific: f64) -> f64 {
    capacity * specific
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionalEntry<'a> {
    pub municipality_code: &'a str,
    /// kWp
    pub capacity: f64,
    pub irradiance: Option<f64>,
}

/// Capacity-weighted mean irradiance over entries with a known value.
pub fn weighted_mean_irradiance(entries: &[RegionalEntry]) -> Result<f64> {
    let (mut weighted, mut capacity) = (0.0, 0.0);
    for e in entries {
        if let Some(i) = e.irradiance {
            weighted += e.capacity * i;
            capacity += e.capacity;
        }
    }
    if !(capacity > 0.0 && weighted > 0.0) {
        return Err(Error::NoNationalIrradiance);
    }
    Ok(weighted / capacity)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalYield {
    pub offset: f64,
    /// kWh/kWp
    pub specific: f64,
    /// kWh
    pub energy: f64,
    /// Irradiance was missing; offset set to zero.
    pub imputed: bool,
}

/// Local yields in entry order for national specific yield `national`.
pub fn downscale(national: f64, entries: &[RegionalEntry]) -> Result<Vec<LocalYield>> {
    let mean = weighted_mean_irradiance(entries)?;
    entries
        .iter()
        .map(|e| {
            let offset = match e.irradiance {
                Some(i) => irradiance_offset(i, mean)?,
                None => 0.0,
            };
            let specific = local_specific_yield(national, offset);
            Ok(LocalYield {
                offset,
                specific,
                energy: local_energy(e.capacity, specific),
                imputed: e.irradiance.is_none(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionalYield {
    pub municipality_code: String,
    pub date: NaiveDate,
    /// kWh
    pub energy: f64,
    /// kWh/kWp
    pub specific: f64,
    /// kWp
    pub capacity: f64,
    /// Members whose offset was imputed.
    pub n_imputed: usize,
}

/// Per-municipality sums, ordered by code.
pub fn municipality_rollup(
    entries: &[RegionalEntry],
    local: &[LocalYield],
    date: NaiveDate,
) -> Vec<RegionalYield> {
    let mut acc: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for (e, l) in entries.iter().zip(local) {
        let a = acc.entry(e.municipality_code).or_default();
        a.0 += l.energy;
        a.1 += e.capacity;
        a.2 += usize::from(l.imputed);
    }
    acc.into_iter()
        .map(|(code, (energy, capacity, n_imputed))| RegionalYield {
            municipality_code: code.to_string(),
            date,
            energy,
            specific: if capacity > 0.0 { energy / capacity } else { 0.0 },
            capacity,
            n_imputed,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MunicipalAnnual {
    pub municipality_code: String,
    pub n_days: usize,
    /// kWh
    pub energy: f64,
    /// Sum of daily specific yields, kWh/kWp.
    pub specific: f64,
}

/// Period totals per municipality from daily roll-ups.
pub fn municipal_annual(daily: &[RegionalYield]) -> Vec<MunicipalAnnual> {
    let mut acc: BTreeMap<&str, MunicipalAnnual> = BTreeMap::new();
    for d in daily {
        let a = acc
            .entry(&d.municipality_code)
            .or_insert_with(|| MunicipalAnnual {
                municipality_code: d.municipality_code.clone(),
                n_days: 0,
                energy: 0.0,
                specific: 0.0,
            });
        a.n_days += 1;
        a.energy += d.energy;
        a.specific += d.specific;
    }
    acc.into_values().collect()
}
