//! Day-level orchestration: cleaned records and matched irradiance in,
//! national and municipal estimates out.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;

use crate::cleanse::{reconcile_system_size, resolve_location, DailyRecord, LocationResolution};
use crate::density::{build_density, BinGrid, DEFAULT_DX, DEFAULT_DY};
use crate::error::{Error, Result};
use crate::estimate::{
    apply_scenario, bootstrap_day, AssignmentPlan, PanelConfig, RegisterPoint, Scenario,
    YieldEstimate, DEFAULT_BOOTSTRAP,
};
use crate::ingest::{CentroidTable, Orientation, PvSystemMeta, RegisterEntry};
use crate::irradiance::IrradianceLookup;
use crate::normalize::{
    histogram, marginal_deviations, parameter_histogram, rebalance, EpsilonClass, ParamBinning,
    Parameter, RebalanceConfig, Realization, SystemParams, Targets, DEFAULT_LEEWAY,
    DEFAULT_REALIZATIONS,
};
use crate::regional::{downscale, municipality_rollup, RegionalEntry, RegionalYield};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationConfig {
    pub dx: f64,
    pub dy: f64,
    pub leeway: f64,
    pub realizations: usize,
    pub bootstrap: usize,
    pub base_seed: u64,
    pub max_iters: Option<usize>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            dx: DEFAULT_DX,
            dy: DEFAULT_DY,
            leeway: DEFAULT_LEEWAY,
            realizations: DEFAULT_REALIZATIONS,
            bootstrap: DEFAULT_BOOTSTRAP,
            base_seed: 0,
            max_iters: None,
        }
    }
}

/// Reconciled logger metadata with resolved locations.
#[derive(Debug, Clone, Default)]
pub struct Fleet {
    pub metas: BTreeMap<String, PvSystemMeta>,
    pub locations: Vec<(LocationResolution, bool)>,
    /// Systems dropped because their PC4 has no centroid.
    pub unresolved: Vec<String>,
}

impl Fleet {
    pub fn new(systems: Vec<PvSystemMeta>, centroids: &CentroidTable) -> Self {
        let mut fleet = Fleet::default();
        for meta in systems {
            let r = reconcile_system_size(meta);
            match resolve_location(&r.meta, centroids) {
                Ok(loc) => {
                    fleet.locations.push((loc, r.size_discrepancy));
                    fleet.metas.insert(r.meta.system_id.clone(), r.meta);
                }
                Err(_) => fleet.unresolved.push(r.meta.system_id),
            }
        }
        fleet
    }
}

/// A reliable logger system-day ready for estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct LoggerObservation {
    pub system_id: String,
    pub orientation: Orientation,
    pub tilt: f64,
    pub epsilon: EpsilonClass,
    /// kWh/m²
    pub irradiance: f64,
    /// kWh/kWp
    pub specific_yield: f64,
}

impl LoggerObservation {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            orientation: f64::from(self.orientation.azimuth()),
            tilt: self.tilt,
            epsilon: self.epsilon,
            irradiance: self.irradiance,
        }
    }
}

impl PanelConfig for LoggerObservation {
    fn orientation(&self) -> Orientation {
        self.orientation
    }

    fn tilt(&self) -> f64 {
        self.tilt
    }

    fn epsilon(&self) -> EpsilonClass {
        self.epsilon
    }
}

/// Reliable records of one day joined with metadata and irradiance.
/// Records without either are skipped.
pub fn observations(
    records: &[DailyRecord],
    fleet: &Fleet,
    lookup: &IrradianceLookup,
) -> Vec<LoggerObservation> {
    records
        .iter()
        .filter(|r| r.reliable)
        .filter_map(|r| {
            let meta = fleet.metas.get(&r.system_id)?;
            let irradiance = lookup.irradiance_at(meta.pc4, r.date).ok()?;
            Some(LoggerObservation {
                system_id: r.system_id.clone(),
                orientation: meta.orientation,
                tilt: meta.tilt,
                epsilon: meta.epsilon(),
                irradiance,
                specific_yield: r.cum_energy / meta.system_size,
            })
        })
        .collect()
}

/// Register entries in force on `date` with their matched irradiance.
pub fn register_points(
    register: &[RegisterEntry],
    date: NaiveDate,
    lookup: &IrradianceLookup,
) -> Vec<RegisterPoint> {
    register
        .iter()
        .filter(|e| e.install_date <= date)
        .map(|e| RegisterPoint {
            capacity: e.capacity,
            irradiance: lookup.irradiance_at(e.pc4, date).ok(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormStatus {
    /// Every realization met the leeway.
    Converged,
    /// Some realizations failed; the rest were used.
    Partial,
    /// No realization converged; the unnormalized day was used.
    Unnormalized(String),
}

impl NormStatus {
    pub fn label(&self) -> String {
        match self {
            NormStatus::Converged => "converged".into(),
            NormStatus::Partial => "partial".into(),
            NormStatus::Unnormalized(why) => format!("unnormalized: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayEstimate {
    pub estimate: YieldEstimate,
    pub status: NormStatus,
    pub n_loggers: usize,
    pub n_converged: usize,
    /// Largest marginal deviation over converged realizations.
    pub max_deviation: f64,
    /// Target bins masked because the day had no members there.
    pub masked_bins: usize,
    pub n_fallback_entries: usize,
    pub realizations: Vec<Realization>,
}

pub fn day_seed(base: u64, scenario: u8, date: NaiveDate) -> u64 {
    seed::derive(base, &[u64::from(scenario), date.num_days_from_ce() as u64])
}

/// Normalizes the day's loggers against the reference marginals, builds one
/// density per realization and bootstraps the fleet total.
pub fn estimate_day(
    date: NaiveDate,
    loggers: &[LoggerObservation],
    register: &[RegisterPoint],
    reference: &[LoggerObservation],
    scenario: &Scenario,
    cfg: &EstimationConfig,
) -> Result<DayEstimate> {
    let day: Vec<&LoggerObservation> = apply_scenario(loggers, scenario)?;
    let reference: Vec<SystemParams> = apply_scenario(reference, scenario)?
        .iter()
        .map(|o| o.params())
        .collect();
    let points: Vec<(f64, f64)> = day.iter().map(|o| (o.irradiance, o.specific_yield)).collect();
    let grid = BinGrid::fit(&points, cfg.dx, cfg.dy)?;
    let binning = ParamBinning::standard(grid.x);
    let params: Vec<SystemParams> = day.iter().map(|o| o.params()).collect();

    let register_irr: Vec<f64> = register
        .iter()
        .filter_map(|e| e.irradiance)
        .filter(|&i| grid.x.bin_index(i).is_some())
        .collect();
    let irr_target = if register_irr.is_empty() {
        parameter_histogram(&params, Parameter::Irradiance, &binning)?
    } else {
        histogram(&register_irr, &grid.x)?
    };
    let mut targets = Targets::reference(&reference, &binning, irr_target)?;
    let mut masked_bins = 0;
    let mut mask_error = None;
    for p in Parameter::ALL {
        let present = parameter_histogram(&params, p, &binning)?;
        let keep: Vec<bool> = present.shares().iter().map(|&s| s > 0.0).collect();
        let t = targets.get(p);
        let dropped = t.shares().iter().zip(&keep).filter(|(&s, &k)| s > 0.0 && !k).count();
        if dropped > 0 {
            masked_bins += dropped;
            match t.restricted(&keep) {
                Ok(r) => *targets.get_mut(p) = r,
                Err(e) => mask_error = Some(e),
            }
        }
    }

    let seed_day = day_seed(cfg.base_seed, scenario.id, date);
    let rcfg = RebalanceConfig {
        leeway: cfg.leeway,
        max_iters: cfg.max_iters,
    };
    let attempts: Vec<Result<Realization>> = match mask_error {
        Some(e) => vec![Err(e)],
        None => {
            let base = seed::derive(seed_day, &[1]);
            (0..cfg.realizations.max(1) as u64)
                .into_par_iter()
                .map(|k| rebalance(&params, &binning, &targets, &rcfg, base.wrapping_add(k)))
                .collect()
        }
    };
    let n_attempts = attempts.len();
    let mut first_error = None;
    let mut realizations = Vec::with_capacity(n_attempts);
    for a in attempts {
        match a {
            Ok(r) => realizations.push(r),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let n_converged = realizations.len();
    let mut max_deviation: f64 = 0.0;
    for r in &realizations {
        let d = marginal_deviations(&params, &r.members, &binning, &targets)?;
        max_deviation = d.iter().copied().fold(max_deviation, f64::max);
    }
    let status = match (n_converged, first_error) {
        (_, None) => NormStatus::Converged,
        (0, Some(e)) => {
            realizations.push(Realization {
                members: (0..params.len()).collect(),
            });
            NormStatus::Unnormalized(e.to_string())
        }
        (_, Some(_)) => NormStatus::Partial,
    };

    let densities = realizations
        .iter()
        .map(|r| {
            let pts: Vec<(f64, f64)> = r.members.iter().map(|&i| points[i]).collect();
            build_density(&pts, grid, Some(date))
        })
        .collect::<Result<Vec<_>>>()?;
    let n_fallback_entries = AssignmentPlan::new(&densities[0], register).n_fallback();
    let estimate = bootstrap_day(
        &densities,
        register,
        Some(date),
        cfg.bootstrap,
        seed::derive(seed_day, &[2]),
    )?;
    Ok(DayEstimate {
        estimate,
        status,
        n_loggers: day.len(),
        n_converged,
        max_deviation,
        masked_bins,
        n_fallback_entries,
        realizations,
    })
}

/// Municipal totals for one day from the national specific yield.
pub fn regional_day(
    national: &YieldEstimate,
    date: NaiveDate,
    register: &[RegisterEntry],
    lookup: &IrradianceLookup,
) -> Result<Vec<RegionalYield>> {
    let entries: Vec<RegionalEntry> = register
        .iter()
        .filter(|e| e.install_date <= date)
        .map(|e| RegionalEntry {
            municipality_code: &e.municipality_code,
            capacity: e.capacity,
            irradiance: lookup.irradiance_at(e.pc4, date).ok(),
        })
        .collect();
    if entries.is_empty() {
        return Ok(Vec::new());
    }
    let local = downscale(national.mean_specific, &entries)?;
    Ok(municipality_rollup(&entries, &local, date))
}

/// Capacity-weighted mean irradiance over register entries in force.
pub fn national_irradiance(
    register: &[RegisterEntry],
    date: NaiveDate,
    lookup: &IrradianceLookup,
) -> Option<f64> {
    let (mut w, mut c) = (0.0, 0.0);
    for e in register.iter().filter(|e| e.install_date <= date) {
        if let Ok(i) = lookup.irradiance_at(e.pc4, date) {
            w += e.capacity * i;
            c += e.capacity;
        }
    }
    (c > 0.0).then(|| w / c)
}

/// Errors that stop a scenario on one day without aborting the run.
pub fn is_day_level(e: &Error) -> bool {
    matches!(
        e,
        Error::ScenarioEliminatesSample(_) | Error::EmptyDay | Error::EmptyInput | Error::NoNationalIrradiance
    )
}
