//! Metadata reconciliation and the per-system, per-day quality checks.
//!
//! A system-day is reliable only when all four checks pass:
//!
//! 1. the final cumulative reading lies within 90-110% of the energy
//!    integrated from the instantaneous power samples (inclusive bounds);
//! 2. the peak instantaneous power is strictly below 1.2x the system size;
//! 3. no interval between consecutive samples exceeds 15 minutes;
//! 4. the day has samples at all.
//!
//! Check 4 removes individual days, never whole systems.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::geo::distance_km;
use crate::ingest::{CentroidTable, IntradayLog, Pc4, PvSystemMeta};

/// Distance above which a system's own lat/lon is flagged as far from its PC4 centroid.
pub const FAR_THRESHOLD_KM: f64 = 5.0;

/// Slack on the inclusive ratio bounds so float round-off in the integral
/// cannot flip a boundary verdict.
const RATIO_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityThresholds {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub peak_factor: f64,
    /// minutes
    pub max_gap: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            ratio_min: 0.90,
            ratio_max: 1.10,
            peak_factor: 1.2,
            max_gap: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconciled {
    pub meta: PvSystemMeta,
    /// Panel power x panel count disagrees with the declared system size.
    pub size_discrepancy: bool,
}

/// Keeps the declared system size; flags a mismatch with the panel fields.
pub fn reconcile_system_size(meta: PvSystemMeta) -> Reconciled {
    let size_discrepancy = match (meta.panel_power, meta.num_panels) {
        (Some(w), Some(n)) => {
            let from_panels = w * f64::from(n) / 1000.0;
            (from_panels - meta.system_size).abs() > 1e-6 * meta.system_size.max(1.0)
        }
        _ => false,
    };
    Reconciled {
        meta,
        size_discrepancy,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationResolution {
    pub system_id: String,
    pub resolved_pc4: Pc4,
    /// km; absent when the system has no lat/lon.
    pub distance_latlon_to_centroid: Option<f64>,
    pub flag_far: bool,
}

/// The PC4 centroid is always the resolved location.
pub fn resolve_location(meta: &PvSystemMeta, centroids: &CentroidTable) -> Result<LocationResolution> {
    let centroid = centroids.get(meta.pc4).ok_or(Error::UnknownPc4(meta.pc4.0))?;
    let distance = meta.lat_lon.map(|p| distance_km(p, centroid));
    Ok(LocationResolution {
        system_id: meta.system_id.clone(),
        resolved_pc4: meta.pc4,
        distance_latlon_to_centroid: distance,
        flag_far: distance.is_some_and(|d| d > FAR_THRESHOLD_KM),
    })
}

/// Energy (kWh) from left-rectangle integration: each sample's power holds until the next sample.
pub fn integrate_power(log: &IntradayLog) -> f64 {
    log.samples
        .windows(2)
        .map(|w| w[0].power * hours_between(&w[0].timestamp, &w[1].timestamp))
        .sum()
}

fn hours_between<Tz: chrono::TimeZone>(a: &chrono::DateTime<Tz>, b: &chrono::DateTime<Tz>) -> f64 {
    (b.clone() - a.clone()).num_milliseconds() as f64 / 3_600_000.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeCheck {
    pub pass: bool,
    pub cum_energy: f64,
    pub instantaneous_sum: f64,
    /// cum_energy / instantaneous_sum, when the integral is non-zero.
    pub ratio: Option<f64>,
    pub reason: Option<&'static str>,
}

pub fn check_cumulative_consistency(log: &IntradayLog, th: &QualityThresholds) -> CumulativeCheck {
    let cum_energy = log.samples.last().map_or(0.0, |s| s.cum_energy);
    let instantaneous_sum = integrate_power(log);
    if instantaneous_sum == 0.0 {
        let pass = cum_energy == 0.0;
        return CumulativeCheck {
            pass,
            cum_energy,
            instantaneous_sum,
            ratio: None,
            reason: (!pass).then_some("zero integral"),
        };
    }
    let ratio = cum_energy / instantaneous_sum;
    let pass = ratio >= th.ratio_min - RATIO_EPS && ratio <= th.ratio_max + RATIO_EPS;
    CumulativeCheck {
        pass,
        cum_energy,
        instantaneous_sum,
        ratio: Some(ratio),
        reason: (!pass).then_some("cumulative energy outside band"),
    }
}

pub fn peak_power(log: &IntradayLog) -> f64 {
    log.samples.iter().map(|s| s.power).fold(0.0, f64::max)
}

pub fn check_peak_vs_size(log: &IntradayLog, meta: &PvSystemMeta, th: &QualityThresholds) -> bool {
    peak_power(log) < th.peak_factor * meta.system_size
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapCheck {
    pub pass: bool,
    /// minutes
    pub max_gap: f64,
    pub reason: Option<&'static str>,
}

pub fn check_gaps(log: &IntradayLog, th: &QualityThresholds) -> GapCheck {
    if log.samples.len() < 2 {
        return GapCheck {
            pass: false,
            max_gap: 0.0,
            reason: Some("insufficient samples"),
        };
    }
    let max_gap = log
        .samples
        .windows(2)
        .map(|w| hours_between(&w[0].timestamp, &w[1].timestamp) * 60.0)
        .fold(0.0, f64::max);
    let pass = max_gap <= th.max_gap;
    GapCheck {
        pass,
        max_gap,
        reason: (!pass).then_some("gap exceeds limit"),
    }
}

/// Per-day coverage verdicts over `days`: a day without samples fails.
pub fn check_day_coverage(
    days: impl IntoIterator<Item = NaiveDate>,
    days_present: &BTreeSet<NaiveDate>,
) -> Vec<(NaiveDate, bool)> {
    days.into_iter()
        .map(|d| (d, days_present.contains(&d)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckFlags {
    pub cumulative: bool,
    pub peak: bool,
    pub gaps: bool,
    pub coverage: bool,
}

impl CheckFlags {
    pub fn all(&self) -> bool {
        self.cumulative && self.peak && self.gaps && self.coverage
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DailyRecord {
    pub system_id: String,
    pub date: NaiveDate,
    /// kWh, final cumulative reading of the day
    pub cum_energy: f64,
    /// kWh, integrated from instantaneous samples
    pub instantaneous_sum: f64,
    /// kW
    pub peak_power: f64,
    /// minutes
    pub max_gap: f64,
    pub checks: CheckFlags,
    pub reliable: bool,
}

/// Runs all checks on one present system-day.
pub fn evaluate_day(log: &IntradayLog, meta: &PvSystemMeta, th: &QualityThresholds) -> DailyRecord {
    let cum = check_cumulative_consistency(log, th);
    let gaps = check_gaps(log, th);
    let checks = CheckFlags {
        cumulative: cum.pass,
        peak: check_peak_vs_size(log, meta, th),
        gaps: gaps.pass,
        coverage: !log.samples.is_empty(),
    };
    DailyRecord {
        system_id: log.system_id.clone(),
        date: log.date,
        cum_energy: cum.cum_energy,
        instantaneous_sum: cum.instantaneous_sum,
        peak_power: peak_power(log),
        max_gap: gaps.max_gap,
        checks,
        reliable: checks.all(),
    }
}

/// Evaluates every log for `date` whose system has metadata, sorted by system id.
pub fn evaluate_date<'a>(
    logs: impl IntoIterator<Item = &'a IntradayLog>,
    metas: &BTreeMap<String, PvSystemMeta>,
    date: NaiveDate,
    th: &QualityThresholds,
) -> Vec<DailyRecord> {
    let mut out: Vec<DailyRecord> = logs
        .into_iter()
        .filter(|l| l.date == date)
        .filter_map(|l| metas.get(&l.system_id).map(|m| evaluate_day(l, m, th)))
        .collect();
    out.sort_by(|a, b| a.system_id.cmp(&b.system_id));
    out
}

/// Failed-coverage record for a system that logged nothing on `date`.
pub fn missing_day_record(system_id: &str, date: NaiveDate) -> DailyRecord {
    DailyRecord {
        system_id: system_id.to_string(),
        date,
        cum_energy: 0.0,
        instantaneous_sum: 0.0,
        peak_power: 0.0,
        max_gap: 0.0,
        checks: CheckFlags::default(),
        reliable: false,
    }
}

/// [`evaluate_date`] plus a coverage failure for every system installed by
/// `date` that has no log.
pub fn evaluate_fleet_day<'a>(
    logs: impl IntoIterator<Item = &'a IntradayLog>,
    metas: &BTreeMap<String, PvSystemMeta>,
    date: NaiveDate,
    th: &QualityThresholds,
) -> Vec<DailyRecord> {
    let mut out = evaluate_date(logs, metas, date, th);
    let present: BTreeSet<&str> = out.iter().map(|r| r.system_id.as_str()).collect();
    let missing: Vec<DailyRecord> = metas
        .values()
        .filter(|m| m.install_date <= date && !present.contains(m.system_id.as_str()))
        .map(|m| missing_day_record(&m.system_id, date))
        .collect();
    out.extend(missing);
    out.sort_by(|a, b| a.system_id.cmp(&b.system_id));
    out
}

/// The reliable subset for `date`.
pub fn build_reliable_set<'a>(
    logs: impl IntoIterator<Item = &'a IntradayLog>,
    metas: &BTreeMap<String, PvSystemMeta>,
    date: NaiveDate,
    th: &QualityThresholds,
) -> Vec<DailyRecord> {
    evaluate_date(logs, metas, date, th)
        .into_iter()
        .filter(|r| r.reliable)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;
    use crate::ingest::{Orientation, Pc4Centroid, Sample};
    use chrono::{DateTime, Duration, FixedOffset};

    fn meta(size: f64) -> PvSystemMeta {
        PvSystemMeta {
            system_id: "s1".into(),
            pc4: Pc4(3511),
            lat_lon: None,
            system_size: size,
            inverter_size: size,
            panel_power: None,
            num_panels: None,
            orientation: Orientation::SOUTH,
            tilt: 35.0,
            install_date: NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
        }
    }

    fn t0() -> DateTime<FixedOffset> {
        DateTime::parse_from_rfc3339("2016-06-01T06:00:00+00:00").unwrap()
    }

    /// Constant `power` sampled at the given minute offsets; final cum reading `cum`.
    fn log_at(minutes: &[i64], power: f64, cum: f64) -> IntradayLog {
        let n = minutes.len();
        IntradayLog {
            system_id: "s1".into(),
            date: t0().date_naive(),
            samples: minutes
                .iter()
                .enumerate()
                .map(|(i, &m)| Sample {
                    timestamp: t0() + Duration::minutes(m),
                    power,
                    cum_energy: if i + 1 == n { cum } else { 0.0 },
                })
                .collect(),
        }
    }

    /// 10 h at 1 kW in 5-minute steps: integral exactly 10 kWh.
    fn ten_kwh_log(cum: f64) -> IntradayLog {
        let minutes: Vec<i64> = (0..=120).map(|k| k * 5).collect();
        log_at(&minutes, 1.0, cum)
    }

    #[test]
    fn reconcile_consistent_panels() {
        let mut m = meta(3.0);
        m.panel_power = Some(250.0);
        m.num_panels = Some(12);
        let r = reconcile_system_size(m);
        assert!(!r.size_discrepancy);
        assert_eq!(r.meta.system_size, 3.0);
    }

    #[test]
    fn reconcile_keeps_declared_size_and_flags() {
        let mut m = meta(3.3);
        m.panel_power = Some(250.0);
        m.num_panels = Some(12);
        let r = reconcile_system_size(m);
        assert!(r.size_discrepancy);
        assert_eq!(r.meta.system_size, 3.3);
        assert_eq!(r.meta.panel_power, Some(250.0));
        assert_eq!(r.meta.num_panels, Some(12));
    }

    #[test]
    fn reconcile_without_panel_fields() {
        let r = reconcile_system_size(meta(3.3));
        assert!(!r.size_discrepancy);
    }

    fn table(c: LatLon) -> CentroidTable {
        [Pc4Centroid {
            pc4: Pc4(3511),
            centroid: c,
        }]
        .into_iter()
        .collect()
    }

    /// Point `km` north of `c` along a meridian.
    fn north_of(c: LatLon, km: f64) -> LatLon {
        LatLon::new(c.lat + (km / 6371.0).to_degrees(), c.lon)
    }

    #[test]
    fn location_near_and_far() {
        let c = LatLon::new(52.09, 5.12);
        let t = table(c);
        let mut m = meta(3.0);
        m.lat_lon = Some(north_of(c, 2.1));
        let r = resolve_location(&m, &t).unwrap();
        assert!((r.distance_latlon_to_centroid.unwrap() - 2.1).abs() < 1e-6);
        assert!(!r.flag_far);
        m.lat_lon = Some(north_of(c, 7.4));
        let r = resolve_location(&m, &t).unwrap();
        assert!(r.flag_far);
        assert_eq!(r.resolved_pc4, Pc4(3511));
    }

    #[test]
    fn location_without_latlon() {
        let t = table(LatLon::new(52.09, 5.12));
        let r = resolve_location(&meta(3.0), &t).unwrap();
        assert_eq!(r.distance_latlon_to_centroid, None);
        assert!(!r.flag_far);
    }

    #[test]
    fn unknown_pc4_is_an_error() {
        let mut m = meta(3.0);
        m.pc4 = Pc4(9999);
        let t = table(LatLon::new(52.09, 5.12));
        assert!(matches!(resolve_location(&m, &t), Err(Error::UnknownPc4(9999))));
    }

    #[test]
    fn cumulative_ratio_band() {
        let th = QualityThresholds::default();
        let c = check_cumulative_consistency(&ten_kwh_log(9.5), &th);
        assert!((c.instantaneous_sum - 10.0).abs() < 1e-12);
        assert!((c.ratio.unwrap() - 0.95).abs() < 1e-12);
        assert!(c.pass);
        assert!(!check_cumulative_consistency(&ten_kwh_log(8.5), &th).pass);
        let upper = check_cumulative_consistency(&ten_kwh_log(11.0), &th);
        assert!((upper.ratio.unwrap() - 1.1).abs() < 1e-12);
        assert!(upper.pass, "upper bound is inclusive");
        let lower = check_cumulative_consistency(&ten_kwh_log(9.0), &th);
        assert!(lower.pass, "lower bound is inclusive");
    }

    #[test]
    fn cumulative_zero_integral() {
        let th = QualityThresholds::default();
        let c = check_cumulative_consistency(&log_at(&[0, 5, 10], 0.0, 1.0), &th);
        assert!(!c.pass);
        assert_eq!(c.reason, Some("zero integral"));
        assert!(check_cumulative_consistency(&log_at(&[0, 5, 10], 0.0, 0.0), &th).pass);
    }

    #[test]
    fn peak_strictly_below_limit() {
        let th = QualityThresholds::default();
        let m = meta(4.0);
        assert!(check_peak_vs_size(&log_at(&[0, 5], 4.7, 0.4), &m, &th));
        assert!(!check_peak_vs_size(&log_at(&[0, 5], 4.9, 0.4), &m, &th));
        assert!(!check_peak_vs_size(&log_at(&[0, 5], 4.8, 0.4), &m, &th));
        assert!(check_peak_vs_size(&log_at(&[0, 5], 0.0, 0.0), &m, &th));
    }

    #[test]
    fn gap_limits() {
        let th = QualityThresholds::default();
        let every5: Vec<i64> = (0..20).map(|k| k * 5).collect();
        let g = check_gaps(&log_at(&every5, 1.0, 1.0), &th);
        assert!(g.pass);
        assert_eq!(g.max_gap, 5.0);
        let g = check_gaps(&log_at(&[0, 5, 125, 130], 1.0, 1.0), &th);
        assert!(!g.pass);
        assert_eq!(g.max_gap, 120.0);
        let g = check_gaps(&log_at(&[0, 15, 30], 1.0, 1.0), &th);
        assert!(g.pass, "exactly 15 minutes passes");
        let g = check_gaps(&log_at(&[0], 1.0, 1.0), &th);
        assert_eq!(g.reason, Some("insufficient samples"));
        assert!(!g.pass);
    }

    #[test]
    fn coverage_per_day() {
        let start = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        let all: Vec<NaiveDate> = start.iter_days().take(366).collect();
        let mut present: BTreeSet<NaiveDate> = all.iter().copied().collect();
        assert!(check_day_coverage(all.clone(), &present).iter().all(|(_, ok)| *ok));
        present.remove(&NaiveDate::from_ymd_opt(2016, 3, 4).unwrap());
        let v = check_day_coverage(all.clone(), &present);
        assert_eq!(v.iter().filter(|(_, ok)| !ok).count(), 1);
        let v = check_day_coverage(all, &BTreeSet::new());
        assert!(v.iter().all(|(_, ok)| !ok));
    }

    #[test]
    fn reliable_set_drops_gap_failure() {
        let th = QualityThresholds::default();
        let mut metas = BTreeMap::new();
        let mut logs = Vec::new();
        for (i, id) in ["a", "b", "c"].iter().enumerate() {
            let mut m = meta(3.0);
            m.system_id = id.to_string();
            metas.insert(id.to_string(), m);
            let mut l = if i == 1 {
                log_at(&[0, 5, 125, 130], 1.0, 130.0 / 60.0)
            } else {
                ten_kwh_log(10.0)
            };
            l.system_id = id.to_string();
            logs.push(l);
        }
        let date = t0().date_naive();
        let rel = build_reliable_set(&logs, &metas, date, &th);
        let ids: Vec<&str> = rel.iter().map(|r| r.system_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
        assert!(rel.iter().all(|r| r.reliable == r.checks.all()));

        logs.reverse();
        assert_eq!(build_reliable_set(&logs, &metas, date, &th), rel);
    }
}
