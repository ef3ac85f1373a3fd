//! CSV files exchanged between pipeline stages.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::cleanse::{CheckFlags, DailyRecord, LocationResolution};
use crate::error::{Error, Result};
use crate::estimate::{AnnualEstimate, YieldEstimate};
use crate::ingest::{open, parse_date, parse_f64, IntradayLog, Pc4Centroid, PvSystemMeta, RegisterEntry, Table};
use crate::irradiance::{DailyIrradianceField, DailyTotal, IrradianceCell, QuarterHourSample};
use crate::regional::{MunicipalAnnual, RegionalYield};
use crate::synth::DefectKind;

pub const SYSTEMS_FILE: &str = "systems.csv";
pub const INTRADAY_FILE: &str = "intraday.csv";
pub const REGISTER_FILE: &str = "register.csv";
pub const IRRADIANCE_FILE: &str = "irradiance.csv";
pub const CELLS_FILE: &str = "cells.csv";
pub const CENTROIDS_FILE: &str = "centroids.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const DEFECTS_FILE: &str = "defects.csv";

pub const RELIABLE_SET_FILE: &str = "reliable_set.csv";
pub const DAILY_COUNTS_FILE: &str = "daily_counts.csv";
pub const LOCATIONS_FILE: &str = "locations.csv";
pub const DAILY_IRRADIANCE_FILE: &str = "daily_irradiance.csv";
pub const DAILY_YIELD_FILE: &str = "daily_yield.csv";
pub const NORMALIZATION_FILE: &str = "normalization.csv";
pub const ANNUAL_YIELD_FILE: &str = "annual_yield.csv";
pub const MONTHLY_SHARES_FILE: &str = "monthly_shares.csv";
pub const SCENARIO_INDEX_FILE: &str = "scenario_index.csv";
pub const YIELD_RATIO_FILE: &str = "yield_ratio.csv";
pub const MUNICIPAL_DAILY_FILE: &str = "municipal_daily.csv";
pub const MUNICIPAL_ANNUAL_FILE: &str = "municipal_annual.csv";

/// A CSV writer that remembers its path for error reporting.
pub struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let writer = csv::Writer::from_path(path).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let mut sink = Self {
            path: path.to_path_buf(),
            writer,
        };
        sink.row(header)?;
        Ok(sink)
    }

    pub fn row<I, T>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|source| Error::Csv {
            path: self.path.clone(),
            source,
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn read_rows<T>(
    path: &Path,
    columns: &[&str],
    mut parse: impl FnMut(&Table, &csv::StringRecord) -> Result<T, String>,
) -> Result<Vec<T>> {
    let t = Table::read(open(path)?, path, columns)?;
    t.rows
        .iter()
        .map(|(row, rec)| {
            parse(&t, rec).map_err(|reason| Error::Malformed {
                path: path.to_path_buf(),
                row: *row,
                reason,
            })
        })
        .collect()
}

fn parse_bool(s: &str, name: &str) -> Result<bool, String> {
    s.parse().map_err(|_| format!("invalid {name} `{s}`"))
}

fn parse_num<T: std::str::FromStr>(s: &str, name: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("invalid {name} `{s}`"))
}

pub fn write_systems(path: &Path, systems: &[PvSystemMeta]) -> Result<()> {
    let mut w = CsvSink::create(path, &crate::ingest::SYSTEMS_COLUMNS)?;
    for s in systems {
        w.row([
            s.system_id.clone(),
            s.pc4.to_string(),
            opt(s.lat_lon.map(|p| p.lat)),
            opt(s.lat_lon.map(|p| p.lon)),
            s.system_size.to_string(),
            s.inverter_size.to_string(),
            opt(s.panel_power),
            opt(s.num_panels),
            s.orientation.code().to_string(),
            s.tilt.to_string(),
            s.install_date.to_string(),
        ])?;
    }
    w.finish()
}

pub fn write_register(path: &Path, register: &[RegisterEntry]) -> Result<()> {
    let mut w = CsvSink::create(path, &crate::ingest::REGISTER_COLUMNS)?;
    for e in register {
        w.row([
            e.entry_id.clone(),
            e.pc4.to_string(),
            e.capacity.to_string(),
            e.install_date.to_string(),
            e.municipality_code.clone(),
        ])?;
    }
    w.finish()
}

pub fn write_cells(path: &Path, cells: &[IrradianceCell]) -> Result<()> {
    let mut w = CsvSink::create(path, &crate::irradiance::CELLS_COLUMNS)?;
    for c in cells {
        w.row([c.cell_id.to_string(), c.center.lat.to_string(), c.center.lon.to_string()])?;
    }
    w.finish()
}

pub fn write_centroids(path: &Path, centroids: &[Pc4Centroid]) -> Result<()> {
    let mut w = CsvSink::create(path, &crate::ingest::CENTROID_COLUMNS)?;
    for c in centroids {
        w.row([c.pc4.to_string(), c.centroid.lat.to_string(), c.centroid.lon.to_string()])?;
    }
    w.finish()
}

pub struct IntradayWriter(CsvSink);

impl IntradayWriter {
    pub fn create(path: &Path) -> Result<Self> {
        CsvSink::create(path, &crate::ingest::INTRADAY_COLUMNS).map(Self)
    }

    pub fn write(&mut self, log: &IntradayLog) -> Result<()> {
        for s in &log.samples {
            self.0.row([
                log.system_id.as_str(),
                &s.timestamp.to_rfc3339(),
                &s.power.to_string(),
                &s.cum_energy.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        self.0.finish()
    }
}

pub struct IrradianceWriter(CsvSink);

impl IrradianceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        CsvSink::create(path, &crate::irradiance::IRRADIANCE_COLUMNS).map(Self)
    }

    pub fn write(&mut self, s: &QuarterHourSample) -> Result<()> {
        self.0.row([
            s.cell_id.to_string(),
            s.timestamp.to_rfc3339(),
            s.irradiance.to_string(),
        ])
    }

    pub fn finish(self) -> Result<()> {
        self.0.finish()
    }
}

pub const TRUTH_COLUMNS: [&str; 3] = ["entry_id", "date", "energy_kwh"];

pub struct TruthWriter(CsvSink);

impl TruthWriter {
    pub fn create(path: &Path) -> Result<Self> {
        CsvSink::create(path, &TRUTH_COLUMNS).map(Self)
    }

    pub fn write(&mut self, entry_id: &str, date: NaiveDate, energy: f64) -> Result<()> {
        self.0.row([entry_id, &date.to_string(), &energy.to_string()])
    }

    pub fn finish(self) -> Result<()> {
        self.0.finish()
    }
}

/// Per-day truth totals, kWh.
pub fn read_truth_totals(path: &Path) -> Result<BTreeMap<NaiveDate, f64>> {
    let rows = read_rows(path, &TRUTH_COLUMNS, |t, r| {
        Ok((parse_date(t.field(r, 1), "date")?, parse_f64(t.field(r, 2), "energy_kwh")?))
    })?;
    let mut out = BTreeMap::new();
    for (d, e) in rows {
        *out.entry(d).or_insert(0.0) += e;
    }
    Ok(out)
}

pub const DEFECT_COLUMNS: [&str; 5] = ["system_id", "date", "kind", "factor", "expected_reliable"];

pub struct DefectWriter(CsvSink);

impl DefectWriter {
    pub fn create(path: &Path) -> Result<Self> {
        CsvSink::create(path, &DEFECT_COLUMNS).map(Self)
    }

    pub fn write(&mut self, system_id: &str, date: NaiveDate, kind: &DefectKind) -> Result<()> {
        let factor = match kind {
            DefectKind::MeterError { factor } => factor.to_string(),
            _ => String::new(),
        };
        self.0.row([
            system_id,
            &date.to_string(),
            kind.name(),
            &factor,
            &kind.expected_reliable().to_string(),
        ])
    }

    pub fn finish(self) -> Result<()> {
        self.0.finish()
    }
}

pub const RELIABLE_SET_COLUMNS: [&str; 10] = [
    "system_id",
    "date",
    "cum_energy_kwh",
    "peak_kw",
    "max_gap_min",
    "check1",
    "check2",
    "check3",
    "check4",
    "reliable",
];

/// One row per evaluated system-day; `check1..check4` are the cumulative,
/// peak, gap and coverage verdicts.
pub fn write_reliable_set(path: &Path, records: &[DailyRecord]) -> Result<()> {
    let mut w = CsvSink::create(path, &RELIABLE_SET_COLUMNS)?;
    for r in records {
        let c = r.checks;
        w.row([
            r.system_id.clone(),
            r.date.to_string(),
            r.cum_energy.to_string(),
            r.peak_power.to_string(),
            r.max_gap.to_string(),
            c.cumulative.to_string(),
            c.peak.to_string(),
            c.gaps.to_string(),
            c.coverage.to_string(),
            r.reliable.to_string(),
        ])?;
    }
    w.finish()
}

pub fn read_reliable_set(path: &Path) -> Result<Vec<DailyRecord>> {
    read_rows(path, &RELIABLE_SET_COLUMNS, |t, r| {
        let cum_energy = parse_f64(t.field(r, 2), "cum_energy_kwh")?;
        Ok(DailyRecord {
            system_id: t.field(r, 0).to_string(),
            date: parse_date(t.field(r, 1), "date")?,
            cum_energy,
            instantaneous_sum: cum_energy,
            peak_power: parse_f64(t.field(r, 3), "peak_kw")?,
            max_gap: parse_f64(t.field(r, 4), "max_gap_min")?,
            checks: CheckFlags {
                cumulative: parse_bool(t.field(r, 5), "check1")?,
                peak: parse_bool(t.field(r, 6), "check2")?,
                gaps: parse_bool(t.field(r, 7), "check3")?,
                coverage: parse_bool(t.field(r, 8), "check4")?,
            },
            reliable: parse_bool(t.field(r, 9), "reliable")?,
        })
    })
}

pub fn write_daily_counts(path: &Path, records: &[DailyRecord]) -> Result<()> {
    let mut counts: BTreeMap<NaiveDate, (usize, usize)> = BTreeMap::new();
    for r in records {
        let c = counts.entry(r.date).or_default();
        c.0 += 1;
        c.1 += usize::from(r.reliable);
    }
    let mut w = CsvSink::create(path, &["date", "n_reliable", "n_evaluated"])?;
    for (d, (n, ok)) in counts {
        w.row([d.to_string(), ok.to_string(), n.to_string()])?;
    }
    w.finish()
}

pub fn write_locations(path: &Path, rows: &[(LocationResolution, bool)]) -> Result<()> {
    let mut w = CsvSink::create(
        path,
        &["system_id", "resolved_pc4", "distance_km", "flag_far", "size_discrepancy"],
    )?;
    for (l, discrepancy) in rows {
        w.row([
            l.system_id.clone(),
            l.resolved_pc4.to_string(),
            opt(l.distance_latlon_to_centroid),
            l.flag_far.to_string(),
            discrepancy.to_string(),
        ])?;
    }
    w.finish()
}

pub const DAILY_IRRADIANCE_COLUMNS: [&str; 4] = ["date", "cell_id", "total_kwh_m2", "n_missing"];

pub fn write_daily_irradiance(
    path: &Path,
    fields: &BTreeMap<NaiveDate, DailyIrradianceField>,
) -> Result<()> {
    let mut w = CsvSink::create(path, &DAILY_IRRADIANCE_COLUMNS)?;
    for (d, f) in fields {
        for (cell, t) in &f.cells {
            w.row([
                d.to_string(),
                cell.to_string(),
                t.total.to_string(),
                t.n_missing.to_string(),
            ])?;
        }
    }
    w.finish()
}

pub fn read_daily_irradiance(path: &Path) -> Result<BTreeMap<NaiveDate, DailyIrradianceField>> {
    let rows = read_rows(path, &DAILY_IRRADIANCE_COLUMNS, |t, r| {
        Ok((
            parse_date(t.field(r, 0), "date")?,
            parse_num::<u32>(t.field(r, 1), "cell_id")?,
            DailyTotal {
                total: parse_f64(t.field(r, 2), "total_kwh_m2")?,
                n_missing: parse_num(t.field(r, 3), "n_missing")?,
            },
        ))
    })?;
    let mut out: BTreeMap<NaiveDate, DailyIrradianceField> = BTreeMap::new();
    for (d, cell, total) in rows {
        out.entry(d)
            .or_insert_with(|| DailyIrradianceField {
                date: Some(d),
                cells: BTreeMap::new(),
            })
            .cells
            .insert(cell, total);
    }
    Ok(out)
}

pub const DAILY_YIELD_COLUMNS: [&str; 6] = [
    "date",
    "scenario",
    "mean_kwh",
    "sigma_kwh",
    "mean_specific",
    "sigma_specific",
];

pub fn write_daily_yield(path: &Path, rows: &[(u8, YieldEstimate)]) -> Result<()> {
    let mut w = CsvSink::create(path, &DAILY_YIELD_COLUMNS)?;
    for (s, e) in rows {
        w.row([
            opt(e.date),
            s.to_string(),
            e.mean_energy.to_string(),
            e.sigma.to_string(),
            e.mean_specific.to_string(),
            e.sigma_specific.to_string(),
        ])?;
    }
    w.finish()
}

/// Daily estimates by scenario; capacity and counts are not stored.
pub fn read_daily_yield(path: &Path) -> Result<Vec<(u8, YieldEstimate)>> {
    read_rows(path, &DAILY_YIELD_COLUMNS, |t, r| {
        let mean_energy = parse_f64(t.field(r, 2), "mean_kwh")?;
        let mean_specific = parse_f64(t.field(r, 4), "mean_specific")?;
        Ok((
            parse_num(t.field(r, 1), "scenario")?,
            YieldEstimate {
                date: Some(parse_date(t.field(r, 0), "date")?),
                mean_energy,
                sigma: parse_f64(t.field(r, 3), "sigma_kwh")?,
                mean_specific,
                sigma_specific: parse_f64(t.field(r, 5), "sigma_specific")?,
                capacity: if mean_specific > 0.0 { mean_energy / mean_specific } else { 0.0 },
                n_bootstrap: 0,
                n_realizations: 0,
            },
        ))
    })
}

/// Per scenario-day diagnostics of the normalization step.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationRow {
    pub date: NaiveDate,
    pub scenario: u8,
    pub n_loggers: usize,
    pub n_converged: usize,
    pub n_realizations: usize,
    pub max_deviation: f64,
    pub status: String,
    pub capacity_kwp: f64,
    pub n_fallback_entries: usize,
}

pub fn write_normalization(path: &Path, rows: &[NormalizationRow]) -> Result<()> {
    let mut w = CsvSink::create(
        path,
        &[
            "date",
            "scenario",
            "n_loggers",
            "n_converged",
            "n_realizations",
            "max_deviation",
            "status",
            "capacity_kwp",
            "n_fallback_entries",
        ],
    )?;
    for r in rows {
        w.row([
            r.date.to_string(),
            r.scenario.to_string(),
            r.n_loggers.to_string(),
            r.n_converged.to_string(),
            r.n_realizations.to_string(),
            r.max_deviation.to_string(),
            r.status.clone(),
            r.capacity_kwp.to_string(),
            r.n_fallback_entries.to_string(),
        ])?;
    }
    w.finish()
}

pub const ANNUAL_YIELD_COLUMNS: [&str; 7] = [
    "year",
    "scenario",
    "energy_gwh",
    "sigma_gwh",
    "specific_kwh_kwp",
    "sigma_specific",
    "baseline_sn_gwh",
];

pub fn write_annual_yield(path: &Path, rows: &[(u8, AnnualEstimate)]) -> Result<()> {
    let mut w = CsvSink::create(path, &ANNUAL_YIELD_COLUMNS)?;
    for (s, a) in rows {
        w.row([
            chrono::Datelike::year(&a.first).to_string(),
            s.to_string(),
            (a.energy / 1e6).to_string(),
            (a.sigma / 1e6).to_string(),
            a.specific.to_string(),
            a.sigma_specific.to_string(),
            (a.baseline_sn / 1e6).to_string(),
        ])?;
    }
    w.finish()
}

/// One row of `annual_yield.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnualRow {
    pub year: i32,
    pub scenario: u8,
    pub energy_gwh: f64,
    pub sigma_gwh: f64,
    pub specific: f64,
    pub sigma_specific: f64,
    pub baseline_sn_gwh: f64,
}

pub fn read_annual_yield(path: &Path) -> Result<Vec<AnnualRow>> {
    read_rows(path, &ANNUAL_YIELD_COLUMNS, |t, r| {
        Ok(AnnualRow {
            year: parse_num(t.field(r, 0), "year")?,
            scenario: parse_num(t.field(r, 1), "scenario")?,
            energy_gwh: parse_f64(t.field(r, 2), "energy_gwh")?,
            sigma_gwh: parse_f64(t.field(r, 3), "sigma_gwh")?,
            specific: parse_f64(t.field(r, 4), "specific_kwh_kwp")?,
            sigma_specific: parse_f64(t.field(r, 5), "sigma_specific")?,
            baseline_sn_gwh: parse_f64(t.field(r, 6), "baseline_sn_gwh")?,
        })
    })
}

pub const MONTHLY_SHARES_COLUMNS: [&str; 4] = ["year", "scenario", "month", "share_pct"];

pub fn write_monthly_shares(path: &Path, rows: &[(i32, u8, [f64; 12])]) -> Result<()> {
    let mut w = CsvSink::create(path, &MONTHLY_SHARES_COLUMNS)?;
    for (year, s, shares) in rows {
        for (m, share) in shares.iter().enumerate() {
            w.row([year.to_string(), s.to_string(), (m + 1).to_string(), share.to_string()])?;
        }
    }
    w.finish()
}

pub fn read_monthly_shares(path: &Path) -> Result<Vec<(i32, u8, [f64; 12])>> {
    let rows = read_rows(path, &MONTHLY_SHARES_COLUMNS, |t, r| {
        let month: usize = parse_num(t.field(r, 2), "month")?;
        if !(1..=12).contains(&month) {
            return Err(format!("invalid month `{month}`"));
        }
        Ok((
            parse_num::<i32>(t.field(r, 0), "year")?,
            parse_num::<u8>(t.field(r, 1), "scenario")?,
            month,
            parse_f64(t.field(r, 3), "share_pct")?,
        ))
    })?;
    let mut out: BTreeMap<(i32, u8), [f64; 12]> = BTreeMap::new();
    for (y, s, m, v) in rows {
        out.entry((y, s)).or_insert([0.0; 12])[m - 1] = v;
    }
    Ok(out.into_iter().map(|((y, s), v)| (y, s, v)).collect())
}

/// `(date, scenario, value)` series with empty cells for undefined values.
pub fn write_series(
    path: &Path,
    value_column: &str,
    rows: &[(u8, Vec<(NaiveDate, Option<f64>)>)],
) -> Result<()> {
    let mut w = CsvSink::create(path, &["date", "scenario", value_column])?;
    for (s, series) in rows {
        for (d, v) in series {
            w.row([d.to_string(), s.to_string(), opt(*v)])?;
        }
    }
    w.finish()
}

pub fn write_municipal_daily(path: &Path, rows: &[(u8, RegionalYield)]) -> Result<()> {
    let mut w = CsvSink::create(
        path,
        &["date", "municipality_code", "energy_kwh", "specific_kwh_kwp", "scenario"],
    )?;
    for (s, r) in rows {
        w.row([
            r.date.to_string(),
            r.municipality_code.clone(),
            r.energy.to_string(),
            r.specific.to_string(),
            s.to_string(),
        ])?;
    }
    w.finish()
}

pub fn write_municipal_annual(path: &Path, rows: &[(i32, u8, MunicipalAnnual)]) -> Result<()> {
    let mut w = CsvSink::create(
        path,
        &["year", "municipality_code", "energy_kwh", "specific_kwh_kwp", "scenario"],
    )?;
    for (year, s, m) in rows {
        w.row([
            year.to_string(),
            m.municipality_code.clone(),
            m.energy.to_string(),
            m.specific.to_string(),
            s.to_string(),
        ])?;
    }
    w.finish()
}
