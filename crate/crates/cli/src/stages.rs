//! One function per subcommand. Every stage reads its inputs from files,
//! writes its outputs and a manifest into the output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{Datelike, NaiveDate};
use pvyield::cleanse::{evaluate_fleet_day, DailyRecord};
use pvyield::estimate::{
    annual_rollup, monthly_shares, scenario_daily_index, yield_irradiance_ratio, Scenario,
    YieldEstimate,
};
use pvyield::ingest::{
    load_centroids, load_intraday, load_register, load_system_meta, rejects_path, write_rejects,
    CentroidTable, IntradayLog, Loaded, RegisterEntry,
};
use pvyield::irradiance::{aggregate_fields, load_cells, load_irradiance, CellIndex, IrradianceLookup};
use pvyield::pipeline::{
    estimate_day, national_irradiance, observations, regional_day, register_points, Fleet,
    LoggerObservation,
};
use pvyield::regional::municipal_annual;
use pvyield::synth::generate;
use pvyield::tables::{self, NormalizationRow};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::report;

/// Fails with the name of the first missing file.
fn require(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.is_file() {
            bail!("missing input file: {}", p.display());
        }
    }
    Ok(())
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create output directory {}", cfg.out.display()))
}

/// Writes `<out>/<name>.rejects.csv` and warns when rows were skipped.
fn keep_rejects<T>(cfg: &RunConfig, input: &Path, loaded: &Loaded<T>) -> Result<()> {
    let name = rejects_path(input);
    let path = cfg.out.join(name.file_name().unwrap_or_default());
    write_rejects(&path, &loaded.rejects)?;
    if !loaded.rejects.is_empty() {
        eprintln!(
            "warning: {} rejected rows in {} (see {})",
            loaded.rejects.len(),
            input.display(),
            path.display()
        );
    }
    Ok(())
}

fn load_fleet(cfg: &RunConfig, manifest: &mut Manifest) -> Result<(Fleet, CentroidTable)> {
    let systems_path = cfg.input_file(tables::SYSTEMS_FILE);
    let centroids_path = cfg.input_file(tables::CENTROIDS_FILE);
    require(&[&systems_path, &centroids_path])?;
    let centroids = load_centroids(&centroids_path)?;
    let systems = load_system_meta(&systems_path)?;
    manifest.add_input(&systems_path)?;
    manifest.add_input(&centroids_path)?;
    let table: CentroidTable = centroids.items.iter().copied().collect();
    let fleet = Fleet::new(systems.items, &table);
    Ok((fleet, table))
}

fn load_lookup(
    cfg: &RunConfig,
    centroids: &CentroidTable,
    manifest: &mut Manifest,
) -> Result<IrradianceLookup> {
    let cells_path = cfg.input_file(tables::CELLS_FILE);
    let daily_path = cfg.out_file(tables::DAILY_IRRADIANCE_FILE);
    require(&[&cells_path, &daily_path])?;
    let cells = load_cells(&cells_path)?;
    let fields = tables::read_daily_irradiance(&daily_path)?;
    manifest.add_input(&cells_path)?;
    manifest.add_input(&daily_path)?;
    Ok(IrradianceLookup::new(centroids, &CellIndex::new(cells.items), fields))
}

fn load_register_file(cfg: &RunConfig, manifest: &mut Manifest) -> Result<Vec<RegisterEntry>> {
    let path = cfg.input_file(tables::REGISTER_FILE);
    require(&[&path])?;
    let loaded = load_register(&path)?;
    manifest.add_input(&path)?;
    if !loaded.rejects.is_empty() {
        eprintln!("warning: {} rejected rows in {}", loaded.rejects.len(), path.display());
    }
    Ok(loaded.items)
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    prepare_out(cfg)?;
    let world = generate(&cfg.synth)?;
    world.write_to(&cfg.out)?;
    Manifest::new("synth", cfg).write(&cfg.out)
}

pub fn clean(cfg: &RunConfig) -> Result<()> {
    let systems_path = cfg.input_file(tables::SYSTEMS_FILE);
    let intraday_path = cfg.input_file(tables::INTRADAY_FILE);
    let centroids_path = cfg.input_file(tables::CENTROIDS_FILE);
    require(&[&systems_path, &intraday_path, &centroids_path])?;
    prepare_out(cfg)?;
    let mut manifest = Manifest::new("clean", cfg);

    let systems = load_system_meta(&systems_path)?;
    let centroids = load_centroids(&centroids_path)?;
    let intraday = load_intraday(&intraday_path)?;
    keep_rejects(cfg, &systems_path, &systems)?;
    keep_rejects(cfg, &centroids_path, &centroids)?;
    keep_rejects(cfg, &intraday_path, &intraday)?;
    for p in [&systems_path, &intraday_path, &centroids_path] {
        manifest.add_input(p)?;
    }

    let table: CentroidTable = centroids.items.iter().copied().collect();
    let fleet = Fleet::new(systems.items, &table);
    if !fleet.unresolved.is_empty() {
        eprintln!(
            "warning: {} systems dropped, PC4 without centroid: {}",
            fleet.unresolved.len(),
            fleet.unresolved.join(", ")
        );
    }
    let mut by_date: BTreeMap<NaiveDate, Vec<IntradayLog>> = BTreeMap::new();
    for log in intraday.items.into_iter().filter(|l| cfg.in_period(l.date)) {
        by_date.entry(log.date).or_default().push(log);
    }
    let th = cfg.thresholds();
    let records: Vec<DailyRecord> = by_date
        .par_iter()
        .map(|(date, logs)| evaluate_fleet_day(logs, &fleet.metas, *date, &th))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    tables::write_reliable_set(&cfg.out_file(tables::RELIABLE_SET_FILE), &records)?;
    tables::write_daily_counts(&cfg.out_file(tables::DAILY_COUNTS_FILE), &records)?;
    tables::write_locations(&cfg.out_file(tables::LOCATIONS_FILE), &fleet.locations)?;
    manifest.write(&cfg.out)
}

pub fn grid(cfg: &RunConfig) -> Result<()> {
    let cells_path = cfg.input_file(tables::CELLS_FILE);
    let irradiance_path = cfg.input_file(tables::IRRADIANCE_FILE);
    require(&[&cells_path, &irradiance_path])?;
    prepare_out(cfg)?;
    let mut manifest = Manifest::new("grid", cfg);
    let cells = load_cells(&cells_path)?;
    let samples = load_irradiance(&irradiance_path)?;
    keep_rejects(cfg, &cells_path, &cells)?;
    keep_rejects(cfg, &irradiance_path, &samples)?;
    manifest.add_input(&cells_path)?;
    manifest.add_input(&irradiance_path)?;

    let known: BTreeSet<u32> = cells.items.iter().map(|c| c.cell_id).collect();
    let unknown = samples.items.iter().filter(|s| !known.contains(&s.cell_id)).count();
    if unknown > 0 {
        eprintln!("warning: {unknown} irradiance samples reference unknown cells and were ignored");
    }
    let fields = aggregate_fields(
        samples
            .items
            .into_iter()
            .filter(|s| known.contains(&s.cell_id) && cfg.in_period(s.timestamp.date_naive())),
    );
    tables::write_daily_irradiance(&cfg.out_file(tables::DAILY_IRRADIANCE_FILE), &fields)?;
    manifest.write(&cfg.out)
}

type Series = Vec<(NaiveDate, f64)>;

/// Pairs two series on their common dates.
fn align(a: &[(NaiveDate, f64)], b: &[(NaiveDate, f64)]) -> (Series, Series) {
    let bm: BTreeMap<NaiveDate, f64> = b.iter().copied().collect();
    a.iter()
        .filter_map(|&(d, v)| bm.get(&d).map(|&r| ((d, v), (d, r))))
        .unzip()
}

pub fn estimate(cfg: &RunConfig) -> Result<()> {
    let reliable_path = cfg.out_file(tables::RELIABLE_SET_FILE);
    require(&[
        &cfg.input_file(tables::SYSTEMS_FILE),
        &cfg.input_file(tables::CENTROIDS_FILE),
        &cfg.input_file(tables::CELLS_FILE),
        &cfg.input_file(tables::REGISTER_FILE),
        &reliable_path,
        &cfg.out_file(tables::DAILY_IRRADIANCE_FILE),
    ])?;
    prepare_out(cfg)?;
    let mut manifest = Manifest::new("estimate", cfg);
    let (fleet, centroids) = load_fleet(cfg, &mut manifest)?;
    let lookup = load_lookup(cfg, &centroids, &mut manifest)?;
    let register = load_register_file(cfg, &mut manifest)?;
    let records = tables::read_reliable_set(&reliable_path)?;
    manifest.add_input(&reliable_path)?;

    let mut by_date: BTreeMap<NaiveDate, Vec<DailyRecord>> = BTreeMap::new();
    for r in records.into_iter().filter(|r| cfg.in_period(r.date)) {
        by_date.entry(r.date).or_default().push(r);
    }
    let Some(&first_date) = by_date.keys().next() else {
        bail!("no evaluated days in {}", reliable_path.display());
    };
    let reference_date = cfg.reference_date.unwrap_or(first_date);
    let obs: BTreeMap<NaiveDate, Vec<LoggerObservation>> = by_date
        .iter()
        .map(|(d, recs)| (*d, observations(recs, &fleet, &lookup)))
        .collect();
    let Some(reference) = obs.get(&reference_date) else {
        bail!("reference date {reference_date} has no evaluated records");
    };
    let dates: Vec<NaiveDate> = obs.keys().copied().collect();
    let est_cfg = cfg.estimation();

    let mut daily_rows = Vec::new();
    let mut norm_rows = Vec::new();
    let mut annual_rows = Vec::new();
    let mut share_rows = Vec::new();
    let mut specific: BTreeMap<u8, Series> = BTreeMap::new();
    let mut energy: BTreeMap<u8, Series> = BTreeMap::new();
    for &id in &cfg.scenarios {
        let scenario = Scenario::new(id)?;
        let results: Vec<_> = dates
            .par_iter()
            .map(|&date| {
                let reg = register_points(&register, date, &lookup);
                estimate_day(date, &obs[&date], &reg, reference, &scenario, &est_cfg)
            })
            .collect();
        let mut ok: Vec<YieldEstimate> = Vec::new();
        for (&date, result) in dates.iter().zip(results) {
            match result {
                Ok(day) => {
                    norm_rows.push(NormalizationRow {
                        date,
                        scenario: id,
                        n_loggers: day.n_loggers,
                        n_converged: day.n_converged,
                        n_realizations: est_cfg.realizations,
                        max_deviation: day.max_deviation,
                        status: day.status.label(),
                        capacity_kwp: day.estimate.capacity,
                        n_fallback_entries: day.n_fallback_entries,
                    });
                    ok.push(day.estimate);
                }
                Err(e) => norm_rows.push(NormalizationRow {
                    date,
                    scenario: id,
                    n_loggers: 0,
                    n_converged: 0,
                    n_realizations: est_cfg.realizations,
                    max_deviation: 0.0,
                    status: format!("error: {e}"),
                    capacity_kwp: 0.0,
                    n_fallback_entries: 0,
                }),
            }
        }
        let dated: Vec<(NaiveDate, &YieldEstimate)> =
            ok.iter().filter_map(|e| e.date.map(|d| (d, e))).collect();
        specific.insert(id, dated.iter().map(|(d, e)| (*d, e.mean_specific)).collect());
        energy.insert(id, dated.iter().map(|(d, e)| (*d, e.mean_energy)).collect());

        let mut years: BTreeMap<i32, Vec<NaiveDate>> = BTreeMap::new();
        for &d in &dates {
            years.entry(d.year()).or_default().push(d);
        }
        for (year, days) in years {
            let (first, last) = (days[0], days[days.len() - 1]);
            let in_year: Vec<YieldEstimate> = ok
                .iter()
                .filter(|e| e.date.is_some_and(|d| d.year() == year))
                .cloned()
                .collect();
            match annual_rollup(&in_year, &register, first, last) {
                Ok(a) => annual_rows.push((id, a)),
                Err(e) => eprintln!("warning: scenario {id}, {year}: no annual total: {e}"),
            }
            let daily: Series = in_year
                .iter()
                .filter_map(|e| e.date.map(|d| (d, e.mean_energy)))
                .collect();
            if !daily.is_empty() {
                share_rows.push((year, id, monthly_shares(&daily)));
            }
        }
        daily_rows.extend(ok.into_iter().map(|e| (id, e)));
    }

    let mut index_rows = Vec::new();
    if let Some(base) = energy.get(&1) {
        for (&id, series) in &energy {
            let (v, r) = align(series, base);
            index_rows.push((id, scenario_daily_index(&v, &r)?));
        }
    }
    let irradiance: Series = dates
        .iter()
        .filter_map(|&d| national_irradiance(&register, d, &lookup).map(|i| (d, i)))
        .collect();
    let mut ratio_rows = Vec::new();
    for (&id, series) in &specific {
        let (v, r) = align(series, &irradiance);
        ratio_rows.push((id, yield_irradiance_ratio(&v, &r)?));
    }

    tables::write_daily_yield(&cfg.out_file(tables::DAILY_YIELD_FILE), &daily_rows)?;
    tables::write_normalization(&cfg.out_file(tables::NORMALIZATION_FILE), &norm_rows)?;
    tables::write_annual_yield(&cfg.out_file(tables::ANNUAL_YIELD_FILE), &annual_rows)?;
    tables::write_monthly_shares(&cfg.out_file(tables::MONTHLY_SHARES_FILE), &share_rows)?;
    tables::write_series(&cfg.out_file(tables::SCENARIO_INDEX_FILE), "index", &index_rows)?;
    tables::write_series(
        &cfg.out_file(tables::YIELD_RATIO_FILE),
        "yield_per_irradiance",
        &ratio_rows,
    )?;
    manifest.write(&cfg.out)
}

pub fn regional(cfg: &RunConfig) -> Result<()> {
    let yield_path = cfg.out_file(tables::DAILY_YIELD_FILE);
    require(&[
        &cfg.input_file(tables::CENTROIDS_FILE),
        &cfg.input_file(tables::CELLS_FILE),
        &cfg.input_file(tables::REGISTER_FILE),
        &yield_path,
        &cfg.out_file(tables::DAILY_IRRADIANCE_FILE),
    ])?;
    prepare_out(cfg)?;
    let mut manifest = Manifest::new("regional", cfg);
    let centroids_path = cfg.input_file(tables::CENTROIDS_FILE);
    let centroids: CentroidTable = load_centroids(&centroids_path)?.items.into_iter().collect();
    manifest.add_input(&centroids_path)?;
    let lookup = load_lookup(cfg, &centroids, &mut manifest)?;
    let register = load_register_file(cfg, &mut manifest)?;
    let national = tables::read_daily_yield(&yield_path)?;
    manifest.add_input(&yield_path)?;

    let selected: BTreeSet<u8> = cfg.scenarios.iter().copied().collect();
    let national: Vec<(u8, YieldEstimate)> = national
        .into_iter()
        .filter(|(s, e)| selected.contains(s) && e.date.is_some_and(|d| cfg.in_period(d)))
        .collect();
    let results: Vec<_> = national
        .par_iter()
        .map(|(s, e)| {
            let date = e.date.expect("dated by filter");
            (*s, date, regional_day(e, date, &register, &lookup))
        })
        .collect();

    let mut daily_rows = Vec::new();
    for (s, date, r) in results {
        match r {
            Ok(rows) => daily_rows.extend(rows.into_iter().map(|r| (s, r))),
            Err(e) => eprintln!("warning: scenario {s}, {date}: no municipal split: {e}"),
        }
    }
    let mut groups: BTreeMap<(u8, i32), Vec<_>> = BTreeMap::new();
    for (s, r) in &daily_rows {
        groups.entry((*s, r.date.year())).or_default().push(r.clone());
    }
    let annual_rows: Vec<_> = groups
        .iter()
        .flat_map(|(&(s, year), days)| {
            municipal_annual(days).into_iter().map(move |m| (year, s, m))
        })
        .collect();

    tables::write_municipal_daily(&cfg.out_file(tables::MUNICIPAL_DAILY_FILE), &daily_rows)?;
    tables::write_municipal_annual(&cfg.out_file(tables::MUNICIPAL_ANNUAL_FILE), &annual_rows)?;
    manifest.write(&cfg.out)
}

pub const REPORT_FILE: &str = "report.txt";

pub fn report(cfg: &RunConfig) -> Result<String> {
    let annual_path = cfg.out_file(tables::ANNUAL_YIELD_FILE);
    let shares_path = cfg.out_file(tables::MONTHLY_SHARES_FILE);
    require(&[&annual_path, &shares_path])?;
    let mut manifest = Manifest::new("report", cfg);
    let selected: BTreeSet<u8> = cfg.scenarios.iter().copied().collect();
    let keep_year = |y: i32| cfg.year.is_none_or(|want| want == y);
    let annual: Vec<_> = tables::read_annual_yield(&annual_path)?
        .into_iter()
        .filter(|r| selected.contains(&r.scenario) && keep_year(r.year))
        .collect();
    let shares: Vec<_> = tables::read_monthly_shares(&shares_path)?
        .into_iter()
        .filter(|(y, s, _)| selected.contains(s) && keep_year(*y))
        .collect();
    manifest.add_input(&annual_path)?;
    manifest.add_input(&shares_path)?;
    let text = report::render(&annual, &shares)?;
    let out: PathBuf = cfg.out_file(REPORT_FILE);
    std::fs::write(&out, &text).with_context(|| format!("cannot write {}", out.display()))?;
    manifest.write(&cfg.out)?;
    Ok(text)
}

/// clean, grid, estimate, regional and report in sequence.
pub fn run_all(cfg: &RunConfig) -> Result<String> {
    clean(cfg).context("clean")?;
    grid(cfg).context("grid")?;
    estimate(cfg).context("estimate")?;
    regional(cfg).context("regional")?;
    report(cfg).context("report")
}
