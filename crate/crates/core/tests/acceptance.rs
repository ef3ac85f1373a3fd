//! End-to-end acceptance checks on synthetic fixtures. Prints one PASS/FAIL
//! line per criterion and exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;

use chrono::{Datelike, NaiveDate};
use rand::Rng;

use pvyield::density::{build_density, Axis, BinGrid};
use pvyield::estimate::{
    annual_rollup, apply_scenario, baseline_sn, monthly_shares, scenario_daily_index,
    AssignmentPlan, RegisterPoint, Scenario, YieldEstimate,
};
use pvyield::ingest::{Pc4, RegisterEntry};
use pvyield::normalize::{rebalance, ParamBinning, RebalanceConfig};
use pvyield::pipeline::{regional_day, EstimationConfig, NormStatus};
use pvyield::regional::municipal_annual;
use pvyield::synth::{DefectKind, SynthConfig};
use pvyield::{seed, Error};

const DAILY_TOLERANCE: f64 = 0.02;
const DAILY_QUORUM: f64 = 0.95;
const PERIOD_TOLERANCE: f64 = 0.01;
const RUNTIME_LIMIT_S: f64 = 120.0;
const COLUMN_SUM_TOLERANCE: f64 = 1e-9;
const MONTE_CARLO_TOLERANCE: f64 = 0.005;
const LEEWAY: f64 = 0.015;
const CONSERVATION_TOLERANCE: f64 = 1e-6;
const SHARE_TOLERANCE: f64 = 0.01;
const SIGMA_RATIO: f64 = 0.1;

struct Outcome {
    id: u8,
    pass: bool,
    detail: String,
}

fn report(id: u8, pass: bool, detail: String) -> Outcome {
    println!("criterion {id}: {} - {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass, detail }
}

fn period_fixture() -> common::Run {
    common::simulate(&SynthConfig::default(), &EstimationConfig::default(), &[1])
}

fn year_fixture() -> common::Run {
    let synth = SynthConfig {
        seed: 17,
        start: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
        n_days: 365,
        n_register_entries: 3000,
        ..SynthConfig::default()
    };
    let est = EstimationConfig {
        base_seed: 5,
        bootstrap: 300,
        ..EstimationConfig::default()
    };
    common::simulate(&synth, &est, &[1, 2, 6])
}

fn oracle_equivalence(run: &common::Run) -> Outcome {
    let mut within = 0;
    let (mut est, mut truth) = (0.0, 0.0);
    let days = run.world.n_days();
    for d in 0..days {
        let t = run.world.truth_total(d);
        let e = match &run.estimates[0][d] {
            Ok(e) => e.estimate.mean_energy,
            Err(_) => 0.0,
        };
        if (e / t - 1.0).abs() <= DAILY_TOLERANCE {
            within += 1;
        }
        est += e;
        truth += t;
    }
    let share = within as f64 / days as f64;
    let total_err = est / truth - 1.0;
    report(
        1,
        share >= DAILY_QUORUM && total_err.abs() <= PERIOD_TOLERANCE && run.seconds < RUNTIME_LIMIT_S,
        format!(
            "{within}/{days} days within 2%, period total error {:+.3}%, runtime {:.1}s",
            total_err * 100.0,
            run.seconds
        ),
    )
}

fn cleaning_exactness(run: &common::Run) -> Outcome {
    let (mut false_keep, mut false_drop, mut kept_in_band, mut in_band) = (0, 0, 0, 0);
    let mut by_kind = [0usize; 4];
    for (d, records) in run.records.iter().enumerate() {
        let kept: BTreeSet<String> = records
            .iter()
            .filter(|r| r.reliable)
            .map(|r| r.system_id.clone())
            .collect();
        let expected = run.world.expected_reliable(d);
        false_keep += kept.difference(&expected).count();
        false_drop += expected.difference(&kept).count();
        for (i, s) in run.world.systems.iter().enumerate() {
            match run.world.defect(i, d) {
                Some(DefectKind::Gap) => by_kind[0] += 1,
                Some(DefectKind::MissingDay) => by_kind[1] += 1,
                Some(DefectKind::PeakSpike) => by_kind[2] += 1,
                Some(k @ DefectKind::MeterError { .. }) => {
                    by_kind[3] += 1;
                    if k.expected_reliable() {
                        in_band += 1;
                        kept_in_band += usize::from(kept.contains(&s.system_id));
                    }
                }
                None => {}
            }
        }
    }
    report(
        2,
        false_keep == 0 && false_drop == 0 && kept_in_band == in_band && by_kind.iter().all(|&n| n > 0),
        format!(
            "{false_keep} false keeps, {false_drop} false drops; injected gap/missing/peak/meter = {by_kind:?}; {kept_in_band}/{in_band} in-band meter errors kept"
        ),
    )
}

fn density_invariants() -> Outcome {
    let mut rng = seed::rng(2024);
    let mut worst_sum: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..300);
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(0.0..8.5), rng.gen_range(0.0..7.5)))
            .collect();
        let grid = BinGrid::fit(&pts, 0.5, 0.5).unwrap();
        let d = build_density(&pts, grid, None).unwrap();
        for (col, &total) in d.column_totals.iter().enumerate() {
            if total > 0 {
                let s: f64 = d.cond_prob[col].iter().sum();
                worst_sum = worst_sum.max((s - 1.0).abs());
            }
        }
    }
    let mut worst_mc: f64 = 0.0;
    for f in 0..5 {
        let pts: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                let i = rng.gen_range(2.0..6.0);
                (i, 0.8 * i * rng.gen_range(0.7..1.05))
            })
            .collect();
        let grid = BinGrid::fit(&pts, 0.5, 0.5).unwrap();
        let d = build_density(&pts, grid, None).unwrap();
        let col = (0..d.n_columns()).find(|&c| !d.is_column_empty(c)).unwrap();
        let entry = [RegisterPoint {
            capacity: 4.0,
            irradiance: Some(d.grid.x.center(col)),
        }];
        let plan = AssignmentPlan::new(&d, &entry);
        let mut draw_rng = seed::rng(seed::derive(99, &[f]));
        let n = 100_000;
        let mc = (0..n).map(|_| plan.draw(&mut draw_rng)).sum::<f64>() / n as f64;
        worst_mc = worst_mc.max((mc / plan.expected() - 1.0).abs());
    }
    report(
        3,
        worst_sum <= COLUMN_SUM_TOLERANCE && worst_mc <= MONTE_CARLO_TOLERANCE,
        format!(
            "max |column sum - 1| = {worst_sum:.2e} over 1000 fixtures; max Monte-Carlo vs closed-form error {:.3}%",
            worst_mc * 100.0
        ),
    )
}

fn normalization_contract(year: &common::Run) -> Outcome {
    let (mut converged, mut unnormalized, mut worst) = (0, 0, 0.0f64);
    let mut documented = true;
    for e in year.estimates.iter().flatten().flatten() {
        match &e.status {
            NormStatus::Unnormalized(why) => {
                unnormalized += 1;
                documented &= why.contains("did not converge") || why.contains("unfillable");
            }
            _ => {
                converged += 1;
                worst = worst.max(e.max_deviation);
            }
        }
    }

    // an unreachable leeway must surface the documented error
    let day = 100;
    let date = year.date(day);
    let obs = pvyield::pipeline::observations(&year.records[day], &year.fleet, &year.lookup);
    let params: Vec<_> = obs.iter().map(|o| o.params()).collect();
    let irr = Axis::fit(params.iter().map(|p| p.irradiance), 0.5).unwrap();
    let binning = ParamBinning::standard(irr);
    let mut targets = pvyield::normalize::Targets::reference(
        &params,
        &binning,
        pvyield::normalize::parameter_histogram(&params, pvyield::normalize::Parameter::Irradiance, &binning).unwrap(),
    )
    .unwrap();
    targets.orientation = pvyield::normalize::DistributionVector::from_weights(vec![1.0; 8]).unwrap();
    let strict = RebalanceConfig {
        leeway: 1e-6,
        max_iters: Some(200),
    };
    let raised = matches!(
        rebalance(&params, &binning, &targets, &strict, 1),
        Err(Error::NonConvergence { .. } | Error::UnfillableBin { .. })
    );

    // fixed seed gives identical multisets
    let reg = pvyield::pipeline::register_points(&year.world.register, date, &year.lookup);
    let reference = pvyield::pipeline::observations(&year.records[0], &year.fleet, &year.lookup);
    let s1 = Scenario::new(1).unwrap();
    let cfg = EstimationConfig {
        realizations: 8,
        bootstrap: 20,
        base_seed: 77,
        ..EstimationConfig::default()
    };
    let bytes = |r: &pvyield::pipeline::DayEstimate| -> Vec<u8> {
        r.realizations
            .iter()
            .flat_map(|m| m.members.iter().flat_map(|i| (*i as u64).to_le_bytes()))
            .collect()
    };
    let a = pvyield::pipeline::estimate_day(date, &obs, &reg, &reference, &s1, &cfg).unwrap();
    let b = pvyield::pipeline::estimate_day(date, &obs, &reg, &reference, &s1, &cfg).unwrap();
    let identical = bytes(&a) == bytes(&b) && a.estimate == b.estimate;

    report(
        4,
        worst <= LEEWAY + 1e-12 && documented && raised && identical,
        format!(
            "{converged} converged scenario-days, max marginal deviation {:.4}%; {unnormalized} fell back with documented errors; strict leeway raises documented error: {raised}; seeded multisets identical: {identical}",
            worst * 100.0
        ),
    )
}

fn baseline() -> Outcome {
    let entry = |id: &str, kwp: f64, d: NaiveDate| RegisterEntry {
        entry_id: id.into(),
        pc4: Pc4(1000),
        capacity: kwp,
        install_date: d,
        municipality_code: "GM0001".into(),
    };
    let reg = [
        entry("a", 100.0, NaiveDate::from_ymd_opt(2015, 3, 1).unwrap()),
        entry("b", 200.0, NaiveDate::from_ymd_opt(2017, 12, 31).unwrap()),
    ];
    let value = baseline_sn(&reg, 2017);
    let daily: Vec<YieldEstimate> = NaiveDate::from_ymd_opt(2017, 1, 1)
        .unwrap()
        .iter_days()
        .take(365)
        .map(|d| YieldEstimate {
            date: Some(d),
            mean_energy: 1.0,
            sigma: 0.0,
            mean_specific: 0.0,
            sigma_specific: 0.0,
            capacity: 0.0,
            n_bootstrap: 1,
            n_realizations: 1,
        })
        .collect();
    let first = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
    let last = NaiveDate::from_ymd_opt(2017, 12, 31).unwrap();
    let rolled = annual_rollup(&daily, &reg, first, last).unwrap().baseline_sn;
    report(
        5,
        value == 175_000.0 && rolled == value,
        format!("((100 + 300) / 2) x 875 = {value} kWh; roll-up baseline {rolled} kWh"),
    )
}

fn regional_conservation(year: &common::Run) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut daily = Vec::new();
    for (d, e) in year.estimates[0].iter().enumerate() {
        let e = &e.as_ref().expect("scenario 1 estimate").estimate;
        let rows = regional_day(e, year.date(d), &year.world.register, &year.lookup).unwrap();
        let sum: f64 = rows.iter().map(|r| r.energy).sum();
        worst = worst.max((sum / e.mean_energy - 1.0).abs());
        daily.extend(rows);
    }
    let annual = municipal_annual(&daily);
    let (west, rest): (Vec<_>, Vec<_>) = annual
        .iter()
        .partition(|m| year.world.is_west(&m.municipality_code) == Some(true));
    let west_min = west.iter().map(|m| m.specific).fold(f64::INFINITY, f64::min);
    let rest_max = rest.iter().map(|m| m.specific).fold(0.0, f64::max);
    report(
        6,
        worst <= CONSERVATION_TOLERANCE && !west.is_empty() && west_min > rest_max,
        format!(
            "max relative conservation error {worst:.2e}; lowest west municipality {west_min:.1} kWh/kWp vs highest other {rest_max:.1} kWh/kWp"
        ),
    )
}

fn annual(year: &common::Run, k: usize) -> pvyield::estimate::AnnualEstimate {
    let daily: Vec<YieldEstimate> = year.estimates[k]
        .iter()
        .map(|e| e.as_ref().expect("estimate").estimate)
        .collect();
    annual_rollup(&daily, &year.world.register, year.date(0), year.date(year.world.n_days() - 1)).unwrap()
}

fn scenario_structure(year: &common::Run) -> Outcome {
    let obs = pvyield::pipeline::observations(&year.records[0], &year.fleet, &year.lookup);
    let all = Scenario::all();
    let ids = |s: &Scenario| -> BTreeSet<String> {
        apply_scenario(&obs, s)
            .map(|v| v.into_iter().map(|o| o.system_id.clone()).collect())
            .unwrap_or_default()
    };
    let one = ids(&all[0]);
    let superset = all.iter().all(|s| ids(s).is_subset(&one)) && one.len() == obs.len();
    let (two, six) = (ids(&all[1]), ids(&all[5]));
    let disjoint = two.is_disjoint(&six) && two.len() + six.len() == one.len();
    let (s2, s6) = (annual(year, 1).specific, annual(year, 2).specific);
    report(
        7,
        all.len() == 15 && superset && disjoint && s2 >= s6,
        format!(
            "15 scenarios parsed; scenario 1 superset: {superset}; 2 and 6 partition the fleet: {disjoint}; specific annual yield s2 {s2:.1} >= s6 {s6:.1} kWh/kWp"
        ),
    )
}

fn monthly_and_index(year: &common::Run) -> Outcome {
    let mut worst: f64 = 0.0;
    let series = |k: usize| -> Vec<(NaiveDate, f64)> {
        year.estimates[k]
            .iter()
            .map(|e| {
                let e = &e.as_ref().unwrap().estimate;
                (e.date.unwrap(), e.mean_energy)
            })
            .collect()
    };
    for k in 0..year.estimates.len() {
        let s = monthly_shares(&series(k));
        worst = worst.max((s.iter().sum::<f64>() - 100.0).abs());
    }
    let base = series(0);
    let idx = scenario_daily_index(&base, &base).unwrap();
    let identity = idx.iter().all(|(_, v)| *v == Some(100.0));
    report(
        8,
        worst <= SHARE_TOLERANCE && identity,
        format!(
            "max |sum of monthly shares - 100| = {worst:.2e} over {} scenario-years; self-index identically 100: {identity}",
            year.estimates.len()
        ),
    )
}

fn sigma_sanity(year: &common::Run) -> Outcome {
    let a = annual(year, 0);
    let mut daily: Vec<f64> = year.estimates[0]
        .iter()
        .map(|e| {
            let e = &e.as_ref().unwrap().estimate;
            e.sigma / e.mean_energy
        })
        .collect();
    daily.sort_by(f64::total_cmp);
    let median = daily[daily.len() / 2];
    let annual_rel = a.sigma / a.energy;
    report(
        9,
        annual_rel <= SIGMA_RATIO * median,
        format!(
            "annual relative sigma {:.2e} vs median daily {:.2e} (ratio {:.3}) over {} days of {}",
            annual_rel,
            median,
            annual_rel / median,
            a.n_days,
            a.first.year()
        ),
    )
}

fn main() {
    let period = period_fixture();
    let year = year_fixture();
    let outcomes = [
        oracle_equivalence(&period),
        cleaning_exactness(&period),
        density_invariants(),
        normalization_contract(&year),
        baseline(),
        regional_conservation(&year),
        scenario_structure(&year),
        monthly_and_index(&year),
        sigma_sanity(&year),
    ];
    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    println!(
        "acceptance: {} passed, {} failed",
        outcomes.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        for o in failed {
            eprintln!("criterion {} failed: {}", o.id, o.detail);
        }
        std::process::exit(1);
    }
}
