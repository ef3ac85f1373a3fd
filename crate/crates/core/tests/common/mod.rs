#![allow(dead_code)]

use std::time::Instant;

use chrono::NaiveDate;
use pvyield::cleanse::{evaluate_fleet_day, DailyRecord, QualityThresholds};
use pvyield::estimate::Scenario;
use pvyield::ingest::CentroidTable;
use pvyield::irradiance::{aggregate_fields, CellIndex, IrradianceLookup};
use pvyield::pipeline::{
    estimate_day, observations, register_points, DayEstimate, EstimationConfig, Fleet,
    LoggerObservation,
};
use pvyield::synth::{generate, SynthConfig, SyntheticWorld};

pub struct Run {
    pub world: SyntheticWorld,
    pub lookup: IrradianceLookup,
    pub fleet: Fleet,
    pub records: Vec<Vec<DailyRecord>>,
    /// `estimates[scenario_index][day]`
    pub estimates: Vec<Vec<pvyield::Result<DayEstimate>>>,
    pub seconds: f64,
}

impl Run {
    pub fn date(&self, day: usize) -> NaiveDate {
        self.world.date(day)
    }
}

pub fn lookup(world: &SyntheticWorld) -> IrradianceLookup {
    let fields = aggregate_fields((0..world.n_days()).flat_map(|d| world.quarter_hours(d)));
    let centroids: CentroidTable = world.centroids.iter().copied().collect();
    IrradianceLookup::new(&centroids, &CellIndex::new(world.cells.clone()), fields)
}

/// Generates `synth` and runs cleaning plus estimation for every day and scenario.
pub fn simulate(synth: &SynthConfig, est: &EstimationConfig, scenarios: &[u8]) -> Run {
    let start = Instant::now();
    let world = generate(synth).expect("valid synth config");
    let lookup = lookup(&world);
    let centroids: CentroidTable = world.centroids.iter().copied().collect();
    let fleet = Fleet::new(world.systems.clone(), &centroids);
    let th = QualityThresholds::default();
    let mut records = Vec::new();
    let mut obs: Vec<Vec<LoggerObservation>> = Vec::new();
    for d in 0..world.n_days() {
        let logs = world.intraday_logs(d);
        let recs = evaluate_fleet_day(&logs, &fleet.metas, world.date(d), &th);
        obs.push(observations(&recs, &fleet, &lookup));
        records.push(recs);
    }
    let scenarios: Vec<Scenario> = scenarios.iter().map(|&s| Scenario::new(s).unwrap()).collect();
    let estimates = scenarios
        .iter()
        .map(|s| {
            (0..world.n_days())
                .map(|d| {
                    let date = world.date(d);
                    let reg = register_points(&world.register, date, &lookup);
                    estimate_day(date, &obs[d], &reg, &obs[0], s, est)
                })
                .collect()
        })
        .collect();
    Run {
        world,
        lookup,
        fleet,
        records,
        estimates,
        seconds: start.elapsed().as_secs_f64(),
    }
}
