//! Synthetic fleets, registers, irradiance fields and defect-injected
//! intraday logs with closed-form ground truth.
//!
//! Everything is derived from `SynthConfig::seed`. Day-level data (weather,
//! defects) is drawn once up front in compact form; intraday samples are
//! expanded on demand so a full year fits in memory.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, TimeZone};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{distance_km, LatLon};
use crate::ingest::{
    IntradayLog, Orientation, Pc4, Pc4Centroid, PvSystemMeta, RegisterEntry, Sample,
};
use crate::irradiance::{nearest_cell, IrradianceCell, QuarterHourSample};
use crate::normalize::EpsilonClass;
use crate::seed::{self, StageRng};
use crate::tables;

pub const LAT_RANGE: (f64, f64) = (51.0, 53.5);
pub const LON_RANGE: (f64, f64) = (3.5, 7.0);
/// Municipalities tile the bounding box in a grid of this many columns...
pub const MUNICIPALITY_COLS: usize = 4;
/// ...and rows.
pub const MUNICIPALITY_ROWS: usize = 3;

const PEAK_SPIKE_FACTOR: f64 = 1.3;
const GAP_MINUTES: u32 = 120;
const POWER_DECIMALS: i32 = 5;
const IRRADIANCE_DECIMALS: i32 = 6;

mod stream {
    pub const GEOGRAPHY: u64 = 1;
    pub const SYSTEMS: u64 = 2;
    pub const REGISTER: u64 = 3;
    pub const WEATHER: u64 = 4;
    pub const DEFECTS: u64 = 5;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_systems: usize,
    pub n_register_entries: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub n_pc4: usize,
    pub start: NaiveDate,
    pub n_days: usize,
    /// Logger sampling interval, minutes.
    pub sample_minutes: u32,
    pub response: ResponseModel,
    pub weather: WeatherModel,
    pub fleet: FleetModel,
    pub defects: DefectRates,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_systems: 200,
            n_register_entries: 5000,
            grid_rows: 20,
            grid_cols: 20,
            n_pc4: 300,
            start: NaiveDate::from_ymd_opt(2016, 5, 1).expect("static date"),
            n_days: 60,
            sample_minutes: 5,
            response: ResponseModel::default(),
            weather: WeatherModel::default(),
            fleet: FleetModel::default(),
            defects: DefectRates::default(),
        }
    }
}

/// Separable daily response: `E = P * I * eta0 * g(azimuth) * s(tilt, doy)`,
/// clipped at inverter power times the effective day length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResponseModel {
    pub eta0: f64,
    /// Relative loss of a north-facing array.
    pub orientation_loss: f64,
    /// Seasonal tilt coupling amplitude.
    pub tilt_season: f64,
    /// Tilt with no seasonal bias, degrees.
    pub neutral_tilt: f64,
    /// Inverter / system size for epsilon = +1 systems.
    pub undersized_inverter: f64,
    /// Inverter / system size for epsilon = -1 systems.
    pub oversized_inverter: f64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        Self {
            eta0: 0.85,
            orientation_loss: 0.25,
            tilt_season: 0.15,
            neutral_tilt: 35.0,
            undersized_inverter: 0.65,
            oversized_inverter: 1.1,
        }
    }
}

impl ResponseModel {
    pub fn orientation_gain(&self, azimuth: f64) -> f64 {
        1.0 - self.orientation_loss * (1.0 - (azimuth - 180.0).to_radians().cos()) / 2.0
    }

    /// Steep arrays gain in winter, flat ones in summer.
    pub fn tilt_factor(&self, tilt: f64, doy: u32) -> f64 {
        let season = (2.0 * PI * (f64::from(doy) - 355.0) / 365.25).cos();
        1.0 + self.tilt_season * (tilt - self.neutral_tilt) / 90.0 * season
    }

    /// kWh for one day with `hours` of daylight.
    pub fn daily_energy(
        &self,
        setup: &PanelSetup,
        capacity: f64,
        irradiance: f64,
        doy: u32,
        hours: f64,
    ) -> f64 {
        let raw = capacity
            * irradiance
            * self.eta0
            * self.orientation_gain(f64::from(setup.orientation.azimuth()))
            * self.tilt_factor(setup.tilt, doy);
        let clip = setup.inverter_ratio * capacity * 2.0 * hours / PI;
        raw.max(0.0).min(clip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherModel {
    /// Daily clearness multiplier range.
    pub min_clearness: f64,
    pub max_clearness: f64,
    /// Extra irradiance at the western edge relative to the eastern edge.
    pub west_gain: f64,
    /// Probability of a local weather system on a day.
    pub local_probability: f64,
    pub local_amplitude: f64,
    pub local_radius_km: f64,
    /// Uniform relative noise per cell-day.
    pub cell_noise: f64,
    /// Probability that a cell-day lacks one interior quarter-hour.
    pub missing_quarter_rate: f64,
}

impl Default for WeatherModel {
    fn default() -> Self {
        Self {
            min_clearness: 0.45,
            max_clearness: 1.0,
            west_gain: 0.10,
            local_probability: 0.3,
            local_amplitude: 0.3,
            local_radius_km: 60.0,
            cell_noise: 0.02,
            missing_quarter_rate: 0.01,
        }
    }
}

impl WeatherModel {
    /// Cloudless daily irradiation, kWh/m².
    pub fn clear_sky(doy: u32) -> f64 {
        4.5 - 3.7 * (2.0 * PI * (f64::from(doy) + 10.0) / 365.25).cos()
    }
}

/// Hours between sunrise and sunset.
pub fn day_length(doy: u32) -> f64 {
    12.0 - 4.4 * (2.0 * PI * (f64::from(doy) + 10.0) / 365.25).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetModel {
    /// Loggers whose lat/lon lies 6-10 km from their PC4 centroid.
    pub far_location_rate: f64,
    pub missing_latlon_rate: f64,
    /// Loggers whose panel fields disagree with the declared size.
    pub size_discrepancy_rate: f64,
    /// Register entries installed during the period.
    pub register_growth: f64,
}

impl Default for FleetModel {
    fn default() -> Self {
        Self {
            far_location_rate: 0.05,
            missing_latlon_rate: 0.1,
            size_discrepancy_rate: 0.1,
            register_growth: 0.2,
        }
    }
}

/// Per system-day probabilities; at most one defect per system-day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectRates {
    pub gap: f64,
    pub missing_day: f64,
    pub peak: f64,
    pub meter_error: f64,
}

impl Default for DefectRates {
    fn default() -> Self {
        Self {
            gap: 0.05,
            missing_day: 0.05,
            peak: 0.05,
            meter_error: 0.05,
        }
    }
}

impl DefectRates {
    pub const NONE: Self = Self {
        gap: 0.0,
        missing_day: 0.0,
        peak: 0.0,
        meter_error: 0.0,
    };

    fn total(&self) -> f64 {
        self.gap + self.missing_day + self.peak + self.meter_error
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let rates = [
            ("defects.gap", self.defects.gap),
            ("defects.missing_day", self.defects.missing_day),
            ("defects.peak", self.defects.peak),
            ("defects.meter_error", self.defects.meter_error),
            ("weather.local_probability", self.weather.local_probability),
            ("weather.missing_quarter_rate", self.weather.missing_quarter_rate),
            ("fleet.far_location_rate", self.fleet.far_location_rate),
            ("fleet.missing_latlon_rate", self.fleet.missing_latlon_rate),
            ("fleet.size_discrepancy_rate", self.fleet.size_discrepancy_rate),
            ("fleet.register_growth", self.fleet.register_growth),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return bad(format!("{name} = {r} is not in [0, 1]"));
            }
        }
        if self.defects.total() > 1.0 + 1e-12 {
            return bad("defect rates sum to more than 1".into());
        }
        if self.n_systems == 0 || self.n_days == 0 || self.grid_rows == 0 || self.grid_cols == 0 {
            return bad("systems, days and grid dimensions must be positive".into());
        }
        if self.n_pc4 == 0 || self.n_pc4 > 8999 {
            return bad(format!("n_pc4 = {} is not in 1..=8999", self.n_pc4));
        }
        if self.sample_minutes == 0 || self.sample_minutes > 30 {
            return bad(format!("sample_minutes = {} is not in 1..=30", self.sample_minutes));
        }
        let w = &self.weather;
        if !(w.min_clearness > 0.0 && w.min_clearness <= w.max_clearness) {
            return bad("clearness range must be positive and ordered".into());
        }
        if w.local_amplitude.abs() >= 1.0 || w.cell_noise < 0.0 || w.cell_noise >= 1.0 {
            return bad("local amplitude and cell noise must be below 1".into());
        }
        if self.response.undersized_inverter >= 1.0 || self.response.oversized_inverter <= 1.0 {
            return bad("inverter ratios must straddle 1".into());
        }
        Ok(())
    }

    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.n_days as i64 - 1)
    }
}

/// The hidden panel configuration behind a logger or register entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelSetup {
    pub orientation: Orientation,
    pub tilt: f64,
    /// Inverter size / system size.
    pub inverter_ratio: f64,
}

impl PanelSetup {
    pub fn epsilon(&self) -> EpsilonClass {
        EpsilonClass::from_sizes(1.0, self.inverter_ratio)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Municipality {
    pub code: String,
    /// 0 is the westernmost column.
    pub column: usize,
    pub row: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DefectKind {
    /// Samples removed over a 120-minute stretch.
    Gap,
    MissingDay,
    /// One sample's power set above the peak limit.
    PeakSpike,
    /// Cumulative readings scaled by `factor`.
    MeterError { factor: f64 },
}

impl DefectKind {
    pub fn name(&self) -> &'static str {
        match self {
            DefectKind::Gap => "gap",
            DefectKind::MissingDay => "missing_day",
            DefectKind::PeakSpike => "peak",
            DefectKind::MeterError { .. } => "meter_error",
        }
    }

    /// Whether the day should survive cleaning.
    pub fn expected_reliable(&self) -> bool {
        matches!(self, DefectKind::MeterError { factor } if (0.9..=1.1).contains(factor))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Defect {
    kind: DefectKind,
    /// Sample position used by gap and spike defects.
    position: f64,
}

#[derive(Debug, Clone)]
struct DayField {
    totals: Vec<f64>,
    missing_quarter: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: SynthConfig,
    pub cells: Vec<IrradianceCell>,
    pub centroids: Vec<Pc4Centroid>,
    pub municipalities: Vec<Municipality>,
    pub systems: Vec<PvSystemMeta>,
    pub register: Vec<RegisterEntry>,
    system_setups: Vec<PanelSetup>,
    entry_setups: Vec<PanelSetup>,
    system_cells: Vec<u32>,
    entry_cells: Vec<u32>,
    days: Vec<DayField>,
    defects: Vec<Vec<Option<Defect>>>,
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

fn uniform_in_box(rng: &mut StageRng) -> LatLon {
    LatLon::new(
        rng.gen_range(LAT_RANGE.0..LAT_RANGE.1),
        rng.gen_range(LON_RANGE.0..LON_RANGE.1),
    )
}

/// Point `km` away from `p` in direction `bearing` (radians), flat-earth approximation.
fn offset_km(p: LatLon, km: f64, bearing: f64) -> LatLon {
    let dlat = km * bearing.cos() / 111.2;
    let dlon = km * bearing.sin() / (111.2 * p.lat.to_radians().cos());
    LatLon::new(p.lat + dlat, p.lon + dlon)
}

fn municipality_index(p: LatLon) -> (usize, usize) {
    let fx = (p.lon - LON_RANGE.0) / (LON_RANGE.1 - LON_RANGE.0);
    let fy = (p.lat - LAT_RANGE.0) / (LAT_RANGE.1 - LAT_RANGE.0);
    let col = ((fx * MUNICIPALITY_COLS as f64) as usize).min(MUNICIPALITY_COLS - 1);
    let row = ((fy * MUNICIPALITY_ROWS as f64) as usize).min(MUNICIPALITY_ROWS - 1);
    (col, row)
}

fn municipality_code(col: usize, row: usize) -> String {
    format!("GM{:04}", row * MUNICIPALITY_COLS + col + 1)
}

fn pick_orientation(rng: &mut StageRng) -> Orientation {
    // N, NE, E, SE, S, SW, W, NW
    const WEIGHTS: [f64; 8] = [0.02, 0.03, 0.10, 0.15, 0.40, 0.15, 0.10, 0.05];
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (o, w) in Orientation::ALL.iter().zip(WEIGHTS) {
        acc += w;
        if u < acc {
            return *o;
        }
    }
    Orientation::NORTH
}

fn pick_setup(rng: &mut StageRng, response: &ResponseModel) -> PanelSetup {
    let orientation = pick_orientation(rng);
    let tilt = f64::from(rng.gen_range(0..=60u8));
    let u: f64 = rng.gen();
    let inverter_ratio = if u < 0.6 {
        response.undersized_inverter
    } else if u < 0.8 {
        1.0
    } else {
        response.oversized_inverter
    };
    PanelSetup {
        orientation,
        tilt,
        inverter_ratio,
    }
}

pub fn generate(config: &SynthConfig) -> Result<SyntheticWorld> {
    config.validate()?;
    let c = config;

    let (rows, cols) = (c.grid_rows, c.grid_cols);
    let dlat = (LAT_RANGE.1 - LAT_RANGE.0) / rows as f64;
    let dlon = (LON_RANGE.1 - LON_RANGE.0) / cols as f64;
    let cells: Vec<IrradianceCell> = (0..rows * cols)
        .map(|id| IrradianceCell {
            cell_id: id as u32,
            center: LatLon::new(
                LAT_RANGE.0 + ((id / cols) as f64 + 0.5) * dlat,
                LON_RANGE.0 + ((id % cols) as f64 + 0.5) * dlon,
            ),
        })
        .collect();

    let mut rng = seed::rng(seed::derive(c.seed, &[stream::GEOGRAPHY]));
    let step = (8999 / c.n_pc4) as u16;
    let centroids: Vec<Pc4Centroid> = (0..c.n_pc4)
        .map(|k| Pc4Centroid {
            pc4: Pc4(1000 + k as u16 * step),
            centroid: uniform_in_box(&mut rng),
        })
        .collect();
    let pc4_cells: Vec<u32> = centroids
        .iter()
        .map(|p| nearest_cell(p.centroid, &cells).expect("grid is non-empty"))
        .collect();
    let mut municipalities = Vec::new();
    for row in 0..MUNICIPALITY_ROWS {
        for column in 0..MUNICIPALITY_COLS {
            municipalities.push(Municipality {
                code: municipality_code(column, row),
                column,
                row,
            });
        }
    }

    let mut rng = seed::rng(seed::derive(c.seed, &[stream::SYSTEMS]));
    let mut systems = Vec::with_capacity(c.n_systems);
    let mut system_setups = Vec::with_capacity(c.n_systems);
    let mut system_cells = Vec::with_capacity(c.n_systems);
    const PANEL_WATTS: [f64; 5] = [250.0, 270.0, 290.0, 300.0, 330.0];
    for i in 0..c.n_systems {
        let k = rng.gen_range(0..centroids.len());
        let setup = pick_setup(&mut rng, &c.response);
        let panel_power = PANEL_WATTS[rng.gen_range(0..PANEL_WATTS.len())];
        let num_panels: u32 = rng.gen_range(6..=30);
        let system_size = round_to(panel_power * f64::from(num_panels) / 1000.0, 3);
        let declared_panels = if rng.gen_bool(c.fleet.size_discrepancy_rate) {
            num_panels + rng.gen_range(1..=4)
        } else {
            num_panels
        };
        let centroid = centroids[k].centroid;
        let lat_lon = if rng.gen_bool(c.fleet.missing_latlon_rate) {
            None
        } else {
            let km = if rng.gen_bool(c.fleet.far_location_rate) {
                rng.gen_range(6.0..10.0)
            } else {
                rng.gen_range(0.0..2.0)
            };
            let p = offset_km(centroid, km, rng.gen_range(0.0..2.0 * PI));
            Some(LatLon::new(round_to(p.lat, 6), round_to(p.lon, 6)))
        };
        systems.push(PvSystemMeta {
            system_id: format!("PV{:05}", i + 1),
            pc4: centroids[k].pc4,
            lat_lon,
            system_size,
            inverter_size: round_to(system_size * setup.inverter_ratio, 6),
            panel_power: Some(panel_power),
            num_panels: Some(declared_panels),
            orientation: setup.orientation,
            tilt: setup.tilt,
            install_date: c.start - Duration::days(rng.gen_range(30..2000)),
        });
        system_setups.push(setup);
        system_cells.push(pc4_cells[k]);
    }

    // configurations are dealt cyclically from a shuffled fleet so the
    // register mirrors the logger mix
    let mut rng = seed::rng(seed::derive(c.seed, &[stream::REGISTER]));
    let mut deck: Vec<usize> = (0..c.n_systems).collect();
    deck.shuffle(&mut rng);
    let mut register = Vec::with_capacity(c.n_register_entries);
    let mut entry_setups = Vec::with_capacity(c.n_register_entries);
    let mut entry_cells = Vec::with_capacity(c.n_register_entries);
    for j in 0..c.n_register_entries {
        let k = rng.gen_range(0..centroids.len());
        let capacity = round_to(rng.gen_range(1.0..10.0), 2);
        let install_date = if rng.gen_bool(c.fleet.register_growth) {
            c.start + Duration::days(rng.gen_range(0..c.n_days as i64))
        } else {
            c.start - Duration::days(rng.gen_range(1..3000))
        };
        let (col, row) = municipality_index(centroids[k].centroid);
        register.push(RegisterEntry {
            entry_id: format!("R{:06}", j + 1),
            pc4: centroids[k].pc4,
            capacity,
            install_date,
            municipality_code: municipality_code(col, row),
        });
        entry_setups.push(system_setups[deck[j % deck.len()]]);
        entry_cells.push(pc4_cells[k]);
    }

    let w = &c.weather;
    let mut days = Vec::with_capacity(c.n_days);
    let mut defects = Vec::with_capacity(c.n_days);
    for d in 0..c.n_days {
        let date = c.start + Duration::days(d as i64);
        let doy = date.ordinal();
        let mut rng = seed::rng(seed::derive(c.seed, &[stream::WEATHER, d as u64]));
        let clearness = rng.gen_range(w.min_clearness..=w.max_clearness);
        let blob = rng
            .gen_bool(w.local_probability)
            .then(|| (uniform_in_box(&mut rng), rng.gen_range(-w.local_amplitude..=w.local_amplitude)));
        let base = WeatherModel::clear_sky(doy) * clearness;
        let quarters = quarter_count(doy);
        let mut totals = Vec::with_capacity(cells.len());
        let mut missing_quarter = Vec::with_capacity(cells.len());
        for cell in &cells {
            let col = cell.cell_id as usize % cols;
            let west = if cols > 1 {
                1.0 - col as f64 / (cols - 1) as f64
            } else {
                0.0
            };
            let local = blob.map_or(1.0, |(centre, amp)| {
                let r = distance_km(cell.center, centre) / w.local_radius_km;
                1.0 + amp * (-r * r).exp()
            });
            let noise = 1.0 + w.cell_noise * rng.gen_range(-1.0..=1.0);
            totals.push(base * (1.0 + w.west_gain * west) * local * noise);
            let drop = rng.gen_bool(w.missing_quarter_rate) && quarters >= 3;
            missing_quarter.push(drop.then(|| rng.gen_range(1..quarters - 1)));
        }
        days.push(DayField {
            totals,
            missing_quarter,
        });

        let mut rng = seed::rng(seed::derive(c.seed, &[stream::DEFECTS, d as u64]));
        let r = &c.defects;
        let day_defects = (0..c.n_systems)
            .map(|_| {
                let u: f64 = rng.gen();
                let position: f64 = rng.gen();
                let kind = if u < r.gap {
                    DefectKind::Gap
                } else if u < r.gap + r.missing_day {
                    DefectKind::MissingDay
                } else if u < r.gap + r.missing_day + r.peak {
                    DefectKind::PeakSpike
                } else if u < r.total() {
                    let dev = if rng.gen_bool(0.5) {
                        rng.gen_range(0.03..0.06)
                    } else {
                        rng.gen_range(0.15..0.30)
                    };
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    DefectKind::MeterError {
                        factor: 1.0 + sign * dev,
                    }
                } else {
                    return None;
                };
                Some(Defect { kind, position })
            })
            .collect();
        defects.push(day_defects);
    }

    Ok(SyntheticWorld {
        config: c.clone(),
        cells,
        centroids,
        municipalities,
        systems,
        register,
        system_setups,
        entry_setups,
        system_cells,
        entry_cells,
        days,
        defects,
    })
}

/// Quarter-hour irradiance samples span the day length less two hours.
fn quarter_count(doy: u32) -> usize {
    (((day_length(doy) - 2.0) * 4.0).floor() as usize).max(1)
}

fn noon(date: NaiveDate) -> DateTime<FixedOffset> {
    FixedOffset::east_opt(0)
        .expect("utc offset")
        .from_local_datetime(&date.and_hms_opt(12, 0, 0).expect("noon"))
        .single()
        .expect("fixed offset")
}

impl SyntheticWorld {
    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.config.start + Duration::days(day as i64)
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.n_days()).map(|d| self.date(d))
    }

    pub fn system_setup(&self, i: usize) -> &PanelSetup {
        &self.system_setups[i]
    }

    pub fn entry_setup(&self, j: usize) -> &PanelSetup {
        &self.entry_setups[j]
    }

    /// True daily irradiation of a cell, kWh/m².
    pub fn cell_irradiance(&self, day: usize, cell_id: u32) -> f64 {
        self.days[day].totals[cell_id as usize]
    }

    fn sample_count(&self, day: usize) -> usize {
        let step_h = f64::from(self.config.sample_minutes) / 60.0;
        (day_length(self.date(day).ordinal()) / step_h).round() as usize
    }

    /// Daylight hours on the logger sampling grid.
    pub fn logging_hours(&self, day: usize) -> f64 {
        self.sample_count(day) as f64 * f64::from(self.config.sample_minutes) / 60.0
    }

    fn energy(&self, setup: &PanelSetup, capacity: f64, cell: u32, day: usize) -> f64 {
        self.config.response.daily_energy(
            setup,
            capacity,
            self.cell_irradiance(day, cell),
            self.date(day).ordinal(),
            self.logging_hours(day),
        )
    }

    /// Defect-free production of logger `i`, kWh.
    pub fn system_energy(&self, i: usize, day: usize) -> f64 {
        self.energy(
            &self.system_setups[i],
            self.systems[i].system_size,
            self.system_cells[i],
            day,
        )
    }

    /// Production of register entry `j`, or `None` before installation.
    pub fn entry_energy(&self, j: usize, day: usize) -> Option<f64> {
        let e = &self.register[j];
        (e.install_date <= self.date(day))
            .then(|| self.energy(&self.entry_setups[j], e.capacity, self.entry_cells[j], day))
    }

    pub fn truth_total(&self, day: usize) -> f64 {
        (0..self.register.len())
            .filter_map(|j| self.entry_energy(j, day))
            .sum()
    }

    pub fn defect(&self, system: usize, day: usize) -> Option<DefectKind> {
        self.defects[day][system].map(|d| d.kind)
    }

    /// Systems whose day should survive cleaning.
    pub fn expected_reliable(&self, day: usize) -> BTreeSet<String> {
        self.systems
            .iter()
            .enumerate()
            .filter(|(i, _)| self.defect(*i, day).is_none_or(|k| k.expected_reliable()))
            .map(|(_, s)| s.system_id.clone())
            .collect()
    }

    pub fn is_west(&self, municipality_code: &str) -> Option<bool> {
        self.municipalities
            .iter()
            .find(|m| m.code == municipality_code)
            .map(|m| m.column == 0)
    }

    /// Logs of one day, with defects applied; missing days are absent.
    pub fn intraday_logs(&self, day: usize) -> Vec<IntradayLog> {
        let date = self.date(day);
        let n = self.sample_count(day);
        let step = Duration::seconds(i64::from(self.config.sample_minutes) * 60);
        let sunrise = noon(date) - step * n as i32 / 2;
        let hours = self.logging_hours(day);
        let gap_len = (GAP_MINUTES / self.config.sample_minutes) as usize;
        let mut out = Vec::with_capacity(self.systems.len());
        for (i, meta) in self.systems.iter().enumerate() {
            let defect = self.defects[day][i];
            if matches!(defect, Some(Defect { kind: DefectKind::MissingDay, .. })) {
                continue;
            }
            let e = self.system_energy(i, day);
            let factor = match defect {
                Some(Defect {
                    kind: DefectKind::MeterError { factor },
                    ..
                }) => factor,
                _ => 1.0,
            };
            let mut samples: Vec<Sample> = (0..=n)
                .map(|k| {
                    let phase = PI * k as f64 / n as f64;
                    Sample {
                        timestamp: sunrise + step * k as i32,
                        power: round_to(e * PI / (2.0 * hours) * phase.sin(), POWER_DECIMALS),
                        cum_energy: round_to(factor * e * (1.0 - phase.cos()) / 2.0, POWER_DECIMALS),
                    }
                })
                .collect();
            match defect.map(|d| (d.kind, d.position)) {
                Some((DefectKind::Gap, pos)) => {
                    let first = n / 4 + (pos * (n / 4) as f64) as usize + 1;
                    let last = (first + gap_len).min(n);
                    samples.drain(first..last);
                }
                Some((DefectKind::PeakSpike, pos)) => {
                    let k = 1 + (pos * (n - 1) as f64) as usize;
                    samples[k].power = PEAK_SPIKE_FACTOR * meta.system_size;
                }
                _ => {}
            }
            out.push(IntradayLog {
                system_id: meta.system_id.clone(),
                date,
                samples,
            });
        }
        out
    }

    /// Quarter-hour samples of every cell on one day.
    pub fn quarter_hours(&self, day: usize) -> Vec<QuarterHourSample> {
        let date = self.date(day);
        let m = quarter_count(date.ordinal());
        let quarter = Duration::minutes(15);
        let start = noon(date) - Duration::seconds(450 * m as i64);
        let weights: Vec<f64> = (0..m)
            .map(|k| (PI * (k as f64 + 0.5) / m as f64).sin())
            .collect();
        let norm: f64 = weights.iter().sum::<f64>() * 0.25;
        let field = &self.days[day];
        let mut out = Vec::with_capacity(self.cells.len() * m);
        for cell in &self.cells {
            let id = cell.cell_id as usize;
            let total = field.totals[id];
            for (k, w) in weights.iter().enumerate() {
                if field.missing_quarter[id] == Some(k) {
                    continue;
                }
                out.push(QuarterHourSample {
                    cell_id: cell.cell_id,
                    timestamp: start + quarter * k as i32,
                    irradiance: round_to(total * w / norm, IRRADIANCE_DECIMALS),
                });
            }
        }
        out
    }

    /// Writes systems, intraday, register, irradiance, cells, centroids,
    /// truth and defect files into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        tables::write_systems(&dir.join(tables::SYSTEMS_FILE), &self.systems)?;
        tables::write_register(&dir.join(tables::REGISTER_FILE), &self.register)?;
        tables::write_cells(&dir.join(tables::CELLS_FILE), &self.cells)?;
        tables::write_centroids(&dir.join(tables::CENTROIDS_FILE), &self.centroids)?;

        let mut intraday = tables::IntradayWriter::create(&dir.join(tables::INTRADAY_FILE))?;
        let mut irradiance = tables::IrradianceWriter::create(&dir.join(tables::IRRADIANCE_FILE))?;
        let mut truth = tables::TruthWriter::create(&dir.join(tables::TRUTH_FILE))?;
        let mut defects = tables::DefectWriter::create(&dir.join(tables::DEFECTS_FILE))?;
        for day in 0..self.n_days() {
            let date = self.date(day);
            for log in self.intraday_logs(day) {
                intraday.write(&log)?;
            }
            for s in self.quarter_hours(day) {
                irradiance.write(&s)?;
            }
            for j in 0..self.register.len() {
                if let Some(e) = self.entry_energy(j, day) {
                    truth.write(&self.register[j].entry_id, date, e)?;
                }
            }
            for (i, meta) in self.systems.iter().enumerate() {
                if let Some(kind) = self.defect(i, day) {
                    defects.write(&meta.system_id, date, &kind)?;
                }
            }
        }
        intraday.finish()?;
        irradiance.finish()?;
        truth.finish()?;
        defects.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cleanse::{build_reliable_set, QualityThresholds};
    use crate::irradiance::aggregate_daily;
    use std::collections::BTreeMap;

    fn small(defects: DefectRates) -> SynthConfig {
        SynthConfig {
            n_systems: 40,
            n_register_entries: 200,
            grid_rows: 6,
            grid_cols: 6,
            n_pc4: 30,
            n_days: 5,
            defects,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn reproducible_from_seed() {
        let a = generate(&small(DefectRates::default())).unwrap();
        let b = generate(&small(DefectRates::default())).unwrap();
        assert_eq!(a.systems, b.systems);
        assert_eq!(a.intraday_logs(3), b.intraday_logs(3));
        assert_eq!(a.truth_total(2), b.truth_total(2));
        let c = generate(&SynthConfig {
            seed: 2,
            ..small(DefectRates::default())
        })
        .unwrap();
        assert_ne!(a.truth_total(2), c.truth_total(2));
    }

    #[test]
    fn invalid_rates_are_rejected() {
        let mut c = small(DefectRates::default());
        c.defects.gap = 1.5;
        assert!(matches!(generate(&c), Err(Error::Config(_))));
        c.defects = DefectRates {
            gap: 0.5,
            missing_day: 0.3,
            peak: 0.3,
            meter_error: 0.0,
        };
        assert!(generate(&c).is_err());
    }

    #[test]
    fn clean_fleet_is_fully_reliable() {
        let w = generate(&small(DefectRates::NONE)).unwrap();
        let metas: BTreeMap<String, PvSystemMeta> = w
            .systems
            .iter()
            .map(|m| (m.system_id.clone(), m.clone()))
            .collect();
        for day in 0..w.n_days() {
            let logs = w.intraday_logs(day);
            let kept = build_reliable_set(&logs, &metas, w.date(day), &QualityThresholds::default());
            assert_eq!(kept.len(), w.systems.len());
        }
    }

    #[test]
    fn logs_integrate_to_truth_and_respect_inverter() {
        let w = generate(&small(DefectRates::NONE)).unwrap();
        for log in w.intraday_logs(0) {
            let i = w.systems.iter().position(|s| s.system_id == log.system_id).unwrap();
            let e = w.system_energy(i, 0);
            let last = log.samples.last().unwrap().cum_energy;
            assert!((last - e).abs() < 1e-4, "{last} vs {e}");
            let inverter = w.systems[i].inverter_size;
            assert!(log.samples.iter().all(|s| s.power <= inverter + 1e-4));
        }
    }

    #[test]
    fn quarter_hours_sum_to_cell_total() {
        let w = generate(&small(DefectRates::NONE)).unwrap();
        let samples = w.quarter_hours(1);
        let mut by_cell: BTreeMap<u32, Vec<(DateTime<FixedOffset>, f64)>> = BTreeMap::new();
        for s in &samples {
            by_cell.entry(s.cell_id).or_default().push((s.timestamp, s.irradiance));
        }
        for (cell, series) in by_cell {
            let agg = aggregate_daily(&series).unwrap();
            if agg.n_missing == 0 {
                assert!((agg.total - w.cell_irradiance(1, cell)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn register_mirrors_logger_mix() {
        let w = generate(&small(DefectRates::NONE)).unwrap();
        let n = w.systems.len();
        let count = |setups: &mut dyn Iterator<Item = &PanelSetup>| {
            let mut m: BTreeMap<(u16, i8), usize> = BTreeMap::new();
            for s in setups {
                *m.entry((s.orientation.azimuth(), s.epsilon().value())).or_default() += 1;
            }
            m
        };
        let fleet = count(&mut w.system_setups.iter());
        let reg = count(&mut w.entry_setups.iter());
        for (k, v) in fleet {
            assert_eq!(reg[&k], v * w.register.len() / n);
        }
    }

    #[test]
    fn south_gains_most() {
        let r = ResponseModel::default();
        assert_eq!(r.orientation_gain(180.0), 1.0);
        assert!((r.orientation_gain(0.0) - 0.75).abs() < 1e-12);
        assert!(r.tilt_factor(10.0, 172) > 1.0);
        assert!(r.tilt_factor(10.0, 355) < 1.0);
    }
}
