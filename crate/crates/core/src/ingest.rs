//! Typed loaders for the flat-file inputs.
//!
//! Every loader returns the accepted values together with a reject list;
//! a malformed row never aborts the load and is never dropped silently.
//! Only an unreadable file or a header missing a required column is fatal.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset, NaiveDate};
use csv::StringRecord;

use crate::error::{Error, Result};
use crate::geo::LatLon;

/// Four-digit postal-code area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pc4(pub u16);

impl Pc4 {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit()) {
            s.parse().ok().map(Pc4)
        } else {
            None
        }
    }
}

impl fmt::Display for Pc4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}", self.0)
    }
}

/// Panel azimuth restricted to the eight cardinal directions, 180 = South.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Orientation(u16);

impl Orientation {
    pub const NORTH: Self = Self(0);
    pub const EAST: Self = Self(90);
    pub const SOUTH: Self = Self(180);
    pub const WEST: Self = Self(270);

    pub const ALL: [Self; 8] = [
        Self(0),
        Self(45),
        Self(90),
        Self(135),
        Self(180),
        Self(225),
        Self(270),
        Self(315),
    ];

    pub fn from_azimuth(deg: u16) -> Option<Self> {
        (deg.is_multiple_of(45) && deg < 360).then_some(Self(deg))
    }

    /// Accepts cardinal abbreviations (`S`, `SW`, ...) or an azimuth in degrees.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let deg = match s.to_ascii_uppercase().as_str() {
            "N" => 0,
            "NE" => 45,
            "E" => 90,
            "SE" => 135,
            "S" => 180,
            "SW" => 225,
            "W" => 270,
            "NW" => 315,
            other => other.parse::<u16>().ok()?,
        };
        Self::from_azimuth(deg)
    }

    pub fn azimuth(self) -> u16 {
        self.0
    }

    pub fn code(self) -> &'static str {
        ["N", "NE", "E", "SE", "S", "SW", "W", "NW"][(self.0 / 45) as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvSystemMeta {
    pub system_id: String,
    pub pc4: Pc4,
    pub lat_lon: Option<LatLon>,
    /// kWp
    pub system_size: f64,
    /// kW
    pub inverter_size: f64,
    /// W per panel
    pub panel_power: Option<f64>,
    pub num_panels: Option<u32>,
    pub orientation: Orientation,
    /// degrees, 0..=90
    pub tilt: f64,
    pub install_date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub timestamp: DateTime<FixedOffset>,
    /// kW
    pub power: f64,
    /// kWh since start of day
    pub cum_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntradayLog {
    pub system_id: String,
    pub date: NaiveDate,
    /// Strictly increasing timestamps.
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisterEntry {
    pub entry_id: String,
    pub pc4: Pc4,
    /// kWp
    pub capacity: f64,
    pub install_date: NaiveDate,
    pub municipality_code: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pc4Centroid {
    pub pc4: Pc4,
    pub centroid: LatLon,
}

/// PC4 code to centroid lookup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CentroidTable(BTreeMap<Pc4, LatLon>);

impl CentroidTable {
    pub fn get(&self, pc4: Pc4) -> Option<LatLon> {
        self.0.get(&pc4).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pc4, LatLon)> + '_ {
        self.0.iter().map(|(k, v)| (*k, *v))
    }
}

impl FromIterator<Pc4Centroid> for CentroidTable {
    fn from_iter<I: IntoIterator<Item = Pc4Centroid>>(iter: I) -> Self {
        Self(iter.into_iter().map(|c| (c.pc4, c.centroid)).collect())
    }
}

/// A row that could not be turned into a typed value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    /// 1-based data row number (the header is row 0).
    pub row_no: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    pub rejects: Vec<Reject>,
}

impl<T> Default for Loaded<T> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            rejects: Vec::new(),
        }
    }
}

pub const SYSTEMS_COLUMNS: [&str; 11] = [
    "system_id",
    "pc4",
    "lat",
    "lon",
    "system_size_kwp",
    "inverter_size_kw",
    "panel_power_w",
    "num_panels",
    "orientation",
    "tilt_deg",
    "install_date",
];
pub const INTRADAY_COLUMNS: [&str; 4] = ["system_id", "timestamp", "power_kw", "cum_energy_kwh"];
pub const REGISTER_COLUMNS: [&str; 5] = [
    "entry_id",
    "pc4",
    "capacity_kwp",
    "install_date",
    "municipality_code",
];
pub const CENTROID_COLUMNS: [&str; 3] = ["pc4", "lat", "lon"];

/// Header-indexed view over CSV rows.
pub(crate) struct Table {
    columns: Vec<usize>,
    pub(crate) rows: Vec<(usize, StringRecord)>,
}

impl Table {
    pub(crate) fn read<R: Read>(reader: R, source: &Path, required: &[&str]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv {
                path: source.to_path_buf(),
                source: e,
            })?
            .clone();
        if headers.is_empty() {
            return Ok(Self {
                columns: Vec::new(),
                rows: Vec::new(),
            });
        }
        let columns = required
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == *name)
                    .ok_or_else(|| Error::MissingColumn {
                        path: source.to_path_buf(),
                        column: (*name).to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv {
                path: source.to_path_buf(),
                source: e,
            })?;
            rows.push((i + 1, rec));
        }
        Ok(Self { columns, rows })
    }

    pub(crate) fn field<'r>(&self, rec: &'r StringRecord, col: usize) -> &'r str {
        rec.get(self.columns[col]).unwrap_or("")
    }
}

pub(crate) fn parse_f64(s: &str, name: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("invalid {name} `{s}`"))
}

pub(crate) fn parse_opt_f64(s: &str, name: &str) -> Result<Option<f64>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, name).map(Some)
    }
}

pub(crate) fn parse_date(s: &str, name: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("invalid {name} `{s}`"))
}

pub(crate) fn parse_pc4(s: &str) -> Result<Pc4, String> {
    Pc4::parse(s).ok_or_else(|| format!("invalid pc4 `{s}`"))
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn system_row(t: &Table, rec: &StringRecord) -> Result<PvSystemMeta, String> {
    let system_id = t.field(rec, 0).to_string();
    if system_id.is_empty() {
        return Err("empty system_id".into());
    }
    let pc4 = parse_pc4(t.field(rec, 1))?;
    let lat = parse_opt_f64(t.field(rec, 2), "lat")?;
    let lon = parse_opt_f64(t.field(rec, 3), "lon")?;
    let lat_lon = match (lat, lon) {
        (Some(lat), Some(lon)) => {
            let p = LatLon::new(lat, lon);
            if !p.is_valid() {
                return Err("lat/lon out of range".into());
            }
            Some(p)
        }
        (None, None) => None,
        _ => return Err("lat and lon must both be present or both absent".into()),
    };
    let system_size = parse_f64(t.field(rec, 4), "system_size_kwp")?;
    if system_size <= 0.0 {
        return Err("system size must be positive".into());
    }
    let inverter_size = parse_f64(t.field(rec, 5), "inverter_size_kw")?;
    if inverter_size <= 0.0 {
        return Err("inverter size must be positive".into());
    }
    let panel_power = parse_opt_f64(t.field(rec, 6), "panel_power_w")?;
    if panel_power.is_some_and(|p| p <= 0.0) {
        return Err("panel power must be positive".into());
    }
    let num_panels = match t.field(rec, 7) {
        "" => None,
        s => Some(
            s.parse::<u32>()
                .map_err(|_| format!("invalid num_panels `{s}`"))?,
        ),
    };
    let orientation = Orientation::parse(t.field(rec, 8))
        .ok_or_else(|| format!("unknown orientation `{}`", t.field(rec, 8)))?;
    let tilt = parse_f64(t.field(rec, 9), "tilt_deg")?;
    if !(0.0..=90.0).contains(&tilt) {
        return Err("tilt out of range".into());
    }
    let install_date = parse_date(t.field(rec, 10), "install_date")?;
    Ok(PvSystemMeta {
        system_id,
        pc4,
        lat_lon,
        system_size,
        inverter_size,
        panel_power,
        num_panels,
        orientation,
        tilt,
        install_date,
    })
}

pub fn parse_system_meta<R: Read>(reader: R, source: &Path) -> Result<Loaded<PvSystemMeta>> {
    let t = Table::read(reader, source, &SYSTEMS_COLUMNS)?;
    let mut out = Loaded::default();
    for (row_no, rec) in &t.rows {
        match system_row(&t, rec) {
            Ok(m) => out.items.push(m),
            Err(reason) => out.rejects.push(Reject {
                row_no: *row_no,
                reason,
            }),
        }
    }
    Ok(out)
}

pub fn load_system_meta(path: &Path) -> Result<Loaded<PvSystemMeta>> {
    parse_system_meta(open(path)?, path)
}

struct RawSample {
    row_no: usize,
    system_id: String,
    sample: Sample,
}

fn intraday_row(t: &Table, rec: &StringRecord) -> Result<(String, Sample), String> {
    let system_id = t.field(rec, 0).to_string();
    if system_id.is_empty() {
        return Err("empty system_id".into());
    }
    let ts = t.field(rec, 1);
    let timestamp =
        DateTime::parse_from_rfc3339(ts).map_err(|_| format!("invalid timestamp `{ts}`"))?;
    let power = parse_f64(t.field(rec, 2), "power_kw")?;
    let cum_energy = parse_f64(t.field(rec, 3), "cum_energy_kwh")?;
    if power < 0.0 {
        return Err("negative power".into());
    }
    if cum_energy < 0.0 {
        return Err("negative cumulative energy".into());
    }
    Ok((
        system_id,
        Sample {
            timestamp,
            power,
            cum_energy,
        },
    ))
}

/// Groups samples per (system, local date), sorts them and rejects whole
/// days with duplicate timestamps or a decreasing cumulative counter.
pub fn parse_intraday<R: Read>(reader: R, source: &Path) -> Result<Loaded<IntradayLog>> {
    let t = Table::read(reader, source, &INTRADAY_COLUMNS)?;
    let mut out = Loaded::default();
    let mut groups: BTreeMap<(String, NaiveDate), Vec<RawSample>> = BTreeMap::new();
    for (row_no, rec) in &t.rows {
        match intraday_row(&t, rec) {
            Ok((system_id, sample)) => groups
                .entry((system_id.clone(), sample.timestamp.date_naive()))
                .or_default()
                .push(RawSample {
                    row_no: *row_no,
                    system_id,
                    sample,
                }),
            Err(reason) => out.rejects.push(Reject {
                row_no: *row_no,
                reason,
            }),
        }
    }
    for ((system_id, date), mut raw) in groups {
        raw.sort_by_key(|r| (r.sample.timestamp, r.row_no));
        let day_error = if raw
            .windows(2)
            .any(|w| w[0].sample.timestamp == w[1].sample.timestamp)
        {
            Some(format!("duplicate timestamp for {system_id} on {date}"))
        } else if raw
            .windows(2)
            .any(|w| w[1].sample.cum_energy < w[0].sample.cum_energy)
        {
            Some(format!("decreasing cumulative energy for {system_id} on {date}"))
        } else {
            None
        };
        match day_error {
            Some(reason) => out.rejects.extend(raw.iter().map(|r| Reject {
                row_no: r.row_no,
                reason: reason.clone(),
            })),
            None => {
                debug_assert!(raw.iter().all(|r| r.system_id == system_id));
                out.items.push(IntradayLog {
                    system_id,
                    date,
                    samples: raw.into_iter().map(|r| r.sample).collect(),
                })
            }
        }
    }
    out.rejects.sort_by_key(|r| r.row_no);
    Ok(out)
}

pub fn load_intraday(path: &Path) -> Result<Loaded<IntradayLog>> {
    parse_intraday(open(path)?, path)
}

fn register_row(t: &Table, rec: &StringRecord) -> Result<RegisterEntry, String> {
    let entry_id = t.field(rec, 0).to_string();
    if entry_id.is_empty() {
        return Err("empty entry_id".into());
    }
    let pc4 = parse_pc4(t.field(rec, 1))?;
    let capacity = parse_f64(t.field(rec, 2), "capacity_kwp")?;
    if capacity <= 0.0 {
        return Err("capacity must be positive".into());
    }
    let install_date = parse_date(t.field(rec, 3), "install_date")?;
    let municipality_code = t.field(rec, 4).to_string();
    if municipality_code.is_empty() {
        return Err("empty municipality_code".into());
    }
    Ok(RegisterEntry {
        entry_id,
        pc4,
        capacity,
        install_date,
        municipality_code,
    })
}

pub fn parse_register<R: Read>(reader: R, source: &Path) -> Result<Loaded<RegisterEntry>> {
    let t = Table::read(reader, source, &REGISTER_COLUMNS)?;
    let mut out = Loaded::default();
    for (row_no, rec) in &t.rows {
        match register_row(&t, rec) {
            Ok(e) => out.items.push(e),
            Err(reason) => out.rejects.push(Reject {
                row_no: *row_no,
                reason,
            }),
        }
    }
    Ok(out)
}

pub fn load_register(path: &Path) -> Result<Loaded<RegisterEntry>> {
    parse_register(open(path)?, path)
}

fn centroid_row(t: &Table, rec: &StringRecord) -> Result<Pc4Centroid, String> {
    let pc4 = parse_pc4(t.field(rec, 0))?;
    let lat = parse_f64(t.field(rec, 1), "lat")?;
    let lon = parse_f64(t.field(rec, 2), "lon")?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err("lat out of range".into());
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err("lon out of range".into());
    }
    Ok(Pc4Centroid {
        pc4,
        centroid: LatLon::new(lat, lon),
    })
}

pub fn parse_centroids<R: Read>(reader: R, source: &Path) -> Result<Loaded<Pc4Centroid>> {
    let t = Table::read(reader, source, &CENTROID_COLUMNS)?;
    let mut out = Loaded::default();
    for (row_no, rec) in &t.rows {
        match centroid_row(&t, rec) {
            Ok(c) => out.items.push(c),
            Err(reason) => out.rejects.push(Reject {
                row_no: *row_no,
                reason,
            }),
        }
    }
    Ok(out)
}

pub fn load_centroids(path: &Path) -> Result<Loaded<Pc4Centroid>> {
    parse_centroids(open(path)?, path)
}

/// `<input>.rejects.csv` next to the input file.
pub fn rejects_path(input: &Path) -> PathBuf {
    let mut name = input.file_name().unwrap_or_default().to_os_string();
    name.push(".rejects.csv");
    input.with_file_name(name)
}

pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<()> {
    let err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["row_no", "reason"]).map_err(err)?;
    for r in rejects {
        w.write_record([r.row_no.to_string(), r.reason.clone()])
            .map_err(err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
