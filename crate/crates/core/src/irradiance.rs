//! Daily irradiance totals per grid cell and PC4-to-cell matching.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDate};

use crate::error::{Error, Result};
use crate::geo::{distance_km, LatLon};
use crate::ingest::{self, CentroidTable, Loaded, Pc4, Reject, Table};

/// Nominal sampling interval of the grid, in hours.
pub const QUARTER_HOUR: f64 = 0.25;

/// Distances closer than this (km) count as a tie.
const TIE_KM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrradianceCell {
    pub cell_id: u32,
    pub center: LatLon,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarterHourSample {
    pub cell_id: u32,
    pub timestamp: DateTime<FixedOffset>,
    /// kW/m²
    pub irradiance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyTotal {
    /// kWh/m²
    pub total: f64,
    pub n_missing: u32,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DailyIrradianceField {
    pub date: Option<NaiveDate>,
    pub cells: BTreeMap<u32, DailyTotal>,
}

impl DailyIrradianceField {
    pub fn total(&self, cell_id: u32) -> Option<f64> {
        self.cells.get(&cell_id).map(|c| c.total)
    }
}

/// Converts one cell-day of kW/m² samples (sorted by time) to kWh/m².
///
/// Each sample holds until the next one, so a missing quarter-hour widens
/// the preceding interval; the last sample covers one quarter-hour.
/// Returns `None` for an empty cell-day.
pub fn aggregate_daily(samples: &[(DateTime<FixedOffset>, f64)]) -> Option<DailyTotal> {
    let &(_, last) = samples.last()?;
    let mut total = 0.0;
    let mut n_missing = 0;
    for w in samples.windows(2) {
        let dt = (w[1].0 - w[0].0).num_milliseconds() as f64 / 3_600_000.0;
        if dt > QUARTER_HOUR + 1e-9 {
            n_missing += 1;
        }
        total += w[0].1 * dt;
    }
    total += last * QUARTER_HOUR;
    Some(DailyTotal { total, n_missing })
}

/// Groups samples by (date, cell) and aggregates each group.
pub fn aggregate_fields<I>(samples: I) -> BTreeMap<NaiveDate, DailyIrradianceField>
where
    I: IntoIterator<Item = QuarterHourSample>,
{
    let mut groups: BTreeMap<(NaiveDate, u32), Vec<(DateTime<FixedOffset>, f64)>> = BTreeMap::new();
    for s in samples {
        groups
            .entry((s.timestamp.date_naive(), s.cell_id))
            .or_default()
            .push((s.timestamp, s.irradiance));
    }
    let mut out: BTreeMap<NaiveDate, DailyIrradianceField> = BTreeMap::new();
    for ((date, cell), mut v) in groups {
        v.sort_by_key(|(t, _)| *t);
        if let Some(t) = aggregate_daily(&v) {
            let field = out.entry(date).or_default();
            field.date = Some(date);
            field.cells.insert(cell, t);
        }
    }
    out
}

/// Linear-scan nearest-cell index over cell centres.
#[derive(Debug, Clone)]
pub struct CellIndex {
    cells: Vec<IrradianceCell>,
}

impl CellIndex {
    pub fn new(mut cells: Vec<IrradianceCell>) -> Self {
        cells.sort_by_key(|c| c.cell_id);
        cells.dedup_by_key(|c| c.cell_id);
        Self { cells }
    }

    pub fn cells(&self) -> &[IrradianceCell] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn center(&self, cell_id: u32) -> Option<LatLon> {
        self.cells
            .binary_search_by_key(&cell_id, |c| c.cell_id)
            .ok()
            .map(|i| self.cells[i].center)
    }

    /// Cell with the smallest great-circle distance; ties go to the lowest id.
    pub fn nearest(&self, point: LatLon) -> Option<u32> {
        nearest_cell(point, &self.cells)
    }
}

pub fn nearest_cell(point: LatLon, cells: &[IrradianceCell]) -> Option<u32> {
    let mut best: Option<(f64, u32)> = None;
    for c in cells {
        let d = distance_km(point, c.center);
        best = match best {
            None => Some((d, c.cell_id)),
            Some((bd, bid)) => {
                if d < bd - TIE_KM || ((d - bd).abs() <= TIE_KM && c.cell_id < bid) {
                    Some((d.min(bd), c.cell_id))
                } else {
                    Some((bd, bid))
                }
            }
        };
    }
    best.map(|(_, id)| id)
}

/// Daily irradiance at PC4 locations via each centroid's nearest cell.
#[derive(Debug, Clone, Default)]
pub struct IrradianceLookup {
    pc4_cells: BTreeMap<Pc4, u32>,
    fields: BTreeMap<NaiveDate, DailyIrradianceField>,
}

impl IrradianceLookup {
    pub fn new(
        centroids: &CentroidTable,
        index: &CellIndex,
        fields: BTreeMap<NaiveDate, DailyIrradianceField>,
    ) -> Self {
        let pc4_cells = centroids
            .iter()
            .filter_map(|(pc4, c)| index.nearest(c).map(|id| (pc4, id)))
            .collect();
        Self { pc4_cells, fields }
    }

    pub fn cell_of(&self, pc4: Pc4) -> Option<u32> {
        self.pc4_cells.get(&pc4).copied()
    }

    pub fn fields(&self) -> &BTreeMap<NaiveDate, DailyIrradianceField> {
        &self.fields
    }

    pub fn field(&self, date: NaiveDate) -> Option<&DailyIrradianceField> {
        self.fields.get(&date)
    }

    /// kWh/m² at the PC4 centroid's cell on `date`.
    pub fn irradiance_at(&self, pc4: Pc4, date: NaiveDate) -> Result<f64> {
        let cell = self.cell_of(pc4).ok_or(Error::UnknownPc4(pc4.0))?;
        self.fields
            .get(&date)
            .and_then(|f| f.total(cell))
            .ok_or(Error::NoIrradiance { cell, date })
    }
}

pub const CELLS_COLUMNS: [&str; 3] = ["cell_id", "lat", "lon"];
pub const IRRADIANCE_COLUMNS: [&str; 3] = ["cell_id", "timestamp", "irradiance_kw_m2"];

fn parse_cell_id(s: &str) -> Result<u32, String> {
    s.parse().map_err(|_| format!("invalid cell_id `{s}`"))
}

pub fn parse_cells<R: Read>(reader: R, source: &Path) -> Result<Loaded<IrradianceCell>> {
    let t = Table::read(reader, source, &CELLS_COLUMNS)?;
    let mut out = Loaded::default();
    let mut seen = std::collections::BTreeSet::new();
    for (row_no, rec) in &t.rows {
        let row = (|| {
            let cell_id = parse_cell_id(t.field(rec, 0))?;
            let lat = ingest::parse_f64(t.field(rec, 1), "lat")?;
            let lon = ingest::parse_f64(t.field(rec, 2), "lon")?;
            let center = LatLon::new(lat, lon);
            if !center.is_valid() {
                return Err("lat/lon out of range".to_string());
            }
            if !seen.insert(cell_id) {
                return Err(format!("duplicate cell_id {cell_id}"));
            }
            Ok(IrradianceCell { cell_id, center })
        })();
        match row {
            Ok(c) => out.items.push(c),
            Err(reason) => out.rejects.push(Reject {
                row_no: *row_no,
                reason,
            }),
        }
    }
    Ok(out)
}

pub fn load_cells(path: &Path) -> Result<Loaded<IrradianceCell>> {
    parse_cells(ingest::open(path)?, path)
}

pub fn parse_irradiance<R: Read>(reader: R, source: &Path) -> Result<Loaded<QuarterHourSample>> {
    let t = Table::read(reader, source, &IRRADIANCE_COLUMNS)?;
    let mut out = Loaded::default();
    for (row_no, rec) in &t.rows {
        let row = (|| {
            let cell_id = parse_cell_id(t.field(rec, 0))?;
            let ts = t.field(rec, 1);
            let timestamp =
                DateTime::parse_from_rfc3339(ts).map_err(|_| format!("invalid timestamp `{ts}`"))?;
            let irradiance = ingest::parse_f64(t.field(rec, 2), "irradiance_kw_m2")?;
            if irradiance < 0.0 {
                return Err("negative irradiance".to_string());
            }
            Ok(QuarterHourSample {
                cell_id,
                timestamp,
                irradiance,
            })
        })();
        match row {
            Ok(s) => out.items.push(s),
            Err(reason) => out.rejects.push(Reject {
                row_no: *row_no,
                reason,
            }),
        }
    }
    Ok(out)
}

pub fn load_irradiance(path: &Path) -> Result<Loaded<QuarterHourSample>> {
    parse_irradiance(ingest::open(path)?, path)
}
