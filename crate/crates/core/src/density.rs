//! Per-day 2D histogram of irradiance x specific yield and its
//! per-irradiance-column conditional normalization.

use chrono::NaiveDate;

use crate::cleanse::DailyRecord;
use crate::error::{Error, Result};
use crate::ingest::PvSystemMeta;

/// Default irradiance bin width, kWh/m².
pub const DEFAULT_DX: f64 = 0.5;
/// Default specific-yield bin width, kWh/kWp.
pub const DEFAULT_DY: f64 = 0.5;

/// Uniform bins on `[min, max]`: left-closed, right-open, except that
/// `max` itself falls in the last bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub width: f64,
    n_bins: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !min.is_finite() || !max.is_finite() || max <= min {
            return Err(Error::InvalidAxis(format!(
                "min {min}, max {max}, width {width}"
            )));
        }
        let n = ((max - min) / width).round();
        if n < 1.0 || ((max - min) / width - n).abs() > 1e-6 {
            return Err(Error::InvalidAxis(format!(
                "range {min}..{max} is not a whole number of {width}-wide bins"
            )));
        }
        Ok(Self {
            min,
            max,
            width,
            n_bins: n as usize,
        })
    }

    /// Smallest width-aligned axis containing every value.
    pub fn fit(values: impl IntoIterator<Item = f64>, width: f64) -> Result<Self> {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if !lo.is_finite() {
            return Err(Error::EmptyInput);
        }
        Self::fit_range(lo, hi, width)
    }

    pub fn fit_range(lo: f64, hi: f64, width: f64) -> Result<Self> {
        let min = (lo / width).floor() * width;
        let mut max = (hi / width).ceil() * width;
        if max <= min {
            max = min + width;
        }
        Self::new(min, max, width)
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// `None` when `value` lies outside `[min, max]`.
    pub fn bin_index(&self, value: f64) -> Option<usize> {
        if !(value >= self.min && value <= self.max) {
            return None;
        }
        let i = ((value - self.min) / self.width).floor() as usize;
        Some(i.min(self.n_bins - 1))
    }

    pub fn center(&self, i: usize) -> f64 {
        self.min + (i as f64 + 0.5) * self.width
    }

    pub fn lower_edge(&self, i: usize) -> f64 {
        self.min + i as f64 * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinGrid {
    /// Irradiance, kWh/m².
    pub x: Axis,
    /// Specific yield, kWh/kWp.
    pub y: Axis,
}

impl BinGrid {
    /// x spans the observed irradiance range; y runs from 0 to the largest
    /// observed yield rounded up to a bin edge.
    pub fn fit(points: &[(f64, f64)], dx: f64, dy: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyDay);
        }
        let x = Axis::fit(points.iter().map(|p| p.0), dx)?;
        let ymax = points.iter().map(|p| p.1).fold(0.0, f64::max);
        let y = Axis::fit_range(0.0, ymax, dy)?;
        Ok(Self { x, y })
    }
}

/// kWh/kWp
pub fn specific_yield(record: &DailyRecord, meta: &PvSystemMeta) -> f64 {
    record.cum_energy / meta.system_size
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalYieldDensity {
    pub date: Option<NaiveDate>,
    pub grid: BinGrid,
    /// `counts[x][y]`
    pub counts: Vec<Vec<u32>>,
    /// `cond_prob[x][y]`; each non-empty column sums to one.
    pub cond_prob: Vec<Vec<f64>>,
    pub column_totals: Vec<u32>,
    /// Points whose irradiance or yield fell outside the grid.
    pub out_of_range: u32,
    /// Mean specific yield over all of the day's records, kWh/kWp.
    pub fallback_mean_yield: f64,
    cdf: Vec<Vec<f64>>,
}

impl ConditionalYieldDensity {
    pub fn n_columns(&self) -> usize {
        self.counts.len()
    }

    pub fn is_column_empty(&self, col: usize) -> bool {
        self.column_totals.get(col).is_none_or(|&n| n == 0)
    }

    /// Cumulative conditional probabilities of a non-empty column.
    pub fn column_cdf(&self, col: usize) -> &[f64] {
        &self.cdf[col]
    }

    pub fn total_count(&self) -> u64 {
        self.column_totals.iter().map(|&n| u64::from(n)).sum()
    }
}

/// Builds the day's density from `(irradiance, specific_yield)` points.
pub fn build_density(
    points: &[(f64, f64)],
    grid: BinGrid,
    date: Option<NaiveDate>,
) -> Result<ConditionalYieldDensity> {
    if points.is_empty() {
        return Err(Error::EmptyDay);
    }
    let (nx, ny) = (grid.x.n_bins(), grid.y.n_bins());
    let mut counts = vec![vec![0u32; ny]; nx];
    let mut out_of_range = 0;
    for &(irr, y) in points {
        match (grid.x.bin_index(irr), grid.y.bin_index(y)) {
            (Some(i), Some(j)) => counts[i][j] += 1,
            _ => out_of_range += 1,
        }
    }
    let column_totals: Vec<u32> = counts.iter().map(|c| c.iter().sum()).collect();
    let cond_prob: Vec<Vec<f64>> = counts
        .iter()
        .zip(&column_totals)
        .map(|(col, &n)| {
            if n == 0 {
                vec![0.0; ny]
            } else {
                col.iter().map(|&c| f64::from(c) / f64::from(n)).collect()
            }
        })
        .collect();
    let cdf = cond_prob
        .iter()
        .map(|col| {
            let mut acc = 0.0;
            col.iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect()
        })
        .collect();
    // sorted summation keeps the mean independent of input order
    let mut ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    ys.sort_by(f64::total_cmp);
    let fallback_mean_yield = ys.iter().sum::<f64>() / ys.len() as f64;
    Ok(ConditionalYieldDensity {
        date,
        grid,
        counts,
        cond_prob,
        column_totals,
        out_of_range,
        fallback_mean_yield,
        cdf,
    })
}

/// Closed-form conditional mean yield of an irradiance column, kWh/kWp.
pub fn expected_yield_in_column(density: &ConditionalYieldDensity, col: usize) -> Result<f64> {
    if density.is_column_empty(col) {
        return Err(Error::EmptyColumn(col));
    }
    Ok(density.cond_prob[col]
        .iter()
        .enumerate()
        .map(|(j, p)| p * density.grid.y.center(j))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn axis(min: f64, max: f64, w: f64) -> Axis {
        Axis::new(min, max, w).unwrap()
    }

    #[test]
    fn bin_index_rules() {
        let a = axis(0.0, 5.0, 0.5);
        assert_eq!(a.n_bins(), 10);
        assert_eq!(a.bin_index(1.7), Some(3));
        assert_eq!(a.bin_index(0.0), Some(0));
        assert_eq!(a.bin_index(5.0), Some(9));
        assert_eq!(a.bin_index(0.5), Some(1));
        assert_eq!(a.bin_index(-0.1), None);
        assert_eq!(a.bin_index(5.01), None);
        assert_eq!(a.bin_index(f64::NAN), None);
    }

    #[test]
    fn axis_fit_aligns_to_width() {
        let a = Axis::fit([2.3, 4.1, 3.0], 0.5).unwrap();
        assert_eq!((a.min, a.max, a.n_bins()), (2.0, 4.5, 5));
        let a = Axis::fit([3.0], 0.5).unwrap();
        assert_eq!((a.min, a.max), (3.0, 3.5));
        assert!(Axis::new(0.0, 1.2, 0.5).is_err());
    }

    fn grid() -> BinGrid {
        BinGrid {
            x: axis(2.0, 3.0, 0.5),
            y: axis(0.0, 5.0, 0.5),
        }
    }

    #[test]
    fn column_proportions() {
        // yields 3.2 x3 (bin centre 3.25) and 4.4 (centre 4.25) in one irradiance bin
        let pts = [(2.2, 3.2), (2.3, 3.1), (2.1, 3.4), (2.4, 4.4)];
        let d = build_density(&pts, grid(), None).unwrap();
        assert_eq!(d.cond_prob[0][6], 0.75);
        assert_eq!(d.cond_prob[0][8], 0.25);
        assert!(d.is_column_empty(1));
        assert!((expected_yield_in_column(&d, 0).unwrap() - 3.5).abs() < 1e-12);
        assert!(matches!(
            expected_yield_in_column(&d, 1),
            Err(Error::EmptyColumn(1))
        ));
        assert!((d.fallback_mean_yield - 14.1 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_system_is_unit_spike() {
        let d = build_density(&[(2.7, 2.3)], grid(), None).unwrap();
        assert_eq!(d.cond_prob[1][4], 1.0);
        assert_eq!(expected_yield_in_column(&d, 1).unwrap(), 2.25);
    }

    #[test]
    fn empty_day_is_an_error() {
        assert!(matches!(build_density(&[], grid(), None), Err(Error::EmptyDay)));
    }

    #[test]
    fn specific_yield_divides_by_size() {
        use crate::cleanse::CheckFlags;
        use crate::ingest::{Orientation, Pc4};
        let rec = DailyRecord {
            system_id: "s".into(),
            date: NaiveDate::from_ymd_opt(2016, 6, 1).unwrap(),
            cum_energy: 12.0,
            instantaneous_sum: 12.0,
            peak_power: 2.0,
            max_gap: 5.0,
            checks: CheckFlags::default(),
            reliable: true,
        };
        let meta = PvSystemMeta {
            system_id: "s".into(),
            pc4: Pc4(1000),
            lat_lon: None,
            system_size: 3.0,
            inverter_size: 3.0,
            panel_power: None,
            num_panels: None,
            orientation: Orientation::SOUTH,
            tilt: 30.0,
            install_date: rec.date,
        };
        assert_eq!(specific_yield(&rec, &meta), 4.0);
        let zero = DailyRecord {
            cum_energy: 0.0,
            ..rec
        };
        assert_eq!(specific_yield(&zero, &meta), 0.0);
    }

    proptest! {
        #[test]
        fn columns_sum_to_one(pts in prop::collection::vec((0.0f64..8.0, 0.0f64..7.0), 1..200)) {
            let g = BinGrid::fit(&pts, DEFAULT_DX, DEFAULT_DY).unwrap();
            let d = build_density(&pts, g, None).unwrap();
            for (col, total) in d.column_totals.iter().enumerate() {
                let s: f64 = d.cond_prob[col].iter().sum();
                if *total > 0 {
                    prop_assert!((s - 1.0).abs() <= 1e-9);
                } else {
                    prop_assert_eq!(s, 0.0);
                }
            }
            prop_assert_eq!(d.total_count() + u64::from(d.out_of_range), pts.len() as u64);
        }

        #[test]
        fn permutation_invariant(mut pts in prop::collection::vec((0.0f64..8.0, 0.0f64..7.0), 1..100), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let g = BinGrid::fit(&pts, DEFAULT_DX, DEFAULT_DY).unwrap();
            let a = build_density(&pts, g, None).unwrap();
            pts.shuffle(&mut crate::seed::rng(seed));
            let b = build_density(&pts, g, None).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
