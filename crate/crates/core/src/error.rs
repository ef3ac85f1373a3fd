use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: missing column `{column}` in header")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}, row {row}: {reason}")]
    Malformed {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("pc4 {0} has no centroid")]
    UnknownPc4(u16),

    #[error("insufficient samples")]
    InsufficientSamples,

    #[error("no irradiance for cell {cell} on {date}")]
    NoIrradiance { cell: u32, date: NaiveDate },

    #[error("empty day: no reliable records")]
    EmptyDay,

    #[error("irradiance column {0} is empty")]
    EmptyColumn(usize),

    #[error("empty input")]
    EmptyInput,

    #[error("value {value} outside [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("invalid bin axis: {0}")]
    InvalidAxis(String),

    #[error("unfillable bin {bin} of {parameter}: target share {target:.4} but no members")]
    UnfillableBin {
        parameter: &'static str,
        bin: usize,
        target: f64,
    },

    #[error("rebalancing did not converge after {iterations} iterations (max deviation {max_deviation:.4})")]
    NonConvergence {
        iterations: usize,
        max_deviation: f64,
        /// Final per-parameter maximum absolute deviations (orientation, tilt, epsilon, irradiance).
        deviations: [f64; 4],
    },

    #[error("scenario {0} eliminates sample")]
    ScenarioEliminatesSample(u8),

    #[error("unknown scenario {0}")]
    UnknownScenario(u8),

    #[error("missing days in roll-up: {}", format_dates(.0))]
    MissingDays(Vec<NaiveDate>),

    #[error("series dates differ (first mismatch at position {0})")]
    MismatchedDates(usize),

    #[error("duplicate day {0} in roll-up")]
    DuplicateDay(NaiveDate),

    #[error("no national irradiance")]
    NoNationalIrradiance,

    #[error("invalid configuration: {0}")]
    Config(String),
}

fn format_dates(dates: &[NaiveDate]) -> String {
    const SHOWN: usize = 10;
    let mut out = dates
        .iter()
        .take(SHOWN)
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if dates.len() > SHOWN {
        out.push_str(&format!(" (+{} more)", dates.len() - SHOWN));
    }
    out
}
