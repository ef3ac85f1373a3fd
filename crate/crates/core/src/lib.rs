//! Irradiance-conditioned photovoltaic yield estimation.
//!
//! The pipeline joins a small fleet of metered PV systems with a gridded
//! daily irradiance field, builds a per-day conditional density of specific
//! yield given irradiance, and applies it to a national installation register
//! by repeated random assignment. Daily totals are rolled up into annual and
//! monthly figures and downscaled to municipalities.
//!
//! Stages, in data-flow order:
//!
//! * [`ingest`]: typed loaders for the flat-file inputs.
//! * [`cleanse`]: metadata reconciliation and the per-day quality checks.
//! * [`irradiance`]: daily aggregation of quarter-hour grids, nearest-cell matching.
//! * [`density`]: 2D irradiance x specific-yield histograms.
//! * [`normalize`]: drop/duplicate rebalancing of each day's logger set.
//! * [`estimate`]: scenarios, bootstrap assignment and annual roll-ups.
//! * [`regional`]: municipal downscaling.
//! * [`synth`]: synthetic fleets with closed-form ground truth.

pub mod cleanse;
pub mod density;
pub mod error;
pub mod estimate;
pub mod geo;
pub mod ingest;
pub mod irradiance;
pub mod normalize;
pub mod pipeline;
pub mod regional;
pub mod seed;
pub mod synth;
pub mod tables;

pub use error::{Error, Result};
