use chrono::NaiveDate;
use rand::Rng;
use rayon::prelude::*;

use crate::density::{expected_yield_in_column, ConditionalYieldDensity};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_BOOTSTRAP: usize = 500;

/// A register entry as seen by the assignment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegisterPoint {
    /// kWp
    pub capacity: f64,
    /// Daily irradiance at the entry's location; `None` when unmatched.
    pub irradiance: Option<f64>,
}

/// Entries pre-binned against one density so repeated draws only sample.
#[derive(Debug, Clone)]
pub struct AssignmentPlan<'a> {
    density: &'a ConditionalYieldDensity,
    sampled: Vec<(usize, f64)>,
    last_positive: Vec<usize>,
    fallback_energy: f64,
    n_fallback: usize,
}

impl<'a> AssignmentPlan<'a> {
    pub fn new(density: &'a ConditionalYieldDensity, entries: &[RegisterPoint]) -> Self {
        let mut sampled = Vec::with_capacity(entries.len());
        let mut fallback_capacity = Vec::new();
        for e in entries {
            let col = e
                .irradiance
                .and_then(|i| density.grid.x.bin_index(i))
                .filter(|&c| !density.is_column_empty(c));
            match col {
                Some(c) => sampled.push((c, e.capacity)),
                None => fallback_capacity.push(e.capacity),
            }
        }
        let last_positive = density
            .cond_prob
            .iter()
            .map(|col| col.iter().rposition(|&p| p > 0.0).unwrap_or(0))
            .collect();
        let fallback_energy =
            fallback_capacity.iter().sum::<f64>() * density.fallback_mean_yield;
        Self {
            density,
            sampled,
            last_positive,
            fallback_energy,
            n_fallback: fallback_capacity.len(),
        }
    }

    /// Entries that took the fallback path.
    pub fn n_fallback(&self) -> usize {
        self.n_fallback
    }

    /// One fleet total, kWh.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let y = &self.density.grid.y;
        let mut total = self.fallback_energy;
        for &(col, cap) in &self.sampled {
            let u: f64 = rng.gen();
            let cdf = self.density.column_cdf(col);
            let j = cdf.partition_point(|&c| c <= u).min(self.last_positive[col]);
            total += cap * y.center(j);
        }
        total
    }

    /// Closed-form expectation of [`draw`](Self::draw), kWh.
    pub fn expected(&self) -> f64 {
        self.fallback_energy
            + self
                .sampled
                .iter()
                .map(|&(col, cap)| {
                    cap * expected_yield_in_column(self.density, col).expect("non-empty column")
                })
                .sum::<f64>()
    }
}

/// Fleet total for one random draw, kWh.
pub fn assign_daily_yield(
    density: &ConditionalYieldDensity,
    entries: &[RegisterPoint],
    rng_seed: u64,
) -> f64 {
    AssignmentPlan::new(density, entries).draw(&mut seed::rng(rng_seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YieldEstimate {
    pub date: Option<NaiveDate>,
    /// kWh
    pub mean_energy: f64,
    /// kWh
    pub sigma: f64,
    /// kWh/kWp
    pub mean_specific: f64,
    pub sigma_specific: f64,
    /// Capacity in force, kWp.
    pub capacity: f64,
    pub n_bootstrap: usize,
    pub n_realizations: usize,
}

impl YieldEstimate {
    pub fn from_draws(
        date: Option<NaiveDate>,
        draws: &[f64],
        capacity: f64,
        n_realizations: usize,
    ) -> Self {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let sigma = var.sqrt();
        let per_kwp = |v: f64| if capacity > 0.0 { v / capacity } else { 0.0 };
        Self {
            date,
            mean_energy: mean,
            sigma,
            mean_specific: per_kwp(mean),
            sigma_specific: per_kwp(sigma),
            capacity,
            n_bootstrap: draws.len(),
            n_realizations,
        }
    }
}

/// Each of the `b` iterations picks one density uniformly and draws a fleet
/// total with its own seed. Sigma is the population standard deviation of
/// the draws.
pub fn bootstrap_day(
    densities: &[ConditionalYieldDensity],
    register: &[RegisterPoint],
    date: Option<NaiveDate>,
    b: usize,
    base_seed: u64,
) -> Result<YieldEstimate> {
    if densities.is_empty() {
        return Err(Error::EmptyInput);
    }
    if b == 0 {
        return Err(Error::Config("bootstrap count must be at least 1".into()));
    }
    let plans: Vec<AssignmentPlan> = densities
        .iter()
        .map(|d| AssignmentPlan::new(d, register))
        .collect();
    let draws: Vec<f64> = (0..b as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = seed::rng(seed::derive(base_seed, &[k]));
            let m = rng.gen_range(0..plans.len());
            plans[m].draw(&mut rng)
        })
        .collect();
    let capacity = register.iter().map(|e| e.capacity).sum();
    Ok(YieldEstimate::from_draws(date, &draws, capacity, densities.len()))
}
