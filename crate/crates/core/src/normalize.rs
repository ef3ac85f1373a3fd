//! Drop/duplicate rebalancing of a day's logger set.
//!
//! Each day's reliable systems are resampled so that their marginal
//! distributions over orientation, tilt and inverter class match a reference
//! day, and their irradiance distribution matches the register's for the
//! same day, each within an absolute leeway per bin. Only marginals are
//! matched; the joint distribution is left free.

use rand::Rng;
use rayon::prelude::*;

use crate::density::Axis;
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_LEEWAY: f64 = 0.015;
pub const DEFAULT_REALIZATIONS: usize = 50;
/// Iteration budget per system in the day's set.
pub const ITERS_PER_SYSTEM: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Parameter {
    Orientation,
    Tilt,
    Epsilon,
    Irradiance,
}

impl Parameter {
    pub const ALL: [Parameter; 4] = [
        Parameter::Orientation,
        Parameter::Tilt,
        Parameter::Epsilon,
        Parameter::Irradiance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Parameter::Orientation => "orientation",
            Parameter::Tilt => "tilt",
            Parameter::Epsilon => "epsilon",
            Parameter::Irradiance => "irradiance",
        }
    }
}

/// Sign of (system size - inverter size).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EpsilonClass(i8);

impl EpsilonClass {
    pub fn from_sizes(system_size: f64, inverter_size: f64) -> Self {
        Self(match system_size.partial_cmp(&inverter_size) {
            Some(std::cmp::Ordering::Greater) => 1,
            Some(std::cmp::Ordering::Less) => -1,
            _ => 0,
        })
    }

    pub fn new(value: i8) -> Option<Self> {
        (-1..=1).contains(&value).then_some(Self(value))
    }

    pub fn value(self) -> i8 {
        self.0
    }
}

/// Bins per parameter. Orientation, tilt and epsilon are fixed; the
/// irradiance axis follows the day's data range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamBinning {
    pub orientation: Axis,
    pub tilt: Axis,
    /// Three unit-wide bins centred on -1, 0 and +1.
    pub epsilon: Axis,
    pub irradiance: Axis,
}

impl ParamBinning {
    pub fn standard(irradiance: Axis) -> Self {
        Self {
            orientation: Axis::new(0.0, 360.0, 45.0).expect("static axis"),
            tilt: Axis::new(0.0, 90.0, 15.0).expect("static axis"),
            epsilon: Axis::new(-1.5, 1.5, 1.0).expect("static axis"),
            irradiance,
        }
    }

    pub fn axis(&self, p: Parameter) -> &Axis {
        match p {
            Parameter::Orientation => &self.orientation,
            Parameter::Tilt => &self.tilt,
            Parameter::Epsilon => &self.epsilon,
            Parameter::Irradiance => &self.irradiance,
        }
    }
}

/// The four rebalancing coordinates of one logger system on one day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Azimuth, degrees.
    pub orientation: f64,
    /// Degrees.
    pub tilt: f64,
    pub epsilon: EpsilonClass,
    /// kWh/m².
    pub irradiance: f64,
}

impl SystemParams {
    pub fn value(&self, p: Parameter) -> f64 {
        match p {
            Parameter::Orientation => self.orientation,
            Parameter::Tilt => self.tilt,
            Parameter::Epsilon => f64::from(self.epsilon.value()),
            Parameter::Irradiance => self.irradiance,
        }
    }
}

/// Per-bin shares summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionVector(Vec<f64>);

impl DistributionVector {
    /// Normalizes non-negative weights; all-zero weights are an error.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::EmptyInput);
        }
        Ok(Self(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn shares(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs_deviation(&self, other: &DistributionVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Drops bins where `keep` is false and renormalizes.
    pub fn restricted(&self, keep: &[bool]) -> Result<Self> {
        Self::from_weights(
            self.0
                .iter()
                .zip(keep)
                .map(|(&w, &k)| if k { w } else { 0.0 })
                .collect(),
        )
    }
}

fn bin_of(axis: &Axis, value: f64) -> Result<usize> {
    axis.bin_index(value).ok_or(Error::OutOfRange {
        value,
        min: axis.min,
        max: axis.max,
    })
}

/// Share of `values` in each bin of `axis`.
pub fn histogram(values: &[f64], axis: &Axis) -> Result<DistributionVector> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut counts = vec![0.0; axis.n_bins()];
    for &v in values {
        counts[bin_of(axis, v)?] += 1.0;
    }
    DistributionVector::from_weights(counts)
}

pub fn parameter_histogram(
    systems: &[SystemParams],
    p: Parameter,
    binning: &ParamBinning,
) -> Result<DistributionVector> {
    let values: Vec<f64> = systems.iter().map(|s| s.value(p)).collect();
    histogram(&values, binning.axis(p))
}

/// Target marginals: reference-day shares for orientation, tilt and
/// epsilon, register shares for irradiance.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub orientation: DistributionVector,
    pub tilt: DistributionVector,
    pub epsilon: DistributionVector,
    pub irradiance: DistributionVector,
}

impl Targets {
    pub fn get(&self, p: Parameter) -> &DistributionVector {
        match p {
            Parameter::Orientation => &self.orientation,
            Parameter::Tilt => &self.tilt,
            Parameter::Epsilon => &self.epsilon,
            Parameter::Irradiance => &self.irradiance,
        }
    }

    pub fn get_mut(&mut self, p: Parameter) -> &mut DistributionVector {
        match p {
            Parameter::Orientation => &mut self.orientation,
            Parameter::Tilt => &mut self.tilt,
            Parameter::Epsilon => &mut self.epsilon,
            Parameter::Irradiance => &mut self.irradiance,
        }
    }

    /// Orientation, tilt and epsilon shares of a reference population.
    pub fn reference(
        reference: &[SystemParams],
        binning: &ParamBinning,
        irradiance: DistributionVector,
    ) -> Result<Self> {
        Ok(Self {
            orientation: parameter_histogram(reference, Parameter::Orientation, binning)?,
            tilt: parameter_histogram(reference, Parameter::Tilt, binning)?,
            epsilon: parameter_histogram(reference, Parameter::Epsilon, binning)?,
            irradiance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RebalanceConfig {
    pub leeway: f64,
    /// Defaults to `ITERS_PER_SYSTEM` x day size.
    pub max_iters: Option<usize>,
}

impl Default for RebalanceConfig {
    fn default() -> Self {
        Self {
            leeway: DEFAULT_LEEWAY,
            max_iters: None,
        }
    }
}

/// A resampled multiset, as sorted indices into the day's systems.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Realization {
    pub members: Vec<usize>,
}

impl Realization {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

struct Balancer<'a> {
    targets: [&'a [f64]; 4],
    /// `bins[p][s]`: bin of system `s` for parameter `p`
    bins: [Vec<usize>; 4],
    /// `by_bin[p][i]`: input systems in bin `i`
    by_bin: [Vec<Vec<usize>>; 4],
    counts: [Vec<u32>; 4],
    mult: Vec<u32>,
    total: u32,
}

impl<'a> Balancer<'a> {
    fn new(systems: &[SystemParams], binning: &ParamBinning, targets: &'a Targets) -> Result<Self> {
        let mut bins: [Vec<usize>; 4] = Default::default();
        let mut by_bin: [Vec<Vec<usize>>; 4] = Default::default();
        let mut counts: [Vec<u32>; 4] = Default::default();
        for (k, p) in Parameter::ALL.into_iter().enumerate() {
            let axis = binning.axis(p);
            if targets.get(p).len() != axis.n_bins() {
                return Err(Error::InvalidAxis(format!(
                    "{} target has {} bins, axis has {}",
                    p.name(),
                    targets.get(p).len(),
                    axis.n_bins()
                )));
            }
            bins[k] = systems
                .iter()
                .map(|s| bin_of(axis, s.value(p)))
                .collect::<Result<_>>()?;
            by_bin[k] = vec![Vec::new(); axis.n_bins()];
            counts[k] = vec![0; axis.n_bins()];
            for (s, &b) in bins[k].iter().enumerate() {
                by_bin[k][b].push(s);
                counts[k][b] += 1;
            }
        }
        Ok(Self {
            targets: Parameter::ALL.map(|p| targets.get(p).shares()),
            bins,
            by_bin,
            counts,
            mult: vec![1; systems.len()],
            total: systems.len() as u32,
        })
    }

    /// (parameter, bin, signed deviation) of the worst bin; first wins ties.
    fn worst(&self) -> (usize, usize, f64) {
        let n = f64::from(self.total);
        let mut worst = (0, 0, 0.0f64);
        for k in 0..4 {
            for (i, (&c, &t)) in self.counts[k].iter().zip(self.targets[k]).enumerate() {
                let dev = f64::from(c) / n - t;
                if dev.abs() > worst.2.abs() {
                    worst = (k, i, dev);
                }
            }
        }
        worst
    }

    fn deviations(&self) -> [f64; 4] {
        let n = f64::from(self.total.max(1));
        std::array::from_fn(|k| {
            self.counts[k]
                .iter()
                .zip(self.targets[k])
                .map(|(&c, &t)| (f64::from(c) / n - t).abs())
                .fold(0.0, f64::max)
        })
    }

    /// Uniform draw over multiset elements in bin `(k, i)`.
    fn pick<R: Rng>(&self, k: usize, i: usize, rng: &mut R) -> Option<usize> {
        let n = self.counts[k][i];
        if n == 0 {
            return None;
        }
        let mut r = rng.gen_range(0..n);
        for &s in &self.by_bin[k][i] {
            if r < self.mult[s] {
                return Some(s);
            }
            r -= self.mult[s];
        }
        unreachable!("bin count out of sync with multiplicities")
    }

    fn adjust(&mut self, s: usize, add: bool) {
        for k in 0..4 {
            let c = &mut self.counts[k][self.bins[k][s]];
            if add {
                *c += 1;
            } else {
                *c -= 1;
            }
        }
        if add {
            self.mult[s] += 1;
            self.total += 1;
        } else {
            self.mult[s] -= 1;
            self.total -= 1;
        }
    }

    fn members(&self) -> Vec<usize> {
        self.mult
            .iter()
            .enumerate()
            .flat_map(|(s, &m)| std::iter::repeat_n(s, m as usize))
            .collect()
    }
}

/// Drops surplus and duplicates deficit systems, worst bin first, until
/// every marginal is within `leeway` of its target.
pub fn rebalance(
    systems: &[SystemParams],
    binning: &ParamBinning,
    targets: &Targets,
    config: &RebalanceConfig,
    rng_seed: u64,
) -> Result<Realization> {
    if systems.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut b = Balancer::new(systems, binning, targets)?;
    let mut rng = seed::rng(rng_seed);
    let max_iters = config
        .max_iters
        .unwrap_or(ITERS_PER_SYSTEM * systems.len());
    for _ in 0..max_iters {
        let (k, i, dev) = b.worst();
        if dev.abs() <= config.leeway {
            return Ok(Realization {
                members: b.members(),
            });
        }
        if dev > 0.0 {
            if b.total <= 1 {
                break;
            }
            let s = b.pick(k, i, &mut rng).expect("surplus bin has members");
            b.adjust(s, false);
        } else {
            let s = match b.pick(k, i, &mut rng) {
                Some(s) => s,
                None => {
                    let pool = &b.by_bin[k][i];
                    if pool.is_empty() {
                        return Err(Error::UnfillableBin {
                            parameter: Parameter::ALL[k].name(),
                            bin: i,
                            target: b.targets[k][i],
                        });
                    }
                    pool[rng.gen_range(0..pool.len())]
                }
            };
            b.adjust(s, true);
        }
    }
    let deviations = b.deviations();
    let (_, _, dev) = b.worst();
    if dev.abs() <= config.leeway {
        return Ok(Realization {
            members: b.members(),
        });
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        max_deviation: deviations.iter().copied().fold(0.0, f64::max),
        deviations,
    })
}

/// `m` independent rebalancings seeded `base_seed + 0 .. base_seed + m - 1`.
pub fn make_realizations(
    systems: &[SystemParams],
    binning: &ParamBinning,
    targets: &Targets,
    config: &RebalanceConfig,
    m: usize,
    base_seed: u64,
) -> Result<Vec<Realization>> {
    if m == 0 {
        return Err(Error::Config("number of realizations must be at least 1".into()));
    }
    (0..m as u64)
        .into_par_iter()
        .map(|k| rebalance(systems, binning, targets, config, base_seed.wrapping_add(k)))
        .collect()
}

/// Largest per-bin deviation of each marginal of `members` from `targets`.
pub fn marginal_deviations(
    systems: &[SystemParams],
    members: &[usize],
    binning: &ParamBinning,
    targets: &Targets,
) -> Result<[f64; 4]> {
    let picked: Vec<SystemParams> = members.iter().map(|&i| systems[i]).collect();
    let mut out = [0.0; 4];
    for (k, p) in Parameter::ALL.into_iter().enumerate() {
        out[k] = parameter_histogram(&picked, p, binning)?.max_abs_deviation(targets.get(p));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn tilt_histogram() {
        let axis = Axis::new(0.0, 90.0, 15.0).unwrap();
        let h = histogram(&[10.0, 20.0, 20.0, 80.0], &axis).unwrap();
        assert_eq!(h.shares(), &[0.25, 0.5, 0.0, 0.0, 0.0, 0.25]);
        let h = histogram(&[33.0], &axis).unwrap();
        assert_eq!(h.shares(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(histogram(&[], &axis), Err(Error::EmptyInput)));
    }

    #[test]
    fn standard_bins() {
        let b = ParamBinning::standard(Axis::new(2.0, 4.0, 0.5).unwrap());
        assert_eq!(b.orientation.n_bins(), 8);
        assert_eq!(b.tilt.n_bins(), 6);
        assert_eq!(b.epsilon.n_bins(), 3);
        for (deg, bin) in [(0.0, 0), (45.0, 1), (180.0, 4), (315.0, 7)] {
            assert_eq!(b.orientation.bin_index(deg), Some(bin));
        }
        for (e, bin) in [(-1.0, 0), (0.0, 1), (1.0, 2)] {
            assert_eq!(b.epsilon.bin_index(e), Some(bin));
        }
        assert_eq!(b.tilt.bin_index(90.0), Some(5));
    }

    #[test]
    fn epsilon_sign() {
        assert_eq!(EpsilonClass::from_sizes(4.0, 3.5).value(), 1);
        assert_eq!(EpsilonClass::from_sizes(3.5, 3.5).value(), 0);
        assert_eq!(EpsilonClass::from_sizes(3.0, 3.5).value(), -1);
    }

    fn sys(orientation: f64, tilt: f64, eps: i8, irr: f64) -> SystemParams {
        SystemParams {
            orientation,
            tilt,
            epsilon: EpsilonClass::new(eps).unwrap(),
            irradiance: irr,
        }
    }

    fn binning() -> ParamBinning {
        ParamBinning::standard(Axis::new(3.0, 5.0, 0.5).unwrap())
    }

    fn own_targets(systems: &[SystemParams], b: &ParamBinning) -> Targets {
        Targets::reference(
            systems,
            b,
            parameter_histogram(systems, Parameter::Irradiance, b).unwrap(),
        )
        .unwrap()
    }

    fn fleet(n: usize, seed: u64) -> Vec<SystemParams> {
        let mut rng = seed::rng(seed);
        let orient = [90.0, 135.0, 180.0, 180.0, 180.0, 225.0, 270.0];
        (0..n)
            .map(|_| {
                sys(
                    orient[rng.gen_range(0..orient.len())],
                    rng.gen_range(0.0..60.0),
                    rng.gen_range(-1..=1),
                    rng.gen_range(3.0..5.0),
                )
            })
            .collect()
    }

    #[test]
    fn fixed_point_is_unchanged() {
        let b = binning();
        let s = fleet(80, 1);
        let t = own_targets(&s, &b);
        let r = rebalance(&s, &b, &t, &RebalanceConfig::default(), 9).unwrap();
        assert_eq!(r.members, (0..80).collect::<Vec<_>>());
    }

    #[test]
    fn surplus_south_is_dropped() {
        let b = binning();
        let reference = fleet(200, 2);
        let t = own_targets(&reference, &b);
        // same fleet plus 40 extra south-facing systems
        let mut day = reference.clone();
        let mut rng = seed::rng(3);
        for _ in 0..40 {
            day.push(sys(180.0, rng.gen_range(0.0..60.0), 1, rng.gen_range(3.0..5.0)));
        }
        let south_before = day.iter().filter(|s| s.orientation == 180.0).count();
        let r = rebalance(&day, &b, &t, &RebalanceConfig::default(), 4).unwrap();
        let south_after = r.members.iter().filter(|&&i| day[i].orientation == 180.0).count();
        let share = |n: usize, total: usize| n as f64 / total as f64;
        assert!(share(south_after, r.len()) < share(south_before, day.len()));
        let dev = marginal_deviations(&day, &r.members, &b, &t).unwrap();
        assert!(dev.iter().all(|d| *d <= DEFAULT_LEEWAY + 1e-12), "{dev:?}");
        assert!(r.members.iter().all(|&i| i < day.len()));
    }

    #[test]
    fn unfillable_bin() {
        let b = binning();
        let reference = vec![sys(0.0, 10.0, 0, 3.2), sys(180.0, 10.0, 0, 3.2)];
        let t = own_targets(&reference, &b);
        let day = vec![sys(180.0, 10.0, 0, 3.2); 5];
        let err = rebalance(&day, &b, &t, &RebalanceConfig::default(), 1).unwrap_err();
        assert!(matches!(
            err,
            Error::UnfillableBin {
                parameter: "orientation",
                bin: 0,
                ..
            }
        ));
    }

    #[test]
    fn non_convergence_reports_deviations() {
        let b = binning();
        let reference = fleet(100, 5);
        let t = own_targets(&reference, &b);
        let day = fleet(100, 6);
        let cfg = RebalanceConfig {
            leeway: DEFAULT_LEEWAY,
            max_iters: Some(1),
        };
        match rebalance(&day, &b, &t, &cfg, 1) {
            Err(Error::NonConvergence {
                iterations,
                deviations,
                max_deviation,
            }) => {
                assert_eq!(iterations, 1);
                assert!(max_deviation > DEFAULT_LEEWAY);
                assert_eq!(max_deviation, deviations.iter().copied().fold(0.0, f64::max));
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn realizations_are_seeded() {
        let b = binning();
        let t = own_targets(&fleet(150, 7), &b);
        let day = fleet(150, 8);
        let cfg = RebalanceConfig::default();
        let one = make_realizations(&day, &b, &t, &cfg, 1, 100).unwrap();
        assert_eq!(one.len(), 1);
        let many = make_realizations(&day, &b, &t, &cfg, 5, 100).unwrap();
        assert_eq!(many[0], one[0]);
        assert_eq!(many[1], rebalance(&day, &b, &t, &cfg, 101).unwrap());
        assert!(many.windows(2).any(|w| w[0] != w[1]));
        assert_eq!(many, make_realizations(&day, &b, &t, &cfg, 5, 100).unwrap());
        assert!(make_realizations(&day, &b, &t, &cfg, 0, 100).is_err());
    }

    proptest! {
        #[test]
        fn shares_sum_to_one(values in prop::collection::vec(0.0f64..90.0, 1..300)) {
            let axis = Axis::new(0.0, 90.0, 15.0).unwrap();
            let h = histogram(&values, &axis).unwrap();
            let s: f64 = h.shares().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(h.shares().iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn converged_output_respects_leeway(ref_seed in 0u64..1000, day_seed in 0u64..1000, seed in any::<u64>()) {
            let b = binning();
            let t = own_targets(&fleet(200, ref_seed), &b);
            let day = fleet(180, day_seed + 5000);
            if let Ok(r) = rebalance(&day, &b, &t, &RebalanceConfig::default(), seed) {
                let dev = marginal_deviations(&day, &r.members, &b, &t).unwrap();
                prop_assert!(dev.iter().all(|d| *d <= DEFAULT_LEEWAY + 1e-12));
                prop_assert!(r.members.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(r.members.iter().all(|&i| i < day.len()));
            }
        }
    }
}
