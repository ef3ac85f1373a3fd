use std::fmt;

use crate::error::{Error, Result};
use crate::ingest::{Orientation, PvSystemMeta};
use crate::normalize::EpsilonClass;

/// Anything carrying the three scenario coordinates.
pub trait PanelConfig {
    fn orientation(&self) -> Orientation;
    fn tilt(&self) -> f64;
    fn epsilon(&self) -> EpsilonClass;
}

impl PanelConfig for PvSystemMeta {
    fn orientation(&self) -> Orientation {
        self.orientation
    }

    fn tilt(&self) -> f64 {
        self.tilt
    }

    fn epsilon(&self) -> EpsilonClass {
        EpsilonClass::from_sizes(self.system_size, self.inverter_size)
    }
}

/// Azimuth ranges include their end points: with eight cardinal
/// directions an open range such as (135, 225) would collapse to South only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AzimuthFilter {
    All,
    Equal(u16),
    NotEqual(u16),
    Range { lo: u16, hi: u16 },
}

impl AzimuthFilter {
    pub fn matches(&self, o: Orientation) -> bool {
        let a = o.azimuth();
        match *self {
            AzimuthFilter::All => true,
            AzimuthFilter::Equal(v) => a == v,
            AzimuthFilter::NotEqual(v) => a != v,
            AzimuthFilter::Range { lo, hi } => (lo..=hi).contains(&a),
        }
    }
}

/// Tilt bounds are strict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TiltFilter {
    All,
    Below(f64),
    Above(f64),
    Between(f64, f64),
}

impl TiltFilter {
    pub fn matches(&self, tilt: f64) -> bool {
        match *self {
            TiltFilter::All => true,
            TiltFilter::Below(v) => tilt < v,
            TiltFilter::Above(v) => tilt > v,
            TiltFilter::Between(lo, hi) => tilt > lo && tilt < hi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub id: u8,
    pub azimuth: AzimuthFilter,
    pub tilt: TiltFilter,
    /// Allowed classes, indexed by epsilon + 1.
    pub epsilon: [bool; 3],
}

const ALL_EPS: [bool; 3] = [true, true, true];
const SOUTHISH: AzimuthFilter = AzimuthFilter::Range { lo: 135, hi: 225 };
const MID_TILT: TiltFilter = TiltFilter::Between(30.0, 45.0);

impl Scenario {
    pub const COUNT: u8 = 15;

    pub fn new(id: u8) -> Result<Self> {
        use AzimuthFilter as A;
        use TiltFilter as T;
        let (azimuth, tilt, epsilon) = match id {
            1 => (A::All, T::All, ALL_EPS),
            2 => (A::Equal(180), T::All, ALL_EPS),
            3 => (SOUTHISH, T::All, ALL_EPS),
            4 => (A::Range { lo: 90, hi: 180 }, T::All, ALL_EPS),
            5 => (A::Range { lo: 180, hi: 270 }, T::All, ALL_EPS),
            6 => (A::NotEqual(180), T::All, ALL_EPS),
            7 => (A::All, T::Below(30.0), ALL_EPS),
            8 => (A::All, T::Above(30.0), ALL_EPS),
            9 => (A::All, MID_TILT, ALL_EPS),
            10 => (A::All, T::All, [false, false, true]),
            11 => (A::All, T::All, [true, false, false]),
            12 => (A::All, T::All, [false, true, true]),
            13 => (A::All, T::All, [true, true, false]),
            14 => (SOUTHISH, MID_TILT, [false, false, true]),
            15 => (SOUTHISH, MID_TILT, ALL_EPS),
            other => return Err(Error::UnknownScenario(other)),
        };
        Ok(Self {
            id,
            azimuth,
            tilt,
            epsilon,
        })
    }

    pub fn all() -> Vec<Self> {
        (1..=Self::COUNT)
            .map(|id| Self::new(id).expect("table id"))
            .collect()
    }

    pub fn matches<T: PanelConfig + ?Sized>(&self, s: &T) -> bool {
        self.azimuth.matches(s.orientation())
            && self.tilt.matches(s.tilt())
            && self.epsilon[(s.epsilon().value() + 1) as usize]
    }

    pub fn describe_azimuth(&self) -> String {
        match self.azimuth {
            AzimuthFilter::All => "all".into(),
            AzimuthFilter::Equal(v) => format!("={v}"),
            AzimuthFilter::NotEqual(v) => format!("!={v}"),
            AzimuthFilter::Range { lo, hi } => format!("{lo}..{hi}"),
        }
    }

    pub fn describe_tilt(&self) -> String {
        match self.tilt {
            TiltFilter::All => "all".into(),
            TiltFilter::Below(v) => format!("<{v}"),
            TiltFilter::Above(v) => format!(">{v}"),
            TiltFilter::Between(lo, hi) => format!("{lo}<t<{hi}"),
        }
    }

    pub fn describe_epsilon(&self) -> String {
        let vals: Vec<&str> = ["-1", "0", "1"]
            .iter()
            .zip(self.epsilon)
            .filter(|(_, on)| *on)
            .map(|(v, _)| *v)
            .collect();
        format!("{{{}}}", vals.join(","))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "scenario {} (azimuth {}, tilt {}, epsilon {})",
            self.id,
            self.describe_azimuth(),
            self.describe_tilt(),
            self.describe_epsilon()
        )
    }
}

/// Systems matching all three filters, in input order.
pub fn apply_scenario<'a, T: PanelConfig>(systems: &'a [T], scenario: &Scenario) -> Result<Vec<&'a T>> {
    let out: Vec<&T> = systems.iter().filter(|s| scenario.matches(*s)).collect();
    if out.is_empty() {
        return Err(Error::ScenarioEliminatesSample(scenario.id));
    }
    Ok(out)
}
