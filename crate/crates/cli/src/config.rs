use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use pvyield::cleanse::QualityThresholds;
use pvyield::density::{DEFAULT_DX, DEFAULT_DY};
use pvyield::estimate::{Scenario, DEFAULT_BOOTSTRAP};
use pvyield::normalize::{DEFAULT_LEEWAY, DEFAULT_REALIZATIONS};
use pvyield::pipeline::EstimationConfig;
use pvyield::synth::SynthConfig;
use serde::{Deserialize, Serialize};

/// Resolved run configuration: file values overridden by flags and
/// `PVYIELD_*` environment variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding the input files.
    pub input: PathBuf,
    /// Directory receiving stage outputs.
    pub out: PathBuf,
    pub scenarios: Vec<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    /// Day whose fleet sets the orientation, tilt and epsilon targets;
    /// defaults to the first day.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_date: Option<NaiveDate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub estimation: EstimationSection,
    pub cleaning: CleaningSection,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::from("data"),
            out: PathBuf::from("out"),
            scenarios: (1..=Scenario::COUNT).collect(),
            year: None,
            reference_date: None,
            threads: None,
            estimation: EstimationSection::default(),
            cleaning: CleaningSection::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSection {
    pub dx: f64,
    pub dy: f64,
    pub leeway: f64,
    pub realizations: usize,
    pub bootstrap: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self {
            dx: DEFAULT_DX,
            dy: DEFAULT_DY,
            leeway: DEFAULT_LEEWAY,
            realizations: DEFAULT_REALIZATIONS,
            bootstrap: DEFAULT_BOOTSTRAP,
            seed: 0,
            max_iters: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningSection {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub peak_factor: f64,
    pub max_gap_min: f64,
}

impl Default for CleaningSection {
    fn default() -> Self {
        let t = QualityThresholds::default();
        Self {
            ratio_min: t.ratio_min,
            ratio_max: t.ratio_max,
            peak_factor: t.peak_factor,
            max_gap_min: t.max_gap,
        }
    }
}

/// Command-line and environment overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub scenarios: Option<Vec<u8>>,
    pub year: Option<i32>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config file {}", p.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("invalid config file {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = overrides.input {
            cfg.input = v;
        }
        if let Some(v) = overrides.out {
            cfg.out = v;
        }
        if let Some(v) = overrides.scenarios {
            cfg.scenarios = v;
        }
        if let Some(v) = overrides.year {
            cfg.year = Some(v);
        }
        if let Some(v) = overrides.seed {
            cfg.estimation.seed = v;
            cfg.synth.seed = v;
        }
        if let Some(v) = overrides.threads {
            cfg.threads = Some(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            bail!("no scenarios selected");
        }
        for &s in &self.scenarios {
            Scenario::new(s)?;
        }
        let e = &self.estimation;
        if !(e.dx > 0.0 && e.dy > 0.0) {
            bail!("bin widths must be positive");
        }
        if !(0.0..1.0).contains(&e.leeway) {
            bail!("leeway must be in [0, 1)");
        }
        if e.realizations == 0 || e.bootstrap == 0 {
            bail!("realizations and bootstrap must be at least 1");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }

    pub fn thresholds(&self) -> QualityThresholds {
        QualityThresholds {
            ratio_min: self.cleaning.ratio_min,
            ratio_max: self.cleaning.ratio_max,
            peak_factor: self.cleaning.peak_factor,
            max_gap: self.cleaning.max_gap_min,
        }
    }

    pub fn estimation(&self) -> EstimationConfig {
        let e = &self.estimation;
        EstimationConfig {
            dx: e.dx,
            dy: e.dy,
            leeway: e.leeway,
            realizations: e.realizations,
            bootstrap: e.bootstrap,
            base_seed: e.seed,
            max_iters: e.max_iters,
        }
    }

    pub fn input_file(&self, name: &str) -> PathBuf {
        self.input.join(name)
    }

    pub fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn in_period(&self, date: NaiveDate) -> bool {
        self.year.is_none_or(|y| chrono::Datelike::year(&date) == y)
    }
}
