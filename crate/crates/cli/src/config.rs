//! Run configuration: a TOML document with one section per pipeline stage.

use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pepsim::grid::GridConfig;
use pepsim::kernel::{KernelParams, KernelSpec};
use pepsim::overlay::OverlaySpec;
use pepsim::realize::{SimConfig, SpeedModel, Window};
use pepsim::schedule::DayClock;

use crate::error::{CliError, CliResult};

/// The bundled configuration reproducing the reference experiment setup.
pub const PAPER_DEFAULT: &str = include_str!("../configs/paper_default.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub overlay: OverlaySpec,
    #[serde(default)]
    pub clock: DayClock,
    pub kernel: KernelSpec,
    pub sim: SimSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_true() -> bool {
    true
}

fn default_bucket() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub peps: usize,
    pub seed: u64,
    /// `[start, end]` as `HH:MM`; an end at or before the start wraps into the next day.
    pub window: (String, String),
    /// Calendar date of step 0, `YYYY-MM-DD`.
    pub start_date: String,
    #[serde(default)]
    pub speed: SpeedModel,
    #[serde(default = "default_true")]
    pub attribution: bool,
    /// Consecutive steps merged into one OD row.
    #[serde(default = "default_bucket")]
    pub od_bucket_steps: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Defaults to the simulation window.
    pub window: Option<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn paper_default() -> Self {
        Self::from_toml(PAPER_DEFAULT).expect("bundled config parses")
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of everything that determines the network and its matrices.
    pub fn network_hash(&self) -> String {
        digest(&(&self.grid, &self.overlay, &self.clock, &self.kernel))
    }

    /// Hash of everything that determines the simulated trajectories.
    pub fn config_hash(&self) -> String {
        digest(&(&self.grid, &self.overlay, &self.clock, &self.kernel, &self.sim))
    }

    pub fn resolve(&self) -> CliResult<Resolved> {
        self.clock.validate()?;
        self.grid.validate()?;
        let params = self.kernel.resolve(&self.clock)?;
        let sim_window = window_of(&self.clock, &self.sim.window)?;
        let sim = SimConfig {
            peps: self.sim.peps,
            window: sim_window,
            seed: self.sim.seed,
            speed: self.sim.speed,
            attribution: self.sim.attribution,
        };
        sim.validate()?;
        let verify_window = match &self.verify.window {
            Some(w) => window_of(&self.clock, w)?,
            None => sim_window,
        };
        if !verify_window.is_empty()
            && (verify_window.start < sim_window.start || verify_window.end > sim_window.end)
        {
            return Err(CliError::Config(format!(
                "verify window [{}, {}) lies outside the simulation window [{}, {})",
                verify_window.start, verify_window.end, sim_window.start, sim_window.end
            )));
        }
        if self.sim.od_bucket_steps == 0 {
            return Err(CliError::Config("sim.od_bucket_steps must be at least 1".into()));
        }
        let start_date = NaiveDate::parse_from_str(&self.sim.start_date, "%Y-%m-%d")
            .map_err(|e| CliError::Config(format!("sim.start_date {:?}: {e}", self.sim.start_date)))?;
        Ok(Resolved {
            params,
            sim,
            verify_window,
            start_date,
        })
    }
}

fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Resolves a clock-time pair into absolute steps.
pub fn window_of(clock: &DayClock, (start, end): &(String, String)) -> CliResult<Window> {
    let s = clock.step_of(start)?;
    let mut e = clock.step_of(end)?;
    if s >= clock.steps_per_day {
        return Err(CliError::Config(format!("window start {start} is not inside the day")));
    }
    if e < s {
        e += clock.steps_per_day;
    }
    Ok(Window::new(s, e)?)
}

/// Validated, step-resolved form of a [`RunConfig`].
#[derive(Clone, Debug)]
pub struct Resolved {
    pub params: KernelParams,
    pub sim: SimConfig,
    pub verify_window: Window,
    pub start_date: NaiveDate,
}

impl Resolved {
    /// ISO-8601 start of absolute step `t`.
    pub fn step_start(&self, clock: &DayClock, t: usize) -> String {
        let midnight: NaiveDateTime = self.start_date.and_hms_opt(0, 0, 0).expect("midnight");
        let offset = TimeDelta::seconds((t as f64 * clock.step_seconds()).round() as i64);
        (midnight + offset).format("%Y-%m-%dT%H:%M:%S").to_string()
    }
}
