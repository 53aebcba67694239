//! Piecewise-linear ramp-and-hold schedules over a periodic day.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MINUTES_PER_DAY: f64 = 1440.0;

/// Discretization of one day into `steps_per_day` bins of `step_minutes` each.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DayClock {
    pub steps_per_day: usize,
    pub step_minutes: f64,
}

impl Default for DayClock {
    fn default() -> Self {
        DayClock {
            steps_per_day: 48,
            step_minutes: 30.0,
        }
    }
}

impl DayClock {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_day == 0 || self.step_minutes.is_nan() || self.step_minutes <= 0.0 {
            return Err(Error::InvalidConfig(
                "clock.steps_per_day and clock.step_minutes must be positive".into(),
            ));
        }
        let total = self.steps_per_day as f64 * self.step_minutes;
        if (total - MINUTES_PER_DAY).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "clock covers {total} minutes, expected {MINUTES_PER_DAY}"
            )));
        }
        Ok(())
    }

    pub fn step_seconds(&self) -> f64 {
        self.step_minutes * 60.0
    }

    /// Converts a clock time `HH:MM` (00:00 ..= 24:00) to the nearest step boundary.
    pub fn step_of(&self, hhmm: &str) -> Result<usize> {
        let minutes = parse_hhmm(hhmm)?;
        Ok((minutes / self.step_minutes).round() as usize)
    }

    /// Start of a step as minutes after midnight, wrapping across days.
    pub fn minutes_of(&self, step: usize) -> f64 {
        (step % self.steps_per_day) as f64 * self.step_minutes
    }
}

fn parse_hhmm(text: &str) -> Result<f64> {
    let bad = || Error::InvalidConfig(format!("bad clock time {text:?}, expected HH:MM"));
    let (h, m) = text.trim().split_once(':').ok_or_else(bad)?;
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    if m >= 60 || h > 24 || (h == 24 && m != 0) {
        return Err(bad());
    }
    Ok(f64::from(h * 60 + m))
}

/// One linear ramp from the current value to `value` over steps `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub start: usize,
    pub end: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampSchedule {
    baseline: f64,
    ramps: Vec<Ramp>,
    period: usize,
}

impl RampSchedule {
    /// Builds a validated schedule. Ramps are sorted by start; they must not overlap (touching
    /// endpoints are fine), must lie within one period, and the last ramp must return to the
    /// baseline so the day wraps continuously.
    pub fn new(baseline: f64, mut ramps: Vec<Ramp>, period: usize) -> Result<Self> {
        if !(baseline.is_finite() && baseline > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "schedule baseline must be positive, got {baseline}"
            )));
        }
        for r in &ramps {
            if !(r.value.is_finite() && r.value > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "schedule value must be positive, got {}",
                    r.value
                )));
            }
            if r.start >= r.end || r.end > period {
                return Err(Error::InvalidConfig(format!(
                    "ramp [{}, {}] must satisfy start < end <= {period}",
                    r.start, r.end
                )));
            }
        }
        ramps.sort_by_key(|r| (r.start, r.end));
        for pair in ramps.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::OverlappingRamps {
                    first: (pair[0].start, pair[0].end),
                    second: (pair[1].start, pair[1].end),
                });
            }
        }
        if let Some(last) = ramps.last() {
            if (last.value - baseline).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "schedule ends the day at {} but its baseline is {baseline}; add a closing ramp",
                    last.value
                )));
            }
        }
        Ok(RampSchedule {
            baseline,
            ramps,
            period,
        })
    }

    pub fn constant(value: f64, period: usize) -> Result<Self> {
        Self::new(value, Vec::new(), period)
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn ramps(&self) -> &[Ramp] {
        &self.ramps
    }

    pub fn period(&self) -> usize {
        self.period
    }

    /// Value at step `t` (taken modulo the period).
    pub fn eval(&self, t: usize) -> f64 {
        let t = t % self.period;
        let mut current = self.baseline;
        for ramp in &self.ramps {
            if t < ramp.start {
                return current;
            }
            if t <= ramp.end {
                let frac = (t - ramp.start) as f64 / (ramp.end - ramp.start) as f64;
                return current + (ramp.value - current) * frac;
            }
            current = ramp.value;
        }
        current
    }

    /// Returns a copy with the baseline and every ramp target multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let ramps = self
            .ramps
            .iter()
            .map(|r| Ramp {
                value: r.value * factor,
                ..*r
            })
            .collect();
        Self::new(self.baseline * factor, ramps, self.period)
    }
}

/// Config-file form of a schedule: a baseline plus `[start, end, value]` triples with clock
/// times written `HH:MM`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub baseline: f64,
    #[serde(default)]
    pub ramps: Vec<(String, String, f64)>,
}

impl ScheduleSpec {
    pub fn constant(value: f64) -> Self {
        ScheduleSpec {
            baseline: value,
            ramps: Vec::new(),
        }
    }

    pub fn resolve(&self, clock: &DayClock) -> Result<RampSchedule> {
        let ramps = self
            .ramps
            .iter()
            .map(|(start, end, value)| {
                Ok(Ramp {
                    start: clock.step_of(start)?,
                    end: clock.step_of(end)?,
                    value: *value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RampSchedule::new(self.baseline, ramps, clock.steps_per_day)
    }
}
