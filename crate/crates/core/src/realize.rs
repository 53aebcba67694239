//! Monte Carlo realization of memoryless PEP trajectories, with post hoc distance and
//! travel-time attribution.
//!
//! Every random draw comes from a ChaCha8 stream addressed by `(seed, purpose, pep, t)`, so
//! results do not depend on thread count or iteration order, and the attribution draws can be
//! switched off without disturbing the destinations.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::Range;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BaseGraph;
use crate::kernel::TransitionMatrix;

/// Half-open range of absolute steps `[start, end)`. A PEP hops once at every step in it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::WindowOutOfRange { start, end });
        }
        Ok(Window { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn steps(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn contains(&self, t: usize) -> bool {
        self.steps().contains(&t)
    }
}

/// Distribution of travel speeds in km/h.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedModel {
    TruncatedNormal {
        mean_kmh: f64,
        sd_kmh: f64,
        min_kmh: f64,
        max_kmh: f64,
    },
    Fixed {
        kmh: f64,
    },
}

impl Default for SpeedModel {
    fn default() -> Self {
        SpeedModel::TruncatedNormal {
            mean_kmh: 30.0,
            sd_kmh: 10.0,
            min_kmh: 5.0,
            max_kmh: 80.0,
        }
    }
}

impl SpeedModel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SpeedModel::TruncatedNormal {
                mean_kmh,
                sd_kmh,
                min_kmh,
                max_kmh,
            } => {
                [mean_kmh, sd_kmh, min_kmh, max_kmh].iter().all(|v| v.is_finite())
                    && sd_kmh > 0.0
                    && min_kmh > 0.0
                    && min_kmh < max_kmh
                    && mean_kmh > min_kmh - 3.0 * sd_kmh
                    && mean_kmh < max_kmh + 3.0 * sd_kmh
            }
            SpeedModel::Fixed { kmh } => kmh.is_finite() && kmh > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid speed model {self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SpeedModel::Fixed { kmh } => kmh,
            SpeedModel::TruncatedNormal {
                mean_kmh,
                sd_kmh,
                min_kmh,
                max_kmh,
            } => {
                let normal = Normal::new(mean_kmh, sd_kmh).expect("validated");
                for _ in 0..10_000 {
                    let v = normal.sample(rng);
                    if (min_kmh..=max_kmh).contains(&v) {
                        return v;
                    }
                }
                mean_kmh.clamp(min_kmh, max_kmh)
            }
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            SpeedModel::Fixed { kmh } => (kmh, kmh),
            SpeedModel::TruncatedNormal { min_kmh, max_kmh, .. } => (min_kmh, max_kmh),
        }
    }
}

fn default_attribution() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub peps: usize,
    pub window: Window,
    pub seed: u64,
    #[serde(default)]
    pub speed: SpeedModel,
    #[serde(default = "default_attribution")]
    pub attribution: bool,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.peps == 0 {
            return Err(Error::InvalidConfig("sim.peps must be at least 1".into()));
        }
        if self.window.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "simulation window [{}, {}) is empty",
                self.window.start, self.window.end
            )));
        }
        self.speed.validate()
    }
}

/// One realized transition. Distance and time are NaN when attribution is off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub pep_id: u64,
    pub t: usize,
    pub origin: usize,
    pub dest: usize,
    pub distance_km: f64,
    pub travel_time_s: f64,
}

impl HopRecord {
    pub fn is_self_hop(&self) -> bool {
        self.origin == self.dest
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Placement,
    Destination,
    Distance,
    Speed,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Placement => 1,
            Purpose::Destination => 2,
            Purpose::Distance => 3,
            Purpose::Speed => 4,
        }
    }
}

/// Counter-based stream family: one ChaCha8 key per purpose, the PEP id as stream number and
/// the step as block offset.
#[derive(Clone, Debug)]
pub struct Streams {
    keys: [[u8; 32]; 4],
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let mut keys = [[0u8; 32]; 4];
        for purpose in [Purpose::Placement, Purpose::Destination, Purpose::Distance, Purpose::Speed] {
            let mut master = ChaCha8Rng::seed_from_u64(seed);
            master.set_stream(purpose.tag());
            master.fill_bytes(&mut keys[purpose.tag() as usize - 1]);
        }
        Streams { keys }
    }

    pub fn rng(&self, purpose: Purpose, pep: u64, t: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.keys[purpose.tag() as usize - 1]);
        rng.set_stream(pep);
        rng.set_word_pos((t as u128) << 32);
        rng
    }
}

/// Plausible travel-distance interval for a hop between two cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEnvelope {
    pub lo: f64,
    pub hi: f64,
}

impl DistanceEnvelope {
    pub fn contains(&self, d: f64) -> bool {
        self.lo <= d && d <= self.hi
    }
}

/// `[max(0, d - D), d + D]` for distinct cells, `[0, D]` for a self-hop, with `D` the hexagon
/// diameter.
pub fn envelope(g: &BaseGraph, origin: usize, dest: usize) -> DistanceEnvelope {
    let diameter = g.hex_diameter_km;
    if origin == dest {
        return DistanceEnvelope { lo: 0.0, hi: diameter };
    }
    let d = g.centroid_distance(origin, dest);
    DistanceEnvelope {
        lo: (d - diameter).max(0.0),
        hi: d + diameter,
    }
}

pub fn attribute_distance<R: Rng + ?Sized>(env: DistanceEnvelope, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    (env.lo + u * (env.hi - env.lo)).clamp(env.lo, env.hi)
}

/// Travel time in seconds: distance over a sampled speed, capped at one step and floored at 1 s.
pub fn attribute_time<R: Rng + ?Sized>(
    distance_km: f64,
    step_seconds: f64,
    speed: &SpeedModel,
    rng: &mut R,
) -> f64 {
    let v = speed.sample(rng);
    (distance_km / v * 3600.0).min(step_seconds).max(1.0)
}

/// Inverse-CDF sampler over the nonzero entries of one probability vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnSampler {
    targets: Vec<usize>,
    cumulative: Vec<f64>,
}

impl ColumnSampler {
    pub fn new(probabilities: &[f64]) -> Result<Self> {
        let mut targets = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (i, &p) in probabilities.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::DataIntegrity(format!("bad probability {p} at {i}")));
            }
            if p > 0.0 {
                acc += p;
                targets.push(i);
                cumulative.push(acc);
            }
        }
        if targets.is_empty() {
            return Err(Error::DataIntegrity("probability vector has no mass".into()));
        }
        Ok(ColumnSampler { targets, cumulative })
    }

    pub fn support(&self) -> &[usize] {
        &self.targets
    }

    /// Maps `u` in `[0, 1)` to an outcome.
    pub fn pick(&self, u: f64) -> usize {
        let x = u * self.cumulative[self.cumulative.len() - 1];
        let k = self.cumulative.partition_point(|&c| c <= x);
        self.targets[k.min(self.targets.len() - 1)]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.pick(rng.random())
    }
}

/// One sampler per column of `m`.
pub fn column_samplers(m: &TransitionMatrix) -> Result<Vec<ColumnSampler>> {
    (0..m.n()).map(|j| ColumnSampler::new(m.column(j))).collect()
}

pub fn sample_transition<R: Rng + ?Sized>(samplers: &[ColumnSampler], origin: usize, rng: &mut R) -> usize {
    samplers[origin].sample(rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub locations: Vec<usize>,
    pub counts: Vec<u64>,
}

/// Places `peps` PEPs independently according to `p`, drawing PEP `k` from its own placement
/// stream at step `t`.
pub fn initial_placement(p: &[f64], peps: usize, streams: &Streams, t: usize) -> Result<Placement> {
    let sampler = ColumnSampler::new(p)?;
    let locations: Vec<usize> = (0..peps as u64)
        .into_par_iter()
        .map(|pep| sampler.sample(&mut streams.rng(Purpose::Placement, pep, t)))
        .collect();
    let mut counts = vec![0u64; p.len()];
    for &j in &locations {
        counts[j] += 1;
    }
    Ok(Placement { locations, counts })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub records: u64,
    pub placement: Vec<u64>,
    pub final_counts: Vec<u64>,
}

pub struct Realizer<'a> {
    sim: &'a SimConfig,
    grid: &'a BaseGraph,
    step_seconds: f64,
    streams: Streams,
    /// Matrix index in `matrices` for each window step.
    lookup: Vec<usize>,
    samplers: HashMap<usize, Vec<ColumnSampler>>,
}

impl<'a> Realizer<'a> {
    /// `matrices` are either an exact cover of the window by absolute step, or one full period
    /// stamped `0..T`, which is then repeated.
    pub fn new(
        sim: &'a SimConfig,
        matrices: &'a [TransitionMatrix],
        grid: &'a BaseGraph,
        step_seconds: f64,
    ) -> Result<Self> {
        sim.validate()?;
        if !(step_seconds.is_finite() && step_seconds > 0.0) {
            return Err(Error::InvalidConfig("step duration must be positive".into()));
        }
        if let Some(m) = matrices.iter().find(|m| m.n() != grid.len()) {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: m.n(),
            });
        }
        let by_step: HashMap<usize, usize> = matrices.iter().enumerate().map(|(k, m)| (m.t, k)).collect();
        let periodic = !matrices.is_empty() && matrices.iter().enumerate().all(|(k, m)| m.t == k);
        let lookup = sim
            .window
            .steps()
            .map(|t| {
                by_step
                    .get(&t)
                    .copied()
                    .or_else(|| periodic.then(|| t % matrices.len()))
                    .ok_or(Error::WindowOutOfRange {
                        start: sim.window.start,
                        end: sim.window.end,
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut samplers = HashMap::new();
        for &k in &lookup {
            if let std::collections::hash_map::Entry::Vacant(e) = samplers.entry(k) {
                e.insert(column_samplers(&matrices[k])?);
            }
        }
        Ok(Realizer {
            sim,
            grid,
            step_seconds,
            streams: Streams::new(sim.seed),
            lookup,
            samplers,
        })
    }

    pub fn streams(&self) -> &Streams {
        &self.streams
    }

    /// Places PEPs from `p_start` (the distribution at the window start) and realizes every step,
    /// handing each step's records to `sink` in PEP order.
    pub fn run<F>(&self, p_start: &[f64], mut sink: F) -> Result<RunSummary>
    where
        F: FnMut(&[HopRecord]) -> Result<()>,
    {
        if p_start.len() != self.grid.len() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.len(),
                got: p_start.len(),
            });
        }
        let placement = initial_placement(p_start, self.sim.peps, &self.streams, self.sim.window.start)?;
        let mut positions = placement.locations.clone();
        let mut records = 0u64;
        for (offset, t) in self.sim.window.steps().enumerate() {
            let samplers = &self.samplers[&self.lookup[offset]];
            let batch: Vec<HopRecord> = positions
                .par_iter()
                .enumerate()
                .map(|(pep, &origin)| self.hop(samplers, pep as u64, t, origin))
                .collect();
            for (pos, hop) in positions.iter_mut().zip(&batch) {
                *pos = hop.dest;
            }
            records += batch.len() as u64;
            sink(&batch)?;
        }
        let mut final_counts = vec![0u64; self.grid.len()];
        for &i in &positions {
            final_counts[i] += 1;
        }
        Ok(RunSummary {
            records,
            placement: placement.counts,
            final_counts,
        })
    }

    /// Convenience wrapper collecting every record.
    pub fn run_collect(&self, p_start: &[f64]) -> Result<Vec<HopRecord>> {
        let mut all = Vec::with_capacity(self.sim.peps * self.sim.window.len());
        self.run(p_start, |batch| {
            all.extend_from_slice(batch);
            Ok(())
        })?;
        Ok(all)
    }

    fn hop(&self, samplers: &[ColumnSampler], pep: u64, t: usize, origin: usize) -> HopRecord {
        let dest = sample_transition(samplers, origin, &mut self.streams.rng(Purpose::Destination, pep, t));
        let (distance_km, travel_time_s) = if self.sim.attribution {
            let d = attribute_distance(
                envelope(self.grid, origin, dest),
                &mut self.streams.rng(Purpose::Distance, pep, t),
            );
            let time = attribute_time(
                d,
                self.step_seconds,
                &self.sim.speed,
                &mut self.streams.rng(Purpose::Speed, pep, t),
            );
            (d, time)
        } else {
            (f64::NAN, f64::NAN)
        };
        HopRecord {
            pep_id: pep,
            t,
            origin,
            dest,
            distance_km,
            travel_time_s,
        }
    }
}

/// Streaming CSV sink for hop records (`pep_id,t,origin,dest,distance_km,travel_time_s`).
pub struct TrajectoryWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W) -> Self {
        TrajectoryWriter {
            inner: csv::Writer::from_writer(out),
        }
    }

    pub fn write_batch(&mut self, batch: &[HopRecord]) -> Result<()> {
        for hop in batch {
            self.inner.serialize(hop)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn read_trajectory<R: Read>(input: R) -> impl Iterator<Item = Result<HopRecord>> {
    csv::Reader::from_reader(input)
        .into_deserialize::<HopRecord>()
        .map(|r| r.map_err(Error::from))
}
