//! Aggregated origin-destination summaries and directional edge flows built from hop records.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::overlay::OverlayNetwork;
use crate::realize::{HopRecord, Window};

/// Mean, median and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

/// Population convention (divide by `n`); the median of an even-sized sample is the mean of the
/// two middle values.
pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    Summary {
        mean,
        median,
        std: var.sqrt(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdRow {
    pub origin: usize,
    pub dest: usize,
    pub t: usize,
    pub trips: u64,
    pub dist_mean: f64,
    pub dist_median: f64,
    pub dist_std: f64,
    pub time_mean: f64,
    pub time_median: f64,
    pub time_std: f64,
}

/// Streaming OD aggregation. Steps are grouped into buckets of `bucket` consecutive steps
/// counted from `origin_step`; a row's `t` is its bucket's first step.
type OdSamples = (Vec<f64>, Vec<f64>);

#[derive(Clone, Debug)]
pub struct OdAggregator {
    origin_step: usize,
    bucket: usize,
    groups: BTreeMap<(usize, usize, usize), OdSamples>,
}

impl OdAggregator {
    pub fn new(origin_step: usize, bucket: usize) -> Result<Self> {
        if bucket == 0 {
            return Err(Error::InvalidConfig("aggregation bucket must be at least one step".into()));
        }
        Ok(OdAggregator {
            origin_step,
            bucket,
            groups: BTreeMap::new(),
        })
    }

    pub fn add(&mut self, hops: &[HopRecord]) -> Result<()> {
        for h in hops {
            if h.t < self.origin_step {
                return Err(Error::WindowOutOfRange {
                    start: self.origin_step,
                    end: h.t,
                });
            }
            let t = h.t - (h.t - self.origin_step) % self.bucket;
            let (d, s) = self.groups.entry((t, h.origin, h.dest)).or_default();
            d.push(h.distance_km);
            s.push(h.travel_time_s);
        }
        Ok(())
    }

    /// Rows sorted by `(t, origin, dest)`.
    pub fn finish(self) -> Vec<OdRow> {
        self.groups
            .into_iter()
            .map(|((t, origin, dest), (d, s))| {
                let dist = summarize(&d);
                let time = summarize(&s);
                OdRow {
                    origin,
                    dest,
                    t,
                    trips: d.len() as u64,
                    dist_mean: dist.mean,
                    dist_median: dist.median,
                    dist_std: dist.std,
                    time_mean: time.mean,
                    time_median: time.median,
                    time_std: time.std,
                }
            })
            .collect()
    }
}

/// Per-step OD rows for the hops inside `window`.
pub fn aggregate_od(hops: &[HopRecord], window: Window) -> Vec<OdRow> {
    let mut agg = OdAggregator::new(window.start, 1).expect("bucket 1");
    for h in hops.iter().filter(|h| window.contains(h.t)) {
        agg.add(std::slice::from_ref(h)).expect("inside window");
    }
    agg.finish()
}

pub fn write_od_csv<W: Write>(rows: &[OdRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_od_csv<R: Read>(input: R) -> Result<Vec<OdRow>> {
    csv::Reader::from_reader(input)
        .into_deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Hop counts on one undirected overlay edge at step `t`, oriented so that `src -> dst` points
/// toward the center.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeFlow {
    pub src: usize,
    pub dst: usize,
    pub t: usize,
    pub inward: u64,
    pub outward: u64,
    pub net: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowDirection {
    Inward,
    Outward,
    Net,
}

impl FlowDirection {
    pub fn value(self, flow: &EdgeFlow) -> i64 {
        match self {
            FlowDirection::Inward => flow.inward as i64,
            FlowDirection::Outward => flow.outward as i64,
            FlowDirection::Net => flow.net,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlowDirection::Inward => "inward",
            FlowDirection::Outward => "outward",
            FlowDirection::Net => "net",
        }
    }
}

impl FromStr for FlowDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inward" => Ok(FlowDirection::Inward),
            "outward" => Ok(FlowDirection::Outward),
            "net" => Ok(FlowDirection::Net),
            other => Err(Error::InvalidConfig(format!(
                "unknown flow direction {other:?} (expected inward, outward or net)"
            ))),
        }
    }
}

/// Streaming edge-flow counter. Hops along neutral edges and self-hops are not counted.
#[derive(Clone, Debug)]
pub struct FlowCounter<'a> {
    overlay: &'a OverlayNetwork,
    counts: BTreeMap<(usize, usize, usize), (u64, u64)>,
}

impl<'a> FlowCounter<'a> {
    pub fn new(overlay: &'a OverlayNetwork) -> Self {
        FlowCounter {
            overlay,
            counts: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, hops: &[HopRecord]) -> Result<()> {
        for h in hops.iter().filter(|h| !h.is_self_hop()) {
            let edge = self.overlay.edge(h.origin, h.dest).ok_or_else(|| {
                Error::DataIntegrity(format!(
                    "hop {} -> {} at step {} is not an overlay edge",
                    h.origin, h.dest, h.t
                ))
            })?;
            match edge.sign {
                1 => self.counts.entry((h.t, h.origin, h.dest)).or_default().0 += 1,
                -1 => self.counts.entry((h.t, h.dest, h.origin)).or_default().1 += 1,
                _ => {}
            }
        }
        Ok(())
    }

    /// Flows sorted by `(t, src, dst)`.
    pub fn finish(self) -> Vec<EdgeFlow> {
        self.counts
            .into_iter()
            .map(|((t, src, dst), (inward, outward))| EdgeFlow {
                src,
                dst,
                t,
                inward,
                outward,
                net: inward as i64 - outward as i64,
            })
            .collect()
    }
}

/// Directional flows at step `t`.
pub fn edge_flows(hops: &[HopRecord], overlay: &OverlayNetwork, t: usize) -> Result<Vec<EdgeFlow>> {
    let mut counter = FlowCounter::new(overlay);
    let at_t: Vec<HopRecord> = hops.iter().filter(|h| h.t == t).copied().collect();
    counter.add(&at_t)?;
    Ok(counter.finish())
}

/// `(inward, outward)` totals over a set of flows.
pub fn flow_totals(flows: &[EdgeFlow]) -> (u64, u64) {
    flows
        .iter()
        .fold((0, 0), |(a, b), f| (a + f.inward, b + f.outward))
}

pub fn write_flow_csv<W: Write>(flows: &[EdgeFlow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for f in flows {
        w.serialize(f)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_flow_csv<R: Read>(input: R) -> Result<Vec<EdgeFlow>> {
    csv::Reader::from_reader(input)
        .into_deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
