//! Multi-step verification: the composed model matrix over a window against the empirical
//! end-to-end matrix estimated from realized trajectories.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::compose;
use crate::kernel::TransitionMatrix;
use crate::realize::{HopRecord, Window};

/// `A_prod` for the consecutive matrices of a window; the identity for an empty window.
pub fn compose_window(matrices: &[TransitionMatrix], n: usize) -> Result<DMatrix<f64>> {
    Ok(compose(matrices)?.unwrap_or_else(|| DMatrix::identity(n, n)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Empirical {
    pub a_pep: DMatrix<f64>,
    /// Trajectory counts per origin, `x_{t0}`.
    pub origin_counts: Vec<u64>,
    /// Raw end-to-end counts `F[(i, j)]`.
    pub counts: DMatrix<u64>,
}

#[derive(Clone, Copy, Debug)]
struct Track {
    first: usize,
    current: usize,
    last_t: usize,
}

/// Accumulates first and last locations per PEP from records in `(t, pep)` order.
#[derive(Clone, Debug)]
pub struct EmpiricalAccumulator {
    n: usize,
    window: Window,
    tracks: HashMap<u64, Track>,
}

impl EmpiricalAccumulator {
    pub fn new(n: usize, window: Window) -> Self {
        EmpiricalAccumulator {
            n,
            window,
            tracks: HashMap::new(),
        }
    }

    pub fn observe(&mut self, hop: &HopRecord) -> Result<()> {
        if !self.window.contains(hop.t) {
            return Ok(());
        }
        if hop.origin >= self.n || hop.dest >= self.n {
            return Err(Error::NodeOutOfRange {
                index: hop.origin.max(hop.dest),
                len: self.n,
            });
        }
        match self.tracks.get_mut(&hop.pep_id) {
            None => {
                if hop.t != self.window.start {
                    return Err(Error::DataIntegrity(format!(
                        "pep {} first appears at step {} inside window starting at {}",
                        hop.pep_id, hop.t, self.window.start
                    )));
                }
                self.tracks.insert(
                    hop.pep_id,
                    Track {
                        first: hop.origin,
                        current: hop.dest,
                        last_t: hop.t,
                    },
                );
            }
            Some(track) => {
                if hop.t != track.last_t + 1 {
                    return Err(Error::DataIntegrity(format!(
                        "pep {} jumps from step {} to step {}",
                        hop.pep_id, track.last_t, hop.t
                    )));
                }
                if hop.origin != track.current {
                    return Err(Error::DataIntegrity(format!(
                        "pep {} at step {} starts at {} but was last at {}",
                        hop.pep_id, hop.t, hop.origin, track.current
                    )));
                }
                track.current = hop.dest;
                track.last_t = hop.t;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<Empirical> {
        let n = self.n;
        let mut counts = DMatrix::<u64>::zeros(n, n);
        for (pep, track) in &self.tracks {
            if track.last_t + 1 != self.window.end {
                return Err(Error::DataIntegrity(format!(
                    "pep {pep} stops at step {} before the window end {}",
                    track.last_t, self.window.end
                )));
            }
            counts[(track.current, track.first)] += 1;
        }
        let origin_counts: Vec<u64> = (0..n).map(|j| counts.column(j).sum()).collect();
        let a_pep = DMatrix::from_fn(n, n, |i, j| {
            let x = origin_counts[j];
            if x == 0 {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            } else {
                counts[(i, j)] as f64 / x as f64
            }
        });
        Ok(Empirical {
            a_pep,
            origin_counts,
            counts,
        })
    }
}

/// `A_pep` and `x_{t0}` from hop records (any order by PEP, increasing `t` per PEP).
pub fn empirical_matrix(hops: &[HopRecord], n: usize, window: Window) -> Result<Empirical> {
    let mut acc = EmpiricalAccumulator::new(n, window);
    for hop in hops {
        acc.observe(hop)?;
    }
    acc.finish()
}

/// Kullback-Leibler divergence in nats; terms with `p_i = 0` contribute zero.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum()
}

pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    (0.5 * kl_divergence(p, &m) + 0.5 * kl_divergence(q, &m)).max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub l1_norm: f64,
    pub rmse: f64,
    pub mean_col_l1: f64,
    pub mean_col_js: f64,
    pub weighted_l1: f64,
    pub weighted_rmse: f64,
    pub weighted_js: f64,
}

impl Metrics {
    pub fn as_array(&self) -> [(&'static str, f64); 7] {
        [
            ("l1_norm", self.l1_norm),
            ("rmse", self.rmse),
            ("mean_col_l1", self.mean_col_l1),
            ("mean_col_js", self.mean_col_js),
            ("weighted_l1", self.weighted_l1),
            ("weighted_rmse", self.weighted_rmse),
            ("weighted_js", self.weighted_js),
        ]
    }
}

/// The seven discrepancy metrics of `D = A_pep - A_prod`, weighting columns by `x_{t0}`.
pub fn metrics(a_pep: &DMatrix<f64>, a_prod: &DMatrix<f64>, origin_counts: &[u64]) -> Result<Metrics> {
    let n = a_prod.nrows();
    if a_pep.shape() != (n, n) || a_prod.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a_pep.nrows(),
        });
    }
    if origin_counts.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: origin_counts.len(),
        });
    }
    let total: u64 = origin_counts.iter().sum();
    let weight = |j: usize| {
        if total == 0 {
            0.0
        } else {
            origin_counts[j] as f64 / total as f64
        }
    };
    let nf = n as f64;
    let mut m = Metrics {
        l1_norm: 0.0,
        rmse: 0.0,
        mean_col_l1: 0.0,
        mean_col_js: 0.0,
        weighted_l1: 0.0,
        weighted_rmse: 0.0,
        weighted_js: 0.0,
    };
    let mut sq_total = 0.0;
    let mut weighted_sq = 0.0;
    for j in 0..n {
        let p = a_pep.column(j);
        let q = a_prod.column(j);
        let col_l1: f64 = p.iter().zip(q.iter()).map(|(a, b)| (a - b).abs()).sum();
        let col_sq: f64 = p.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        let js = js_divergence(p.as_slice(), q.as_slice());
        let w = weight(j);
        m.l1_norm += col_l1;
        sq_total += col_sq;
        m.mean_col_js += js;
        m.weighted_l1 += w * col_l1;
        weighted_sq += w * col_sq / nf;
        m.weighted_js += w * js;
    }
    m.rmse = (sq_total / (nf * nf)).sqrt();
    m.mean_col_l1 = m.l1_norm / nf;
    m.mean_col_js /= nf;
    m.weighted_rmse = weighted_sq.sqrt();
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub metrics: Metrics,
    pub k: u64,
    pub n: usize,
    pub window: Window,
    pub js_log_base: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Composes the window's matrices and compares them with the empirical matrix.
pub fn verify(matrices: &[TransitionMatrix], empirical: &Empirical, window: Window) -> Result<VerificationReport> {
    let n = empirical.a_pep.nrows();
    if matrices.len() != window.len() {
        return Err(Error::WindowOutOfRange {
            start: window.start,
            end: window.end,
        });
    }
    let a_prod = compose_window(matrices, n)?;
    let metrics = metrics(&empirical.a_pep, &a_prod, &empirical.origin_counts)?;
    Ok(VerificationReport {
        metrics,
        k: empirical.origin_counts.iter().sum(),
        n,
        window,
        js_log_base: "e".into(),
        seed: None,
        config_hash: None,
    })
}
