//! Time-dependent column-stochastic transition matrices built from a gravity-type kernel on
//! the overlay network.
//!
//! For origin `j` at step `t` the diagonal is the stay probability `s_j(t)` and the remaining
//! mass `1 - s_j(t)` is split over the overlay out-edges `j -> i` in proportion to
//!
//! ```text
//! w_ij(t) = k(t) * m_i(t)^alpha * m_j(t)^alpha / d_ij^beta * omega_ij * phi_ij(t)
//! ```
//!
//! `k(t)` and the origin mass `m_j(t)` are common to every entry of column `j`, so they cancel
//! in the normalization; they are still carried through so that the cancellation is checkable.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BaseGraph;
use crate::overlay::{EdgeClass, OverlayEdge, OverlayNetwork};
use crate::schedule::{DayClock, RampSchedule, ScheduleSpec};

/// Lower clamp on stay probabilities; keeps every diagonal positive.
pub const STAY_MIN: f64 = 0.05;
/// Upper clamp on stay probabilities; keeps every column's off-diagonal mass positive.
pub const STAY_MAX: f64 = 0.98;

const COLUMN_SUM_TOL: f64 = 1e-10;

/// Structural edge weights by class (Module E).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassWeights {
    pub backbone: f64,
    pub feeder: f64,
    pub metro: f64,
    /// Multiplier applied to feeder edges that only serve a second-nearest hub attachment.
    pub secondary_feeder: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights {
            backbone: 1.5,
            feeder: 1.0,
            metro: 2.0,
            secondary_feeder: 0.5,
        }
    }
}

impl ClassWeights {
    pub fn omega(&self, edge: &OverlayEdge) -> f64 {
        let base = match edge.class {
            EdgeClass::Backbone => self.backbone,
            EdgeClass::Feeder => self.feeder,
            EdgeClass::Metro => self.metro,
        };
        if edge.secondary {
            base * self.secondary_feeder
        } else {
            base
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.backbone, self.feeder, self.metro, self.secondary_feeder];
        if all.iter().all(|w| w.is_finite() && *w > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig("kernel.class_weights must all be positive".into()))
        }
    }
}

/// A schedule per node class. Center-class nodes have potential at most
/// `center_class_max_potential`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSchedules<S> {
    pub center: S,
    pub periphery: S,
}

/// Directional multipliers keyed by edge sign (Module G).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSchedules<S> {
    pub inward: S,
    pub outward: S,
    pub neutral: S,
}

/// Config-file form of the kernel parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_center_class")]
    pub center_class_max_potential: u32,
    pub stay: ClassSchedules<ScheduleSpec>,
    pub mass: ClassSchedules<ScheduleSpec>,
    pub hub_stay_factor: ScheduleSpec,
    pub hub_mass_factor: ScheduleSpec,
    #[serde(default)]
    pub class_weights: ClassWeights,
    pub metro: ScheduleSpec,
    pub bias: BiasSchedules<ScheduleSpec>,
    pub k: ScheduleSpec,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    2.0
}

fn default_center_class() -> u32 {
    1
}

impl KernelSpec {
    pub fn resolve(&self, clock: &DayClock) -> Result<KernelParams> {
        let r = |s: &ScheduleSpec| s.resolve(clock);
        let params = KernelParams {
            alpha: self.alpha,
            beta: self.beta,
            center_class_max_potential: self.center_class_max_potential,
            stay: ClassSchedules {
                center: r(&self.stay.center)?,
                periphery: r(&self.stay.periphery)?,
            },
            mass: ClassSchedules {
                center: r(&self.mass.center)?,
                periphery: r(&self.mass.periphery)?,
            },
            hub_stay_factor: r(&self.hub_stay_factor)?,
            hub_mass_factor: r(&self.hub_mass_factor)?,
            class_weights: self.class_weights.clone(),
            metro: r(&self.metro)?,
            bias: BiasSchedules {
                inward: r(&self.bias.inward)?,
                outward: r(&self.bias.outward)?,
                neutral: r(&self.bias.neutral)?,
            },
            k: r(&self.k)?,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    pub alpha: f64,
    pub beta: f64,
    pub center_class_max_potential: u32,
    pub stay: ClassSchedules<RampSchedule>,
    pub mass: ClassSchedules<RampSchedule>,
    pub hub_stay_factor: RampSchedule,
    pub hub_mass_factor: RampSchedule,
    pub class_weights: ClassWeights,
    pub metro: RampSchedule,
    pub bias: BiasSchedules<RampSchedule>,
    pub k: RampSchedule,
}

impl KernelParams {
    /// Every schedule constant: stay `stay`, all masses and factors 1.
    pub fn uniform(stay: f64, period: usize) -> Result<Self> {
        let one = RampSchedule::constant(1.0, period)?;
        let s = RampSchedule::constant(stay, period)?;
        Ok(KernelParams {
            alpha: default_alpha(),
            beta: default_beta(),
            center_class_max_potential: default_center_class(),
            stay: ClassSchedules {
                center: s.clone(),
                periphery: s,
            },
            mass: ClassSchedules {
                center: one.clone(),
                periphery: one.clone(),
            },
            hub_stay_factor: one.clone(),
            hub_mass_factor: one.clone(),
            class_weights: ClassWeights::default(),
            metro: one.clone(),
            bias: BiasSchedules {
                inward: one.clone(),
                outward: one.clone(),
                neutral: one.clone(),
            },
            k: one,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!("kernel.alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidConfig(format!("kernel.beta must be > 0, got {}", self.beta)));
        }
        self.class_weights.validate()
    }

    pub fn period(&self) -> usize {
        self.k.period()
    }
}

/// Dense column-stochastic matrix for one step: entry `(i, j)` is the probability of moving
/// from `j` to `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    pub t: usize,
    entries: DMatrix<f64>,
}

impl TransitionMatrix {
    /// Wraps a square, nonnegative, column-stochastic matrix.
    pub fn new(t: usize, entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        if entries.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::DataIntegrity(format!(
                "matrix for step {t} has negative or non-finite entries"
            )));
        }
        for (j, col) in entries.column_iter().enumerate() {
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::DataIntegrity(format!(
                    "column {j} of step {t} sums to {sum}"
                )));
            }
        }
        Ok(TransitionMatrix { t, entries })
    }

    pub fn from_columns(t: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        let flat: Vec<f64> = columns.iter().flatten().copied().collect();
        if flat.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: flat.len(),
            });
        }
        Self::new(t, DMatrix::from_vec(n, n, flat))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Same entries relabeled to absolute step `t` (for windows that run past one period).
    pub fn with_step(&self, t: usize) -> Self {
        TransitionMatrix {
            t,
            entries: self.entries.clone(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Destination distribution from origin `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.entries.as_slice()[j * n..(j + 1) * n]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn max_column_sum_error(&self) -> f64 {
        self.entries
            .column_iter()
            .map(|c| (c.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Dense CSV grid, one row per destination `i`, one field per origin `j`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for i in 0..self.n() {
            w.write_record((0..self.n()).map(|j| format!("{:e}", self.get(i, j))))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(header: &MatrixHeader, input: R) -> Result<Self> {
        let n = header.n;
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        for record in r.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::DataIntegrity(format!("bad matrix entry {f:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            rows.push(row);
        }
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rows.len(),
            });
        }
        Self::new(header.t, DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn header(&self, node_ids: &[String]) -> MatrixHeader {
        MatrixHeader {
            t: self.t,
            n: self.n(),
            layout: "row i = destination, column j = origin".into(),
            node_ids: node_ids.to_vec(),
        }
    }
}

/// JSON sidecar for a matrix CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub t: usize,
    pub n: usize,
    pub layout: String,
    pub node_ids: Vec<String>,
}

/// Per-step node quantities entering the kernel. Origin and destination masses are kept apart
/// so the origin factor can be perturbed on its own.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInputs {
    pub k: f64,
    pub destination_mass: Vec<f64>,
    pub origin_mass: Vec<f64>,
    pub stay: Vec<f64>,
}

pub struct Kernel<'a> {
    params: &'a KernelParams,
    overlay: &'a OverlayNetwork,
    /// d_ij^beta per overlay edge.
    decay: Vec<f64>,
    center_class: Vec<bool>,
}

impl<'a> Kernel<'a> {
    pub fn new(params: &'a KernelParams, overlay: &'a OverlayNetwork, grid: &BaseGraph) -> Result<Self> {
        params.validate()?;
        if overlay.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: overlay.len(),
            });
        }
        let decay = overlay
            .edges
            .iter()
            .map(|e| grid.centroid_distance(e.from, e.to).powf(params.beta))
            .collect();
        let center_class = overlay
            .potentials
            .iter()
            .map(|&psi| psi <= params.center_class_max_potential)
            .collect();
        Ok(Kernel {
            params,
            overlay,
            decay,
            center_class,
        })
    }

    pub fn n(&self) -> usize {
        self.overlay.len()
    }

    pub fn is_center_class(&self, node: usize) -> bool {
        self.center_class[node]
    }

    pub fn node_mass(&self, i: usize, t: usize) -> f64 {
        let class = if self.center_class[i] {
            &self.params.mass.center
        } else {
            &self.params.mass.periphery
        };
        let hub = if self.overlay.is_hub(i) {
            self.params.hub_mass_factor.eval(t)
        } else {
            1.0
        };
        class.eval(t) * hub
    }

    pub fn stay_probability(&self, j: usize, t: usize) -> f64 {
        let class = if self.center_class[j] {
            &self.params.stay.center
        } else {
            &self.params.stay.periphery
        };
        let hub = if self.overlay.is_hub(j) {
            self.params.hub_stay_factor.eval(t)
        } else {
            1.0
        };
        (class.eval(t) * hub).clamp(STAY_MIN, STAY_MAX)
    }

    pub fn bias_factor(&self, edge: &OverlayEdge, t: usize) -> f64 {
        let bias = match edge.sign {
            1 => &self.params.bias.inward,
            -1 => &self.params.bias.outward,
            _ => &self.params.bias.neutral,
        };
        let metro = if edge.class == EdgeClass::Metro {
            self.params.metro.eval(t)
        } else {
            1.0
        };
        bias.eval(t) * metro
    }

    pub fn step_inputs(&self, t: usize) -> StepInputs {
        let mass: Vec<f64> = (0..self.n()).map(|i| self.node_mass(i, t)).collect();
        StepInputs {
            k: self.params.k.eval(t),
            origin_mass: mass.clone(),
            destination_mass: mass,
            stay: (0..self.n()).map(|j| self.stay_probability(j, t)).collect(),
        }
    }

    pub fn build_matrix(&self, t: usize) -> Result<TransitionMatrix> {
        self.build_matrix_with(t, &self.step_inputs(t))
    }

    pub fn build_matrix_with(&self, t: usize, inputs: &StepInputs) -> Result<TransitionMatrix> {
        let n = self.n();
        let alpha = self.params.alpha;
        let mut entries = DMatrix::<f64>::zeros(n, n);
        let mut weights: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            weights.clear();
            let origin = inputs.k * inputs.origin_mass[j].powf(alpha);
            for &k in &self.overlay.out_edges[j] {
                let edge = &self.overlay.edges[k];
                let w = origin * inputs.destination_mass[edge.to].powf(alpha) / self.decay[k]
                    * self.params.class_weights.omega(edge)
                    * self.bias_factor(edge, t);
                weights.push((edge.to, w));
            }
            let total: f64 = weights.iter().map(|(_, w)| w).sum();
            if !(total.is_finite() && total > 0.0) {
                return Err(Error::IsolatedOrigin(j));
            }
            let stay = inputs.stay[j];
            let moving = 1.0 - stay;
            let mut col = entries.column_mut(j);
            for &(i, w) in &weights {
                col[i] = moving * (w / total);
            }
            col[j] = stay;
        }
        Ok(TransitionMatrix { t, entries })
    }

    /// Matrices for steps `0..period`, built in parallel.
    pub fn build_day(&self) -> Result<Vec<TransitionMatrix>> {
        (0..self.params.period())
            .into_par_iter()
            .map(|t| self.build_matrix(t))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};
    use crate::overlay::{build_overlay, FeederMode, OverlaySpec};
    use crate::schedule::Ramp;

    fn network() -> (BaseGraph, OverlayNetwork) {
        let g = build_grid(&GridConfig {
            center_lat: 33.749,
            center_lon: -84.388,
            radius_km: 33.6,
            resolution: 6,
            lattice_offset: [0.2, 0.1],
        })
        .unwrap();
        let o = build_overlay(
            &g,
            &OverlaySpec {
                center_node: None,
                n_bands: 3,
                hubs_per_band: 2,
                min_hub_separation_hops: 3,
                feeder_mode: FeederMode::Single,
            },
        )
        .unwrap();
        (g, o)
    }

    /// Hand-built overlay on a path of cells; every other cell is chained by feeders so no
    /// origin is isolated.
    fn path_overlay(g: &BaseGraph, nodes: &[usize], classes: &[EdgeClass]) -> OverlayNetwork {
        let rest: Vec<usize> = (0..g.len()).filter(|i| !nodes.contains(i)).collect();
        let filler = vec![EdgeClass::Feeder; rest.len()];
        let mut edges = Vec::new();
        let pairs = nodes.windows(2).zip(classes).chain(rest.windows(2).zip(&filler));
        for (pair, &class) in pairs {
            for (from, to) in [(pair[0], pair[1]), (pair[1], pair[0])] {
                edges.push(OverlayEdge {
                    from,
                    to,
                    class,
                    secondary: false,
                    sign: 0,
                });
            }
        }
        edges.sort_by_key(|e| (e.from, e.to));
        let mut out_edges = vec![Vec::new(); g.len()];
        for (k, e) in edges.iter().enumerate() {
            out_edges[e.from].push(k);
        }
        OverlayNetwork {
            center: nodes[0],
            hubs: Vec::new(),
            edges,
            potentials: vec![0; g.len()],
            out_edges,
            hub_shortfall: false,
        }
    }

    fn two_cell_grid() -> BaseGraph {
        build_grid(&GridConfig {
            center_lat: 0.0,
            center_lon: 0.0,
            radius_km: 3.3,
            resolution: 6,
            lattice_offset: [0.5, 0.0],
        })
        .unwrap()
    }

    #[test]
    fn two_node_symmetric_split() {
        let g = two_cell_grid();
        assert_eq!(g.len(), 2);
        let o = path_overlay(&g, &[0, 1], &[EdgeClass::Feeder]);
        let mut p = KernelParams::uniform(0.5, 48).unwrap();
        p.alpha = 0.0;
        let m = Kernel::new(&p, &o, &g).unwrap().build_matrix(0).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((m.get(i, j) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn three_node_path_ratio_by_hand() {
        let g = build_grid(&GridConfig {
            center_lat: 0.0,
            center_lon: 0.0,
            radius_km: 3.0 * 6.44,
            resolution: 6,
            lattice_offset: [0.0, 0.0],
        })
        .unwrap();
        let find = |q, r| g.cells.iter().position(|c| c.axial.q == q && c.axial.r == r).unwrap();
        let (a, b, c) = (find(-1, 0), find(0, 0), find(2, -1));
        let o = path_overlay(&g, &[a, b, c], &[EdgeClass::Backbone, EdgeClass::Metro]);
        let mut p = KernelParams::uniform(0.3, 48).unwrap();
        p.beta = 1.0;
        let m = Kernel::new(&p, &o, &g).unwrap().build_matrix(5).unwrap();
        let w_a = 1.5 / g.centroid_distance(a, b);
        let w_c = 2.0 / g.centroid_distance(c, b);
        let expected_a = 0.7 * w_a / (w_a + w_c);
        let expected_c = 0.7 * w_c / (w_a + w_c);
        assert!((m.get(a, b) - expected_a).abs() < 1e-14);
        assert!((m.get(c, b) - expected_c).abs() < 1e-14);
        assert_eq!(m.get(b, b), 0.3);
    }

    #[test]
    fn uniform_masses_are_one() {
        let (g, o) = network();
        let p = KernelParams::uniform(0.6, 48).unwrap();
        let k = Kernel::new(&p, &o, &g).unwrap();
        for t in [0, 17, 47] {
            for i in 0..g.len() {
                assert_eq!(k.node_mass(i, t), 1.0);
                assert_eq!(k.stay_probability(i, t), 0.6);
            }
        }
    }

    #[test]
    fn hub_mass_and_stay_compose() {
        let (g, o) = network();
        let mut p = KernelParams::uniform(0.8, 48).unwrap();
        p.mass.center = RampSchedule::constant(3.0, 48).unwrap();
        p.mass.periphery = RampSchedule::constant(3.0, 48).unwrap();
        p.hub_mass_factor = RampSchedule::constant(2.0, 48).unwrap();
        p.hub_stay_factor = RampSchedule::constant(1.5, 48).unwrap();
        let k = Kernel::new(&p, &o, &g).unwrap();
        let hub = o.hubs[0];
        assert_eq!(k.node_mass(hub, 3), 6.0);
        assert_eq!(k.stay_probability(hub, 3), STAY_MAX);
        let plain = (0..g.len()).find(|i| !o.is_hub(*i)).unwrap();
        assert_eq!(k.node_mass(plain, 3), 3.0);
        assert_eq!(k.stay_probability(plain, 3), 0.8);
    }

    #[test]
    fn periphery_mass_follows_schedule() {
        let (g, o) = network();
        let mut p = KernelParams::uniform(0.6, 48).unwrap();
        let ramp = RampSchedule::new(
            1.0,
            vec![
                Ramp { start: 12, end: 18, value: 4.0 },
                Ramp { start: 30, end: 40, value: 1.0 },
            ],
            48,
        )
        .unwrap();
        p.mass.periphery = ramp.clone();
        p.stay.periphery = RampSchedule::new(
            0.6,
            vec![
                Ramp { start: 10, end: 16, value: 0.3 },
                Ramp { start: 20, end: 24, value: 0.6 },
            ],
            48,
        )
        .unwrap();
        let k = Kernel::new(&p, &o, &g).unwrap();
        let node = (0..g.len()).find(|&i| !k.is_center_class(i) && !o.is_hub(i)).unwrap();
        for t in 0..48 {
            assert_eq!(k.node_mass(node, t), ramp.eval(t));
        }
        // 08:00 with 30-minute steps
        assert_eq!(k.stay_probability(node, 16), 0.3);
    }

    #[test]
    fn bias_factor_composition() {
        let (g, o) = network();
        let clock = DayClock::default();
        let mut p = KernelParams::uniform(0.6, 48).unwrap();
        p.bias.inward = ScheduleSpec {
            baseline: 1.0,
            ramps: vec![
                ("06:00".into(), "11:00".into(), 5.0),
                ("15:00".into(), "20:00".into(), 1.0),
            ],
        }
        .resolve(&clock)
        .unwrap();
        let k = Kernel::new(&p, &o, &g).unwrap();
        let inward = o.edges.iter().find(|e| e.sign == 1 && e.class != EdgeClass::Metro).unwrap();
        assert_eq!(k.bias_factor(inward, 22), 5.0);
        let neutral = OverlayEdge { sign: 0, ..*inward };
        assert_eq!(k.bias_factor(&neutral, 22), 1.0);

        p.bias.inward = RampSchedule::constant(2.0, 48).unwrap();
        p.metro = RampSchedule::constant(3.0, 48).unwrap();
        let k = Kernel::new(&p, &o, &g).unwrap();
        let metro = OverlayEdge {
            class: EdgeClass::Metro,
            sign: 1,
            ..*inward
        };
        assert_eq!(k.bias_factor(&metro, 7), 6.0);
    }

    #[test]
    fn columns_sum_to_one_and_support_matches_overlay() {
        let (g, o) = network();
        let p = KernelParams::uniform(0.6, 48).unwrap();
        let k = Kernel::new(&p, &o, &g).unwrap();
        for m in k.build_day().unwrap() {
            assert!(m.max_column_sum_error() <= 1e-12);
            for j in 0..g.len() {
                assert!(m.get(j, j) >= STAY_MIN);
                for i in (0..g.len()).filter(|&i| i != j) {
                    assert_eq!(m.get(i, j) > 0.0, o.edge(j, i).is_some(), "({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn origin_mass_and_k_cancel() {
        let (g, o) = network();
        let mut p = KernelParams::uniform(0.6, 48).unwrap();
        p.mass.center = RampSchedule::constant(2.0, 48).unwrap();
        let k = Kernel::new(&p, &o, &g).unwrap();
        let base = k.build_matrix(9).unwrap();
        for j in [0, 17, 50, 98] {
            let mut inputs = k.step_inputs(9);
            inputs.origin_mass[j] *= 10.0;
            let m = k.build_matrix_with(9, &inputs).unwrap();
            assert!((m.as_matrix() - base.as_matrix()).abs().max() <= 1e-12);
        }
        let mut inputs = k.step_inputs(9);
        inputs.k *= 10.0;
        let m = k.build_matrix_with(9, &inputs).unwrap();
        assert!((m.as_matrix() - base.as_matrix()).abs().max() <= 1e-12);
    }

    #[test]
    fn raising_inward_bias_shifts_shares_inward() {
        let (g, o) = network();
        let mut low = KernelParams::uniform(0.6, 48).unwrap();
        low.bias.inward = RampSchedule::constant(1.0, 48).unwrap();
        let mut high = low.clone();
        high.bias.inward = RampSchedule::constant(3.0, 48).unwrap();
        let m_low = Kernel::new(&low, &o, &g).unwrap().build_matrix(0).unwrap();
        let m_high = Kernel::new(&high, &o, &g).unwrap().build_matrix(0).unwrap();
        for e in &o.edges {
            let (a, b) = (m_low.get(e.to, e.from), m_high.get(e.to, e.from));
            match e.sign {
                1 => assert!(b >= a - 1e-15),
                -1 => assert!(b <= a + 1e-15),
                _ => {}
            }
        }
    }

    #[test]
    fn matrix_csv_round_trip() {
        let (g, o) = network();
        let p = KernelParams::uniform(0.6, 48).unwrap();
        let m = Kernel::new(&p, &o, &g).unwrap().build_matrix(3).unwrap();
        let ids: Vec<String> = g.cells.iter().map(|c| c.id.clone()).collect();
        let header = m.header(&ids);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = TransitionMatrix::read_csv(&header, buf.as_slice()).unwrap();
        assert_eq!(back, m);
        let json = serde_json::to_string(&header).unwrap();
        assert_eq!(serde_json::from_str::<MatrixHeader>(&json).unwrap(), header);
    }

    #[test]
    fn rejects_bad_exponents() {
        let mut p = KernelParams::uniform(0.6, 48).unwrap();
        p.beta = 0.0;
        assert!(p.validate().is_err());
        p.beta = 2.0;
        p.alpha = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn non_stochastic_matrix_rejected() {
        assert!(TransitionMatrix::from_columns(0, &[vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(TransitionMatrix::from_columns(0, &[vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
    }
}
