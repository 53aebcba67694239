//! Synthetic hexagonal tessellation of a disc-shaped region.
//!
//! Cells live on an axial hex lattice laid out in a local tangent plane around
//! the region center. Plane coordinates are mapped to latitude/longitude with an
//! equirectangular projection, which is accurate to well under a percent at
//! metropolitan scale. Region membership is decided in the plane: a cell is kept
//! when its centroid lies within `radius_km` of the center.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius (IUGG), kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Adjacent-centroid distance at resolution 6.
const PITCH_RES6_KM: f64 = 6.44;

const MAX_RESOLUTION: u8 = 15;

/// Axial neighbor offsets, counter-clockwise starting east.
const AXIAL_DIRECTIONS: [(i32, i32); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub center_lat: f64,
    pub center_lon: f64,
    pub radius_km: f64,
    pub resolution: u8,
    /// Position of the lattice origin relative to the region center, in units of
    /// the lattice pitch (east, north).
    #[serde(default)]
    pub lattice_offset: [f64; 2],
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_km.is_finite() && self.radius_km > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grid.radius_km must be positive, got {}",
                self.radius_km
            )));
        }
        if !(-85.0..=85.0).contains(&self.center_lat) || !(-180.0..=180.0).contains(&self.center_lon)
        {
            return Err(Error::InvalidConfig(format!(
                "grid center ({}, {}) outside the supported latitude/longitude range",
                self.center_lat, self.center_lon
            )));
        }
        if self.lattice_offset.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidConfig("grid.lattice_offset must be finite".into()));
        }
        pitch_for_resolution(self.resolution).map(|_| ())
    }
}

/// Centroid pitch for a resolution: 6.44 km at resolution 6, scaling by sqrt(7)
/// per level like aperture-7 hierarchical hex grids.
pub fn pitch_for_resolution(resolution: u8) -> Result<f64> {
    if resolution > MAX_RESOLUTION {
        return Err(Error::InvalidConfig(format!(
            "resolution {resolution} outside the pitch table (0..={MAX_RESOLUTION})"
        )));
    }
    let levels = 6 - i32::from(resolution);
    Ok(PITCH_RES6_KM * 7f64.sqrt().powi(levels))
}

/// Hexagon diameter (twice the circumradius) for a lattice of the given pitch.
pub fn hex_diameter_for_pitch(pitch_km: f64) -> f64 {
    2.0 * pitch_km / 3f64.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Great-circle distance in kilometers.
    pub fn haversine_km(&self, other: &GeoPoint) -> f64 {
        let (lat1, lat2) = (self.lat.to_radians(), other.lat.to_radians());
        let dlat = lat2 - lat1;
        let dlon = (other.lon - self.lon).to_radians();
        let a = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
        2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Axial {
    pub q: i32,
    pub r: i32,
}

impl Axial {
    pub fn new(q: i32, r: i32) -> Self {
        Axial { q, r }
    }

    pub fn neighbors(self) -> impl Iterator<Item = Axial> {
        AXIAL_DIRECTIONS
            .iter()
            .map(move |&(dq, dr)| Axial::new(self.q + dq, self.r + dr))
    }

    /// Hex metric on the lattice.
    pub fn distance(self, other: Axial) -> u32 {
        let dq = self.q - other.q;
        let dr = self.r - other.r;
        dq.unsigned_abs()
            .max(dr.unsigned_abs())
            .max((dq + dr).unsigned_abs())
    }

    /// Plane position in units of pitch, lattice origin at (0, 0).
    fn unit_plane(self) -> [f64; 2] {
        let q = f64::from(self.q);
        let r = f64::from(self.r);
        [q + r / 2.0, r * 3f64.sqrt() / 2.0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: String,
    pub centroid: GeoPoint,
    pub axial: Axial,
}

/// Undirected hex adjacency over the cells of a region.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseGraph {
    pub cells: Vec<Cell>,
    pub neighbors: Vec<Vec<usize>>,
    /// Mean great-circle distance between adjacent centroids.
    pub pitch_km: f64,
    /// Lattice pitch from the resolution table.
    pub nominal_pitch_km: f64,
    pub hex_diameter_km: f64,
    pub resolution: u8,
    plane: Vec<[f64; 2]>,
    projection: Projection,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Projection {
    lat0: f64,
    lon0: f64,
}

impl Projection {
    fn to_geo(self, xy: [f64; 2]) -> GeoPoint {
        let lat = self.lat0 + (xy[1] / EARTH_RADIUS_KM).to_degrees();
        let lon = self.lon0 + (xy[0] / (EARTH_RADIUS_KM * self.lat0.to_radians().cos())).to_degrees();
        GeoPoint { lat, lon }
    }
}

pub fn build_grid(config: &GridConfig) -> Result<BaseGraph> {
    config.validate()?;
    let pitch = pitch_for_resolution(config.resolution)?;
    let projection = Projection {
        lat0: config.center_lat,
        lon0: config.center_lon,
    };
    let [ox, oy] = config.lattice_offset;
    let reach = (config.radius_km / pitch * 2.0 / 3f64.sqrt()).ceil() as i32
        + ox.abs().ceil() as i32
        + oy.abs().ceil() as i32
        + 2;
    let limit = config.radius_km * (1.0 + 1e-12);

    let mut members: Vec<(Axial, [f64; 2])> = Vec::new();
    for q in -reach..=reach {
        for r in -reach..=reach {
            let axial = Axial::new(q, r);
            let [ux, uy] = axial.unit_plane();
            let xy = [(ux + ox) * pitch, (uy + oy) * pitch];
            if xy[0].hypot(xy[1]) <= limit {
                members.push((axial, xy));
            }
        }
    }
    if members.len() < 2 {
        return Err(Error::DegenerateRegion {
            cells: members.len(),
        });
    }
    members.sort_by_key(|(axial, _)| *axial);

    let index: HashMap<Axial, usize> = members
        .iter()
        .enumerate()
        .map(|(i, (axial, _))| (*axial, i))
        .collect();
    let cells: Vec<Cell> = members
        .iter()
        .map(|(axial, xy)| Cell {
            id: format!("hx{}:{}:{}", config.resolution, axial.q, axial.r),
            centroid: projection.to_geo(*xy),
            axial: *axial,
        })
        .collect();
    let neighbors: Vec<Vec<usize>> = members
        .iter()
        .map(|(axial, _)| {
            let mut adj: Vec<usize> = axial.neighbors().filter_map(|n| index.get(&n).copied()).collect();
            adj.sort_unstable();
            adj
        })
        .collect();

    let mut pitch_sum = 0.0;
    let mut pairs = 0usize;
    for (i, adj) in neighbors.iter().enumerate() {
        for &j in adj.iter().filter(|&&j| j > i) {
            pitch_sum += cells[i].centroid.haversine_km(&cells[j].centroid);
            pairs += 1;
        }
    }

    let graph = BaseGraph {
        cells,
        neighbors,
        pitch_km: if pairs > 0 { pitch_sum / pairs as f64 } else { pitch },
        nominal_pitch_km: pitch,
        hex_diameter_km: hex_diameter_for_pitch(pitch),
        resolution: config.resolution,
        plane: members.into_iter().map(|(_, xy)| xy).collect(),
        projection,
    };
    let reached = graph.hop_distances(0).iter().filter(|d| d.is_some()).count();
    if reached != graph.len() {
        return Err(Error::InvalidConfig(format!(
            "region lattice is disconnected ({reached} of {} cells reachable)",
            graph.len()
        )));
    }
    Ok(graph)
}

impl BaseGraph {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.len() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                index,
                len: self.len(),
            })
        }
    }

    pub fn centroid_distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.cells[i].centroid.haversine_km(&self.cells[j].centroid)
    }

    /// Unweighted BFS hop count on the base adjacency.
    pub fn graph_distance(&self, i: usize, j: usize) -> u32 {
        self.hop_distances(i)[j].expect("base graph is connected")
    }

    /// BFS hop counts from `source`; `None` marks unreachable nodes.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.len()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let next = dist[u].map(|d| d + 1);
            for &v in &self.neighbors[u] {
                if dist[v].is_none() {
                    dist[v] = next;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Tangent-plane position of a centroid in kilometers east/north of the region center.
    pub fn plane_position(&self, i: usize) -> [f64; 2] {
        self.plane[i]
    }

    /// Node whose centroid is closest (in the tangent plane) to the mean centroid; ties go to
    /// the lowest index.
    pub fn node_nearest_centroid(&self) -> usize {
        let n = self.len() as f64;
        let (sx, sy) = self
            .plane
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        let mean = [sx / n, sy / n];
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.plane.iter().enumerate() {
            let d = (p[0] - mean[0]).hypot(p[1] - mean[1]);
            if d < best_d - 1e-9 {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Hexagon corner points (closed ring) for a cell, as geographic coordinates.
    pub fn hexagon(&self, i: usize) -> Vec<GeoPoint> {
        let circumradius = self.nominal_pitch_km / 3f64.sqrt();
        let [cx, cy] = self.plane[i];
        let mut ring: Vec<GeoPoint> = (0..6)
            .map(|k| {
                let angle = (30.0 + 60.0 * k as f64).to_radians();
                self.projection
                    .to_geo([cx + circumradius * angle.cos(), cy + circumradius * angle.sin()])
            })
            .collect();
        ring.push(ring[0]);
        ring
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}
