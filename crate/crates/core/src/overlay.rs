//! Hierarchical routing overlay: reference center, hubs, corridor backbone,
//! feeder paths and metro links, plus node potentials and edge orientation.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BaseGraph;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeederMode {
    #[default]
    Single,
    Multi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlaySpec {
    /// Defaults to the node nearest the mean centroid.
    #[serde(default)]
    pub center_node: Option<usize>,
    pub n_bands: usize,
    pub hubs_per_band: usize,
    pub min_hub_separation_hops: u32,
    #[serde(default)]
    pub feeder_mode: FeederMode,
}

impl OverlaySpec {
    pub fn validate(&self, nodes: usize) -> Result<()> {
        if self.n_bands == 0 || self.hubs_per_band == 0 {
            return Err(Error::InvalidConfig(
                "overlay.n_bands and overlay.hubs_per_band must be positive".into(),
            ));
        }
        if self.n_bands * self.hubs_per_band >= nodes {
            return Err(Error::InvalidConfig(format!(
                "overlay requests {} hubs on a {nodes}-node grid",
                self.n_bands * self.hubs_per_band
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeClass {
    Feeder,
    Backbone,
    Metro,
}

impl EdgeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeClass::Feeder => "feeder",
            EdgeClass::Backbone => "backbone",
            EdgeClass::Metro => "metro",
        }
    }
}

/// Undirected overlay link under construction. Stored with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Link {
    pub class: EdgeClass,
    /// Only feeder paths to a second-nearest hub are secondary.
    pub secondary: bool,
}

/// Undirected link set keyed by `(min, max)` node pair. When a pair is labeled twice the
/// stronger class wins (metro > backbone > feeder) and primary beats secondary.
pub type LinkSet = BTreeMap<(usize, usize), Link>;

fn insert_link(links: &mut LinkSet, a: usize, b: usize, link: Link) {
    let key = (a.min(b), a.max(b));
    links
        .entry(key)
        .and_modify(|old| {
            if link.class > old.class {
                *old = link;
            } else if link.class == old.class {
                old.secondary &= link.secondary;
            }
        })
        .or_insert(link);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayEdge {
    /// Origin node j.
    pub from: usize,
    /// Destination node i.
    pub to: usize,
    pub class: EdgeClass,
    pub secondary: bool,
    /// sign(psi_from - psi_to): +1 inward, -1 outward, 0 neutral.
    pub sign: i8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverlayNetwork {
    pub center: usize,
    pub hubs: Vec<usize>,
    /// Directed edges sorted by (from, to); every edge has its reverse.
    pub edges: Vec<OverlayEdge>,
    /// Hop distance to the center on the base adjacency.
    pub potentials: Vec<u32>,
    /// Outgoing edge indices per origin node.
    pub out_edges: Vec<Vec<usize>>,
    /// Set when some band could not host its requested hub count.
    pub hub_shortfall: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HubSelection {
    pub hubs: Vec<usize>,
    pub shortfall: bool,
}

pub fn resolve_center(g: &BaseGraph, spec: &OverlaySpec) -> Result<usize> {
    match spec.center_node {
        Some(c) => {
            g.check_index(c)?;
            Ok(c)
        }
        None => Ok(g.node_nearest_centroid()),
    }
}

fn plane_distance(g: &BaseGraph, a: usize, b: usize) -> f64 {
    let pa = g.plane_position(a);
    let pb = g.plane_position(b);
    (pa[0] - pb[0]).hypot(pa[1] - pb[1])
}

/// Stratified farthest-first hub selection.
///
/// Nodes other than the center are split into `n_bands` annuli of equal width by centroid
/// distance to the center. Bands are filled inner to outer; within a band each pick maximizes
/// the hop distance to the nearest already-chosen hub (or the center), skipping candidates
/// closer than `min_hub_separation_hops` to any chosen hub. Ties go to the lowest index.
pub fn select_hubs(g: &BaseGraph, spec: &OverlaySpec, center: usize) -> Result<HubSelection> {
    g.check_index(center)?;
    spec.validate(g.len())?;
    let radial: Vec<f64> = (0..g.len()).map(|i| plane_distance(g, i, center)).collect();
    let max_radius = radial.iter().cloned().fold(0.0, f64::max);
    let band_of = |i: usize| -> usize {
        let band = (radial[i] / max_radius * spec.n_bands as f64).ceil() as usize;
        band.clamp(1, spec.n_bands) - 1
    };

    let mut hop_rows: Vec<Vec<u32>> = Vec::new();
    let mut hubs: Vec<usize> = Vec::new();
    let mut nearest: Vec<u32> = g
        .hop_distances(center)
        .into_iter()
        .map(|d| d.expect("connected"))
        .collect();
    let mut shortfall = false;

    for band in 0..spec.n_bands {
        let candidates: Vec<usize> = (0..g.len())
            .filter(|&i| i != center && band_of(i) == band)
            .collect();
        for _ in 0..spec.hubs_per_band {
            let pick = candidates
                .iter()
                .copied()
                .filter(|i| !hubs.contains(i))
                .filter(|&i| hop_rows.iter().all(|row| row[i] >= spec.min_hub_separation_hops))
                .max_by(|&a, &b| nearest[a].cmp(&nearest[b]).then(b.cmp(&a)));
            let Some(hub) = pick else {
                shortfall = true;
                break;
            };
            let row: Vec<u32> = g
                .hop_distances(hub)
                .into_iter()
                .map(|d| d.expect("connected"))
                .collect();
            for (n, d) in nearest.iter_mut().zip(&row) {
                *n = (*n).min(*d);
            }
            hop_rows.push(row);
            hubs.push(hub);
        }
    }
    Ok(HubSelection { hubs, shortfall })
}

/// BFS tree toward `root`: each node's parent is its lowest-index neighbor one hop closer.
fn shortest_path_parents(g: &BaseGraph, root: usize) -> (Vec<u32>, Vec<Option<usize>>) {
    let dist: Vec<u32> = g
        .hop_distances(root)
        .into_iter()
        .map(|d| d.expect("connected"))
        .collect();
    let parents = (0..g.len())
        .map(|i| {
            if i == root {
                None
            } else {
                g.neighbors[i].iter().copied().find(|&n| dist[n] + 1 == dist[i])
            }
        })
        .collect();
    (dist, parents)
}

fn path_to_root(parents: &[Option<usize>], from: usize) -> Vec<usize> {
    let mut path = vec![from];
    let mut cur = from;
    while let Some(p) = parents[cur] {
        path.push(p);
        cur = p;
    }
    path
}

/// Union of one shortest hub-to-center path per hub, labeled backbone.
pub fn build_backbone(g: &BaseGraph, hubs: &[usize], center: usize) -> LinkSet {
    let (_, parents) = shortest_path_parents(g, center);
    let mut links = LinkSet::new();
    for &hub in hubs {
        for pair in path_to_root(&parents, hub).windows(2) {
            insert_link(
                &mut links,
                pair[0],
                pair[1],
                Link {
                    class: EdgeClass::Backbone,
                    secondary: false,
                },
            );
        }
    }
    links
}

/// Shortest paths from every non-hub, non-center node to its nearest hub (and, in multi mode,
/// its second-nearest hub as a secondary attachment).
pub fn build_feeders(g: &BaseGraph, hubs: &[usize], center: usize, mode: FeederMode) -> LinkSet {
    let trees: Vec<(Vec<u32>, Vec<Option<usize>>)> =
        hubs.iter().map(|&h| shortest_path_parents(g, h)).collect();
    let attachments = match mode {
        FeederMode::Single => 1,
        FeederMode::Multi => 2,
    };
    let mut links = LinkSet::new();
    for node in (0..g.len()).filter(|n| *n != center && !hubs.contains(n)) {
        let mut order: Vec<usize> = (0..hubs.len()).collect();
        order.sort_by_key(|&k| (trees[k].0[node], hubs[k]));
        for (rank, &k) in order.iter().take(attachments).enumerate() {
            for pair in path_to_root(&trees[k].1, node).windows(2) {
                insert_link(
                    &mut links,
                    pair[0],
                    pair[1],
                    Link {
                        class: EdgeClass::Feeder,
                        secondary: rank > 0,
                    },
                );
            }
        }
    }
    links
}

/// Hub tree toward the center: every hub links to the geometrically nearest hub that is
/// strictly closer to the center. Radial ties are ordered by node index so the hub graph is
/// always a single tree rooted at the innermost hub.
pub fn build_metro(g: &BaseGraph, hubs: &[usize], center: usize) -> LinkSet {
    let radial = |h: usize| plane_distance(g, h, center);
    let closer = |a: usize, b: usize| {
        let (ra, rb) = (radial(a), radial(b));
        if (ra - rb).abs() > 1e-9 {
            ra < rb
        } else {
            a < b
        }
    };
    let mut links = LinkSet::new();
    for &h in hubs {
        let target = hubs
            .iter()
            .copied()
            .filter(|&o| o != h && closer(o, h))
            .min_by(|&a, &b| {
                plane_distance(g, h, a)
                    .partial_cmp(&plane_distance(g, h, b))
                    .expect("finite")
                    .then(a.cmp(&b))
            });
        if let Some(t) = target {
            insert_link(
                &mut links,
                h,
                t,
                Link {
                    class: EdgeClass::Metro,
                    secondary: false,
                },
            );
        }
    }
    links
}

/// Symmetrizes the links into directed edges, assigns potentials and signs, and checks strong
/// connectivity.
pub fn finalize(
    g: &BaseGraph,
    center: usize,
    hubs: Vec<usize>,
    link_sets: &[LinkSet],
    hub_shortfall: bool,
) -> Result<OverlayNetwork> {
    let mut merged = LinkSet::new();
    for set in link_sets {
        for (&(a, b), &link) in set {
            insert_link(&mut merged, a, b, link);
        }
    }
    let potentials: Vec<u32> = g
        .hop_distances(center)
        .into_iter()
        .map(|d| d.expect("connected"))
        .collect();

    let mut edges = Vec::with_capacity(merged.len() * 2);
    for (&(a, b), link) in &merged {
        for (from, to) in [(a, b), (b, a)] {
            edges.push(OverlayEdge {
                from,
                to,
                class: link.class,
                secondary: link.secondary,
                sign: sign_of(potentials[from], potentials[to]),
            });
        }
    }
    edges.sort_by_key(|e| (e.from, e.to));
    let mut out_edges = vec![Vec::new(); g.len()];
    for (k, e) in edges.iter().enumerate() {
        out_edges[e.from].push(k);
    }

    let network = OverlayNetwork {
        center,
        hubs,
        edges,
        potentials,
        out_edges,
        hub_shortfall,
    };
    let reachable = network.reachable_from(center);
    if reachable != g.len() {
        return Err(Error::NotStronglyConnected {
            reachable,
            total: g.len(),
        });
    }
    Ok(network)
}

fn sign_of(psi_from: u32, psi_to: u32) -> i8 {
    match psi_from.cmp(&psi_to) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => -1,
        std::cmp::Ordering::Equal => 0,
    }
}

/// Runs the full construction: hubs, backbone, feeders, metro, finalize.
pub fn build_overlay(g: &BaseGraph, spec: &OverlaySpec) -> Result<OverlayNetwork> {
    spec.validate(g.len())?;
    let center = resolve_center(g, spec)?;
    let selection = select_hubs(g, spec, center)?;
    if selection.hubs.is_empty() {
        return Err(Error::InvalidConfig(
            "hub selection produced no hubs; relax overlay.min_hub_separation_hops".into(),
        ));
    }
    let backbone = build_backbone(g, &selection.hubs, center);
    let feeders = build_feeders(g, &selection.hubs, center, spec.feeder_mode);
    let metro = build_metro(g, &selection.hubs, center);
    finalize(
        g,
        center,
        selection.hubs,
        &[feeders, backbone, metro],
        selection.shortfall,
    )
}

impl OverlayNetwork {
    pub fn len(&self) -> usize {
        self.potentials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.potentials.is_empty()
    }

    pub fn is_hub(&self, node: usize) -> bool {
        self.hubs.contains(&node)
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&OverlayEdge> {
        self.out_edges[from]
            .iter()
            .map(|&k| &self.edges[k])
            .find(|e| e.to == to)
    }

    pub fn out_neighbors(&self, from: usize) -> impl Iterator<Item = usize> + '_ {
        self.out_edges[from].iter().map(move |&k| self.edges[k].to)
    }

    /// Number of nodes reachable from `source` along directed overlay edges.
    pub fn reachable_from(&self, source: usize) -> usize {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([source]);
        seen[source] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for v in self.out_neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count
    }

    pub fn count_class(&self, class: EdgeClass) -> usize {
        self.edges.iter().filter(|e| e.class == class).count()
    }
}
