//! GeoJSON FeatureCollections for the grid, the overlay, node-level values and edge flows.
//! Coordinates are `[lon, lat]`.

use serde_json::{json, Map, Value};

use crate::aggregate::EdgeFlow;
use crate::grid::{BaseGraph, GeoPoint};
use crate::kernel::ClassWeights;
use crate::overlay::OverlayNetwork;

fn coord(p: GeoPoint) -> Value {
    json!([p.lon, p.lat])
}

fn collection(features: Vec<Value>) -> Value {
    json!({ "type": "FeatureCollection", "features": features })
}

fn hexagon_feature(g: &BaseGraph, i: usize, mut properties: Map<String, Value>) -> Value {
    properties.insert("node".into(), json!(i));
    properties.insert("id".into(), json!(g.cells[i].id));
    let ring: Vec<Value> = g.hexagon(i).into_iter().map(coord).collect();
    json!({
        "type": "Feature",
        "geometry": { "type": "Polygon", "coordinates": [ring] },
        "properties": properties,
    })
}

fn point_feature(g: &BaseGraph, i: usize, mut properties: Map<String, Value>) -> Value {
    properties.insert("node".into(), json!(i));
    properties.insert("id".into(), json!(g.cells[i].id));
    json!({
        "type": "Feature",
        "geometry": { "type": "Point", "coordinates": coord(g.cells[i].centroid) },
        "properties": properties,
    })
}

fn line_feature(g: &BaseGraph, from: usize, to: usize, properties: Map<String, Value>) -> Value {
    json!({
        "type": "Feature",
        "geometry": {
            "type": "LineString",
            "coordinates": [coord(g.cells[from].centroid), coord(g.cells[to].centroid)],
        },
        "properties": properties,
    })
}

fn props(pairs: &[(&str, Value)]) -> Map<String, Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// One hexagon polygon and one centroid point per cell.
pub fn grid_collection(g: &BaseGraph) -> Value {
    let mut features = Vec::with_capacity(2 * g.len());
    for i in 0..g.len() {
        let kind = json!("hexagon");
        features.push(hexagon_feature(g, i, props(&[("kind", kind)])));
    }
    for i in 0..g.len() {
        let p = props(&[("kind", json!("centroid")), ("degree", json!(g.neighbors[i].len()))]);
        features.push(point_feature(g, i, p));
    }
    collection(features)
}

/// Nodes with potential and role, and one line per undirected overlay edge oriented
/// `from < to`.
pub fn overlay_collection(g: &BaseGraph, o: &OverlayNetwork, weights: &ClassWeights) -> Value {
    let mut features = Vec::new();
    for i in 0..g.len() {
        let role = if i == o.center {
            "center"
        } else if o.is_hub(i) {
            "hub"
        } else {
            "node"
        };
        let p = props(&[
            ("kind", json!("node")),
            ("role", json!(role)),
            ("potential", json!(o.potentials[i])),
        ]);
        features.push(point_feature(g, i, p));
    }
    for e in o.edges.iter().filter(|e| e.from < e.to) {
        let p = props(&[
            ("kind", json!("edge")),
            ("from", json!(e.from)),
            ("to", json!(e.to)),
            ("class", json!(e.class.as_str())),
            ("secondary", json!(e.secondary)),
            ("sign", json!(e.sign)),
            ("omega", json!(weights.omega(e))),
            ("length_km", json!(g.centroid_distance(e.from, e.to))),
        ]);
        features.push(line_feature(g, e.from, e.to, p));
    }
    collection(features)
}

/// Hexagons carrying one named value per node.
pub fn node_value_collection(g: &BaseGraph, name: &str, values: &[f64]) -> Value {
    let features = values
        .iter()
        .enumerate()
        .map(|(i, v)| hexagon_feature(g, i, props(&[(name, json!(v))])))
        .collect();
    collection(features)
}

/// One line per flow record, drawn from `src` (outer) to `dst` (inner).
pub fn flow_collection(g: &BaseGraph, flows: &[EdgeFlow]) -> Value {
    let features = flows
        .iter()
        .map(|f| {
            let p = props(&[
                ("src", json!(f.src)),
                ("dst", json!(f.dst)),
                ("t", json!(f.t)),
                ("inward", json!(f.inward)),
                ("outward", json!(f.outward)),
                ("net", json!(f.net)),
            ]);
            line_feature(g, f.src, f.dst, p)
        })
        .collect();
    collection(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};
    use crate::overlay::{build_overlay, FeederMode, OverlaySpec};

    fn setup() -> (BaseGraph, OverlayNetwork) {
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

    fn features(v: &Value) -> &Vec<Value> {
        v["features"].as_array().unwrap()
    }

    #[test]
    fn grid_has_hexagon_and_point_per_cell() {
        let (g, _) = setup();
        let v = grid_collection(&g);
        let hexes = features(&v).iter().filter(|f| f["geometry"]["type"] == "Polygon").count();
        assert_eq!(hexes, 99);
        assert_eq!(features(&v).len(), 198);
        let ring = features(&v)[0]["geometry"]["coordinates"][0].as_array().unwrap();
        assert_eq!(ring.len(), 7);
        assert_eq!(ring[0], ring[6]);
        let lon = ring[0][0].as_f64().unwrap();
        assert!((-85.0..-84.0).contains(&lon));
    }

    #[test]
    fn overlay_edges_counted_once() {
        let (g, o) = setup();
        let v = overlay_collection(&g, &o, &ClassWeights::default());
        let lines = features(&v).iter().filter(|f| f["properties"]["kind"] == "edge").count();
        assert_eq!(lines * 2, o.edges.len());
        let centers = features(&v).iter().filter(|f| f["properties"]["role"] == "center").count();
        assert_eq!(centers, 1);
    }

    #[test]
    fn node_values_attached() {
        let (g, _) = setup();
        let values: Vec<f64> = (0..g.len()).map(|i| i as f64).collect();
        let v = node_value_collection(&g, "p_star", &values);
        assert_eq!(features(&v)[5]["properties"]["p_star"], 5.0);
    }
}
