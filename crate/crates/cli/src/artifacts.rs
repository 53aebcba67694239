//! Subcommand implementations and the files they write.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pepsim::aggregate::{
    flow_totals, read_flow_csv, write_flow_csv, write_od_csv, EdgeFlow, FlowCounter, FlowDirection,
    OdAggregator,
};
use pepsim::geojson;
use pepsim::realize::{read_trajectory, Realizer, TrajectoryWriter, Window};
use pepsim::verify::{verify, EmpiricalAccumulator, VerificationReport};

use crate::config::RunConfig;
use crate::error::{io_at, CliError, CliResult};
use crate::pipeline::{Model, Network};

pub const MANIFEST: &str = "manifest.json";
pub const GRID_GEOJSON: &str = "grid.geojson";
pub const OVERLAY_GEOJSON: &str = "overlay.geojson";
pub const FIXED_POINT_CSV: &str = "fixed_point.csv";
pub const FIXED_POINT_GEOJSON: &str = "fixed_point.geojson";
pub const FIXED_POINT_JSON: &str = "fixed_point.json";
pub const MATRICES_DIR: &str = "matrices";
pub const TRAJECTORIES_CSV: &str = "trajectories.csv";
pub const TRAJECTORIES_JSON: &str = "trajectories.json";
pub const OD_CSV: &str = "od.csv";
pub const FLOWS_CSV: &str = "flows.csv";
pub const FLOWS_GEOJSON: &str = "flows.geojson";
pub const REPORT_JSON: &str = "report.json";

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_at(dir))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_at(path))
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_at(path))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(io_at(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(pepsim::Error::from)?;
    w.write_all(b"\n").map_err(io_at(path))?;
    finish(w, path)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    Ok(serde_json::from_reader(open(path)?).map_err(pepsim::Error::from)?)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub network_hash: String,
    pub n_nodes: usize,
    pub n_base_edges: usize,
    pub n_overlay_edges: usize,
    pub center: usize,
    pub hubs: Vec<usize>,
    pub hub_shortfall: bool,
    pub pitch_km: f64,
    pub hex_diameter_km: f64,
    pub node_ids: Vec<String>,
    /// SHA-256 of each file written alongside the manifest.
    pub files: BTreeMap<String, String>,
}

pub fn cmd_build(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    cfg.resolve()?;
    let net = Network::build(cfg)?;
    create_dir(out)?;
    let mut files = BTreeMap::new();
    let grid_path = out.join(GRID_GEOJSON);
    write_json(&grid_path, &geojson::grid_collection(&net.grid))?;
    files.insert(GRID_GEOJSON.to_string(), file_sha256(&grid_path)?);
    let overlay_path = out.join(OVERLAY_GEOJSON);
    write_json(
        &overlay_path,
        &geojson::overlay_collection(&net.grid, &net.overlay, &cfg.kernel.class_weights),
    )?;
    files.insert(OVERLAY_GEOJSON.to_string(), file_sha256(&overlay_path)?);
    let manifest = Manifest {
        network_hash: cfg.network_hash(),
        n_nodes: net.grid.len(),
        n_base_edges: net.grid.edge_count(),
        n_overlay_edges: net.overlay.edges.len(),
        center: net.overlay.center,
        hubs: net.overlay.hubs.clone(),
        hub_shortfall: net.overlay.hub_shortfall,
        pitch_km: net.grid.pitch_km,
        hex_diameter_km: net.grid.hex_diameter_km,
        node_ids: net.node_ids(),
        files,
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSummary {
    pub network_hash: String,
    pub residual: f64,
    pub iterations: usize,
    pub min: f64,
    pub sum: f64,
    pub steps_per_day: usize,
    pub max_column_sum_error: f64,
}

#[derive(Serialize)]
struct FixedPointRow<'a> {
    node: usize,
    id: &'a str,
    p_star: f64,
}

#[derive(Serialize)]
struct MatrixIndex<'a> {
    network_hash: String,
    layout: &'static str,
    node_ids: &'a [String],
    files: Vec<String>,
}

pub fn cmd_fixed_point(cfg: &RunConfig, out: &Path) -> CliResult<FixedPointSummary> {
    let resolved = cfg.resolve()?;
    let model = Model::build(cfg, &resolved)?;
    let fp = model.fixed_point()?;
    create_dir(out)?;
    let ids = model.network.node_ids();

    let path = out.join(FIXED_POINT_CSV);
    let mut w = csv::Writer::from_writer(create(&path)?);
    for (node, p) in fp.population.p.iter().enumerate() {
        w.serialize(FixedPointRow {
            node,
            id: &ids[node],
            p_star: *p,
        })
        .map_err(pepsim::Error::from)?;
    }
    w.flush().map_err(io_at(&path))?;
    write_json(
        &out.join(FIXED_POINT_GEOJSON),
        &geojson::node_value_collection(&model.network.grid, "p_star", &fp.population.p),
    )?;

    let mdir = out.join(MATRICES_DIR);
    create_dir(&mdir)?;
    let mut files = Vec::new();
    for m in &model.day {
        let name = format!("step_{:03}.csv", m.t);
        let path = mdir.join(&name);
        let w = create(&path)?;
        m.write_csv(w)?;
        files.push(name);
    }
    write_json(
        &mdir.join("index.json"),
        &MatrixIndex {
            network_hash: cfg.network_hash(),
            layout: "row i = destination, column j = origin",
            node_ids: &ids,
            files,
        },
    )?;

    let summary = FixedPointSummary {
        network_hash: cfg.network_hash(),
        residual: fp.residual,
        iterations: fp.iterations,
        min: fp.population.p.iter().copied().fold(f64::INFINITY, f64::min),
        sum: fp.population.total(),
        steps_per_day: model.day.len(),
        max_column_sum_error: model.day.iter().map(|m| m.max_column_sum_error()).fold(0.0, f64::max),
    };
    write_json(&out.join(FIXED_POINT_JSON), &summary)?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStamp {
    pub t: usize,
    pub start: String,
}

/// Sidecar describing a trajectory file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub config_hash: String,
    pub network_hash: String,
    pub seed: u64,
    pub peps: usize,
    pub window: Window,
    pub records: u64,
    pub self_hops_included: bool,
    pub attribution: bool,
    pub std_convention: String,
    pub steps: Vec<StepStamp>,
    pub od_rows: usize,
    pub flow_rows: usize,
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> CliResult<TrajectoryMeta> {
    let resolved = cfg.resolve()?;
    let model = Model::build(cfg, &resolved)?;
    let fp = model.fixed_point()?;
    let start = model.distribution_at(&fp.population, resolved.sim.window.start)?;
    create_dir(out)?;

    let traj_path = out.join(TRAJECTORIES_CSV);
    let mut writer = TrajectoryWriter::new(create(&traj_path)?);
    let mut od = OdAggregator::new(resolved.sim.window.start, cfg.sim.od_bucket_steps)?;
    let mut flows = FlowCounter::new(&model.network.overlay);
    let realizer = Realizer::new(
        &resolved.sim,
        &model.day,
        &model.network.grid,
        model.clock.step_seconds(),
    )?;
    let summary = realizer.run(&start.p, |batch| {
        writer.write_batch(batch)?;
        od.add(batch)?;
        flows.add(batch)
    })?;
    let w = writer.finish()?;
    finish(w, &traj_path)?;

    let od_rows = od.finish();
    let od_path = out.join(OD_CSV);
    let w = create(&od_path)?;
    write_od_csv(&od_rows, w)?;

    let flow_rows = flows.finish();
    let flow_path = out.join(FLOWS_CSV);
    write_flow_csv(&flow_rows, create(&flow_path)?)?;
    write_json(
        &out.join(FLOWS_GEOJSON),
        &geojson::flow_collection(&model.network.grid, &flow_rows),
    )?;

    let meta = TrajectoryMeta {
        config_hash: cfg.config_hash(),
        network_hash: cfg.network_hash(),
        seed: resolved.sim.seed,
        peps: resolved.sim.peps,
        window: resolved.sim.window,
        records: summary.records,
        self_hops_included: true,
        attribution: resolved.sim.attribution,
        std_convention: "population".into(),
        steps: resolved
            .sim
            .window
            .steps()
            .map(|t| StepStamp {
                t,
                start: resolved.step_start(&model.clock, t),
            })
            .collect(),
        od_rows: od_rows.len(),
        flow_rows: flow_rows.len(),
    };
    write_json(&out.join(TRAJECTORIES_JSON), &meta)?;
    Ok(meta)
}

fn check_meta(cfg: &RunConfig, out: &Path) -> CliResult<TrajectoryMeta> {
    let meta: TrajectoryMeta = read_json(&out.join(TRAJECTORIES_JSON))?;
    if meta.config_hash != cfg.config_hash() {
        return Err(CliError::Mismatch(format!(
            "{} was produced with config hash {} but the current config hashes to {}",
            TRAJECTORIES_CSV,
            meta.config_hash,
            cfg.config_hash()
        )));
    }
    Ok(meta)
}

pub fn cmd_verify(cfg: &RunConfig, out: &Path) -> CliResult<VerificationReport> {
    let resolved = cfg.resolve()?;
    check_meta(cfg, out)?;
    let model = Model::build(cfg, &resolved)?;
    let window = resolved.verify_window;
    let mut acc = EmpiricalAccumulator::new(model.n(), window);
    for hop in read_trajectory(open(&out.join(TRAJECTORIES_CSV))?) {
        acc.observe(&hop?)?;
    }
    let empirical = acc.finish()?;
    if !window.is_empty() && empirical.origin_counts.iter().sum::<u64>() != resolved.sim.peps as u64 {
        return Err(CliError::Mismatch(format!(
            "{} covers {} PEPs over the verify window, expected {}",
            TRAJECTORIES_CSV,
            empirical.origin_counts.iter().sum::<u64>(),
            resolved.sim.peps
        )));
    }
    let mut report = verify(&model.window_matrices(window), &empirical, window)?;
    report.seed = Some(resolved.sim.seed);
    report.config_hash = Some(cfg.config_hash());
    write_json(&out.join(REPORT_JSON), &report)?;
    Ok(report)
}

/// Table-style rendering of a report.
pub fn format_report(report: &VerificationReport) -> String {
    let mut s = format!(
        "K = {}, N = {}, window = [{}, {}) ({} steps), JS in nats\n",
        report.k,
        report.n,
        report.window.start,
        report.window.end,
        report.window.len()
    );
    for (name, value) in report.metrics.as_array() {
        s.push_str(&format!("  {name:<14} {value:.6e}\n"));
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSelection {
    pub path: PathBuf,
    pub direction: FlowDirection,
    pub t: usize,
    pub flows: Vec<EdgeFlow>,
    pub total_inward: u64,
    pub total_outward: u64,
}

/// Filters the simulated flows to one step and writes a GeoJSON layer whose `value` property is
/// the chosen direction.
pub fn cmd_flows(cfg: &RunConfig, out: &Path, direction: FlowDirection, t: usize) -> CliResult<FlowSelection> {
    cfg.resolve()?;
    let meta = check_meta(cfg, out)?;
    if !meta.window.contains(t) {
        return Err(CliError::Config(format!(
            "step {t} is outside the simulated window [{}, {})",
            meta.window.start, meta.window.end
        )));
    }
    let net = Network::build(cfg)?;
    let flows: Vec<EdgeFlow> = read_flow_csv(open(&out.join(FLOWS_CSV))?)?
        .into_iter()
        .filter(|f| f.t == t && direction.value(f) != 0)
        .collect();
    let (total_inward, total_outward) = flow_totals(&flows);
    let mut layer = geojson::flow_collection(&net.grid, &flows);
    if let Some(features) = layer["features"].as_array_mut() {
        for (feature, flow) in features.iter_mut().zip(&flows) {
            feature["properties"]["value"] = serde_json::json!(direction.value(flow));
            feature["properties"]["direction"] = serde_json::json!(direction.as_str());
        }
    }
    let path = out.join(format!("flows_{}_t{:03}.geojson", direction.as_str(), t));
    write_json(&path, &layer)?;
    Ok(FlowSelection {
        path,
        direction,
        t,
        flows,
        total_inward,
        total_outward,
    })
}
