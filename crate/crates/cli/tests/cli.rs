use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pepsim::aggregate::{read_od_csv, OdAggregator};
use pepsim::realize::{read_trajectory, HopRecord};
use pepsim::verify::VerificationReport;
use pepsim_cli::artifacts::{FixedPointSummary, Manifest, TrajectoryMeta};
use pepsim_cli::config::PAPER_DEFAULT;

fn pepsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pepsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = pepsim(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn build_is_deterministic_with_99_nodes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        ok(&["build", "--out", dir.path().to_str().unwrap()]);
    }
    let ma: Manifest = json(&a.path().join("manifest.json"));
    assert_eq!(ma.n_nodes, 99);
    assert_eq!(ma.node_ids.len(), 99);
    assert_eq!(
        fs::read(a.path().join("manifest.json")).unwrap(),
        fs::read(b.path().join("manifest.json")).unwrap()
    );
    let grid: serde_json::Value = json(&a.path().join("grid.geojson"));
    let hexes = grid["features"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|f| f["geometry"]["type"] == "Polygon")
        .count();
    assert_eq!(hexes, 99);
}

#[test]
fn overlapping_ramps_exit_2_naming_the_pair() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        PAPER_DEFAULT.replace("[\"15:00\", \"20:00\", 1.0]", "[\"10:00\", \"20:00\", 1.0]"),
    )
    .unwrap();
    let out = pepsim(&["build", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[12, 22]") && err.contains("[20, 40]"), "{err}");
}

#[test]
fn missing_config_exits_4_and_bad_toml_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(pepsim(&["build", "--config", missing.to_str().unwrap()]).status.code(), Some(4));
    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "[grid\nradius_km = ").unwrap();
    assert_eq!(pepsim(&["build", "--config", broken.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn fixed_point_contract() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["fixed-point", "--out", dir.path().to_str().unwrap()]);
    let s: FixedPointSummary = json(&dir.path().join("fixed_point.json"));
    assert!(s.residual <= 1e-12);
    assert!(s.min > 0.0);
    assert!((s.sum - 1.0).abs() <= 1e-12);
    assert_eq!(fs::read_dir(dir.path().join("matrices")).unwrap().count(), 49);
    let rows = fs::read_to_string(dir.path().join("fixed_point.csv")).unwrap();
    assert_eq!(rows.lines().count(), 100);
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--out", dir.to_str().unwrap(), "--pep-count", "3000"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_outputs_are_consistent_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), &["--seed", "5"]);
    simulate(b.path(), &["--seed", "5"]);
    for name in ["trajectories.csv", "od.csv", "flows.csv", "flows.geojson", "trajectories.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let meta: TrajectoryMeta = json(&a.path().join("trajectories.json"));
    assert_eq!(meta.records, 3000 * 6);
    assert_eq!(meta.steps[0].start, "2025-06-01T06:00:00");
    assert_eq!(meta.steps[5].start, "2025-06-01T08:30:00");

    let hops: Vec<HopRecord> = read_trajectory(fs::File::open(a.path().join("trajectories.csv")).unwrap())
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(hops.len(), 18_000);
    let od = read_od_csv(fs::File::open(a.path().join("od.csv")).unwrap()).unwrap();
    for t in 12..18 {
        assert_eq!(od.iter().filter(|r| r.t == t).map(|r| r.trips).sum::<u64>(), 3000);
    }
    // recomputing the OD file from the trajectory file reproduces it byte for byte
    let mut agg = OdAggregator::new(12, 1).unwrap();
    agg.add(&hops).unwrap();
    let mut buf = Vec::new();
    pepsim::aggregate::write_od_csv(&agg.finish(), &mut buf).unwrap();
    assert_eq!(buf, fs::read(a.path().join("od.csv")).unwrap());

    let c = tempfile::tempdir().unwrap();
    simulate(c.path(), &["--seed", "6"]);
    assert_ne!(
        fs::read(a.path().join("trajectories.csv")).unwrap(),
        fs::read(c.path().join("trajectories.csv")).unwrap()
    );
}

#[test]
fn verify_reads_back_and_detects_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    simulate(dir.path(), &["--seed", "9"]);
    let text = ok(&["verify", "--out", d, "--pep-count", "3000", "--seed", "9"]);
    assert!(text.contains("mean_col_js"));
    let report: VerificationReport = json(&dir.path().join("report.json"));
    assert_eq!(report.k, 3000);
    assert_eq!(report.n, 99);
    assert_eq!(report.seed, Some(9));
    let again: VerificationReport = serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
    assert_eq!(again, report);

    let out = pepsim(&["verify", "--out", d, "--pep-count", "3000", "--seed", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config hash"));
}

#[test]
fn zero_length_verify_window_is_all_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    fs::write(
        &cfg,
        PAPER_DEFAULT.replace("[verify]\nwindow = [\"06:00\", \"09:00\"]", "[verify]\nwindow = [\"07:00\", \"07:00\"]"),
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["simulate", "--config", c, "--out", d, "--pep-count", "500"]);
    ok(&["verify", "--config", c, "--out", d, "--pep-count", "500"]);
    let report: VerificationReport = json(&dir.path().join("report.json"));
    assert!(report.metrics.as_array().iter().all(|(_, v)| *v == 0.0));
}

#[test]
fn flows_subcommand_filters_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    simulate(dir.path(), &[]);
    let text = ok(&["flows", "--direction", "net", "--t", "17", "--out", d, "--pep-count", "3000"]);
    assert!(text.contains("totals inward"));
    let layer: serde_json::Value = json(&dir.path().join("flows_net_t017.geojson"));
    let features = layer["features"].as_array().unwrap();
    assert!(!features.is_empty());
    for f in features {
        assert_eq!(f["properties"]["t"], 17);
        assert_eq!(f["properties"]["value"], f["properties"]["net"]);
    }
    let out = pepsim(&["flows", "--direction", "inward", "--t", "30", "--out", d, "--pep-count", "3000"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn default_config_subcommand_prints_bundle() {
    assert_eq!(ok(&["default-config"]), PAPER_DEFAULT);
}
