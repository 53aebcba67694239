#![allow(dead_code)]

use pepsim::grid::{build_grid, BaseGraph, GridConfig};
use pepsim::kernel::{BiasSchedules, ClassSchedules, ClassWeights, Kernel, KernelParams, KernelSpec, TransitionMatrix};
use pepsim::overlay::{build_overlay, FeederMode, OverlayNetwork, OverlaySpec};
use pepsim::schedule::{DayClock, ScheduleSpec};

pub fn disc(radius_km: f64, offset: [f64; 2]) -> BaseGraph {
    build_grid(&GridConfig {
        center_lat: 33.749,
        center_lon: -84.388,
        radius_km,
        resolution: 6,
        lattice_offset: offset,
    })
    .unwrap()
}

/// The 99-cell reference grid.
pub fn reference_grid() -> BaseGraph {
    disc(33.6, [0.2, 0.1])
}

pub fn overlay(g: &BaseGraph, bands: usize, hubs: usize, sep: u32, mode: FeederMode) -> OverlayNetwork {
    build_overlay(
        g,
        &OverlaySpec {
            center_node: None,
            n_bands: bands,
            hubs_per_band: hubs,
            min_hub_separation_hops: sep,
            feeder_mode: mode,
        },
    )
    .unwrap()
}

pub fn reference_network() -> (BaseGraph, OverlayNetwork) {
    let g = reference_grid();
    let o = overlay(&g, 3, 2, 3, FeederMode::Single);
    (g, o)
}

/// Twelve cells with a 2-hub overlay.
pub fn small_network() -> (BaseGraph, OverlayNetwork) {
    let g = disc(11.6, [0.4, 0.2]);
    assert_eq!(g.len(), 12);
    let o = overlay(&g, 2, 1, 2, FeederMode::Single);
    (g, o)
}

fn s(baseline: f64, ramps: &[(&str, &str, f64)]) -> ScheduleSpec {
    ScheduleSpec {
        baseline,
        ramps: ramps.iter().map(|(a, b, v)| (a.to_string(), b.to_string(), *v)).collect(),
    }
}

pub const MORNING_INWARD: &[(&str, &str, f64)] = &[("06:00", "11:00", 5.0), ("15:00", "20:00", 1.0)];
pub const EVENING_OUTWARD: &[(&str, &str, f64)] = &[("15:00", "18:00", 5.0), ("20:00", "23:00", 1.0)];

/// Mirrors the bundled reference kernel.
pub fn reference_spec() -> KernelSpec {
    KernelSpec {
        alpha: 1.0,
        beta: 2.0,
        center_class_max_potential: 1,
        stay: ClassSchedules {
            center: s(0.8, &[("06:00", "08:00", 0.6), ("09:00", "10:00", 0.8)]),
            periphery: s(0.8, &[("06:00", "07:30", 0.55), ("09:30", "11:00", 0.8)]),
        },
        mass: ClassSchedules {
            center: s(3.0, &[]),
            periphery: s(1.0, &[]),
        },
        hub_stay_factor: s(1.0, &[]),
        hub_mass_factor: s(2.0, &[]),
        class_weights: ClassWeights::default(),
        metro: s(1.0, &[("06:00", "07:00", 1.5), ("10:00", "11:00", 1.0)]),
        bias: BiasSchedules {
            inward: s(1.0, MORNING_INWARD),
            outward: s(1.0, EVENING_OUTWARD),
            neutral: s(1.0, &[]),
        },
        k: s(1.0, &[]),
    }
}

pub fn reference_params() -> KernelParams {
    reference_spec().resolve(&DayClock::default()).unwrap()
}

pub fn day(params: &KernelParams, g: &BaseGraph, o: &OverlayNetwork) -> Vec<TransitionMatrix> {
    Kernel::new(params, o, g).unwrap().build_day().unwrap()
}
