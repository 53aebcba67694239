//! Pipeline stages shared by the subcommands.

use pepsim::evolution::{compose_day, fixed_point, population_at, FixedPoint, PopulationVector, DEFAULT_MAX_ITER, DEFAULT_TOL};
use pepsim::grid::{build_grid, BaseGraph};
use pepsim::kernel::{Kernel, KernelParams, TransitionMatrix};
use pepsim::overlay::{build_overlay, OverlayNetwork};
use pepsim::realize::Window;
use pepsim::schedule::DayClock;

use crate::config::{Resolved, RunConfig};
use crate::error::CliResult;

pub struct Network {
    pub grid: BaseGraph,
    pub overlay: OverlayNetwork,
}

impl Network {
    pub fn build(cfg: &RunConfig) -> CliResult<Self> {
        cfg.grid.validate()?;
        let grid = build_grid(&cfg.grid)?;
        let overlay = build_overlay(&grid, &cfg.overlay)?;
        Ok(Network { grid, overlay })
    }

    pub fn node_ids(&self) -> Vec<String> {
        self.grid.cells.iter().map(|c| c.id.clone()).collect()
    }
}

/// Network plus the matrices of one full day.
pub struct Model {
    pub network: Network,
    pub clock: DayClock,
    pub params: KernelParams,
    pub day: Vec<TransitionMatrix>,
}

impl Model {
    pub fn build(cfg: &RunConfig, resolved: &Resolved) -> CliResult<Self> {
        let network = Network::build(cfg)?;
        Self::from_parts(network, cfg.clock, resolved.params.clone())
    }

    pub fn from_parts(network: Network, clock: DayClock, params: KernelParams) -> CliResult<Self> {
        let day = Kernel::new(&params, &network.overlay, &network.grid)?.build_day()?;
        Ok(Model {
            network,
            clock,
            params,
            day,
        })
    }

    pub fn n(&self) -> usize {
        self.network.grid.len()
    }

    /// Periodic fixed point of the daily matrix, as the distribution at step 0.
    pub fn fixed_point(&self) -> CliResult<FixedPoint> {
        let q = compose_day(&self.day, self.clock.steps_per_day)?;
        Ok(fixed_point(&q, DEFAULT_TOL, DEFAULT_MAX_ITER)?)
    }

    /// The fixed point carried forward to absolute step `t`.
    pub fn distribution_at(&self, p_star: &PopulationVector, t: usize) -> CliResult<PopulationVector> {
        Ok(population_at(p_star, &self.day, t)?)
    }

    /// The matrices for each step of `window`, stamped with absolute steps.
    pub fn window_matrices(&self, window: Window) -> Vec<TransitionMatrix> {
        window
            .steps()
            .map(|t| self.day[t % self.day.len()].with_step(t))
            .collect()
    }
}
