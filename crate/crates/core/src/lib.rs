//! Synthetic mobility generator: PEP trajectories realized from time-dependent Markov dynamics
//! on a hexagonal grid with a hierarchical corridor overlay.

pub mod aggregate;
pub mod error;
pub mod evolution;
pub mod geojson;
pub mod grid;
pub mod kernel;
pub mod overlay;
pub mod realize;
pub mod schedule;
pub mod verify;

pub use error::{Error, Result};
