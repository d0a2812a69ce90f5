//! Information spreading in heterogeneous device-to-device networks and
//! threat-aware design of per-layer deployment density and range.
//!
//! Units: coordinates and ranges in km, densities per km².

pub mod cli;
pub mod degree;
pub mod epidemic;
pub mod error;
pub mod geometry;
pub mod lp;
pub mod mission;
pub mod optimizer;
pub mod simulate;

pub use degree::{DegreeDistribution, DegreeModel, LayerSpec, StrandId};
pub use error::{Error, Result};
