//! Extreme-heat probabilities from ensemble forecasts on a cube-sphere grid.
//!
//! Member anomalies are turned into exceedance scores and pooled with a
//! power mean whose exponent is tuned against observed labels.

pub mod aggregate;
pub mod climatology;
pub mod error;
pub mod experiment;
pub mod field;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod noise;
pub mod seed;
pub mod synth;
pub mod tuner;

pub use error::{Error, Result};
pub use field::Field;
pub use grid::{CellCoord, GridSpec, LatLon};
