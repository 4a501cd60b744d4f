pub mod convolve;
pub mod edt;
pub mod error;
pub mod grid;
pub mod io;
pub mod par;

pub use error::{FlowError, Result};
pub mod eikonal;
pub mod temperature;
pub mod trajectories;
pub mod geometry;
pub mod heat;
pub mod coupling;
pub mod config;
