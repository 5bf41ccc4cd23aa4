//! Simulation and learned optimization of RIS-assisted downlinks served by
//! pinching antennas on parallel dielectric waveguides.

pub mod autodiff;
pub mod beamform;
pub mod channel;
pub mod error;
pub mod feasible;
pub mod gnn;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod objective;
pub mod scenario;
pub mod train;

pub use error::{Error, Result};
