pub mod error;
pub mod barriers;
pub mod bilinear;
pub mod boltzmann;
pub mod calib;
pub mod covering;
pub mod geometry;
pub mod grid;
pub mod kernel;
pub mod kolmogorov;
pub mod quad;
pub mod simplex;
pub mod voxel;

pub use error::{Error, Result};
