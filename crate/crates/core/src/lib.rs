pub mod assembly;
pub mod error;
pub mod error_analysis;
pub mod geometry;
pub mod mesh;
pub mod poly;
pub mod quadrature;
pub mod solver;
pub mod space;
pub mod study;
pub mod vtk;

pub use error::{Error, Result};
