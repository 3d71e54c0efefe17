//! Numerical laboratory for the Katok map: the slowed-down cat map on the torus,
//! its area-correcting change of coordinates, and sampled checks of its hyperbolicity,
//! tower structure and thermodynamics.

pub mod bounds;
pub mod cli;
pub mod cones;
pub mod error;
pub mod katok;
pub mod numerics;
pub mod params;
pub mod slowdown;
pub mod symbolic;
pub mod thermo;
pub mod tower;

pub use error::{KatokError, Result};
pub use katok::{Branch, KatokMap, MapEvaluation};
pub use params::{EigenPoint, Jacobian2, KatokParams, TorusPoint};
