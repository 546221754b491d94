//! Open dispersing billiards: forward simulation of the marked length and
//! Lyapunov spectra, and their inversion back to geometry.
//!
//! The table is the exterior of m >= 3 strictly convex obstacles satisfying
//! the non-eclipse condition. Periodic orbits are marked by admissible symbol
//! words; the solver realizes each word as the minimizer of the polygonal
//! length functional, and the inverse module recovers eigenvalues, curvature
//! radii and (for all-disc tables) the full geometry from length data alone.

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod inverse;
pub mod plot;
pub mod real;
pub mod solver;
pub mod spectrum;
pub mod symbolic;

pub use error::{Error, Result};
