//! Convex integration of C¹ partial isometries on the two-torus.
//!
//! A sub-Riemannian structure `(H, g_H)` on a periodic box is given by a frame
//! of the distribution and a metric in that frame. Starting from a strictly
//! short H-immersion, the library repeatedly halves and decomposes the metric
//! defect, corrugates once per primitive term, and certifies every step with
//! the defect norm and the C¹ distance measured on refined grids.
//!
//! The runnable programs under `examples/` walk through each capability:
//! certification of the embedded torus, a single corrugation step, the stage
//! loop, the smooth line-field solver, projection search, decomposition, and
//! persistence of layer stacks.

pub mod bessel;
pub mod cli;
pub mod corrugation;
pub mod decomposition;
pub mod domain;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod map;
pub mod pipeline;
pub mod profile;
pub mod smooth_solver;
pub mod spline;
pub mod verify;

pub use error::{Error, Point, Result};
