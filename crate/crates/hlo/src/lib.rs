//! Hopf–Lax–Oleinik solvers for the Burgers equation on a half line and for
//! its Schwarzschild analogue outside a boundary radius r*, together with a
//! stochastic boundary-forcing lab (action rate, pullback attraction) and a
//! Godunov finite-volume reference solver.

pub mod characteristics;
pub mod cli;
pub mod config;
pub mod ergodics;
pub mod error;
pub mod field;
pub mod forcing;
pub mod geometry;
pub mod hlo_flat;
pub mod hlo_schwarzschild;
pub mod oracle_fv;
pub mod potential;
pub mod transport;

pub use error::{HloError, Result};
pub use geometry::Background;
