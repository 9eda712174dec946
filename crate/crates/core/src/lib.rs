//! Numerical laboratory for `−Δu = Q_Ω f_p(u)` in `ℝ^N`, `p ∈ [1, 2)`, with
//! `Q_Ω = +1` on a bounded open set `Ω` and `−1` outside.

pub mod analysis;
pub mod config;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod experiments;
pub mod geometry;
pub mod grid;
pub mod nodal;
pub mod optimize;
pub mod overdetermined;
pub mod radial;
pub mod solver;

pub use energy::{EnergyFunctional, EnergyReport, Nonlinearity, SignClass};
pub use error::{Error, Result};
pub use geometry::{DomainShape, Isometry};
pub use grid::{Field, Grid, QField};
