//! Numerical core for modulated kinetic alignment systems on the 1-D torus.
//!
//! The crate is `no_std` and needs only `alloc`. It contains the grids and
//! quadrature, communication kernels and the Favre filtration, transport and
//! entropy functionals, and solvers for the pressureless Euler-alignment
//! system, its limiting profile equation, the modulated Vlasov- and
//! Fokker-Planck-alignment systems, characteristic flows, and particle
//! oracles. File formats, configuration and the command line live in the
//! `monokin` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod characteristics;
pub mod domain;
pub mod eas;
pub mod error;
pub mod fit;
pub mod fokker_planck;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod particles;
pub mod profile;
pub mod schedule;
pub mod vlasov;

pub use domain::{
    quadrature_phase, quadrature_x, DiagnosticsRecord, Field, MacroState, ModulationParams, PhaseGrid, Profile,
    Quantity, TorusGrid, XiGrid,
};
pub use error::{Error, Result};
