//! Channeling efficiency of dipole emitters into optical nanofibers and
//! nanofiber tips.

pub mod bessel;
pub mod error;
pub mod grid;
pub mod modes;
pub mod scene;
pub mod solver;
pub mod config;
pub mod pipeline;
pub mod sweep;
pub mod analysis;
pub mod validation;
pub mod jobs;

pub use error::{Error, Result};
