//! Modeling, well-posedness analysis, event-driven simulation, and
//! continuous-dependence analysis of linear reset control systems.

pub mod analysis;
pub mod error;
pub mod model;
pub mod numerics;
pub mod simulate;
pub mod wellposed;

pub use error::{Error, Result};
