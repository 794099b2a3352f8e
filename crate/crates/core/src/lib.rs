//! Minimizing-movements schemes for generalized curvature flows on grids.

pub mod error;
pub mod grid;
pub mod curvature;
pub mod perimeter;
pub mod mincut;
pub mod scheme;
pub mod oracle;
pub mod quad;

pub use error::{Error, Result};
