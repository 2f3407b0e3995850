//! Fixtures shared by the criterion benches.

use std::sync::Arc;

use calderon_core::mesh::corner_schedule;
use calderon_core::{FeSpace, Geometry, Result};

/// Trial space on the corner-refined half-unit square.
pub fn square_space(level: usize, degree: usize) -> Result<FeSpace> {
    let g = Arc::new(Geometry::square(0.5)?);
    FeSpace::new(&corner_schedule(g, level)?, degree)
}
