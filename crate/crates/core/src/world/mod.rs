//! The 2D environment: occupancy grids, objects, unmapped chairs, scenario
//! generation, and shortest grid path lengths.

mod generate;
mod grid;
mod nav;
mod scenario;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_scenario, reachable_from, GeneratorConfig, TableRect};
pub use grid::{GridGeometry, GridMap, OccupancyGrid, Pose2D};
pub use nav::{path_length, NavGrid};
pub use scenario::Scenario;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("{which} pose ({x:.3}, {y:.3}) is blocked or off-grid")]
    BlockedEndpoint { which: &'static str, x: f64, y: f64 },
    #[error("scenario generation failed for seed {seed} after {attempts} attempts")]
    GenerationFailed { seed: u64, attempts: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario format: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectState {
    pub id: ObjectId,
    pub position: Pose2D,
    #[serde(default)]
    pub collected: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Footprint {
    pub width: f64,
    pub depth: f64,
}

/// An obstacle sensed at planning time but absent from the prior map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChairObstacle {
    pub position: Pose2D,
    pub orientation: f64,
    pub footprint: Footprint,
}

impl ChairObstacle {
    /// Point-in-rotated-rectangle test (boundary inclusive).
    pub fn contains(&self, p: Pose2D) -> bool {
        let (s, c) = self.orientation.sin_cos();
        let dx = p.x - self.position.x;
        let dy = p.y - self.position.y;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= 0.5 * self.footprint.width + 1e-12
            && v.abs() <= 0.5 * self.footprint.depth + 1e-12
    }

    /// Radius of the circle circumscribing the footprint.
    pub fn bounding_radius(&self) -> f64 {
        0.5 * self.footprint.width.hypot(self.footprint.depth)
    }
}

/// Static occupancy plus rasterized chairs, dilated by the map's inflation radius.
pub fn effective_occupancy(map: &GridMap, chairs: &[ChairObstacle]) -> OccupancyGrid {
    let g = map.geometry;
    let mut base = map.static_occupancy.clone();
    for chair in chairs {
        let r = chair.bounding_radius();
        let lo_x = ((chair.position.x - r) / g.resolution).floor().max(0.0) as usize;
        let lo_y = ((chair.position.y - r) / g.resolution).floor().max(0.0) as usize;
        let hi_x = ((chair.position.x + r) / g.resolution).ceil().max(0.0) as usize;
        let hi_y = ((chair.position.y + r) / g.resolution).ceil().max(0.0) as usize;
        for iy in lo_y..=hi_y.min(g.height - 1) {
            for ix in lo_x..=hi_x.min(g.width - 1) {
                let idx = g.index(ix, iy);
                if chair.contains(g.center(idx)) {
                    base[idx] = true;
                }
            }
        }
    }

    let mut blocked = base.clone();
    if map.inflation_radius > 0.0 {
        let offsets = g.disk_offsets(map.inflation_radius);
        for (idx, _) in base.iter().enumerate().filter(|(_, b)| **b) {
            let (ix, iy) = g.coords(idx);
            for &(dx, dy) in &offsets {
                if let Some(n) = g.checked_index(ix as i64 + dx, iy as i64 + dy) {
                    blocked[n] = true;
                }
            }
        }
    }
    OccupancyGrid::new(g, blocked)
}
