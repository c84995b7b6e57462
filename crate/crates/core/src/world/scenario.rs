use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    effective_occupancy, ChairObstacle, GridGeometry, GridMap, ObjectId, ObjectState,
    OccupancyGrid, Pose2D, WorldError,
};

/// A problem instance: prior map, objects, robot start, and unmapped chairs.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub map: GridMap,
    pub objects: Vec<ObjectState>,
    pub robot_start: Pose2D,
    pub chairs: Vec<ChairObstacle>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapRepr {
    width: usize,
    height: usize,
    resolution: f64,
    inflation_radius: f64,
    /// Row `j` holds cells with `iy == j`, one '0'/'1' char per `ix`.
    rows: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRepr {
    seed: u64,
    map: MapRepr,
    objects: Vec<ObjectState>,
    chairs: Vec<ChairObstacle>,
    robot_start: Pose2D,
}

impl Scenario {
    pub fn geometry(&self) -> GridGeometry {
        self.map.geometry
    }

    pub fn occupancy(&self) -> OccupancyGrid {
        effective_occupancy(&self.map, &self.chairs)
    }

    pub fn object_index(&self, id: ObjectId) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    pub fn object(&self, id: ObjectId) -> Option<&ObjectState> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Structural checks: unique ids, objects on statically occupied cells,
    /// robot start free in the effective occupancy.
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.objects.is_empty() {
            return Err(WorldError::InvalidScenario(
                "scenario has no objects".into(),
            ));
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id) {
                return Err(WorldError::InvalidScenario(format!(
                    "duplicate object id {}",
                    o.id
                )));
            }
            if !o.position.is_finite() {
                return Err(WorldError::InvalidScenario(format!(
                    "object {} has non-finite position",
                    o.id
                )));
            }
            match self.map.geometry.cell_of(o.position) {
                Some(idx) if self.map.static_occupancy[idx] => {}
                _ => {
                    return Err(WorldError::InvalidScenario(format!(
                        "object {} at ({:.3}, {:.3}) is not on a table cell",
                        o.id, o.position.x, o.position.y
                    )))
                }
            }
        }
        for c in &self.chairs {
            if !(c.footprint.width > 0.0 && c.footprint.depth > 0.0) {
                return Err(WorldError::InvalidScenario(
                    "chair footprint must be positive".into(),
                ));
            }
        }
        if !self.occupancy().is_free_pose(self.robot_start) {
            return Err(WorldError::InvalidScenario(format!(
                "robot start ({:.3}, {:.3}) is not free",
                self.robot_start.x, self.robot_start.y
            )));
        }
        Ok(())
    }

    fn to_repr(&self) -> ScenarioRepr {
        let g = self.map.geometry;
        let rows = (0..g.height)
            .map(|iy| {
                (0..g.width)
                    .map(|ix| {
                        if self.map.static_occupancy[g.index(ix, iy)] {
                            '1'
                        } else {
                            '0'
                        }
                    })
                    .collect()
            })
            .collect();
        ScenarioRepr {
            seed: self.seed,
            map: MapRepr {
                width: g.width,
                height: g.height,
                resolution: g.resolution,
                inflation_radius: self.map.inflation_radius,
                rows,
            },
            objects: self.objects.clone(),
            chairs: self.chairs.clone(),
            robot_start: self.robot_start,
        }
    }

    fn from_repr(r: ScenarioRepr) -> Result<Self, WorldError> {
        let g = GridGeometry::new(r.map.width, r.map.height, r.map.resolution)?;
        if r.map.rows.len() != g.height {
            return Err(WorldError::InvalidMap(format!(
                "{} rows, expected {}",
                r.map.rows.len(),
                g.height
            )));
        }
        let mut occ = Vec::with_capacity(g.len());
        for (iy, row) in r.map.rows.iter().enumerate() {
            if row.len() != g.width {
                return Err(WorldError::InvalidMap(format!(
                    "row {iy} has {} cells, expected {}",
                    row.len(),
                    g.width
                )));
            }
            for ch in row.chars() {
                occ.push(match ch {
                    '0' => false,
                    '1' => true,
                    other => {
                        return Err(WorldError::InvalidMap(format!(
                            "row {iy}: bad cell char {other:?}"
                        )))
                    }
                });
            }
        }
        Ok(Self {
            map: GridMap::new(g, occ, r.map.inflation_radius)?,
            objects: r.objects,
            robot_start: r.robot_start,
            chairs: r.chairs,
            seed: r.seed,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_repr()).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, WorldError> {
        Self::from_repr(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }
}
