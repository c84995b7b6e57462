use std::collections::VecDeque;
use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    effective_occupancy, ChairObstacle, Footprint, GridGeometry, GridMap, ObjectId, ObjectState,
    OccupancyGrid, Pose2D, Scenario, WorldError,
};
use crate::feasibility::{motion_feasibility, FeasibilityParams};
use crate::seeds::{rng_for, stream, Rng};

/// Axis-aligned rectangle in meters. Used for tables and the start region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    /// Relative chance that an object lands on this table.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl TableRect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64, weight: f64) -> Self {
        Self {
            x0,
            y0,
            x1,
            y1,
            weight,
        }
    }

    fn nearest_edge(&self, p: Pose2D) -> (Pose2D, Pose2D, Pose2D) {
        // (edge point, outward normal, tangent)
        let candidates = [
            (
                p.x - self.x0,
                Pose2D::new(self.x0, p.y),
                Pose2D::new(-1.0, 0.0),
            ),
            (
                self.x1 - p.x,
                Pose2D::new(self.x1, p.y),
                Pose2D::new(1.0, 0.0),
            ),
            (
                p.y - self.y0,
                Pose2D::new(p.x, self.y0),
                Pose2D::new(0.0, -1.0),
            ),
            (
                self.y1 - p.y,
                Pose2D::new(p.x, self.y1),
                Pose2D::new(0.0, 1.0),
            ),
        ];
        let (_, edge, normal) = candidates
            .into_iter()
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("four edges");
        (edge, normal, Pose2D::new(-normal.y, normal.x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub width_m: f64,
    pub height_m: f64,
    pub resolution: f64,
    pub inflation_radius: f64,
    pub tables: Vec<TableRect>,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Place one chair near each object.
    pub chairs: bool,
    pub chair_width: f64,
    pub chair_depth: f64,
    /// Range of chair-center distances from the object's nearest table edge.
    pub chair_standoff: (f64, f64),
    /// Maximum lateral chair offset along the table edge.
    pub chair_lateral: f64,
    pub object_edge_margin: f64,
    pub min_object_separation: f64,
    pub start_region: TableRect,
    pub retry_cap: usize,
    pub feasibility: FeasibilityParams,
}

impl Default for GeneratorConfig {
    /// An 8 m x 6 m dining room: one long bar, two mid-sized tables, four small tables.
    fn default() -> Self {
        Self {
            width_m: 8.0,
            height_m: 6.0,
            resolution: 0.05,
            inflation_radius: 0.3,
            tables: vec![
                TableRect::new(2.0, 4.9, 5.6, 5.5, 3.0),
                TableRect::new(0.9, 2.7, 2.1, 3.5, 2.0),
                TableRect::new(5.9, 2.7, 7.1, 3.5, 2.0),
                TableRect::new(3.0, 2.8, 3.6, 3.4, 1.0),
                TableRect::new(4.4, 2.8, 5.0, 3.4, 1.0),
                TableRect::new(3.0, 0.9, 3.6, 1.5, 1.0),
                TableRect::new(4.4, 0.9, 5.0, 1.5, 1.0),
            ],
            min_objects: 5,
            max_objects: 7,
            chairs: true,
            chair_width: 0.4,
            chair_depth: 0.4,
            chair_standoff: (0.25, 0.55),
            chair_lateral: 0.5,
            object_edge_margin: 0.05,
            min_object_separation: 0.2,
            start_region: TableRect::new(0.5, 0.5, 1.8, 1.8, 1.0),
            retry_cap: 50,
            feasibility: FeasibilityParams::default(),
        }
    }
}

impl GeneratorConfig {
    pub fn build_map(&self) -> Result<GridMap, WorldError> {
        let width = (self.width_m / self.resolution).round() as usize;
        let height = (self.height_m / self.resolution).round() as usize;
        let geometry = GridGeometry::new(width, height, self.resolution)?;
        let mut map = GridMap::new(geometry, vec![false; geometry.len()], self.inflation_radius)?;
        map.add_border_walls();
        for t in &self.tables {
            map.block_rect(t.x0, t.y0, t.x1, t.y1);
        }
        Ok(map)
    }

    fn validate(&self) -> Result<(), WorldError> {
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(WorldError::InvalidScenario(format!(
                "object count range [{}, {}] is empty or zero",
                self.min_objects, self.max_objects
            )));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let bad_weight = self.tables.iter().any(|t| !(t.weight > 0.0));
        if self.tables.is_empty() || bad_weight {
            return Err(WorldError::InvalidScenario(
                "tables need positive weights".into(),
            ));
        }
        Ok(())
    }
}

/// Cells reachable from `start` through free cells (same move rules as navigation).
pub fn reachable_from(occ: &OccupancyGrid, start: Pose2D) -> Vec<bool> {
    let g = occ.geometry;
    let mut seen = vec![false; g.len()];
    let Some(s) = g.cell_of(start).filter(|&i| !occ.is_blocked(i)) else {
        return seen;
    };
    let mut queue = VecDeque::from([s]);
    seen[s] = true;
    while let Some(cur) = queue.pop_front() {
        let (cx, cy) = g.coords(cur);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let Some(n) = g.checked_index(cx as i64 + dx, cy as i64 + dy) else {
                    continue;
                };
                if seen[n] || occ.is_blocked(n) {
                    continue;
                }
                if dx != 0 && dy != 0 {
                    let a = g.checked_index(cx as i64 + dx, cy as i64);
                    let b = g.checked_index(cx as i64, cy as i64 + dy);
                    if a.is_none_or(|a| occ.is_blocked(a)) || b.is_none_or(|b| occ.is_blocked(b)) {
                        continue;
                    }
                }
                seen[n] = true;
                queue.push_back(n);
            }
        }
    }
    seen
}

fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn pick_table<'a>(rng: &mut Rng, tables: &'a [TableRect]) -> &'a TableRect {
    let total: f64 = tables.iter().map(|t| t.weight).sum();
    let mut u = rng.random::<f64>() * total;
    for t in tables {
        if u < t.weight {
            return t;
        }
        u -= t.weight;
    }
    tables.last().expect("nonempty")
}

fn attempt(rng: &mut Rng, cfg: &GeneratorConfig, map: &GridMap, seed: u64) -> Option<Scenario> {
    let count = rng.random_range(cfg.min_objects..=cfg.max_objects);
    let mut objects: Vec<ObjectState> = Vec::with_capacity(count);
    let mut tables_of = Vec::with_capacity(count);
    let mut tries = 0;
    while objects.len() < count {
        tries += 1;
        if tries > 200 * count {
            return None;
        }
        let t = pick_table(rng, &cfg.tables);
        let m = cfg.object_edge_margin;
        let p = Pose2D::new(
            uniform(rng, t.x0 + m, t.x1 - m),
            uniform(rng, t.y0 + m, t.y1 - m),
        );
        if map.is_static_blocked(p)
            && objects
                .iter()
                .all(|o| o.position.distance(&p) >= cfg.min_object_separation)
        {
            objects.push(ObjectState {
                id: ObjectId(objects.len() as u32),
                position: p,
                collected: false,
            });
            tables_of.push(t.clone());
        }
    }

    let mut chairs = Vec::new();
    if cfg.chairs {
        for (o, t) in objects.iter().zip(&tables_of) {
            let (edge, normal, tangent) = t.nearest_edge(o.position);
            let out = uniform(rng, cfg.chair_standoff.0, cfg.chair_standoff.1);
            let lat = uniform(rng, -cfg.chair_lateral, cfg.chair_lateral);
            let theta = uniform(rng, 0.0, PI);
            chairs.push(ChairObstacle {
                position: Pose2D::new(
                    edge.x + normal.x * out + tangent.x * lat,
                    edge.y + normal.y * out + tangent.y * lat,
                ),
                orientation: theta,
                footprint: Footprint {
                    width: cfg.chair_width,
                    depth: cfg.chair_depth,
                },
            });
        }
    }

    let occ = effective_occupancy(map, &chairs);
    let r = &cfg.start_region;
    let mut robot_start = None;
    for _ in 0..100 {
        let p = Pose2D::new(uniform(rng, r.x0, r.x1), uniform(rng, r.y0, r.y1));
        if occ.is_free_pose(p) {
            robot_start = Some(p);
            break;
        }
    }
    let robot_start = robot_start?;

    // Degenerate unless every object has a reachable cell of nonzero feasibility.
    let reachable = reachable_from(&occ, robot_start);
    let g = occ.geometry;
    let reach_cells = (cfg.feasibility.reach_max / g.resolution).ceil() as i64 + 1;
    for o in &objects {
        let (cx, cy) = {
            let idx = g.cell_of(o.position)?;
            g.coords(idx)
        };
        let mut ok = false;
        'scan: for dy in -reach_cells..=reach_cells {
            for dx in -reach_cells..=reach_cells {
                if let Some(n) = g.checked_index(cx as i64 + dx, cy as i64 + dy) {
                    if reachable[n]
                        && motion_feasibility(g.center(n), o.position, &occ, &cfg.feasibility) > 0.0
                    {
                        ok = true;
                        break 'scan;
                    }
                }
            }
        }
        if !ok {
            return None;
        }
    }

    Some(Scenario {
        map: map.clone(),
        objects,
        robot_start,
        chairs,
        seed,
    })
}

/// Deterministic scenario for `seed`. Degenerate draws are retried up to the
/// configured cap.
pub fn generate_scenario(seed: u64, cfg: &GeneratorConfig) -> Result<Scenario, WorldError> {
    cfg.validate()?;
    let map = cfg.build_map()?;
    let mut rng = rng_for(seed, stream::GENERATOR, 0);
    for _ in 0..cfg.retry_cap.max(1) {
        if let Some(s) = attempt(&mut rng, cfg, &map, seed) {
            return Ok(s);
        }
    }
    Err(WorldError::GenerationFailed {
        seed,
        attempts: cfg.retry_cap.max(1),
    })
}
