use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::SQRT_2;

use super::{OccupancyGrid, Pose2D, WorldError};

const NEIGHBORS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

const CACHE_LIMIT: usize = 1 << 18;

#[derive(Clone, Copy)]
struct Open {
    f: f64,
    g: f64,
    idx: u32,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // min-heap on f, then prefer deeper nodes, then index for a total order
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

/// 8-connected A* over an occupancy grid with reusable scratch buffers and a
/// symmetric result cache. Diagonal steps may not cut blocked corners.
///
/// Lengths are accumulated as (straight, diagonal) step counts so that any two
/// optimal searches report bit-identical meters.
pub struct NavGrid<'a> {
    occ: &'a OccupancyGrid,
    g: Vec<f64>,
    steps: Vec<(u32, u32)>,
    seen: Vec<u32>,
    closed: Vec<u32>,
    epoch: u32,
    heap: BinaryHeap<Open>,
    cache: HashMap<(u32, u32), Option<f64>>,
}

impl<'a> NavGrid<'a> {
    pub fn new(occ: &'a OccupancyGrid) -> Self {
        let n = occ.geometry.len();
        Self {
            occ,
            g: vec![0.0; n],
            steps: vec![(0, 0); n],
            seen: vec![0; n],
            closed: vec![0; n],
            epoch: 0,
            heap: BinaryHeap::new(),
            cache: HashMap::new(),
        }
    }

    pub fn occupancy(&self) -> &'a OccupancyGrid {
        self.occ
    }

    /// Shortest path length in meters; `Ok(None)` when disconnected.
    pub fn length(&mut self, from: Pose2D, to: Pose2D) -> Result<Option<f64>, WorldError> {
        let a = self.free_cell(from, "start")?;
        let b = self.free_cell(to, "goal")?;
        Ok(self.length_cells(a, b))
    }

    pub fn length_cells(&mut self, a: usize, b: usize) -> Option<f64> {
        if a == b {
            return Some(0.0);
        }
        let key = if a < b {
            (a as u32, b as u32)
        } else {
            (b as u32, a as u32)
        };
        if let Some(hit) = self.cache.get(&key) {
            return *hit;
        }
        let out = self.astar(key.0 as usize, key.1 as usize);
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        self.cache.insert(key, out);
        out
    }

    fn free_cell(&self, p: Pose2D, which: &'static str) -> Result<usize, WorldError> {
        match self.occ.geometry.cell_of(p) {
            Some(idx) if !self.occ.is_blocked(idx) => Ok(idx),
            _ => Err(WorldError::BlockedEndpoint {
                which,
                x: p.x,
                y: p.y,
            }),
        }
    }

    fn next_epoch(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.seen.fill(0);
            self.closed.fill(0);
            self.epoch = 1;
        }
    }

    fn astar(&mut self, start: usize, goal: usize) -> Option<f64> {
        let geom = self.occ.geometry;
        let (gx, gy) = geom.coords(goal);
        let heuristic = |idx: usize| {
            let (x, y) = geom.coords(idx);
            let dx = (x as f64 - gx as f64).abs();
            let dy = (y as f64 - gy as f64).abs();
            let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
            (hi - lo) + SQRT_2 * lo
        };

        self.next_epoch();
        let epoch = self.epoch;
        self.heap.clear();
        self.g[start] = 0.0;
        self.steps[start] = (0, 0);
        self.seen[start] = epoch;
        self.heap.push(Open {
            f: heuristic(start),
            g: 0.0,
            idx: start as u32,
        });

        while let Some(Open { g, idx, .. }) = self.heap.pop() {
            let cur = idx as usize;
            if self.closed[cur] == epoch || g > self.g[cur] {
                continue;
            }
            if cur == goal {
                let (s, d) = self.steps[cur];
                return Some((s as f64 + d as f64 * SQRT_2) * geom.resolution);
            }
            self.closed[cur] = epoch;
            let (cx, cy) = geom.coords(cur);
            for &(dx, dy) in &NEIGHBORS {
                let Some(n) = geom.checked_index(cx as i64 + dx, cy as i64 + dy) else {
                    continue;
                };
                if self.occ.blocked[n] || self.closed[n] == epoch {
                    continue;
                }
                let diagonal = dx != 0 && dy != 0;
                if diagonal {
                    let side_a = geom.checked_index(cx as i64 + dx, cy as i64);
                    let side_b = geom.checked_index(cx as i64, cy as i64 + dy);
                    match (side_a, side_b) {
                        (Some(a), Some(b)) if !self.occ.blocked[a] && !self.occ.blocked[b] => {}
                        _ => continue,
                    }
                }
                let (s, d) = self.steps[cur];
                let (ns, nd) = if diagonal { (s, d + 1) } else { (s + 1, d) };
                let ng = ns as f64 + nd as f64 * SQRT_2;
                if self.seen[n] != epoch || ng < self.g[n] {
                    self.seen[n] = epoch;
                    self.g[n] = ng;
                    self.steps[n] = (ns, nd);
                    self.heap.push(Open {
                        f: ng + heuristic(n),
                        g: ng,
                        idx: n as u32,
                    });
                }
            }
        }
        None
    }
}

/// One-shot shortest path length. Prefer [`NavGrid`] for repeated queries.
pub fn path_length(
    occ: &OccupancyGrid,
    from: Pose2D,
    to: Pose2D,
) -> Result<Option<f64>, WorldError> {
    NavGrid::new(occ).length(from, to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::GridGeometry;

    fn open(w: usize, h: usize, res: f64) -> OccupancyGrid {
        OccupancyGrid::all_free(GridGeometry::new(w, h, res).unwrap())
    }

    #[test]
    fn identity_is_zero() {
        let occ = open(5, 5, 0.1);
        let p = Pose2D::new(0.25, 0.25);
        assert_eq!(path_length(&occ, p, p).unwrap(), Some(0.0));
    }

    #[test]
    fn straight_corridor() {
        let occ = open(12, 1, 0.1);
        let len = path_length(&occ, Pose2D::new(0.05, 0.05), Pose2D::new(1.05, 0.05))
            .unwrap()
            .unwrap();
        assert!((len - 1.0).abs() <= 0.1 + 1e-12, "{len}");
    }

    #[test]
    fn enclosed_goal_unreachable() {
        let g = GridGeometry::new(9, 9, 0.1).unwrap();
        let mut occ = OccupancyGrid::all_free(g);
        for ix in 3..=5 {
            for iy in 3..=5 {
                if ix != 4 || iy != 4 {
                    occ.blocked[g.index(ix, iy)] = true;
                }
            }
        }
        let from = g.center(g.index(0, 0));
        let to = g.center(g.index(4, 4));
        assert_eq!(path_length(&occ, from, to).unwrap(), None);
    }

    #[test]
    fn blocked_endpoint_is_error_not_unreachable() {
        let g = GridGeometry::new(4, 4, 0.1).unwrap();
        let mut occ = OccupancyGrid::all_free(g);
        occ.blocked[g.index(3, 3)] = true;
        let err = path_length(&occ, g.center(0), g.center(g.index(3, 3))).unwrap_err();
        assert!(matches!(
            err,
            WorldError::BlockedEndpoint { which: "goal", .. }
        ));
        let err = path_length(&occ, Pose2D::new(-1.0, 0.0), g.center(0)).unwrap_err();
        assert!(matches!(
            err,
            WorldError::BlockedEndpoint { which: "start", .. }
        ));
    }

    #[test]
    fn no_corner_cutting() {
        let g = GridGeometry::new(2, 2, 1.0).unwrap();
        let mut occ = OccupancyGrid::all_free(g);
        occ.blocked[g.index(1, 0)] = true;
        occ.blocked[g.index(0, 1)] = true;
        assert_eq!(path_length(&occ, g.center(0), g.center(3)).unwrap(), None);
    }

    #[test]
    fn diagonal_step() {
        let occ = open(3, 3, 0.5);
        let g = occ.geometry;
        let len = path_length(&occ, g.center(0), g.center(g.index(2, 2)))
            .unwrap()
            .unwrap();
        assert_eq!(len, 2.0 * SQRT_2 * 0.5);
    }
}
