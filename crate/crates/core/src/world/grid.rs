use serde::{Deserialize, Serialize};

use super::WorldError;

/// A planar position in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
}

impl Pose2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Pose2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Shape and scale of a row-major cell grid. Cell `(ix, iy)` covers
/// `[ix*res, (ix+1)*res) x [iy*res, (iy+1)*res)`; flat index is `iy*width + ix`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64) -> Result<Self, WorldError> {
        if width == 0 || height == 0 {
            return Err(WorldError::InvalidMap(
                "grid dimensions must be positive".into(),
            ));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(WorldError::InvalidMap(format!(
                "resolution {resolution} must be > 0"
            )));
        }
        Ok(Self {
            width,
            height,
            resolution,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        debug_assert!(ix < self.width && iy < self.height);
        iy * self.width + ix
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    /// Flat index of the signed cell coordinate, if inside the grid.
    #[inline]
    pub fn checked_index(&self, ix: i64, iy: i64) -> Option<usize> {
        if ix < 0 || iy < 0 || ix >= self.width as i64 || iy >= self.height as i64 {
            None
        } else {
            Some(iy as usize * self.width + ix as usize)
        }
    }

    /// Cell containing `p`, or `None` off-grid.
    #[inline]
    pub fn cell_of(&self, p: Pose2D) -> Option<usize> {
        if !p.is_finite() {
            return None;
        }
        let fx = (p.x / self.resolution).floor();
        let fy = (p.y / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some(fy as usize * self.width + fx as usize)
    }

    #[inline]
    pub fn center(&self, idx: usize) -> Pose2D {
        let (ix, iy) = self.coords(idx);
        Pose2D::new(
            (ix as f64 + 0.5) * self.resolution,
            (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * self.resolution
    }

    pub fn height_m(&self) -> f64 {
        self.height as f64 * self.resolution
    }

    /// Signed cell offsets whose centers lie within `radius` meters of the origin cell center.
    pub fn disk_offsets(&self, radius: f64) -> Vec<(i64, i64)> {
        let r_cells = (radius / self.resolution).ceil() as i64;
        let r2 = radius * radius + 1e-9;
        let mut out = Vec::new();
        for dy in -r_cells..=r_cells {
            for dx in -r_cells..=r_cells {
                let d2 = ((dx * dx + dy * dy) as f64) * self.resolution * self.resolution;
                if d2 <= r2 {
                    out.push((dx, dy));
                }
            }
        }
        out
    }
}

/// Prior map: walls and tables only. Chairs are not part of it.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    pub geometry: GridGeometry,
    pub static_occupancy: Vec<bool>,
    pub inflation_radius: f64,
}

impl GridMap {
    pub fn new(
        geometry: GridGeometry,
        static_occupancy: Vec<bool>,
        inflation_radius: f64,
    ) -> Result<Self, WorldError> {
        if static_occupancy.len() != geometry.len() {
            return Err(WorldError::InvalidMap(format!(
                "occupancy has {} cells, expected {}",
                static_occupancy.len(),
                geometry.len()
            )));
        }
        if !(inflation_radius.is_finite() && inflation_radius >= 0.0) {
            return Err(WorldError::InvalidMap(format!(
                "inflation radius {inflation_radius} must be >= 0"
            )));
        }
        Ok(Self {
            geometry,
            static_occupancy,
            inflation_radius,
        })
    }

    /// A map with no blocked cells.
    pub fn empty(
        width: usize,
        height: usize,
        resolution: f64,
        inflation_radius: f64,
    ) -> Result<Self, WorldError> {
        let geometry = GridGeometry::new(width, height, resolution)?;
        Self::new(geometry, vec![false; geometry.len()], inflation_radius)
    }

    /// Marks every cell whose center lies in the axis-aligned rectangle as blocked.
    pub fn block_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        for idx in 0..self.geometry.len() {
            let c = self.geometry.center(idx);
            if c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1 {
                self.static_occupancy[idx] = true;
            }
        }
    }

    /// Blocks the outermost ring of cells.
    pub fn add_border_walls(&mut self) {
        let g = self.geometry;
        for ix in 0..g.width {
            self.static_occupancy[g.index(ix, 0)] = true;
            self.static_occupancy[g.index(ix, g.height - 1)] = true;
        }
        for iy in 0..g.height {
            self.static_occupancy[g.index(0, iy)] = true;
            self.static_occupancy[g.index(g.width - 1, iy)] = true;
        }
    }

    pub fn is_static_blocked(&self, p: Pose2D) -> bool {
        self.geometry
            .cell_of(p)
            .map(|idx| self.static_occupancy[idx])
            .unwrap_or(true)
    }

    /// Static occupancy dilated by the inflation radius (no chairs).
    pub fn inflated_occupancy(&self) -> OccupancyGrid {
        super::effective_occupancy(self, &[])
    }
}

/// Planning-time occupancy: `true` marks a cell the robot base may not occupy.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    pub geometry: GridGeometry,
    pub blocked: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(geometry: GridGeometry, blocked: Vec<bool>) -> Self {
        assert_eq!(blocked.len(), geometry.len());
        Self { geometry, blocked }
    }

    pub fn all_free(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            blocked: vec![false; geometry.len()],
        }
    }

    #[inline]
    pub fn is_blocked(&self, idx: usize) -> bool {
        self.blocked[idx]
    }

    /// Off-grid poses count as blocked.
    #[inline]
    pub fn is_free_pose(&self, p: Pose2D) -> bool {
        self.geometry
            .cell_of(p)
            .map(|idx| !self.blocked[idx])
            .unwrap_or(false)
    }

    pub fn free_count(&self) -> usize {
        self.blocked.iter().filter(|b| !**b).count()
    }
}
