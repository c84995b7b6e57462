//! Binary PGM/PPM export of feasibility fields and partitions. The first image
//! row is the top of the map (highest `y`).

use crate::feasibility::FeasibilityField;
use crate::partition::StateSpace;
use crate::world::{ObjectState, OccupancyGrid};

pub const BLOCKED: [u8; 3] = [64, 64, 64];
pub const UNLABELED: [u8; 3] = [255, 255, 255];
pub const OBJECT: [u8; 3] = [0, 0, 0];

/// Location colors, cycled by location index.
pub const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
    [128, 128, 0],
];

fn header(magic: &str, width: usize, height: usize) -> Vec<u8> {
    format!("{magic}\n{width} {height}\n255\n").into_bytes()
}

/// Grayscale image of a field; 255 is feasibility 1.0.
pub fn field_pgm(field: &FeasibilityField) -> Vec<u8> {
    let g = field.geometry;
    let mut out = header("P5", g.width, g.height);
    out.reserve(g.len());
    for iy in (0..g.height).rev() {
        for ix in 0..g.width {
            let v = field.values[g.index(ix, iy)].clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

/// Color image of a partition: one palette color per location, blocked cells
/// dark gray, unlabeled free cells white, object cells black.
pub fn partition_ppm(ss: &StateSpace, occ: &OccupancyGrid, objects: &[ObjectState]) -> Vec<u8> {
    let g = ss.geometry;
    let object_cells: Vec<usize> = objects
        .iter()
        .filter_map(|o| g.cell_of(o.position))
        .collect();
    let mut out = header("P6", g.width, g.height);
    out.reserve(3 * g.len());
    for iy in (0..g.height).rev() {
        for ix in 0..g.width {
            let idx = g.index(ix, iy);
            let rgb = if object_cells.contains(&idx) {
                OBJECT
            } else if let Some(l) = ss.sym_grid[idx] {
                PALETTE[l.0 as usize % PALETTE.len()]
            } else if occ.is_blocked(idx) {
                BLOCKED
            } else {
                UNLABELED
            };
            out.extend_from_slice(&rgb);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::{build_field, FeasibilityParams};
    use crate::partition::base_voronoi;
    use crate::world::{GridGeometry, ObjectId, Pose2D};

    #[test]
    fn pgm_layout_and_orientation() {
        let g = GridGeometry::new(3, 2, 0.5).unwrap();
        let mut values = vec![0.0; 6];
        values[g.index(0, 1)] = 1.0;
        values[g.index(2, 0)] = 0.5;
        let f = FeasibilityField {
            object_id: ObjectId(0),
            geometry: g,
            values,
        };
        let bytes = field_pgm(&f);
        let head = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..head.len()], head);
        assert_eq!(&bytes[head.len()..], &[255, 0, 0, 0, 0, 128]);
    }

    #[test]
    fn ppm_size_and_object_pixel() {
        let g = GridGeometry::new(40, 40, 0.05).unwrap();
        let occ = OccupancyGrid::all_free(g);
        let objs = vec![ObjectState {
            id: ObjectId(0),
            position: Pose2D::new(1.0, 1.0),
            collected: false,
        }];
        let field = build_field(&objs[0], &occ, &FeasibilityParams::default());
        assert_eq!(field_pgm(&field).len(), "P5\n40 40\n255\n".len() + 1600);
        let ss = base_voronoi(&objs, &occ, &FeasibilityParams::default()).unwrap();
        let bytes = partition_ppm(&ss, &occ, &objs);
        let head = "P6\n40 40\n255\n".len();
        assert_eq!(bytes.len(), head + 3 * 1600);
        let row = 39 - 20;
        let at = head + 3 * (row * 40 + 20);
        assert_eq!(&bytes[at..at + 3], &OBJECT);
        let labeled = head + 3 * (row * 40 + 30);
        assert_eq!(&bytes[labeled..labeled + 3], &PALETTE[0]);
        assert_eq!(&bytes[head..head + 3], &UNLABELED);
    }
}
