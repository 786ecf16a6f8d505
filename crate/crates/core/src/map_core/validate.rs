use serde::Serialize;

use super::{BernoulliMap, MapError, PartitionCell};

/// Minimum number of mesh points per boundary face in `d ≥ 2`.
pub const BOUNDARY_MESH_POINTS: usize = 10_000;

const VOLUME_TOL: f64 = 1e-12;
const ORTHO_TOL: f64 = 1e-12;
const CORNER_TOL: f64 = 1e-9;
const PREIMAGE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AssumptionItem {
    /// Cells are intervals / axis-aligned cubes tiling `Q_0`.
    CubeCells,
    /// Each branch maps its open cell bijectively onto an open unit cube.
    Bijection,
    /// Every point of `∂Q_0` has a preimage in some open cube `Q̊_k`.
    BoundarySurjective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ItemStatus {
    Pass,
    Fail,
    /// Not evaluated because an earlier item failed.
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub items: Vec<(AssumptionItem, ItemStatus)>,
    pub errors: Vec<MapError>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn status(&self, item: AssumptionItem) -> ItemStatus {
        self.items.iter().find(|(i, _)| *i == item).map_or(ItemStatus::Skipped, |(_, s)| *s)
    }
}

impl BernoulliMap {
    /// Checks the three structural assumptions on the map.
    ///
    /// Item 3 is decided exactly in `d = 1` (the boundary is `{0, 1}`), and on
    /// a deterministic mesh of at least [`BOUNDARY_MESH_POINTS`] points per
    /// face in `d ≥ 2`.
    pub fn validate(&self) -> ValidationReport {
        let mut errors = Vec::new();
        let shape_errors = check_shape(self);
        let shape_ok = shape_errors.is_empty();
        errors.extend(shape_errors);

        let branch_errors: Vec<MapError> = if shape_ok { check_branches(self) } else { Vec::new() };
        let branch_ok = shape_ok && branch_errors.is_empty();
        errors.extend(branch_errors);

        let boundary = if branch_ok {
            match check_boundary(self) {
                Ok(()) => ItemStatus::Pass,
                Err(e) => {
                    errors.push(e);
                    ItemStatus::Fail
                }
            }
        } else {
            ItemStatus::Skipped
        };

        let status = |ok: bool, ran: bool| match (ran, ok) {
            (false, _) => ItemStatus::Skipped,
            (true, true) => ItemStatus::Pass,
            (true, false) => ItemStatus::Fail,
        };
        ValidationReport {
            items: vec![
                (AssumptionItem::CubeCells, status(shape_ok, true)),
                (AssumptionItem::Bijection, status(branch_ok, shape_ok)),
                (AssumptionItem::BoundarySurjective, boundary),
            ],
            errors,
        }
    }
}

fn check_shape(map: &BernoulliMap) -> Vec<MapError> {
    let d = map.dim;
    let cells = map.cells();
    let mut errors = Vec::new();
    if cells.len() < 2 {
        errors.push(MapError::TooFewCells { count: cells.len() });
    }
    for c in cells {
        if c.corner.len() != d || c.offset.len() != d || c.target.len() != d || c.rotation.len() != d * d {
            errors.push(MapError::DimensionMismatch { cell: c.index });
            continue;
        }
        let inside = c.side > 0.0
            && c.corner.iter().all(|&x| x >= -VOLUME_TOL && x + c.side <= 1.0 + VOLUME_TOL);
        if !inside {
            errors.push(MapError::CellOutsideUnitCube { cell: c.index });
        }
    }
    if !errors.is_empty() {
        return errors;
    }
    for (a, ca) in cells.iter().enumerate() {
        for cb in &cells[a + 1..] {
            if overlap_volume(ca, cb) > VOLUME_TOL {
                errors.push(MapError::OverlappingCells { first: ca.index, second: cb.index });
            }
        }
    }
    let total: f64 = cells.iter().map(|c| c.volume).sum();
    if (total - 1.0).abs() > VOLUME_TOL {
        errors.push(MapError::VolumeDeficit { total });
    }
    errors
}

fn overlap_volume(a: &PartitionCell, b: &PartitionCell) -> f64 {
    a.corner
        .iter()
        .zip(&b.corner)
        .map(|(x, y)| ((x + a.side).min(y + b.side) - x.max(*y)).max(0.0))
        .product()
}

fn check_branches(map: &BernoulliMap) -> Vec<MapError> {
    let d = map.dim;
    let mut errors = Vec::new();
    for c in map.cells() {
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let dot: f64 = (0..d).map(|k| c.rotation[i * d + k] * c.rotation[j * d + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        if worst > ORTHO_TOL {
            errors.push(MapError::NonOrthogonalMatrix { cell: c.index });
            continue;
        }
        if !maps_onto_target(c) {
            errors.push(MapError::TargetCubeMismatch { cell: c.index });
        }
    }
    errors
}

/// The images of the `2^d` corners of the closed cell must be exactly the
/// corners of the closed target cube; for an affine map with orthogonal
/// linear part and unit image side this gives the bijection of the open sets.
fn maps_onto_target(c: &PartitionCell) -> bool {
    let d = c.dim();
    let mut seen = vec![false; 1 << d];
    let mut corner = vec![0.0; d];
    let mut image = vec![0.0; d];
    for mask in 0..(1usize << d) {
        for j in 0..d {
            corner[j] = c.corner[j] + if mask >> j & 1 == 1 { c.side } else { 0.0 };
        }
        c.forward(&corner, &mut image);
        let mut hit = 0usize;
        for j in 0..d {
            let rel = image[j] - c.target[j] as f64;
            if rel.abs() <= CORNER_TOL {
            } else if (rel - 1.0).abs() <= CORNER_TOL {
                hit |= 1 << j;
            } else {
                return false;
            }
        }
        if seen[hit] {
            return false;
        }
        seen[hit] = true;
    }
    true
}

fn check_boundary(map: &BernoulliMap) -> Result<(), MapError> {
    let d = map.dim;
    if d == 1 {
        for x in [0.0, 1.0] {
            if preimage_in_open_cube(map, &[x]).is_none() {
                return Err(MapError::BoundaryUncovered { point: vec![x] });
            }
        }
        return Ok(());
    }
    let per_axis = mesh_points_per_axis(d);
    let free = d - 1;
    let total = (per_axis + 1).pow(free as u32);
    let mut x = vec![0.0; d];
    for axis in 0..d {
        for side in [0.0, 1.0] {
            for idx in 0..total {
                let mut rem = idx;
                let mut slot = 0;
                for (j, xj) in x.iter_mut().enumerate() {
                    if j == axis {
                        *xj = side;
                    } else {
                        *xj = (rem % (per_axis + 1)) as f64 / per_axis as f64;
                        rem /= per_axis + 1;
                        slot += 1;
                    }
                }
                debug_assert_eq!(slot, free);
                if preimage_in_open_cube(map, &x).is_none() {
                    return Err(MapError::BoundaryUncovered { point: x.clone() });
                }
            }
        }
    }
    Ok(())
}

/// Mesh intervals per free axis so that each face carries at least
/// [`BOUNDARY_MESH_POINTS`] points.
fn mesh_points_per_axis(d: usize) -> usize {
    let free = (d - 1) as f64;
    let mut p = (BOUNDARY_MESH_POINTS as f64).powf(1.0 / free).ceil() as usize;
    while (p + 1).pow((d - 1) as u32) < BOUNDARY_MESH_POINTS {
        p += 1;
    }
    p
}

/// Searches `y ∈ Q̊_k` with `φ(y) = x` over the cubes adjacent to `x`.
pub(super) fn preimage_in_open_cube(map: &BernoulliMap, x: &[f64]) -> Option<Vec<f64>> {
    let d = map.dim;
    let mut rel = vec![0.0; d];
    let mut u = vec![0.0; d];
    for c in map.cells() {
        // k_j ranges over the cubes whose shifted target closure contains x_j
        let choices: Vec<[i64; 2]> = (0..d)
            .map(|j| {
                let base = x[j] - c.target[j] as f64;
                [base.floor() as i64, base.ceil() as i64 - 1]
            })
            .collect();
        for mask in 0..(1usize << d) {
            let k: Vec<i64> = (0..d).map(|j| choices[j][mask >> j & 1]).collect();
            for j in 0..d {
                rel[j] = x[j] - k[j] as f64;
            }
            c.inverse(&rel, &mut u);
            if in_cell_and_open_cube(c, &u) {
                return Some(u.iter().zip(&k).map(|(a, b)| a + *b as f64).collect());
            }
        }
    }
    None
}

fn in_cell_and_open_cube(c: &PartitionCell, u: &[f64]) -> bool {
    u.iter().zip(&c.corner).all(|(&uj, &cj)| {
        let open_cube = uj > PREIMAGE_TOL && uj < 1.0 - PREIMAGE_TOL;
        let lower_face = (uj - cj).abs() <= PREIMAGE_TOL;
        let interior = uj > cj + PREIMAGE_TOL && uj < cj + c.side - PREIMAGE_TOL;
        open_cube && (lower_face || interior)
    })
}

#[cfg(test)]
mod tests {
    use super::super::examples::*;
    use super::*;

    #[test]
    fn reference_maps_pass_every_item() {
        for map in [doubling(), asymmetric(), tent(), quadrant(), no_drift_doubling()] {
            let r = map.validate();
            assert!(r.is_valid(), "{:?}", r.errors);
            for (_, s) in &r.items {
                assert_eq!(*s, ItemStatus::Pass);
            }
        }
    }

    #[test]
    fn doubling_boundary_preimage_of_zero() {
        let y = preimage_in_open_cube(&doubling(), &[0.0]).unwrap();
        assert_eq!(y, vec![-0.5]);
    }

    #[test]
    fn volume_deficit_is_reported() {
        let map = BernoulliMap::assemble(
            1,
            vec![
                PartitionCell::interval(0.0, 1.0 / 3.0, false, 0),
                PartitionCell::interval(1.0 / 3.0, 1.0 / 3.0, false, 1),
            ],
        );
        let r = map.validate();
        assert!(matches!(r.errors[0], MapError::VolumeDeficit { .. }));
        assert_eq!(r.status(AssumptionItem::CubeCells), ItemStatus::Fail);
        assert_eq!(r.status(AssumptionItem::BoundarySurjective), ItemStatus::Skipped);
    }

    #[test]
    fn overlap_is_reported() {
        let map = BernoulliMap::assemble(
            1,
            vec![
                PartitionCell::interval(0.0, 0.6, false, 0),
                PartitionCell::interval(0.4, 0.6, false, 1),
            ],
        );
        let r = map.validate();
        assert!(r.errors.iter().any(|e| matches!(e, MapError::OverlappingCells { .. })));
    }

    #[test]
    fn wrong_offset_is_a_target_mismatch() {
        let mut bad = PartitionCell::interval(0.5, 0.5, false, 1);
        bad.offset[0] += 0.25;
        let map = BernoulliMap::assemble(1, vec![PartitionCell::interval(0.0, 0.5, false, 0), bad]);
        let r = map.validate();
        assert_eq!(r.errors, vec![MapError::TargetCubeMismatch { cell: 1 }]);
    }

    #[test]
    fn non_orthogonal_matrix_is_reported() {
        let mut bad = PartitionCell::interval(0.5, 0.5, false, 1);
        bad.rotation[0] = 1.1;
        let map = BernoulliMap::assemble(1, vec![PartitionCell::interval(0.0, 0.5, false, 0), bad]);
        assert_eq!(map.validate().errors, vec![MapError::NonOrthogonalMatrix { cell: 1 }]);
    }

    #[test]
    fn rotated_quadrant_preimages_land_on_the_boundary() {
        // quarter turn (u, v) -> (-v, u) on every quarter cell
        let mut cells = Vec::new();
        for (i, (cx, cy)) in [(0.0, 0.0), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)].into_iter().enumerate() {
            let rotation = vec![0.0, -1.0, 1.0, 0.0];
            let target = vec![(i % 2) as i64, (i / 2) as i64];
            let offset = vec![target[0] as f64 + 1.0 + 2.0 * cy, target[1] as f64 - 2.0 * cx];
            cells.push(PartitionCell::new(vec![cx, cy], 0.5, rotation, offset, target));
        }
        let map = BernoulliMap::assemble(2, cells);
        let r = map.validate();
        assert!(r.is_valid(), "{:?}", r.errors);
        use crate::map_core::PeriodicMap;
        for x in [[0.0, 0.3], [0.3, 0.0], [1.0, 0.7], [0.0, 0.0], [1.0, 1.0]] {
            let y = preimage_in_open_cube(&map, &x).unwrap();
            let back = map.apply(&y);
            assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12, "{x:?} {y:?}");
            assert!(y.iter().all(|v| (v - v.floor()) > 0.0));
        }
    }

    #[test]
    fn mesh_density_meets_floor() {
        assert_eq!(mesh_points_per_axis(2), BOUNDARY_MESH_POINTS);
        assert!(101usize.pow(2) >= BOUNDARY_MESH_POINTS);
        assert!((mesh_points_per_axis(3) + 1).pow(2) >= BOUNDARY_MESH_POINTS);
    }
}
