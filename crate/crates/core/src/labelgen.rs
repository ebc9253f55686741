//! Label generation: turn tree points and buffered background polygons into
//! the tri-state label raster and the auxiliary binary masks.
//!
//! Pixel membership is decided by center-point inclusion throughout — a
//! pixel belongs to a shape iff its center does.

use ndarray::Array2;
use thiserror::Error;

use crate::grid::{BinaryMask, GeoTransform, GridError, LabelRaster, LabelState};
use crate::vector::{from_geo, to_geo, PointLabelSet, Polygon, PolygonLayer};

pub const DEFAULT_TREE_RADIUS_M: f64 = 0.6;
pub const DEFAULT_DISK_RADIUS_M: f64 = 1.5;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("mask shape mismatch: {0}")]
    Shape(#[from] GridError),
    #[error("point expansion radius must be positive, got {0}")]
    BadRadius(f64),
}

/// Target grid for rasterization: shape plus the pixel→world transform.
#[derive(Debug, Clone, Copy)]
pub struct GridRef<'a> {
    pub h: usize,
    pub w: usize,
    pub transform: &'a GeoTransform,
}

impl<'a> GridRef<'a> {
    pub fn new(h: usize, w: usize, transform: &'a GeoTransform) -> Self {
        Self { h, w, transform }
    }

    pub fn resolution(&self) -> f64 {
        self.transform.resolution()
    }
}

/// Offset a polygon boundary by `distance_m` (negative shrinks). Components
/// whose offset collapses to non-positive area are dropped; an empty result
/// is a valid outcome, not an error.
pub fn buffer_polygon(polygon: &Polygon, distance_m: f64) -> Vec<Polygon> {
    use geo::{Area, Buffer};
    if distance_m == 0.0 {
        return if polygon.area() > 0.0 {
            vec![polygon.clone()]
        } else {
            Vec::new()
        };
    }
    let buffered: geo::MultiPolygon<f64> = to_geo(polygon).buffer(distance_m);
    buffered
        .0
        .iter()
        .filter(|p| p.unsigned_area() > 0.0)
        .map(from_geo)
        .collect()
}

/// Resolve self-intersections by unioning the polygon with itself; returns
/// the valid components with positive area. Crowd-sourced rings are allowed
/// to be degenerate, so an empty result means "drop the feature".
pub fn repair_polygon(polygon: &Polygon) -> Vec<Polygon> {
    use geo::{Area, BooleanOps};
    if !polygon.all_coords_finite() || polygon.exterior.len() < 3 {
        return Vec::new();
    }
    let g = to_geo(polygon);
    let unioned = g.union(&g);
    unioned
        .0
        .iter()
        .filter(|p| p.unsigned_area() > 0.0)
        .map(from_geo)
        .collect()
}

/// Rasterize already-buffered layers onto a tile grid: a pixel is set iff
/// its center lies inside any polygon (even-odd rule). Overlaps union.
pub fn rasterize_polygons(layers: &[PolygonLayer], grid: GridRef) -> BinaryMask {
    let mut mask = BinaryMask::zeros(grid.h, grid.w, "background");
    for layer in layers {
        for feature in &layer.features {
            rasterize_into(&feature.polygon, grid, &mut mask);
        }
    }
    mask
}

/// Scanline fill of one polygon in continuous pixel space. Crossings are
/// computed against the horizontal line through each row of pixel centers
/// with a half-open vertex rule, which matches even-odd point-in-polygon
/// up to centers lying exactly on an edge.
fn rasterize_into(polygon: &Polygon, grid: GridRef, mask: &mut BinaryMask) {
    // World → continuous pixel coordinates.
    let map_ring = |ring: &[[f64; 2]]| -> Vec<[f64; 2]> {
        ring.iter()
            .map(|p| {
                let (col, row) = grid.transform.world_to_pixel(p[0], p[1]);
                [col, row]
            })
            .collect()
    };
    let rings: Vec<Vec<[f64; 2]>> = std::iter::once(map_ring(&polygon.exterior))
        .chain(polygon.holes.iter().map(|h| map_ring(h)))
        .collect();

    let (mut min_row, mut max_row) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in rings.iter().flatten() {
        min_row = min_row.min(p[1]);
        max_row = max_row.max(p[1]);
    }
    if !min_row.is_finite() {
        return;
    }
    let r0 = (min_row - 1.0).floor().max(0.0) as usize;
    let r1 = ((max_row + 1.0).ceil() as usize).min(grid.h.saturating_sub(1).max(0));
    if grid.h == 0 || grid.w == 0 {
        return;
    }

    let mut xs: Vec<f64> = Vec::new();
    for row in r0..=r1.min(grid.h - 1) {
        let y = row as f64 + 0.5;
        xs.clear();
        for ring in &rings {
            let n = ring.len();
            if n < 3 {
                continue;
            }
            for i in 0..n {
                let p = ring[i];
                let q = ring[(i + 1) % n];
                // Half-open rule: an edge contributes iff y is within
                // [min, max) of its endpoints' rows.
                if (p[1] > y) != (q[1] > y) {
                    let t = (y - p[1]) / (q[1] - p[1]);
                    xs.push(p[0] + t * (q[0] - p[0]));
                }
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let (x_enter, x_exit) = (pair[0], pair[1]);
            // Pixel centers c + 0.5 in [x_enter, x_exit).
            let c_start = (x_enter - 0.5).ceil().max(0.0) as usize;
            let c_end_excl = (x_exit - 0.5).ceil().max(0.0) as usize;
            for c in c_start..c_end_excl.min(grid.w) {
                mask.set(row, c, true);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpandShape {
    Disk,
    Square,
}

/// Expand point labels into pixel sets.
///
/// * `Disk`: a pixel is set iff its center lies within `radius_m` of any
///   point (center-to-point distance, `<=`).
/// * `Square`: the block of half-width `round(radius_m / resolution)` pixels
///   around the pixel containing the point. At 0.2 m/px a 0.6 m radius gives
///   the 7×7 block used for training positives.
///
/// Points outside the grid contribute only their in-grid pixels.
pub fn expand_points(
    points: &PointLabelSet,
    radius_m: f64,
    grid: GridRef,
    shape: ExpandShape,
) -> Result<BinaryMask, LabelError> {
    if !(radius_m > 0.0) {
        return Err(LabelError::BadRadius(radius_m));
    }
    let radius_px = radius_m / grid.resolution();
    let mut mask = BinaryMask::zeros(grid.h, grid.w, "tree_points");
    for p in &points.points {
        let (pc, pr) = grid.transform.world_to_pixel(p.x, p.y);
        match shape {
            ExpandShape::Disk => {
                let r2 = radius_px * radius_px;
                let r_lo = ((pr - radius_px - 1.0).floor().max(0.0)) as usize;
                let r_hi = ((pr + radius_px + 1.0).ceil().max(0.0)) as usize;
                let c_lo = ((pc - radius_px - 1.0).floor().max(0.0)) as usize;
                let c_hi = ((pc + radius_px + 1.0).ceil().max(0.0)) as usize;
                for row in r_lo..=r_hi.min(grid.h.saturating_sub(1)) {
                    if grid.h == 0 {
                        break;
                    }
                    for col in c_lo..=c_hi.min(grid.w.saturating_sub(1)) {
                        let dy = row as f64 + 0.5 - pr;
                        let dx = col as f64 + 0.5 - pc;
                        if dx * dx + dy * dy <= r2 {
                            mask.set(row, col, true);
                        }
                    }
                }
            }
            ExpandShape::Square => {
                let half = radius_px.round() as isize;
                let anchor_r = pr.floor() as isize;
                let anchor_c = pc.floor() as isize;
                for dr in -half..=half {
                    for dc in -half..=half {
                        let r = anchor_r + dr;
                        let c = anchor_c + dc;
                        if r >= 0 && c >= 0 && (r as usize) < grid.h && (c as usize) < grid.w {
                            mask.set(r as usize, c as usize, true);
                        }
                    }
                }
            }
        }
    }
    Ok(mask)
}

/// The single pixel containing each point; used by the sparse evaluation
/// protocol, which never expands labels.
pub fn point_pixels(points: &PointLabelSet, grid: GridRef) -> BinaryMask {
    let mut mask = BinaryMask::zeros(grid.h, grid.w, "point_pixels");
    for p in &points.points {
        let (pc, pr) = grid.transform.world_to_pixel(p.x, p.y);
        if pr >= 0.0 && pc >= 0.0 {
            let (r, c) = (pr.floor() as usize, pc.floor() as usize);
            if r < grid.h && c < grid.w {
                mask.set(r, c, true);
            }
        }
    }
    mask
}

/// Combine the tree mask, the background-object mask `O`, and the exclusion
/// disk mask `D` into the tri-state label raster:
///
/// * POS where the tree mask is set (positive precedence),
/// * NEG where `O` is set, the pixel is not a tree, and not inside `D`
///   (negatives within the exclusion disk of a positive are removed),
/// * UNKNOWN everywhere else.
pub fn compose_label_raster(
    tree_mask: &BinaryMask,
    background: &BinaryMask,
    exclusion_disk: &BinaryMask,
) -> Result<LabelRaster, LabelError> {
    let dim = tree_mask.dim();
    if background.dim() != dim || exclusion_disk.dim() != dim {
        return Err(LabelError::Shape(GridError::ShapeMismatch {
            expected: dim,
            got: if background.dim() != dim {
                background.dim()
            } else {
                exclusion_disk.dim()
            },
        }));
    }
    let states = Array2::from_shape_fn(dim, |(r, c)| {
        if tree_mask.get(r, c) {
            LabelState::Pos as u8
        } else if background.get(r, c) && !exclusion_disk.get(r, c) {
            LabelState::Neg as u8
        } else {
            LabelState::Unknown as u8
        }
    });
    Ok(LabelRaster::from_states(states).expect("valid states"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::{PointRecord, PolygonFeature, SourceTag};
    use std::collections::BTreeMap;

    fn point(x: f64, y: f64) -> PointRecord {
        PointRecord {
            x,
            y,
            source: SourceTag::Inventory,
            attributes: BTreeMap::new(),
        }
    }

    // Pixel space == world space: origin 0, 1 unit per pixel, y down.
    fn identity_grid() -> GeoTransform {
        GeoTransform::new([0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn square_negative_buffer_is_analytic() {
        let sq = Polygon::rect(0.0, 0.0, 20.0, 20.0);
        let out = buffer_polygon(&sq, -5.0);
        assert_eq!(out.len(), 1);
        assert!((out[0].area() - 100.0).abs() < 1e-9);
        let bb = out[0].bbox().unwrap();
        assert!((bb.0 - 5.0).abs() < 1e-9 && (bb.2 - 15.0).abs() < 1e-9);
    }

    #[test]
    fn over_shrunk_polygon_is_dropped() {
        let sq = Polygon::rect(0.0, 0.0, 8.0, 8.0);
        assert!(buffer_polygon(&sq, -5.0).is_empty());
    }

    #[test]
    fn erosion_matches_dense_sampling_oracle_on_l_shape() {
        let l = Polygon {
            exterior: vec![
                [0.0, 0.0],
                [10.0, 0.0],
                [10.0, 4.0],
                [4.0, 4.0],
                [4.0, 10.0],
                [0.0, 10.0],
            ],
            holes: vec![],
        };
        let out = buffer_polygon(&l, -1.0);
        let area: f64 = out.iter().map(|p| p.area()).sum();
        // Dense-sampling erosion oracle: interior grid samples >= 1 m from
        // the boundary, counted at 0.05 m spacing.
        let step = 0.05;
        let mut count = 0usize;
        let mut total = 0usize;
        let n = (10.0 / step) as usize;
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 + 0.5) * step;
                let y = (j as f64 + 0.5) * step;
                if !l.contains(x, y) {
                    continue;
                }
                total += 1;
                if distance_to_rings(&l, x, y) >= 1.0 {
                    count += 1;
                }
            }
        }
        assert!(total > 0);
        let oracle_area = count as f64 * step * step;
        let rel = (area - oracle_area).abs() / oracle_area;
        assert!(rel < 0.02, "area {area} vs oracle {oracle_area} (rel {rel})");
    }

    fn distance_to_rings(poly: &Polygon, x: f64, y: f64) -> f64 {
        let mut best = f64::INFINITY;
        let rings = std::iter::once(&poly.exterior).chain(poly.holes.iter());
        for ring in rings {
            let n = ring.len();
            for i in 0..n {
                let a = ring[i];
                let b = ring[(i + 1) % n];
                best = best.min(segment_distance(a, b, x, y));
            }
        }
        best
    }

    fn segment_distance(a: [f64; 2], b: [f64; 2], x: f64, y: f64) -> f64 {
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((x - a[0]) * dx + (y - a[1]) * dy) / len2).clamp(0.0, 1.0)
        };
        let (px, py) = (a[0] + t * dx, a[1] + t * dy);
        ((x - px).powi(2) + (y - py).powi(2)).sqrt()
    }

    #[test]
    fn erosion_never_grows_area_on_random_rectangles() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(99);
        for _ in 0..200 {
            let w = rng.gen_range(1.0..40.0);
            let h = rng.gen_range(1.0..40.0);
            let d = rng.gen_range(0.1..5.0);
            let rect = Polygon::rect(0.0, 0.0, w, h);
            let out = buffer_polygon(&rect, -d);
            let area: f64 = out.iter().map(|p| p.area()).sum();
            let expected = ((w - 2.0 * d).max(0.0)) * ((h - 2.0 * d).max(0.0));
            assert!(area <= rect.area() + 1e-9);
            if !out.is_empty() {
                assert!(area < rect.area());
            }
            let denom = expected.max(1e-12);
            assert!(
                (area - expected).abs() / denom < 0.02 || (expected == 0.0 && area == 0.0),
                "rect {w}x{h} -{d}: got {area}, expected {expected}"
            );
        }
    }

    #[test]
    fn rasterize_square_covers_expected_centers() {
        // Square covering pixel centers (2..=4, 2..=4) on an 8x8 grid.
        let gt = identity_grid();
        let grid = GridRef::new(8, 8, &gt);
        let layer = PolygonLayer {
            name: "buildings".into(),
            features: vec![PolygonFeature {
                polygon: Polygon::rect(2.1, 2.1, 4.9, 4.9),
                tags: BTreeMap::new(),
            }],
        };
        let mask = rasterize_polygons(&[layer], grid);
        assert_eq!(mask.count_ones(), 9);
        // Oracle: point-in-polygon over all 64 centers.
        let poly = Polygon::rect(2.1, 2.1, 4.9, 4.9);
        for r in 0..8 {
            for c in 0..8 {
                let (x, y) = gt.pixel_center_to_world(r, c);
                assert_eq!(mask.get(r, c), poly.contains(x, y), "at ({r},{c})");
            }
        }
    }

    #[test]
    fn rasterize_empty_layers_is_zero() {
        let gt = identity_grid();
        let mask = rasterize_polygons(&[], GridRef::new(4, 4, &gt));
        assert_eq!(mask.count_ones(), 0);
    }

    #[test]
    fn rasterize_overlap_is_idempotent_union() {
        let gt = identity_grid();
        let grid = GridRef::new(8, 8, &gt);
        let f = |poly| PolygonFeature {
            polygon: poly,
            tags: BTreeMap::new(),
        };
        let layer = PolygonLayer {
            name: "b".into(),
            features: vec![f(Polygon::rect(0.4, 0.4, 3.6, 3.6)), f(Polygon::rect(2.4, 2.4, 5.6, 5.6))],
        };
        let mask = rasterize_polygons(&[layer], grid);
        // 4x4 centers per square minus the 2x2 overlap counted once.
        assert_eq!(mask.count_ones(), 16 + 16 - 4);
    }

    #[test]
    fn rasterize_matches_point_in_polygon_oracle_on_random_polygons() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(4);
        let gt = identity_grid();
        let grid = GridRef::new(16, 16, &gt);
        for _ in 0..50 {
            // Random convex-ish polygon: points around a circle with radial jitter.
            let cx = rng.gen_range(3.0..13.0);
            let cy = rng.gen_range(3.0..13.0);
            let n = rng.gen_range(3..8);
            let ring: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let ang = i as f64 / n as f64 * std::f64::consts::TAU;
                    let rad = rng.gen_range(1.0..4.0);
                    [cx + rad * ang.cos(), cy + rad * ang.sin()]
                })
                .collect();
            let poly = Polygon::new(ring);
            let layer = PolygonLayer {
                name: "p".into(),
                features: vec![PolygonFeature {
                    polygon: poly.clone(),
                    tags: BTreeMap::new(),
                }],
            };
            let mask = rasterize_polygons(&[layer], grid);
            for r in 0..16 {
                for c in 0..16 {
                    let (x, y) = gt.pixel_center_to_world(r, c);
                    assert_eq!(mask.get(r, c), poly.contains(x, y), "mismatch at ({r},{c})");
                }
            }
        }
    }

    #[test]
    fn disk_expansion_has_177_pixels_at_7_5_px_radius() {
        // Point at the center of pixel (50, 50) on a 0.2 m/px grid.
        let gt = GeoTransform::new([0.0, 0.2, 0.0, 0.0, 0.0, 0.2]).unwrap();
        let grid = GridRef::new(101, 101, &gt);
        let points = PointLabelSet {
            points: vec![point(50.5 * 0.2, 50.5 * 0.2)],
        };
        let mask = expand_points(&points, 1.5, grid, ExpandShape::Disk).unwrap();
        // Lattice enumeration oracle: dx^2 + dy^2 <= 7.5^2.
        let mut expected = 0;
        for dx in -8i64..=8 {
            for dy in -8i64..=8 {
                if (dx * dx + dy * dy) as f64 <= 56.25 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 177);
        assert_eq!(mask.count_ones(), 177);
    }

    #[test]
    fn square_expansion_is_7x7_at_point_scale() {
        let gt = GeoTransform::new([0.0, 0.2, 0.0, 0.0, 0.0, 0.2]).unwrap();
        let grid = GridRef::new(64, 64, &gt);
        let points = PointLabelSet {
            points: vec![point(30.5 * 0.2, 30.5 * 0.2)],
        };
        let mask = expand_points(&points, 0.6, grid, ExpandShape::Square).unwrap();
        assert_eq!(mask.count_ones(), 49);
    }

    #[test]
    fn zero_points_gives_zero_mask() {
        let gt = identity_grid();
        let mask = expand_points(
            &PointLabelSet::default(),
            1.0,
            GridRef::new(8, 8, &gt),
            ExpandShape::Disk,
        )
        .unwrap();
        assert_eq!(mask.count_ones(), 0);
    }

    #[test]
    fn out_of_grid_point_contributes_partial_disk() {
        let gt = identity_grid();
        let grid = GridRef::new(8, 8, &gt);
        let points = PointLabelSet {
            points: vec![point(-0.5, 4.0)],
        };
        let mask = expand_points(&points, 2.0, grid, ExpandShape::Disk).unwrap();
        assert!(mask.count_ones() > 0);
        assert!(mask.count_ones() < 13); // full disk would be 13 pixels
    }

    #[test]
    fn expansion_is_monotone_in_radius() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(12);
        let gt = identity_grid();
        let grid = GridRef::new(32, 32, &gt);
        let points = PointLabelSet {
            points: (0..5)
                .map(|_| point(rng.gen_range(0.0..32.0), rng.gen_range(0.0..32.0)))
                .collect(),
        };
        let mut prev = expand_points(&points, 0.5, grid, ExpandShape::Disk).unwrap();
        for radius in [1.0, 1.7, 2.5, 4.0] {
            let next = expand_points(&points, radius, grid, ExpandShape::Disk).unwrap();
            for r in 0..32 {
                for c in 0..32 {
                    assert!(!prev.get(r, c) || next.get(r, c), "pixel unset as radius grew");
                }
            }
            prev = next;
        }
    }

    #[test]
    fn compose_precedence() {
        let t = BinaryMask::from_fn(1, 3, "t", |_, c| c == 0);
        let o = BinaryMask::ones(1, 3, "o");
        let d = BinaryMask::from_fn(1, 3, "d", |_, c| c == 1);
        let y = compose_label_raster(&t, &o, &d).unwrap();
        assert_eq!(y.get(0, 0), LabelState::Pos); // tree wins over O
        assert_eq!(y.get(0, 1), LabelState::Unknown); // negative removed near a tree
        assert_eq!(y.get(0, 2), LabelState::Neg);
    }

    #[test]
    fn compose_shape_mismatch_errors() {
        let t = BinaryMask::zeros(2, 2, "t");
        let o = BinaryMask::zeros(2, 3, "o");
        let d = BinaryMask::zeros(2, 2, "d");
        assert!(compose_label_raster(&t, &o, &d).is_err());
    }

    #[test]
    fn compose_is_feature_order_independent() {
        // Rasterize two layers in both orders; composition must be identical.
        let gt = identity_grid();
        let grid = GridRef::new(8, 8, &gt);
        let a = PolygonFeature {
            polygon: Polygon::rect(0.6, 0.6, 3.4, 3.4),
            tags: BTreeMap::new(),
        };
        let b = PolygonFeature {
            polygon: Polygon::rect(2.6, 2.6, 6.4, 6.4),
            tags: BTreeMap::new(),
        };
        let l1 = PolygonLayer {
            name: "x".into(),
            features: vec![a.clone(), b.clone()],
        };
        let l2 = PolygonLayer {
            name: "x".into(),
            features: vec![b, a],
        };
        let t = BinaryMask::from_fn(8, 8, "t", |r, c| r == 1 && c == 1);
        let d = BinaryMask::from_fn(8, 8, "d", |r, c| r <= 2 && c <= 2);
        let y1 = compose_label_raster(&t, &rasterize_polygons(&[l1], grid), &d).unwrap();
        let y2 = compose_label_raster(&t, &rasterize_polygons(&[l2], grid), &d).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn every_pixel_has_exactly_one_state() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(21);
        for _ in 0..20 {
            let t = BinaryMask::from_fn(16, 16, "t", |_, _| rng.gen_bool(0.2));
            let o = BinaryMask::from_fn(16, 16, "o", |_, _| rng.gen_bool(0.4));
            let d = BinaryMask::from_fn(16, 16, "d", |_, _| rng.gen_bool(0.3));
            let y = compose_label_raster(&t, &o, &d).unwrap();
            let total = y.count(LabelState::Pos) + y.count(LabelState::Neg) + y.count(LabelState::Unknown);
            assert_eq!(total, 256);
        }
    }
}
