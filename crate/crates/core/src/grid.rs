//! Raster grid primitives: the pixel↔world affine transform, image tiles,
//! binary masks, and the tri-state label raster.
//!
//! All grids are row-major with `(row, col)` indexing; world coordinates use
//! the GDAL convention where the transform maps the *top-left corner* of
//! pixel `(0, 0)` to the raster origin.

use ndarray::{Array2, Array3, ArrayView3, s};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("geo transform is singular and cannot be inverted")]
    SingularTransform,
    #[error("empty raster: h={h}, w={w}, c={c}")]
    EmptyRaster { h: usize, w: usize, c: usize },
    #[error("resolution must be positive, got {0}")]
    BadResolution(f64),
    #[error("intensity {value} at ({row}, {col}) outside [0, 1]")]
    IntensityOutOfRange { row: usize, col: usize, value: f32 },
}

/// Affine map from pixel space to world space, GDAL-style:
///
/// ```text
/// world_x = c0 + col * c1 + row * c2
/// world_y = c3 + col * c4 + row * c5
/// ```
///
/// where `(col, row)` are continuous pixel coordinates with `(0, 0)` at the
/// top-left corner of the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    coeffs: [f64; 6],
}

impl GeoTransform {
    pub fn new(coeffs: [f64; 6]) -> Result<Self, GridError> {
        let det = coeffs[1] * coeffs[5] - coeffs[2] * coeffs[4];
        if det == 0.0 || !det.is_finite() {
            return Err(GridError::SingularTransform);
        }
        Ok(Self { coeffs })
    }

    /// North-up transform with square pixels: origin at the top-left corner,
    /// x increasing with columns, y decreasing with rows.
    pub fn north_up(origin_x: f64, origin_y: f64, resolution: f64) -> Self {
        Self {
            coeffs: [origin_x, resolution, 0.0, origin_y, 0.0, -resolution],
        }
    }

    /// Build from ESRI world-file parameters `(a, d, b, e, c, f)` as they
    /// appear line by line. World files reference the *center* of the
    /// top-left pixel, so the origin is shifted back by half a pixel.
    pub fn from_world_file(params: [f64; 6]) -> Result<Self, GridError> {
        let [a, d, b, e, c, f] = params;
        let origin_x = c - 0.5 * a - 0.5 * b;
        let origin_y = f - 0.5 * d - 0.5 * e;
        Self::new([origin_x, a, b, origin_y, d, e])
    }

    /// The six world-file lines `(a, d, b, e, c, f)` for this transform.
    pub fn to_world_file(&self) -> [f64; 6] {
        let [x0, c1, c2, y0, c4, c5] = self.coeffs;
        [
            c1,
            c4,
            c2,
            c5,
            x0 + 0.5 * c1 + 0.5 * c2,
            y0 + 0.5 * c4 + 0.5 * c5,
        ]
    }

    pub fn coeffs(&self) -> [f64; 6] {
        self.coeffs
    }

    pub fn pixel_to_world(&self, col: f64, row: f64) -> (f64, f64) {
        let c = &self.coeffs;
        (c[0] + col * c[1] + row * c[2], c[3] + col * c[4] + row * c[5])
    }

    pub fn pixel_center_to_world(&self, row: usize, col: usize) -> (f64, f64) {
        self.pixel_to_world(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Inverse mapping to continuous pixel coordinates `(col, row)`.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let c = &self.coeffs;
        let det = c[1] * c[5] - c[2] * c[4];
        let dx = x - c[0];
        let dy = y - c[3];
        let col = (dx * c[5] - dy * c[2]) / det;
        let row = (dy * c[1] - dx * c[4]) / det;
        (col, row)
    }

    /// Ground sampling distance in world units per pixel (square-pixel
    /// assumption; for rotated transforms this is the geometric mean).
    pub fn resolution(&self) -> f64 {
        let c = &self.coeffs;
        (c[1] * c[5] - c[2] * c[4]).abs().sqrt()
    }

    /// Transform shifted so that pixel `(row_off, col_off)` of the parent
    /// grid becomes pixel `(0, 0)`.
    pub fn for_window(&self, row_off: usize, col_off: usize) -> Self {
        let (x0, y0) = self.pixel_to_world(col_off as f64, row_off as f64);
        let c = self.coeffs;
        Self {
            coeffs: [x0, c[1], c[2], y0, c[4], c[5]],
        }
    }
}

/// A georeferenced image tile with intensities normalized to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct RasterTile {
    pixels: Array3<f32>,
    transform: GeoTransform,
    crs: String,
}

impl RasterTile {
    /// `pixels` has shape `(h, w, c)`. Fails on empty dimensions, a
    /// non-positive resolution, or out-of-range intensities.
    pub fn new(pixels: Array3<f32>, transform: GeoTransform, crs: &str) -> Result<Self, GridError> {
        let (h, w, c) = pixels.dim();
        if h == 0 || w == 0 || c == 0 {
            return Err(GridError::EmptyRaster { h, w, c });
        }
        let res = transform.resolution();
        if !(res > 0.0) || !res.is_finite() {
            return Err(GridError::BadResolution(res));
        }
        for ((row, col, _), &v) in pixels.indexed_iter() {
            if !(0.0..=1.0).contains(&v) {
                return Err(GridError::IntensityOutOfRange { row, col, value: v });
            }
        }
        Ok(Self {
            pixels,
            transform,
            crs: crs.to_string(),
        })
    }

    pub fn height(&self) -> usize {
        self.pixels.dim().0
    }

    pub fn width(&self) -> usize {
        self.pixels.dim().1
    }

    pub fn channels(&self) -> usize {
        self.pixels.dim().2
    }

    pub fn resolution(&self) -> f64 {
        self.transform.resolution()
    }

    pub fn transform(&self) -> &GeoTransform {
        &self.transform
    }

    pub fn crs(&self) -> &str {
        &self.crs
    }

    pub fn pixels(&self) -> &Array3<f32> {
        &self.pixels
    }

    pub fn view(&self) -> ArrayView3<'_, f32> {
        self.pixels.view()
    }

    /// Owned crop of `size × size` pixels starting at `(row, col)`.
    /// The window must lie inside the tile.
    pub fn crop(&self, row: usize, col: usize, size: usize) -> Result<RasterTile, GridError> {
        let (h, w, _) = self.pixels.dim();
        if row + size > h || col + size > w {
            return Err(GridError::ShapeMismatch {
                expected: (h, w),
                got: (row + size, col + size),
            });
        }
        let window = self
            .pixels
            .slice(s![row..row + size, col..col + size, ..])
            .to_owned();
        Ok(RasterTile {
            pixels: window,
            transform: self.transform.for_window(row, col),
            crs: self.crs.clone(),
        })
    }
}

/// A single-channel 0/1 mask aligned to a tile grid.
#[derive(Debug, Clone, Eq)]
pub struct BinaryMask {
    bits: Array2<u8>,
    name: String,
}

/// Equality is over the bits; the semantic name is metadata.
impl PartialEq for BinaryMask {
    fn eq(&self, other: &Self) -> bool {
        self.bits == other.bits
    }
}

impl BinaryMask {
    pub fn zeros(h: usize, w: usize, name: &str) -> Self {
        Self {
            bits: Array2::zeros((h, w)),
            name: name.to_string(),
        }
    }

    pub fn ones(h: usize, w: usize, name: &str) -> Self {
        Self {
            bits: Array2::from_elem((h, w), 1),
            name: name.to_string(),
        }
    }

    pub fn from_fn(h: usize, w: usize, name: &str, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        Self {
            bits: Array2::from_shape_fn((h, w), |(r, c)| u8::from(f(r, c))),
            name: name.to_string(),
        }
    }

    pub fn from_bits(bits: Array2<u8>, name: &str) -> Self {
        Self {
            bits: bits.mapv(|v| u8::from(v != 0)),
            name: name.to_string(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> (usize, usize) {
        self.bits.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[[row, col]] != 0
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[[row, col]] = u8::from(value);
    }

    pub fn bits(&self) -> &Array2<u8> {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&v| v != 0).count()
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask, GridError> {
        self.check_shape(other)?;
        Ok(BinaryMask {
            bits: ndarray::Zip::from(&self.bits)
                .and(&other.bits)
                .map_collect(|&a, &b| u8::from(a != 0 || b != 0)),
            name: self.name.clone(),
        })
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask, GridError> {
        self.check_shape(other)?;
        Ok(BinaryMask {
            bits: ndarray::Zip::from(&self.bits)
                .and(&other.bits)
                .map_collect(|&a, &b| u8::from(a != 0 && b != 0)),
            name: self.name.clone(),
        })
    }

    pub fn difference(&self, other: &BinaryMask) -> Result<BinaryMask, GridError> {
        self.check_shape(other)?;
        Ok(BinaryMask {
            bits: ndarray::Zip::from(&self.bits)
                .and(&other.bits)
                .map_collect(|&a, &b| u8::from(a != 0 && b == 0)),
            name: self.name.clone(),
        })
    }

    pub fn crop(&self, row: usize, col: usize, size: usize) -> BinaryMask {
        BinaryMask {
            bits: self
                .bits
                .slice(s![row..row + size, col..col + size])
                .to_owned(),
            name: self.name.clone(),
        }
    }

    fn check_shape(&self, other: &BinaryMask) -> Result<(), GridError> {
        if self.bits.dim() != other.bits.dim() {
            return Err(GridError::ShapeMismatch {
                expected: self.bits.dim(),
                got: other.bits.dim(),
            });
        }
        Ok(())
    }
}

/// Per-pixel supervision state. The numeric values double as the persisted
/// palette: `0 = UNKNOWN`, `1 = NEG`, `2 = POS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum LabelState {
    Unknown = 0,
    Neg = 1,
    Pos = 2,
}

impl LabelState {
    pub fn from_u8(v: u8) -> Option<LabelState> {
        match v {
            0 => Some(LabelState::Unknown),
            1 => Some(LabelState::Neg),
            2 => Some(LabelState::Pos),
            _ => None,
        }
    }
}

/// Tri-state ground truth aligned to a tile. POS and NEG are disjoint by
/// construction; everything else is UNKNOWN and excluded from supervision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    states: Array2<u8>,
}

impl LabelRaster {
    pub fn unknown(h: usize, w: usize) -> Self {
        Self {
            states: Array2::zeros((h, w)),
        }
    }

    pub fn from_states(states: Array2<u8>) -> Result<Self, GridError> {
        for &v in states.iter() {
            debug_assert!(v <= 2, "invalid label state {v}");
        }
        Ok(Self {
            states: states.mapv(|v| v.min(2)),
        })
    }

    pub fn dim(&self) -> (usize, usize) {
        self.states.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> LabelState {
        LabelState::from_u8(self.states[[row, col]]).expect("label palette invariant")
    }

    pub fn set(&mut self, row: usize, col: usize, state: LabelState) {
        self.states[[row, col]] = state as u8;
    }

    pub fn states(&self) -> &Array2<u8> {
        &self.states
    }

    pub fn count(&self, state: LabelState) -> usize {
        self.states.iter().filter(|&&v| v == state as u8).count()
    }

    pub fn mask_of(&self, state: LabelState, name: &str) -> BinaryMask {
        BinaryMask::from_fn(self.dim().0, self.dim().1, name, |r, c| {
            self.states[[r, c]] == state as u8
        })
    }

    pub fn crop(&self, row: usize, col: usize, size: usize) -> LabelRaster {
        LabelRaster {
            states: self
                .states
                .slice(s![row..row + size, col..col + size])
                .to_owned(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn world_pixel_round_trip() {
        let gt = GeoTransform::north_up(565_000.0, 5_930_000.0, 0.2);
        for &(x, y) in &[
            (565_000.1, 5_929_999.9),
            (565_432.157, 5_929_123.456),
            (565_999.9, 5_929_000.01),
        ] {
            let (col, row) = gt.world_to_pixel(x, y);
            let (x2, y2) = gt.pixel_to_world(col, row);
            assert!((x - x2).abs() < 1e-6, "x round trip {x} -> {x2}");
            assert!((y - y2).abs() < 1e-6, "y round trip {y} -> {y2}");
        }
    }

    #[test]
    fn world_file_round_trip() {
        let gt = GeoTransform::north_up(10.0, 20.0, 0.5);
        let wf = gt.to_world_file();
        // World file references the center of the top-left pixel.
        assert_eq!(wf[4], 10.25);
        assert_eq!(wf[5], 19.75);
        let gt2 = GeoTransform::from_world_file(wf).unwrap();
        assert_eq!(gt.coeffs(), gt2.coeffs());
    }

    #[test]
    fn singular_transform_rejected() {
        assert!(GeoTransform::new([0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn window_transform_shifts_origin() {
        let gt = GeoTransform::north_up(100.0, 200.0, 1.0);
        let sub = gt.for_window(10, 5);
        assert_eq!(sub.pixel_to_world(0.0, 0.0), (105.0, 190.0));
        assert_eq!(sub.resolution(), 1.0);
    }

    #[test]
    fn raster_tile_validation() {
        let gt = GeoTransform::north_up(0.0, 0.0, 0.2);
        let ok = Array3::<f32>::zeros((2, 2, 3));
        assert!(RasterTile::new(ok, gt, "EPSG:32632").is_ok());

        let bad = Array3::<f32>::from_elem((2, 2, 3), 1.5);
        assert!(matches!(
            RasterTile::new(bad, gt, "EPSG:32632"),
            Err(GridError::IntensityOutOfRange { .. })
        ));
    }

    #[test]
    fn crop_shifts_georeference() {
        let gt = GeoTransform::north_up(0.0, 100.0, 1.0);
        let mut px = Array3::<f32>::zeros((10, 10, 1));
        px[[3, 4, 0]] = 0.75;
        let tile = RasterTile::new(px, gt, "local").unwrap();
        let crop = tile.crop(3, 4, 2).unwrap();
        assert_eq!(crop.pixels()[[0, 0, 0]], 0.75);
        // World position of the cropped pixel center must be unchanged.
        assert_eq!(
            crop.transform().pixel_center_to_world(0, 0),
            tile.transform().pixel_center_to_world(3, 4)
        );
    }

    #[test]
    fn mask_set_algebra() {
        let a = BinaryMask::from_bits(array![[1, 0], [1, 1]], "a");
        let b = BinaryMask::from_bits(array![[0, 0], [1, 0]], "b");
        assert_eq!(a.union(&b).unwrap().count_ones(), 3);
        assert_eq!(a.intersection(&b).unwrap().count_ones(), 1);
        assert_eq!(a.difference(&b).unwrap().count_ones(), 2);
    }

    #[test]
    fn label_states_partition() {
        let mut y = LabelRaster::unknown(2, 2);
        y.set(0, 0, LabelState::Pos);
        y.set(1, 1, LabelState::Neg);
        assert_eq!(y.count(LabelState::Pos), 1);
        assert_eq!(y.count(LabelState::Neg), 1);
        assert_eq!(y.count(LabelState::Unknown), 2);
        // Exactly one state per pixel by construction.
        let total = y.count(LabelState::Pos) + y.count(LabelState::Neg) + y.count(LabelState::Unknown);
        assert_eq!(total, 4);
    }
}
