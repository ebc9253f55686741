//! Watershed-style objectness prior: per-pixel path distances Δ from tree
//! markers, the pseudo-probability map `o = exp(−α·Δ²)`, the instance-region
//! assignment, and the inter-instance boundary mask.
//!
//! The cost graph is a 4- or 8-connected pixel lattice. A step between
//! adjacent pixels costs the Euclidean distance between their colors plus a
//! constant spatial unit cost, so the prior decays with both image distance
//! and color change. Path costs are normalized by the patch diagonal to make
//! Δ comparable across patch sizes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use ndarray::{Array2, ArrayView3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::BinaryMask;
use crate::io;

pub const DEFAULT_ALPHA: f64 = 10.0;
pub const DEFAULT_STEP_COST: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ObjectnessError {
    #[error("watershed requires at least one marker inside the patch")]
    NoMarkers,
    #[error("marker ({row}, {col}) outside {h}x{w} patch")]
    MarkerOutOfBounds {
        row: usize,
        col: usize,
        h: usize,
        w: usize,
    },
    #[error("too many markers for the region raster format: {0} > 65535")]
    TooManyMarkers(usize),
    #[error(transparent)]
    Io(#[from] io::IoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, 0),
                (1, 0),
                (0, -1),
                (0, 1),
                (-1, -1),
                (-1, 1),
                (1, -1),
                (1, 1),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectnessParams {
    pub alpha: f64,
    /// Constant cost per pixel step, added to the color distance.
    pub step_cost: f64,
    pub connectivity: Connectivity,
}

impl Default for ObjectnessParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            step_cost: DEFAULT_STEP_COST,
            connectivity: Connectivity::Four,
        }
    }
}

/// Everything derived from one patch and its markers.
#[derive(Debug, Clone)]
pub struct ObjectnessBundle {
    /// Normalized minimal path cost to the nearest marker; `INFINITY` where
    /// no marker exists (empty-marker bundles).
    pub delta: Array2<f64>,
    /// Pseudo-probability `exp(−α·Δ²)`; 0 where `regions == 0`.
    pub o: Array2<f64>,
    /// Instance id per pixel, 1-based in marker order; 0 = no instance.
    pub regions: Array2<u32>,
    /// Pixels where two distinct instances touch.
    pub boundaries: BinaryMask,
    pub alpha: f64,
}

impl ObjectnessBundle {
    /// Bundle for a patch without any markers: no instances, zero objectness.
    pub fn empty(h: usize, w: usize, alpha: f64) -> Self {
        Self {
            delta: Array2::from_elem((h, w), f64::INFINITY),
            o: Array2::zeros((h, w)),
            regions: Array2::zeros((h, w)),
            boundaries: BinaryMask::zeros(h, w, "boundaries"),
            alpha,
        }
    }

    pub fn instance_count(&self) -> usize {
        self.regions.iter().copied().max().unwrap_or(0) as usize
    }
}

#[derive(Debug, Clone, Copy)]
struct QueueEntry {
    cost: f64,
    id: u32,
    idx: usize,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap on (cost, id, idx).
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.id.cmp(&self.id))
            .then(other.idx.cmp(&self.idx))
    }
}

fn color_distance(pixels: &ArrayView3<f32>, a: (usize, usize), b: (usize, usize)) -> f64 {
    let c = pixels.dim().2;
    let mut acc = 0.0f64;
    for ch in 0..c {
        let d = pixels[[a.0, a.1, ch]] as f64 - pixels[[b.0, b.1, ch]] as f64;
        acc += d * d;
    }
    acc.sqrt()
}

/// Assign every pixel to the marker with minimal accumulated path cost.
///
/// Returns the normalized distance map Δ and the instance-region map with
/// 1-based ids in marker input order. Cost ties go to the lowest instance id
/// (lexicographic minimum over `(cost, id)`), so the result is independent
/// of expansion order.
pub fn watershed_assign(
    pixels: &ArrayView3<f32>,
    markers: &[(usize, usize)],
    params: &ObjectnessParams,
) -> Result<(Array2<f64>, Array2<u32>), ObjectnessError> {
    let (h, w, _) = pixels.dim();
    if markers.is_empty() {
        return Err(ObjectnessError::NoMarkers);
    }
    for &(r, c) in markers {
        if r >= h || c >= w {
            return Err(ObjectnessError::MarkerOutOfBounds { row: r, col: c, h, w });
        }
    }

    let mut dist = vec![f64::INFINITY; h * w];
    let mut region = vec![0u32; h * w];
    let mut heap: BinaryHeap<QueueEntry> = BinaryHeap::new();

    for (i, &(r, c)) in markers.iter().enumerate() {
        let id = i as u32 + 1;
        let idx = r * w + c;
        // Duplicate markers on one pixel: the lower id wins.
        if dist[idx] == 0.0 {
            continue;
        }
        dist[idx] = 0.0;
        region[idx] = id;
        heap.push(QueueEntry { cost: 0.0, id, idx });
    }

    let offsets = params.connectivity.offsets();
    while let Some(entry) = heap.pop() {
        let QueueEntry { cost, id, idx } = entry;
        if cost > dist[idx] || (cost == dist[idx] && id > region[idx]) {
            continue; // stale entry
        }
        let (r, c) = (idx / w, idx % w);
        for &(dr, dc) in offsets {
            let nr = r as isize + dr;
            let nc = c as isize + dc;
            if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            let nidx = nr * w + nc;
            let step = color_distance(pixels, (r, c), (nr, nc)) + params.step_cost;
            let ncost = cost + step;
            if ncost < dist[nidx] || (ncost == dist[nidx] && id < region[nidx]) {
                dist[nidx] = ncost;
                region[nidx] = id;
                heap.push(QueueEntry {
                    cost: ncost,
                    id,
                    idx: nidx,
                });
            }
        }
    }

    let diagonal = ((h * h + w * w) as f64).sqrt();
    let delta = Array2::from_shape_fn((h, w), |(r, c)| dist[r * w + c] / diagonal);
    let regions = Array2::from_shape_fn((h, w), |(r, c)| region[r * w + c]);
    Ok((delta, regions))
}

/// `o = exp(−α·Δ²)`, clipped to `[0, 1]`.
pub fn distances_to_objectness(delta: &Array2<f64>, alpha: f64) -> Array2<f64> {
    delta.mapv(|d| (-alpha * d * d).exp().clamp(0.0, 1.0))
}

/// Pixels belonging to an instance that touch a different instance through
/// a 4-neighbor.
pub fn derive_boundaries(regions: &Array2<u32>) -> BinaryMask {
    let (h, w) = regions.dim();
    BinaryMask::from_fn(h, w, "boundaries", |r, c| {
        let id = regions[[r, c]];
        if id == 0 {
            return false;
        }
        let neighbors = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        neighbors.iter().any(|&(nr, nc)| {
            nr < h && nc < w && {
                let nid = regions[[nr, nc]];
                nid != 0 && nid != id
            }
        })
    })
}

/// Full per-patch computation. An empty marker list yields the all-zero
/// bundle rather than an error: patches without any labeled tree are a
/// normal occurrence in the incomplete-label setting.
pub fn compute_bundle(
    pixels: &ArrayView3<f32>,
    markers: &[(usize, usize)],
    params: &ObjectnessParams,
) -> Result<ObjectnessBundle, ObjectnessError> {
    let (h, w, _) = pixels.dim();
    if markers.is_empty() {
        return Ok(ObjectnessBundle::empty(h, w, params.alpha));
    }
    let (delta, regions) = watershed_assign(pixels, markers, params)?;
    let o = distances_to_objectness(&delta, params.alpha);
    let boundaries = derive_boundaries(&regions);
    Ok(ObjectnessBundle {
        delta,
        o,
        regions,
        boundaries,
        alpha: params.alpha,
    })
}

// ---------------------------------------------------------------------------
// Persistence: delta and o as f32 TIFF, regions as 16-bit PNG, boundaries as
// 1-bit PNG.
// ---------------------------------------------------------------------------

pub fn save_bundle(bundle: &ObjectnessBundle, dir: &Path) -> Result<(), ObjectnessError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        ObjectnessError::Io(io::IoError::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })?;
    let max_id = bundle.instance_count();
    if max_id > u16::MAX as usize {
        return Err(ObjectnessError::TooManyMarkers(max_id));
    }
    io::write_f32_tiff(&dir.join("delta.tif"), &bundle.delta.mapv(|v| v as f32), None)?;
    io::write_f32_tiff(&dir.join("objectness.tif"), &bundle.o.mapv(|v| v as f32), None)?;
    io::write_gray16_png(&dir.join("regions.png"), &bundle.regions.mapv(|v| v as u16), None)?;
    io::write_mask_png(&dir.join("boundaries.png"), &bundle.boundaries, None)?;
    io::write_json(
        &dir.join("bundle.json"),
        &serde_json::json!({"alpha": bundle.alpha, "instances": max_id}),
    )?;
    Ok(())
}

pub fn load_bundle(dir: &Path) -> Result<ObjectnessBundle, ObjectnessError> {
    let delta = io::read_f32_tiff(&dir.join("delta.tif"))?.mapv(|v| v as f64);
    let o = io::read_f32_tiff(&dir.join("objectness.tif"))?.mapv(|v| v as f64);
    let regions = io::read_gray16_png(&dir.join("regions.png"))?.mapv(|v| v as u32);
    let boundaries = io::read_mask_png(&dir.join("boundaries.png"))?;
    let meta: serde_json::Value = serde_json::from_reader(
        std::fs::File::open(dir.join("bundle.json")).map_err(|e| {
            ObjectnessError::Io(io::IoError::Io {
                path: dir.join("bundle.json"),
                source: e,
            })
        })?,
    )
    .map_err(|e| {
        ObjectnessError::Io(io::IoError::Json {
            path: dir.join("bundle.json"),
            source: e,
        })
    })?;
    let alpha = meta["alpha"].as_f64().unwrap_or(DEFAULT_ALPHA);
    Ok(ObjectnessBundle {
        delta,
        o,
        regions,
        boundaries,
        alpha,
    })
}

// ---------------------------------------------------------------------------
// Tests, including the independent shortest-path oracle.
// ---------------------------------------------------------------------------
