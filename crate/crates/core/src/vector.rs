//! Vector-domain types: labeled points, polygons with holes, and the point
//! predicates used by the rasterizers and oracles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Where a tree point record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Inventory,
    Osm,
}

/// One tree point in world coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointRecord {
    pub x: f64,
    pub y: f64,
    pub source: SourceTag,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PointLabelSet {
    pub points: Vec<PointRecord>,
}

impl PointLabelSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Axis-aligned area of interest in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aoi {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Aoi {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }
}

/// A polygon with an exterior ring and zero or more hole rings.
///
/// Rings are stored without the closing repeat vertex; closure is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Vec<[f64; 2]>,
    #[serde(default)]
    pub holes: Vec<Vec<[f64; 2]>>,
}

impl Polygon {
    pub fn new(exterior: Vec<[f64; 2]>) -> Self {
        Self {
            exterior,
            holes: Vec::new(),
        }
    }

    pub fn rect(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self::new(vec![
            [min_x, min_y],
            [max_x, min_y],
            [max_x, max_y],
            [min_x, max_y],
        ])
    }

    /// Unsigned area: |exterior| minus the hole areas.
    pub fn area(&self) -> f64 {
        let mut a = ring_area(&self.exterior).abs();
        for hole in &self.holes {
            a -= ring_area(hole).abs();
        }
        a.max(0.0)
    }

    pub fn bbox(&self) -> Option<(f64, f64, f64, f64)> {
        let mut pts = self.exterior.iter();
        let first = pts.next()?;
        let mut bb = (first[0], first[1], first[0], first[1]);
        for p in self.exterior.iter().chain(self.holes.iter().flatten()) {
            bb.0 = bb.0.min(p[0]);
            bb.1 = bb.1.min(p[1]);
            bb.2 = bb.2.max(p[0]);
            bb.3 = bb.3.max(p[1]);
        }
        Some(bb)
    }

    /// Even-odd point-in-polygon test counting exterior and hole crossings.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = ring_contains(&self.exterior, x, y);
        for hole in &self.holes {
            if ring_contains(hole, x, y) {
                inside = !inside;
            }
        }
        inside
    }

    pub fn all_coords_finite(&self) -> bool {
        self.exterior
            .iter()
            .chain(self.holes.iter().flatten())
            .all(|p| p[0].is_finite() && p[1].is_finite())
    }
}

/// Signed shoelace area of a ring (implicit closure).
pub fn ring_area(ring: &[[f64; 2]]) -> f64 {
    if ring.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..ring.len() {
        let p = ring[i];
        let q = ring[(i + 1) % ring.len()];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    acc * 0.5
}

fn ring_contains(ring: &[[f64; 2]], x: f64, y: f64) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (ring[i][0], ring[i][1]);
        let (xj, yj) = (ring[j][0], ring[j][1]);
        if (yi > y) != (yj > y) {
            let x_cross = xi + (y - yi) / (yj - yi) * (xj - xi);
            if x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// A polygon together with its source tags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolygonFeature {
    pub polygon: Polygon,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

/// One background/non-tree class worth of polygon features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolygonLayer {
    pub name: String,
    pub features: Vec<PolygonFeature>,
}

impl PolygonLayer {
    pub fn empty(name: &str) -> Self {
        Self {
            name: name.to_string(),
            features: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

// ---------------------------------------------------------------------------
// geo crate interop (used by the buffering code path)
// ---------------------------------------------------------------------------

pub(crate) fn to_geo(poly: &Polygon) -> geo::Polygon<f64> {
    let ext: Vec<(f64, f64)> = poly.exterior.iter().map(|p| (p[0], p[1])).collect();
    let holes: Vec<geo::LineString<f64>> = poly
        .holes
        .iter()
        .map(|h| geo::LineString::from(h.iter().map(|p| (p[0], p[1])).collect::<Vec<_>>()))
        .collect();
    geo::Polygon::new(geo::LineString::from(ext), holes)
}

pub(crate) fn from_geo(poly: &geo::Polygon<f64>) -> Polygon {
    let mut exterior: Vec<[f64; 2]> = poly.exterior().coords().map(|c| [c.x, c.y]).collect();
    strip_closing_vertex(&mut exterior);
    let holes = poly
        .interiors()
        .iter()
        .map(|ring| {
            let mut h: Vec<[f64; 2]> = ring.coords().map(|c| [c.x, c.y]).collect();
            strip_closing_vertex(&mut h);
            h
        })
        .collect();
    Polygon { exterior, holes }
}

fn strip_closing_vertex(ring: &mut Vec<[f64; 2]>) {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_area_and_bbox() {
        let p = Polygon::rect(0.0, 0.0, 20.0, 20.0);
        assert_eq!(p.area(), 400.0);
        assert_eq!(p.bbox(), Some((0.0, 0.0, 20.0, 20.0)));
    }

    #[test]
    fn contains_with_hole() {
        let mut p = Polygon::rect(0.0, 0.0, 10.0, 10.0);
        p.holes.push(vec![[4.0, 4.0], [6.0, 4.0], [6.0, 6.0], [4.0, 6.0]]);
        assert!(p.contains(1.0, 1.0));
        assert!(!p.contains(5.0, 5.0));
        assert!(!p.contains(11.0, 5.0));
        assert_eq!(p.area(), 100.0 - 4.0);
    }

    #[test]
    fn geo_round_trip() {
        let p = Polygon::rect(1.0, 2.0, 3.0, 4.0);
        let back = from_geo(&to_geo(&p));
        assert_eq!(back.area(), p.area());
        assert_eq!(back.exterior.len(), 4);
    }

    #[test]
    fn aoi_contains_bounds() {
        let aoi = Aoi {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 1.0,
            max_y: 1.0,
        };
        assert!(aoi.contains(0.0, 1.0));
        assert!(!aoi.contains(1.0001, 0.5));
    }
}
