//! File formats: rasters as GeoTIFF or PNG + ESRI world file, vectors as
//! GeoJSON feature collections or delimited text with an `x,y[,tag...]`
//! header.
//!
//! Readers normalize pixel intensities to `[0, 1]` by the dtype maximum.
//! Writers emit a sidecar world file next to every georeferenced raster.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use thiserror::Error;

use crate::grid::{BinaryMask, GeoTransform, LabelRaster};
use crate::vector::{PointRecord, Polygon, PolygonFeature, SourceTag};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no geo_transform for raster {path} (no embedded georeferencing, no world file)")]
    NoGeoTransform { path: PathBuf },
    #[error("unsupported channel count {channels} in {path}")]
    UnsupportedChannels { path: PathBuf, channels: usize },
    #[error("unsupported raster format: {path}")]
    UnsupportedFormat { path: PathBuf },
    #[error("malformed world file {path}: {msg}")]
    BadWorldFile { path: PathBuf, msg: String },
    #[error("image decode error at {path}: {msg}")]
    Decode { path: PathBuf, msg: String },
    #[error("image encode error at {path}: {msg}")]
    Encode { path: PathBuf, msg: String },
    #[error("json parse error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid geometry in {path}: {msg}")]
    BadGeometry { path: PathBuf, msg: String },
    #[error("grid error: {0}")]
    Grid(#[from] crate::grid::GridError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// World files
// ---------------------------------------------------------------------------

/// Candidate world-file paths for a raster, most specific first.
fn world_file_candidates(raster: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let ext = raster
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    // Convention: first+last letter of the extension + 'w' (png -> pgw, tif -> tfw).
    if ext.len() >= 2 {
        let b = ext.as_bytes();
        let short = format!("{}{}w", b[0] as char, b[ext.len() - 1] as char);
        out.push(raster.with_extension(short));
    }
    out.push(raster.with_extension(format!("{ext}w")));
    out.push(raster.with_extension("wld"));
    out
}

pub fn read_world_file(path: &Path) -> Result<GeoTransform, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| IoError::BadWorldFile {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    if vals.len() != 6 {
        return Err(IoError::BadWorldFile {
            path: path.to_path_buf(),
            msg: format!("expected 6 lines, got {}", vals.len()),
        });
    }
    GeoTransform::from_world_file([vals[0], vals[1], vals[2], vals[3], vals[4], vals[5]])
        .map_err(|e| IoError::BadWorldFile {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
}

pub fn write_world_file(path: &Path, transform: &GeoTransform) -> Result<(), IoError> {
    let p = transform.to_world_file();
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for v in p {
        writeln!(f, "{v:.10}").map_err(io_err(path))?;
    }
    Ok(())
}

fn sidecar_world_path(raster: &Path) -> PathBuf {
    world_file_candidates(raster)
        .into_iter()
        .next()
        .unwrap_or_else(|| raster.with_extension("wld"))
}

fn find_world_file(raster: &Path) -> Option<GeoTransform> {
    world_file_candidates(raster)
        .iter()
        .filter(|p| p.exists())
        .find_map(|p| read_world_file(p).ok())
}

// ---------------------------------------------------------------------------
// Raster read
// ---------------------------------------------------------------------------

/// Pixels normalized to `[0, 1]` plus the georeferencing, if any was found.
pub struct DecodedRaster {
    pub pixels: Array3<f32>,
    pub transform: Option<GeoTransform>,
}

pub fn read_raster(path: &Path) -> Result<DecodedRaster, IoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    let mut decoded = match ext.as_str() {
        "png" => read_png(path)?,
        "tif" | "tiff" => read_tiff(path)?,
        _ => return Err(IoError::UnsupportedFormat { path: path.into() }),
    };
    if decoded.transform.is_none() {
        decoded.transform = find_world_file(path);
    }
    Ok(decoded)
}

fn read_png(path: &Path) -> Result<DecodedRaster, IoError> {
    let img = image::open(path).map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match img {
        image::DynamicImage::ImageLuma8(buf) => gray_to_array(&buf.into_raw(), h, w, 255.0),
        image::DynamicImage::ImageLuma16(buf) => {
            let raw = buf.into_raw();
            Array3::from_shape_fn((h, w, 1), |(r, c, _)| raw[r * w + c] as f32 / 65535.0)
        }
        image::DynamicImage::ImageRgb8(buf) => rgb_to_array(&buf.into_raw(), h, w, 3),
        image::DynamicImage::ImageRgba8(buf) => rgb_to_array(&buf.into_raw(), h, w, 4),
        other => {
            let rgb = other.to_rgb8();
            rgb_to_array(&rgb.into_raw(), h, w, 3)
        }
    };
    Ok(DecodedRaster {
        pixels,
        transform: None,
    })
}

fn gray_to_array(raw: &[u8], h: usize, w: usize, max: f32) -> Array3<f32> {
    Array3::from_shape_fn((h, w, 1), |(r, c, _)| raw[r * w + c] as f32 / max)
}

fn rgb_to_array(raw: &[u8], h: usize, w: usize, stride: usize) -> Array3<f32> {
    // Alpha, when present, is dropped.
    Array3::from_shape_fn((h, w, 3), |(r, c, ch)| {
        raw[(r * w + c) * stride + ch] as f32 / 255.0
    })
}

const TAG_MODEL_PIXEL_SCALE: u16 = 33550;
const TAG_MODEL_TIEPOINT: u16 = 33922;

fn read_tiff(path: &Path) -> Result<DecodedRaster, IoError> {
    let file = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut dec = tiff::decoder::Decoder::new(file).map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (w, h) = dec.dimensions().map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (w, h) = (w as usize, h as usize);

    // Embedded GeoTIFF georeferencing: pixel scale + tiepoint.
    let transform = read_geotiff_transform(&mut dec);

    let img = dec.read_image().map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    use tiff::decoder::DecodingResult as D;
    let (data, max): (Vec<f32>, f32) = match img {
        D::U8(v) => (v.into_iter().map(|x| x as f32).collect(), 255.0),
        D::U16(v) => (v.into_iter().map(|x| x as f32).collect(), 65535.0),
        D::F32(v) => (v, 1.0),
        D::F64(v) => (v.into_iter().map(|x| x as f32).collect(), 1.0),
        _ => {
            return Err(IoError::Decode {
                path: path.to_path_buf(),
                msg: "unsupported tiff sample format".into(),
            })
        }
    };
    let c = data.len() / (h * w);
    if c == 0 || data.len() != h * w * c {
        return Err(IoError::Decode {
            path: path.to_path_buf(),
            msg: format!("unexpected buffer length {} for {h}x{w}", data.len()),
        });
    }
    let pixels = Array3::from_shape_fn((h, w, c), |(r, cc, ch)| {
        (data[(r * w + cc) * c + ch] / max).clamp(0.0, 1.0)
    });
    Ok(DecodedRaster { pixels, transform })
}

fn read_geotiff_transform<R: std::io::Read + std::io::Seek>(
    dec: &mut tiff::decoder::Decoder<R>,
) -> Option<GeoTransform> {
    let scale = dec
        .get_tag_f64_vec(tiff::tags::Tag::Unknown(TAG_MODEL_PIXEL_SCALE))
        .ok()?;
    let tie = dec
        .get_tag_f64_vec(tiff::tags::Tag::Unknown(TAG_MODEL_TIEPOINT))
        .ok()?;
    if scale.len() < 2 || tie.len() < 6 {
        return None;
    }
    // Tiepoint maps raster point (i, j) to world (x, y); scale is (sx, sy).
    let (i, j, x, y) = (tie[0], tie[1], tie[3], tie[4]);
    let (sx, sy) = (scale[0], scale[1]);
    let origin_x = x - i * sx;
    let origin_y = y + j * sy;
    GeoTransform::new([origin_x, sx, 0.0, origin_y, 0.0, -sy]).ok()
}

// ---------------------------------------------------------------------------
// Raster write
// ---------------------------------------------------------------------------

/// 8-bit single-channel PNG; used for the label palette raster.
pub fn write_gray_png(
    path: &Path,
    data: &Array2<u8>,
    transform: Option<&GeoTransform>,
) -> Result<(), IoError> {
    let (h, w) = data.dim();
    let file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| IoError::Encode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let buf: Vec<u8> = data.iter().copied().collect();
    writer.write_image_data(&buf).map_err(|e| IoError::Encode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    drop(writer);
    if let Some(t) = transform {
        write_world_file(&sidecar_world_path(path), t)?;
    }
    Ok(())
}

/// 1-bit single-channel PNG; used for binary masks.
pub fn write_mask_png(
    path: &Path,
    mask: &BinaryMask,
    transform: Option<&GeoTransform>,
) -> Result<(), IoError> {
    let (h, w) = mask.dim();
    let file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::One);
    let mut writer = enc.write_header().map_err(|e| IoError::Encode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let row_bytes = w.div_ceil(8);
    let mut buf = vec![0u8; row_bytes * h];
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) {
                buf[r * row_bytes + c / 8] |= 0x80 >> (c % 8);
            }
        }
    }
    writer.write_image_data(&buf).map_err(|e| IoError::Encode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    drop(writer);
    if let Some(t) = transform {
        write_world_file(&sidecar_world_path(path), t)?;
    }
    Ok(())
}

pub fn read_mask_png(path: &Path) -> Result<BinaryMask, IoError> {
    let dec = read_raster(path)?;
    let (h, w, _) = dec.pixels.dim();
    Ok(BinaryMask::from_fn(h, w, "mask", |r, c| {
        dec.pixels[[r, c, 0]] > 0.5
    }))
}

pub fn write_label_png(
    path: &Path,
    labels: &LabelRaster,
    transform: Option<&GeoTransform>,
) -> Result<(), IoError> {
    write_gray_png(path, labels.states(), transform)
}

pub fn read_label_png(path: &Path) -> Result<LabelRaster, IoError> {
    let img = image::open(path).map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let gray = img.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let raw = gray.into_raw();
    let states = Array2::from_shape_fn((h, w), |(r, c)| raw[r * w + c].min(2));
    Ok(LabelRaster::from_states(states)?)
}

/// 16-bit single-channel PNG; used for instance-region ids.
pub fn write_gray16_png(
    path: &Path,
    data: &Array2<u16>,
    transform: Option<&GeoTransform>,
) -> Result<(), IoError> {
    let (h, w) = data.dim();
    let file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header().map_err(|e| IoError::Encode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut buf = Vec::with_capacity(h * w * 2);
    for v in data.iter() {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    writer.write_image_data(&buf).map_err(|e| IoError::Encode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    drop(writer);
    if let Some(t) = transform {
        write_world_file(&sidecar_world_path(path), t)?;
    }
    Ok(())
}

pub fn read_gray16_png(path: &Path) -> Result<Array2<u16>, IoError> {
    let img = image::open(path).map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let gray = img.to_luma16();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let raw = gray.into_raw();
    Ok(Array2::from_shape_fn((h, w), |(r, c)| raw[r * w + c]))
}

/// 32-bit float single-channel TIFF; used for distance and objectness maps.
pub fn write_f32_tiff(
    path: &Path,
    data: &Array2<f32>,
    transform: Option<&GeoTransform>,
) -> Result<(), IoError> {
    let (h, w) = data.dim();
    let file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut enc = tiff::encoder::TiffEncoder::new(file).map_err(|e| IoError::Encode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let buf: Vec<f32> = data.iter().copied().collect();
    enc.write_image::<tiff::encoder::colortype::Gray32Float>(w as u32, h as u32, &buf)
        .map_err(|e| IoError::Encode {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    if let Some(t) = transform {
        write_world_file(&sidecar_world_path(path), t)?;
    }
    Ok(())
}

pub fn read_f32_tiff(path: &Path) -> Result<Array2<f32>, IoError> {
    let file = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut dec = tiff::decoder::Decoder::new(file).map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let (w, h) = dec.dimensions().map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let img = dec.read_image().map_err(|e| IoError::Decode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    match img {
        tiff::decoder::DecodingResult::F32(v) => {
            Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
                v[r * w as usize + c]
            }))
        }
        _ => Err(IoError::Decode {
            path: path.to_path_buf(),
            msg: "expected f32 samples".into(),
        }),
    }
}

/// 8-bit RGB PNG; used for synthetic scenes and report overlays.
pub fn write_rgb_png(
    path: &Path,
    pixels: &Array3<f32>,
    transform: Option<&GeoTransform>,
) -> Result<(), IoError> {
    let (h, w, c) = pixels.dim();
    if c != 3 {
        return Err(IoError::UnsupportedChannels {
            path: path.to_path_buf(),
            channels: c,
        });
    }
    let file = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| IoError::Encode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut buf = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        for cc in 0..w {
            for ch in 0..3 {
                buf.push((pixels[[r, cc, ch]].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    writer.write_image_data(&buf).map_err(|e| IoError::Encode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    drop(writer);
    if let Some(t) = transform {
        write_world_file(&sidecar_world_path(path), t)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Vector read
// ---------------------------------------------------------------------------

/// Parse statistics for crowd-sourced inputs; malformed records are skipped,
/// never fatal.
#[derive(Debug, Default, Clone, Copy)]
pub struct RejectStats {
    pub rejected: usize,
}

/// Geometry pulled out of one GeoJSON feature.
pub enum FeatureGeometry {
    Point([f64; 2]),
    Polygons(Vec<Polygon>),
    Other,
}

pub struct VectorFeature {
    pub geometry: FeatureGeometry,
    pub tags: BTreeMap<String, String>,
}

/// Read GeoJSON FeatureCollection or delimited `x,y[,tag...]` text.
pub fn read_vector_features(path: &Path) -> Result<(Vec<VectorFeature>, RejectStats), IoError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "json" | "geojson" => read_geojson(path),
        "csv" | "txt" => read_delimited(path),
        _ => Err(IoError::UnsupportedFormat { path: path.into() }),
    }
}

fn read_geojson(path: &Path) -> Result<(Vec<VectorFeature>, RejectStats), IoError> {
    let file = BufReader::new(File::open(path).map_err(io_err(path))?);
    let root: serde_json::Value = serde_json::from_reader(file).map_err(|e| IoError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let features = root
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| IoError::BadGeometry {
            path: path.to_path_buf(),
            msg: "missing features array".into(),
        })?;
    let mut out = Vec::new();
    let mut stats = RejectStats::default();
    for feat in features {
        match parse_feature(feat) {
            Some(v) => out.push(v),
            None => {
                stats.rejected += 1;
                log::warn!("skipping malformed feature in {}", path.display());
            }
        }
    }
    Ok((out, stats))
}

fn parse_feature(feat: &serde_json::Value) -> Option<VectorFeature> {
    let geom = feat.get("geometry")?;
    let gtype = geom.get("type")?.as_str()?;
    let coords = geom.get("coordinates")?;
    let tags = feat
        .get("properties")
        .and_then(|p| p.as_object())
        .map(|obj| {
            obj.iter()
                .map(|(k, v)| {
                    let s = match v {
                        serde_json::Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    (k.clone(), s)
                })
                .collect()
        })
        .unwrap_or_default();
    let geometry = match gtype {
        "Point" => {
            let xy = parse_position(coords)?;
            FeatureGeometry::Point(xy)
        }
        "Polygon" => FeatureGeometry::Polygons(vec![parse_polygon(coords)?]),
        "MultiPolygon" => {
            let polys = coords
                .as_array()?
                .iter()
                .map(parse_polygon)
                .collect::<Option<Vec<_>>>()?;
            FeatureGeometry::Polygons(polys)
        }
        _ => FeatureGeometry::Other,
    };
    Some(VectorFeature { geometry, tags })
}

fn parse_position(v: &serde_json::Value) -> Option<[f64; 2]> {
    let arr = v.as_array()?;
    if arr.len() < 2 {
        return None;
    }
    let x = arr[0].as_f64()?;
    let y = arr[1].as_f64()?;
    if !x.is_finite() || !y.is_finite() {
        return None;
    }
    Some([x, y])
}

fn parse_polygon(coords: &serde_json::Value) -> Option<Polygon> {
    let rings = coords.as_array()?;
    if rings.is_empty() {
        return None;
    }
    let mut parsed: Vec<Vec<[f64; 2]>> = Vec::with_capacity(rings.len());
    for ring in rings {
        let mut pts = ring
            .as_array()?
            .iter()
            .map(parse_position)
            .collect::<Option<Vec<_>>>()?;
        if pts.len() > 1 && pts.first() == pts.last() {
            pts.pop();
        }
        if pts.len() < 3 {
            return None;
        }
        parsed.push(pts);
    }
    let exterior = parsed.remove(0);
    Some(Polygon {
        exterior,
        holes: parsed,
    })
}

fn read_delimited(path: &Path) -> Result<(Vec<VectorFeature>, RejectStats), IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| IoError::Decode {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| IoError::Decode {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.len() < 2 || headers[0] != "x" || headers[1] != "y" {
        return Err(IoError::Decode {
            path: path.to_path_buf(),
            msg: "delimited vectors need an `x,y[,tag...]` header".into(),
        });
    }
    let mut out = Vec::new();
    let mut stats = RejectStats::default();
    for rec in rdr.records() {
        let Ok(rec) = rec else {
            stats.rejected += 1;
            continue;
        };
        let parsed = rec
            .get(0)
            .and_then(|x| x.trim().parse::<f64>().ok())
            .zip(rec.get(1).and_then(|y| y.trim().parse::<f64>().ok()));
        let Some((x, y)) = parsed else {
            stats.rejected += 1;
            log::warn!("skipping malformed record in {}", path.display());
            continue;
        };
        let mut tags = BTreeMap::new();
        for (i, key) in headers.iter().enumerate().skip(2) {
            if let Some(v) = rec.get(i) {
                if !v.is_empty() {
                    tags.insert(key.clone(), v.to_string());
                }
            }
        }
        out.push(VectorFeature {
            geometry: FeatureGeometry::Point([x, y]),
            tags,
        });
    }
    Ok((out, stats))
}

/// Write tree points as a GeoJSON FeatureCollection.
pub fn write_points_geojson(path: &Path, points: &[PointRecord]) -> Result<(), IoError> {
    let features: Vec<serde_json::Value> = points
        .iter()
        .map(|p| {
            let mut props = serde_json::Map::new();
            for (k, v) in &p.attributes {
                props.insert(k.clone(), serde_json::Value::String(v.clone()));
            }
            props.insert(
                "source".into(),
                serde_json::Value::String(
                    match p.source {
                        SourceTag::Inventory => "inventory",
                        SourceTag::Osm => "osm",
                    }
                    .into(),
                ),
            );
            serde_json::json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [p.x, p.y]},
                "properties": props,
            })
        })
        .collect();
    let doc = serde_json::json!({"type": "FeatureCollection", "features": features});
    write_json(path, &doc)
}

/// Write polygon features as a GeoJSON FeatureCollection.
pub fn write_polygons_geojson(path: &Path, features: &[PolygonFeature]) -> Result<(), IoError> {
    let feats: Vec<serde_json::Value> = features
        .iter()
        .map(|f| {
            let mut rings = vec![close_ring(&f.polygon.exterior)];
            for hole in &f.polygon.holes {
                rings.push(close_ring(hole));
            }
            serde_json::json!({
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": rings},
                "properties": f.tags,
            })
        })
        .collect();
    let doc = serde_json::json!({"type": "FeatureCollection", "features": feats});
    write_json(path, &doc)
}

fn close_ring(ring: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = ring.to_vec();
    if let Some(&first) = out.first() {
        out.push(first);
    }
    out
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), IoError> {
    let mut f = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| IoError::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    f.write_all(b"\n").map_err(io_err(path))?;
    Ok(())
}
