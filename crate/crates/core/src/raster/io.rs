//! PNG ingestion and export.
//!
//! Depth is a 16-bit grayscale PNG, color and labels are 8-bit RGB. Labels
//! are encoded with the fixed class palette. A plain-text sidecar next to
//! the depth file (`<depth>.meta`) records the elevation range.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};

use crate::error::RasterError;
use crate::grid::LabelGrid;
use crate::kv::KeyValues;
use crate::label::{ClassLabel, UNKNOWN};
use crate::raster::{DepthRange, Raster};

const U16_MAX: f64 = u16::MAX as f64;

pub fn sidecar_path(depth_path: &Path) -> PathBuf {
    let mut s = depth_path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn open(path: &Path) -> Result<image::DynamicImage, RasterError> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(source) => RasterError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => RasterError::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

fn image_err(path: &Path, e: image::ImageError) -> RasterError {
    RasterError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn check_dims(
    what: &'static str,
    got: (u32, u32),
    want: (usize, usize),
) -> Result<(), RasterError> {
    if (got.0 as usize, got.1 as usize) != want {
        return Err(RasterError::Alignment {
            what,
            got_w: got.0 as usize,
            got_h: got.1 as usize,
            want_w: want.0,
            want_h: want.1,
        });
    }
    Ok(())
}

/// Decodes a palette-encoded label PNG. `allow_unknown` admits black pixels
/// as the unknown label.
fn decode_labels(path: &Path, allow_unknown: bool) -> Result<LabelGrid, RasterError> {
    let img = open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut labels = Vec::with_capacity(w * h);
    for (x, y, px) in img.enumerate_pixels() {
        let class = ClassLabel::from_color(px.0)
            .filter(|c| allow_unknown || *c != ClassLabel::Unknown)
            .ok_or(RasterError::Palette {
                x: x as usize,
                y: y as usize,
                r: px.0[0],
                g: px.0[1],
                b: px.0[2],
            })?;
        labels.push(class.index());
    }
    Ok(LabelGrid::new(w, h, labels))
}

/// Loads an aligned depth / color / optional label triplet.
///
/// When a sidecar exists the depth PNG is taken as already normalized and
/// the recorded range is attached; otherwise depth is min-max normalized
/// and the raw 16-bit range is recorded.
pub fn load_raster(
    depth_path: &Path,
    color_path: &Path,
    label_path: Option<&Path>,
) -> Result<Raster, RasterError> {
    let depth_img = open(depth_path)?.to_luma16();
    let (w, h) = (depth_img.width() as usize, depth_img.height() as usize);
    let raw: Vec<f64> = depth_img.pixels().map(|p| p.0[0] as f64).collect();

    let meta = sidecar_path(depth_path);
    let (depth, range) = if meta.exists() {
        let text = fs::read_to_string(&meta).map_err(|source| RasterError::Io {
            path: meta.clone(),
            source,
        })?;
        let kv = KeyValues::parse(&text)?;
        let range = DepthRange {
            min: kv.require("depth_min")?,
            max: kv.require("depth_max")?,
        };
        (raw.iter().map(|v| v / U16_MAX).collect(), range)
    } else {
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        let depth = raw
            .iter()
            .map(|v| if span > 0.0 { (v - min) / span } else { 0.0 })
            .collect();
        (depth, DepthRange { min, max })
    };

    let color_img = open(color_path)?.to_rgb8();
    check_dims("color", color_img.dimensions(), (w, h))?;
    let color = color_img
        .pixels()
        .map(|p| p.0.map(|c| c as f64 / 255.0))
        .collect();

    let labels = match label_path {
        Some(p) => {
            let grid = decode_labels(p, false)?;
            check_dims(
                "labels",
                (grid.width() as u32, grid.height() as u32),
                (w, h),
            )?;
            Some(grid)
        }
        None => None,
    };

    Ok(Raster::new(w, h, depth, color, labels)?.with_depth_range(range))
}

/// Writes depth (16-bit), color and, if present, labels, plus the sidecar.
pub fn save_raster(
    raster: &Raster,
    depth_path: &Path,
    color_path: &Path,
    label_path: Option<&Path>,
) -> Result<(), RasterError> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let depth: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w, h, |x, y| {
        let d = raster.depth_at(x as usize, y as usize);
        Luma([(d * U16_MAX).round() as u16])
    });
    depth
        .save(depth_path)
        .map_err(|e| image_err(depth_path, e))?;

    let mut kv = KeyValues::new();
    let range = raster.depth_range();
    kv.set("depth_min", range.min);
    kv.set("depth_max", range.max);
    let meta = sidecar_path(depth_path);
    fs::write(&meta, kv.to_text()).map_err(|source| RasterError::Io { path: meta, source })?;

    save_color_png(raster, color_path)?;

    if let Some(path) = label_path {
        let labels = raster
            .labels()
            .ok_or_else(|| RasterError::Invalid("raster has no labels to save".into()))?;
        save_label_grid(labels, path)?;
    }
    Ok(())
}

/// Writes the color channels of a raster as 8-bit RGB.
pub fn save_color_png(raster: &Raster, path: &Path) -> Result<(), RasterError> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_fn(w, h, |x, y| {
        let c = raster.color_at(x as usize, y as usize);
        Rgb(c.map(|v| (v * 255.0).round() as u8))
    });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Alias kept for the evaluation stage's disagreement rasters.
pub fn save_diff_png(raster: &Raster, path: &Path) -> Result<(), RasterError> {
    save_color_png(raster, path)
}

/// Writes a label grid via the palette; unknown pixels become black.
pub fn save_label_grid(labels: &LabelGrid, path: &Path) -> Result<(), RasterError> {
    let img: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_fn(labels.width() as u32, labels.height() as u32, |x, y| {
            let l = labels.get(x as usize, y as usize);
            Rgb(ClassLabel::from_index(l)
                .unwrap_or(ClassLabel::Unknown)
                .color())
        });
    img.save(path).map_err(|e| image_err(path, e))
}

/// Reads a palette-encoded label grid; black decodes to unknown.
pub fn load_label_grid(path: &Path) -> Result<LabelGrid, RasterError> {
    let grid = decode_labels(path, true)?;
    debug_assert!(grid.as_slice().iter().all(|&l| l <= UNKNOWN));
    Ok(grid)
}
