//! Aligned depth / color / label rasters.
//!
//! Depth is stored normalized to `[0, 1]` together with the elevation range
//! it was normalized from, so heights can be recovered for reconstruction.

mod composite;
mod io;
mod patch;
mod resample;

pub use composite::{build_composite, scale_side, Composite, Placement, NUM_SCALES};
pub use io::{
    load_label_grid, load_raster, save_color_png, save_diff_png, save_label_grid, save_raster,
    sidecar_path,
};
pub(crate) use patch::extract_window;
pub use patch::{sample_patches, sample_patches_joint, Patch, CHANNELS};
pub use resample::{downsample_area, downsample_nearest};

use crate::error::RasterError;
use crate::grid::LabelGrid;
use crate::label::NUM_CLASSES;

/// Elevation range that normalized depth maps back onto.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl DepthRange {
    pub const UNIT: DepthRange = DepthRange { min: 0.0, max: 1.0 };

    pub fn denormalize(&self, d: f64) -> f64 {
        self.min + d * (self.max - self.min)
    }
}

impl Default for DepthRange {
    fn default() -> Self {
        Self::UNIT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    color: Vec<[f64; 3]>,
    labels: Option<LabelGrid>,
    depth_range: DepthRange,
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        depth: Vec<f64>,
        color: Vec<[f64; 3]>,
        labels: Option<LabelGrid>,
    ) -> Result<Self, RasterError> {
        let n = width * height;
        if depth.len() != n || color.len() != n {
            return Err(RasterError::Invalid(format!(
                "channel lengths depth={} color={} for {width}x{height}",
                depth.len(),
                color.len()
            )));
        }
        if let Some(i) = depth.iter().position(|d| !(0.0..=1.0).contains(d)) {
            return Err(RasterError::Invalid(format!(
                "depth {} at index {i} outside [0,1]",
                depth[i]
            )));
        }
        if let Some(i) = color
            .iter()
            .position(|c| c.iter().any(|v| !(0.0..=1.0).contains(v)))
        {
            return Err(RasterError::Invalid(format!(
                "color {:?} at index {i} outside [0,1]",
                color[i]
            )));
        }
        if let Some(l) = &labels {
            if l.width() != width || l.height() != height {
                return Err(RasterError::Alignment {
                    what: "labels",
                    got_w: l.width(),
                    got_h: l.height(),
                    want_w: width,
                    want_h: height,
                });
            }
            if let Some((x, y, v)) = l.iter().find(|&(_, _, v)| v as usize >= NUM_CLASSES) {
                return Err(RasterError::Invalid(format!(
                    "label {v} at ({x}, {y}) is not a trainable class"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            depth,
            color,
            labels,
            depth_range: DepthRange::UNIT,
        })
    }

    pub fn with_depth_range(mut self, range: DepthRange) -> Self {
        self.depth_range = range;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    pub fn color(&self) -> &[[f64; 3]] {
        &self.color
    }

    pub fn labels(&self) -> Option<&LabelGrid> {
        self.labels.as_ref()
    }

    pub fn depth_range(&self) -> DepthRange {
        self.depth_range
    }

    pub fn depth_at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn color_at(&self, x: usize, y: usize) -> [f64; 3] {
        self.color[y * self.width + x]
    }

    /// Denormalized elevation at a pixel.
    pub fn elevation_at(&self, x: usize, y: usize) -> f64 {
        self.depth_range.denormalize(self.depth_at(x, y))
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }
}
