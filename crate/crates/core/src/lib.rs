//! Pixelwise labeling of aerial RGBD rasters.
//!
//! The pipeline packs each training raster into a multi-scale composite,
//! trains a small convolutional network on center-pixel patches, fuses the
//! per-scale likelihoods, maps them to labels with a one-vs-all linear SVM,
//! refines the label map with alpha-expansion graph cuts, evaluates it and
//! extrudes building footprints into meshes.

pub mod classifier;
pub mod cnn;
pub mod error;
pub mod eval;
pub mod grid;
pub mod kv;
pub mod label;
pub mod likelihood;
pub mod mrf;
pub mod pipeline;
pub mod raster;
pub mod reconstruct;
pub mod synth;

pub use error::{
    ClassifierError, CnnError, EvalError, FormatError, GeometryError, MrfError, PipelineError,
    RasterError, SynthError,
};
pub use grid::LabelGrid;
pub use label::{ClassLabel, NUM_CLASSES, NUM_LABELS, UNKNOWN};
pub use raster::{Composite, DepthRange, Patch, Placement, Raster};
