//! Error types shared across the pipeline stages.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while reading, writing, or transforming rasters.
#[derive(Debug, Error)]
pub enum RasterError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("alignment error: {what} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    Alignment {
        what: &'static str,
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("palette error: color ({r},{g},{b}) at pixel ({x},{y}) is not a class color")]
    Palette {
        x: usize,
        y: usize,
        r: u8,
        g: u8,
        b: u8,
    },
    #[error("size error: {0}")]
    Size(String),
    #[error("invalid raster: {0}")]
    Invalid(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Errors raised by the network engine.
#[derive(Debug, Error)]
pub enum CnnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("backward called without a cached forward pass")]
    MissingForwardCache,
    #[error("training diverged at epoch {epoch} (last good epoch: {last_good:?})")]
    Diverged {
        epoch: usize,
        last_good: Option<usize>,
    },
    #[error("invalid training input: {0}")]
    Input(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Errors raised by SVM training and likelihood-map I/O.
#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("degenerate training data: {0}")]
    Degenerate(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Errors raised by the MRF energy and solvers.
#[derive(Debug, Error)]
pub enum MrfError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("grid too large for exhaustive search: {pixels} pixels (max {max})")]
    TooLarge { pixels: usize, max: usize },
    #[error("invalid energy parameters: {0}")]
    Params(String),
}

/// Errors raised by evaluation.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: reference is {ref_w}x{ref_h}, prediction is {pred_w}x{pred_h}")]
    Dimension {
        ref_w: usize,
        ref_h: usize,
        pred_w: usize,
        pred_h: usize,
    },
}

/// Errors raised by reconstruction.
#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Errors raised while parsing plain-text key/value files.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {message}")]
    Value { key: String, message: String },
}

/// Errors raised by the scene generator.
#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Errors raised by the stage orchestrator.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("stage `{stage}` needs {} from stage `{upstream}`; run `{upstream}` first", path.display())]
    MissingArtifact {
        stage: &'static str,
        upstream: &'static str,
        path: PathBuf,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed artifact {path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Mrf(#[from] MrfError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}
