//! Per-pixel label grids.

use crate::label::{ClassLabel, NUM_LABELS, UNKNOWN};

/// A width × height grid of label indices in `0..=6` (6 is unknown).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelGrid {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelGrid {
    /// Builds a grid, panicking on a length mismatch or out-of-range label.
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Self {
        Self::try_new(width, height, labels).expect("invalid label grid")
    }

    pub fn try_new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self, String> {
        if labels.len() != width * height {
            return Err(format!(
                "{} labels for a {width}x{height} grid",
                labels.len()
            ));
        }
        if let Some(pos) = labels.iter().position(|&l| l as usize >= NUM_LABELS) {
            return Err(format!(
                "label {} at ({}, {}) out of range",
                labels[pos],
                pos % width.max(1),
                pos / width.max(1)
            ));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn filled(width: usize, height: usize, label: u8) -> Self {
        Self::new(width, height, vec![label; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        assert!((label as usize) < NUM_LABELS, "label {label} out of range");
        self.labels[y * self.width + x] = label;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_at(&self, x: usize, y: usize) -> ClassLabel {
        ClassLabel::from_index(self.get(x, y)).expect("validated on construction")
    }

    pub fn count_unknown(&self) -> usize {
        self.labels.iter().filter(|&&l| l == UNKNOWN).count()
    }

    pub fn same_shape(&self, other: &LabelGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Iterates `(x, y, label)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u8)> + '_ {
        let w = self.width;
        self.labels
            .iter()
            .enumerate()
            .map(move |(i, &l)| (i % w, i / w, l))
    }
}
