//! Training patch sampling with cross-scale rejection.
//!
//! A [`Patch`] records where its window sits on a composite canvas; the
//! pixel block is materialized on demand so that corpora of hundreds of
//! thousands of patches stay small in memory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::composite::Composite;
use crate::raster::Raster;

/// Input channels per pixel: R, G, B, D.
pub const CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Patch {
    /// Index of the composite this patch was drawn from.
    pub source: usize,
    /// Top-left corner on the canvas.
    pub x: usize,
    pub y: usize,
    pub size: usize,
    pub scale: usize,
    /// Label of the window's center pixel.
    pub label: u8,
}

impl Patch {
    /// Canvas coordinates of the center pixel.
    pub fn center(&self) -> (usize, usize) {
        (self.x + self.size / 2, self.y + self.size / 2)
    }

    /// Channel-major `4 × N × N` block (R, G, B, D planes).
    pub fn pixels(&self, canvas: &Raster) -> Vec<f64> {
        let mut out = Vec::with_capacity(CHANNELS * self.size * self.size);
        extract_window(canvas, self.x, self.y, self.size, |v| out.push(v));
        out
    }
}

/// Writes the `4 × n × n` window at `(x, y)` in channel-major order.
pub(crate) fn extract_window(
    canvas: &Raster,
    x: usize,
    y: usize,
    n: usize,
    mut push: impl FnMut(f64),
) {
    for c in 0..CHANNELS {
        for row in y..y + n {
            for col in x..x + n {
                let v = if c < 3 {
                    canvas.color_at(col, row)[c]
                } else {
                    canvas.depth_at(col, row)
                };
                push(v);
            }
        }
    }
}

/// Draws `count` labeled patches uniformly over every window position that
/// lies inside a single placement.
pub fn sample_patches(composite: &Composite, count: usize, size: usize, seed: u64) -> Vec<Patch> {
    sample_patches_joint(std::slice::from_ref(composite), count, size, seed)
}

/// Samples jointly across several composites. Each draw first picks a
/// composite with probability proportional to its number of valid window
/// positions, then draws a canvas position uniformly and rejects it if the
/// window crosses a placement boundary.
///
/// # Panics
///
/// Panics if a composite has no labels or no placement fits `size`.
pub fn sample_patches_joint(
    composites: &[Composite],
    count: usize,
    size: usize,
    seed: u64,
) -> Vec<Patch> {
    assert!(!composites.is_empty(), "no composites to sample from");
    let weights: Vec<usize> = composites
        .iter()
        .map(|c| c.placements.iter().map(|p| p.valid_positions(size)).sum())
        .collect();
    let total: usize = weights.iter().sum();
    assert!(total > 0, "patch size {size} exceeds every placement");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut pick = rng.gen_range(0..total);
        let source = weights
            .iter()
            .position(|&w| {
                if pick < w {
                    true
                } else {
                    pick -= w;
                    false
                }
            })
            .expect("pick < total");
        let comp = &composites[source];
        let canvas = &comp.canvas;
        let labels = canvas.labels().expect("sampling requires labels");
        loop {
            let x = rng.gen_range(0..=canvas.width() - size);
            let y = rng.gen_range(0..=canvas.height() - size);
            let Some(p) = comp.placement_containing(x, y, size, size) else {
                continue;
            };
            let (cx, cy) = (x + size / 2, y + size / 2);
            out.push(Patch {
                source,
                x,
                y,
                size,
                scale: p.scale,
                label: labels.get(cx, cy),
            });
            break;
        }
    }
    out
}
