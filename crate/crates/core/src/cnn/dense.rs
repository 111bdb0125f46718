//! Sliding-window inference over every placement of a composite.
//!
//! Each evaluated window assigns softmax-normalized scores to its center
//! pixel. Pixels whose window would leave the placement keep the
//! "no value" marker. With a stride above one, centers between evaluated
//! positions copy the nearest evaluated center.
//!
//! When the architecture allows it the convolution stages run once over
//! the whole placement and each window reads its features from one of
//! sixteen phase-shifted pooled maps, which is exact as long as the
//! trailing partial cell of the ceil-mode average pool never reaches the
//! max-pooled output (true for 100×100 patches with 5×5 kernels).

use crate::cnn::layers::{relu, PoolLayer};
use crate::cnn::network::{softmax, NetConfig, Network, AVG_POOL, CONV2_FILTERS, MAX_POOL};
use crate::cnn::scalar::Scalar;
use crate::cnn::tensor::Tensor;
use crate::label::NUM_CLASSES;
use crate::likelihood::LikelihoodGrid;
use crate::raster::{extract_window, Composite, Placement, Raster, CHANNELS};

impl NetConfig {
    /// Whether full-map convolution gives bit-for-bit the same features as
    /// per-window evaluation.
    pub fn dense_shareable(&self) -> bool {
        let Ok(c) = self.chain() else {
            return false;
        };
        let pool1_partial = !(c.conv1 - AVG_POOL.window).is_multiple_of(AVG_POOL.stride);
        let last_conv2_dropped = !(c.conv2 - MAX_POOL.window).is_multiple_of(MAX_POOL.stride);
        !pool1_partial || last_conv2_dropped
    }
}

/// Evaluates every placement of `composite`; one grid per scale, each
/// sized like its placement.
pub fn infer_dense<T: Scalar>(
    net: &Network<T>,
    composite: &Composite,
    stride: usize,
) -> Vec<LikelihoodGrid> {
    composite
        .placements
        .iter()
        .map(|p| infer_placement(net, &composite.canvas, p, stride))
        .collect()
}

/// Evaluated window offsets along one axis of length `len`.
fn offsets(len: usize, n: usize, stride: usize) -> Vec<usize> {
    if len < n {
        return Vec::new();
    }
    (0..=len - n).step_by(stride).collect()
}

pub fn infer_placement<T: Scalar>(
    net: &Network<T>,
    canvas: &Raster,
    placement: &Placement,
    stride: usize,
) -> LikelihoodGrid {
    assert!(stride > 0, "stride must be positive");
    let n = net.config().patch_size;
    let (w, h) = (placement.width, placement.height);
    let xs = offsets(w, n, stride);
    let ys = offsets(h, n, stride);
    let mut grid = LikelihoodGrid::empty(w, h);
    if xs.is_empty() || ys.is_empty() {
        return grid;
    }

    let mut evaluated = vec![[0.0; NUM_CLASSES]; xs.len() * ys.len()];
    if net.config().dense_shareable() {
        SharedFeatures::new(net, canvas, placement).evaluate(net, &xs, &ys, &mut evaluated);
    } else {
        let mut buf = Vec::with_capacity(CHANNELS * n * n);
        for (j, &oy) in ys.iter().enumerate() {
            for (i, &ox) in xs.iter().enumerate() {
                buf.clear();
                extract_window(canvas, placement.x + ox, placement.y + oy, n, |v| {
                    buf.push(T::from_f64(v))
                });
                let phi = net.forward(&buf).expect("window matches network input");
                evaluated[j * xs.len() + i] = softmax(&phi);
            }
        }
    }

    let nearest = |t: usize, count: usize| ((t + stride / 2) / stride).min(count - 1);
    for oy in 0..=h - n {
        let j = nearest(oy, ys.len());
        for ox in 0..=w - n {
            let i = nearest(ox, xs.len());
            grid.set(ox + n / 2, oy + n / 2, Some(evaluated[j * xs.len() + i]));
        }
    }
    grid
}

/// Convolution features of a whole placement, pooled at every phase.
struct SharedFeatures<T> {
    /// `pool2[(py * 4 + px)]` for window offsets congruent to `(px, py)`
    /// modulo 4.
    pool2: Vec<Tensor<T>>,
}

impl<T: Scalar> SharedFeatures<T> {
    fn new(net: &Network<T>, canvas: &Raster, p: &Placement) -> Self {
        let (w, h) = (p.width, p.height);
        let mut input = Vec::with_capacity(CHANNELS * w * h);
        for c in 0..CHANNELS {
            for y in p.y..p.y + h {
                for x in p.x..p.x + w {
                    let v = if c < 3 {
                        canvas.color_at(x, y)[c]
                    } else {
                        canvas.depth_at(x, y)
                    };
                    input.push(T::from_f64(v));
                }
            }
        }
        let input = Tensor::new(vec![CHANNELS, h, w], input).expect("sized above");
        let conv1 = relu(&net.conv1.forward(&input).expect("placement fits kernel"));

        let mut pool2 = vec![Tensor::zeros(vec![0]); 16];
        for py1 in 0..2 {
            for px1 in 0..2 {
                let pooled1 = pool_from(&AVG_POOL, &conv1, py1, px1, true);
                let conv2 = relu(&net.conv2.forward(&pooled1).expect("placement fits kernel"));
                for py2 in 0..2 {
                    for px2 in 0..2 {
                        let phase_y = py1 + 2 * py2;
                        let phase_x = px1 + 2 * px2;
                        pool2[phase_y * 4 + phase_x] =
                            pool_from(&MAX_POOL, &conv2, py2, px2, false);
                    }
                }
            }
        }
        Self { pool2 }
    }

    fn evaluate(
        &self,
        net: &Network<T>,
        xs: &[usize],
        ys: &[usize],
        out: &mut [[f64; NUM_CLASSES]],
    ) {
        let side = net.chain().pool2;
        let flat = net.chain().flat;
        let mut features = Vec::with_capacity(xs.len() * flat);
        for (j, &oy) in ys.iter().enumerate() {
            features.clear();
            for &ox in xs {
                let map = &self.pool2[(oy % 4) * 4 + ox % 4];
                let [_, mh, mw] = *map.shape() else {
                    unreachable!()
                };
                let (sy, sx) = (oy / 4, ox / 4);
                debug_assert!(sy + side <= mh && sx + side <= mw);
                let v = map.values();
                for c in 0..CONV2_FILTERS {
                    for yy in 0..side {
                        let row = (c * mh + sy + yy) * mw + sx;
                        features.extend_from_slice(&v[row..row + side]);
                    }
                }
            }
            let rows = xs.len();
            let h1 = net.fc1.forward_batch(&features, rows);
            let h2 = net.fc2.forward_batch(&h1, rows);
            let logits = net.fc3.forward_batch(&h2, rows);
            for (i, l) in logits.chunks(NUM_CLASSES).enumerate() {
                let mut phi = [T::zero(); NUM_CLASSES];
                phi.copy_from_slice(l);
                out[j * rows + i] = softmax(&phi);
            }
        }
    }
}

/// Pools a full map with windows starting at `(y0, x0)`. With
/// `keep_partial` every start inside the map is kept (clipped windows),
/// otherwise only windows that fit.
fn pool_from<T: Scalar>(
    layer: &PoolLayer,
    input: &Tensor<T>,
    y0: usize,
    x0: usize,
    keep_partial: bool,
) -> Tensor<T> {
    let [_, h, w] = *input.shape() else {
        unreachable!()
    };
    let count = |len: usize, start: usize| {
        if keep_partial {
            if len > start {
                (len - start - 1) / layer.stride + 1
            } else {
                0
            }
        } else if len >= start + layer.window {
            (len - start - layer.window) / layer.stride + 1
        } else {
            0
        }
    };
    layer
        .forward_region(input, y0, x0, count(h, y0), count(w, x0))
        .output
}
