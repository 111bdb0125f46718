//! Convolution, pooling, ReLU and fully connected layers with their
//! backward passes. Feature maps are `[channels, height, width]` tensors.

use rand::Rng;

use crate::cnn::kernels::{conv_forward, conv_input_grad, conv_weight_grad, ConvDims};
use crate::cnn::scalar::Scalar;
use crate::cnn::tensor::Tensor;
use crate::error::CnnError;

fn chw<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize, usize), CnnError> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        ref s => Err(CnnError::Shape(format!(
            "{what}: expected [C,H,W], got {s:?}"
        ))),
    }
}

/// Uniform Glorot initialization in `±√(6 / (fan_in + fan_out))`.
fn glorot<T: Scalar>(rng: &mut impl Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n)
        .map(|_| T::from_f64(rng.gen_range(-bound..=bound)))
        .collect()
}

/// Stride-1, unpadded convolution (cross-correlation) with odd square
/// kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out, in, k, k]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Result<Self, CnnError> {
        if kernel.is_multiple_of(2) || kernel == 0 {
            return Err(CnnError::Shape(format!("kernel size {kernel} must be odd")));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            weight: Tensor::zeros(vec![out_channels, in_channels, kernel, kernel]),
            bias: Tensor::zeros(vec![out_channels]),
        })
    }

    pub fn init(&mut self, rng: &mut impl Rng) {
        let kk = self.kernel * self.kernel;
        let n = self.weight.len();
        let w = glorot(rng, self.in_channels * kk, self.out_channels * kk, n);
        self.weight.values_mut().copy_from_slice(&w);
        self.bias
            .values_mut()
            .iter_mut()
            .for_each(|b| *b = T::zero());
    }

    fn dims(&self, input: &Tensor<T>) -> Result<ConvDims, CnnError> {
        let (c, h, w) = chw(input, "conv input")?;
        if c != self.in_channels {
            return Err(CnnError::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        if h < self.kernel || w < self.kernel {
            return Err(CnnError::Shape(format!(
                "conv input {h}x{w} smaller than kernel {}",
                self.kernel
            )));
        }
        Ok(ConvDims {
            c_in: c,
            h,
            w,
            c_out: self.out_channels,
            k: self.kernel,
        })
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, CnnError> {
        let d = self.dims(input)?;
        let mut out = vec![T::zero(); d.c_out * d.ho() * d.wo()];
        conv_forward(
            d,
            input.values(),
            self.weight.values(),
            self.bias.values(),
            &mut out,
        );
        Tensor::new(vec![d.c_out, d.ho(), d.wo()], out)
    }

    /// Accumulates parameter gradients for the forward pass on `input` and,
    /// if `input_grad` is set, returns the gradient with respect to it.
    pub fn backward(
        &mut self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        input_grad: bool,
    ) -> Result<Option<Tensor<T>>, CnnError> {
        let d = self.dims(input)?;
        if grad_out.shape() != [d.c_out, d.ho(), d.wo()] {
            return Err(CnnError::Shape(format!(
                "conv output gradient {:?} does not match output [{}, {}, {}]",
                grad_out.shape(),
                d.c_out,
                d.ho(),
                d.wo()
            )));
        }
        let g = grad_out.values();
        let n = d.ho() * d.wo();
        let bias_grad: Vec<T> = g
            .chunks(n)
            .map(|plane| plane.iter().copied().sum())
            .collect();
        self.bias.accumulate_grad(&bias_grad);
        let mut dw = vec![T::zero(); self.weight.len()];
        conv_weight_grad(d, input.values(), g, &mut dw);
        self.weight.accumulate_grad(&dw);
        if !input_grad {
            return Ok(None);
        }
        let mut grad_in = vec![T::zero(); d.c_in * d.h * d.w];
        conv_input_grad(d, self.weight.values(), g, &mut grad_in);
        Tensor::new(vec![d.c_in, d.h, d.w], grad_in).map(Some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Average,
    Max,
}

/// How a trailing partial window is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRule {
    /// Drop it.
    Floor,
    /// Keep it; averages divide by the in-bounds count.
    Ceil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolLayer {
    pub mode: PoolMode,
    pub window: usize,
    pub stride: usize,
    pub edge: EdgeRule,
}

/// Result of a pooling pass; `argmax` holds flat input indices for max
/// pooling.
#[derive(Debug, Clone)]
pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    pub argmax: Option<Vec<u32>>,
}

impl PoolLayer {
    pub const fn new(mode: PoolMode, edge: EdgeRule) -> Self {
        Self {
            mode,
            window: 3,
            stride: 2,
            edge,
        }
    }

    /// Output side for an input side, or `None` if the input is smaller
    /// than one window.
    pub fn output_side(&self, side: usize) -> Option<usize> {
        if side < self.window {
            return None;
        }
        let span = side - self.window;
        Some(match self.edge {
            EdgeRule::Floor => span / self.stride + 1,
            EdgeRule::Ceil => span.div_ceil(self.stride) + 1,
        })
    }

    pub fn forward<T: Scalar>(&self, input: &Tensor<T>) -> Result<PoolOutput<T>, CnnError> {
        let (_, h, w) = chw(input, "pool input")?;
        let oh = self
            .output_side(h)
            .ok_or_else(|| CnnError::Shape(format!("pool input height {h} < {}", self.window)))?;
        let ow = self
            .output_side(w)
            .ok_or_else(|| CnnError::Shape(format!("pool input width {w} < {}", self.window)))?;
        Ok(self.forward_region(input, 0, 0, oh, ow))
    }

    /// Pools windows starting at `(y0 + stride·j, x0 + stride·i)`. Windows
    /// are clipped to the input.
    pub fn forward_region<T: Scalar>(
        &self,
        input: &Tensor<T>,
        y0: usize,
        x0: usize,
        oh: usize,
        ow: usize,
    ) -> PoolOutput<T> {
        let [c, h, w] = *input.shape() else {
            panic!("pool input must be [C,H,W]");
        };
        let x = input.values();
        let (stride, window) = (self.stride, self.window);
        let span = |start: usize, len: usize| (start, (start + window).min(len));
        let cols: Vec<(usize, usize)> = (0..ow).map(|i| span(x0 + i * stride, w)).collect();
        let rows: Vec<(usize, usize)> = (0..oh).map(|j| span(y0 + j * stride, h)).collect();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = (self.mode == PoolMode::Max).then(|| Vec::with_capacity(c * oh * ow));
        match self.mode {
            PoolMode::Average => {
                // separable: window sums along rows, then down columns
                let mut hsum = vec![T::zero(); h * ow];
                for plane in x.chunks_exact(h * w) {
                    for (row, hs) in plane.chunks_exact(w).zip(hsum.chunks_exact_mut(ow)) {
                        for (v, &(xs, xe)) in hs.iter_mut().zip(&cols) {
                            *v = row[xs + 1..xe].iter().fold(row[xs], |a, &b| a + b);
                        }
                    }
                    for &(ys, ye) in &rows {
                        for (i, &(xs, xe)) in cols.iter().enumerate() {
                            let acc =
                                (ys + 1..ye).fold(hsum[ys * ow + i], |a, yy| a + hsum[yy * ow + i]);
                            let count = ((ye - ys) * (xe - xs)) as f64;
                            out.push(acc / T::from_f64(count));
                        }
                    }
                }
            }
            PoolMode::Max => {
                // first maximum in row-major order: earliest row, then earliest column
                let idx = argmax.as_mut().expect("max mode");
                let mut hbest = vec![0usize; h * ow];
                for (ch, plane) in x.chunks_exact(h * w).enumerate() {
                    for (y, hb) in hbest.chunks_exact_mut(ow).enumerate() {
                        let row = &plane[y * w..(y + 1) * w];
                        for (b, &(xs, xe)) in hb.iter_mut().zip(&cols) {
                            let mut best = xs;
                            for xx in xs + 1..xe {
                                if row[xx] > row[best] {
                                    best = xx;
                                }
                            }
                            *b = y * w + best;
                        }
                    }
                    for &(ys, ye) in &rows {
                        for i in 0..ow {
                            let mut best = hbest[ys * ow + i];
                            for yy in ys + 1..ye {
                                let cand = hbest[yy * ow + i];
                                if plane[cand] > plane[best] {
                                    best = cand;
                                }
                            }
                            out.push(plane[best]);
                            idx.push((ch * h * w + best) as u32);
                        }
                    }
                }
            }
        }
        PoolOutput {
            output: Tensor::new(vec![c, oh, ow], out).expect("sized above"),
            argmax,
        }
    }

    /// Routes `grad_out` back to an input of `input_shape`. Max pooling
    /// needs the argmax indices recorded by the forward pass.
    pub fn backward<T: Scalar>(
        &self,
        input_shape: (usize, usize, usize),
        grad_out: &Tensor<T>,
        argmax: Option<&[u32]>,
    ) -> Tensor<T> {
        let (c, h, w) = input_shape;
        let [_, oh, ow] = *grad_out.shape() else {
            panic!("pool grad must be [C,H,W]");
        };
        let g = grad_out.values();
        let mut grad_in = vec![T::zero(); c * h * w];
        match self.mode {
            PoolMode::Max => {
                let idx = argmax.expect("max pooling backward needs argmax");
                for (&i, &d) in idx.iter().zip(g) {
                    grad_in[i as usize] = grad_in[i as usize] + d;
                }
            }
            PoolMode::Average => {
                let span = |start: usize, len: usize| (start, (start + self.window).min(len));
                let cols: Vec<(usize, usize)> = (0..ow).map(|i| span(i * self.stride, w)).collect();
                let mut hgrad = vec![T::zero(); h * ow];
                for (gp, plane) in g.chunks_exact(oh * ow).zip(grad_in.chunks_exact_mut(h * w)) {
                    hgrad.iter_mut().for_each(|v| *v = T::zero());
                    for (j, gr) in gp.chunks_exact(ow).enumerate() {
                        let (ys, ye) = span(j * self.stride, h);
                        for (i, (&gv, &(xs, xe))) in gr.iter().zip(&cols).enumerate() {
                            let share = gv / T::from_f64(((ye - ys) * (xe - xs)) as f64);
                            for yy in ys..ye {
                                hgrad[yy * ow + i] = hgrad[yy * ow + i] + share;
                            }
                        }
                    }
                    for (row, hg) in plane.chunks_exact_mut(w).zip(hgrad.chunks_exact(ow)) {
                        for (&v, &(xs, xe)) in hg.iter().zip(&cols) {
                            for r in &mut row[xs..xe] {
                                *r = *r + v;
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![c, h, w], grad_in).expect("sized above")
    }
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Gates `grad_out` by the sign of the ReLU output.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let values = output
        .values()
        .iter()
        .zip(grad_out.values())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(output.shape().to_vec(), values).expect("same shape")
}

/// Dense affine layer `y = W·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out, in]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

impl<T: Scalar> FcLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: Tensor::zeros(vec![outputs, inputs]),
            bias: Tensor::zeros(vec![outputs]),
        }
    }

    pub fn init(&mut self, rng: &mut impl Rng) {
        let w = glorot(rng, self.inputs, self.outputs, self.weight.len());
        self.weight.values_mut().copy_from_slice(&w);
        self.bias
            .values_mut()
            .iter_mut()
            .for_each(|b| *b = T::zero());
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, CnnError> {
        if x.len() != self.inputs {
            return Err(CnnError::Shape(format!(
                "fully connected layer expects {} inputs, got {}",
                self.inputs,
                x.len()
            )));
        }
        let mut y = self.bias.values().to_vec();
        T::gemm(
            self.outputs,
            self.inputs,
            1,
            T::one(),
            self.weight.values(),
            false,
            x,
            false,
            T::one(),
            &mut y,
        );
        Ok(y)
    }

    /// Row-batched forward: `x` is `rows × inputs`, result `rows × outputs`.
    pub fn forward_batch(&self, x: &[T], rows: usize) -> Vec<T> {
        assert_eq!(x.len(), rows * self.inputs);
        let mut y = Vec::with_capacity(rows * self.outputs);
        for _ in 0..rows {
            y.extend_from_slice(self.bias.values());
        }
        T::gemm(
            rows,
            self.inputs,
            self.outputs,
            T::one(),
            x,
            false,
            self.weight.values(),
            true,
            T::one(),
            &mut y,
        );
        y
    }

    /// Row-batched backward for `x` (`rows × inputs`) and `grad_out`
    /// (`rows × outputs`); returns `∂L/∂x` as `rows × inputs`.
    pub fn backward_batch(&mut self, x: &[T], grad_out: &[T], rows: usize) -> Vec<T> {
        assert_eq!(x.len(), rows * self.inputs);
        assert_eq!(grad_out.len(), rows * self.outputs);
        let mut bias_grad = vec![T::zero(); self.outputs];
        for row in grad_out.chunks(self.outputs) {
            for (b, &g) in bias_grad.iter_mut().zip(row) {
                *b = *b + g;
            }
        }
        self.bias.accumulate_grad(&bias_grad);
        T::gemm(
            self.outputs,
            rows,
            self.inputs,
            T::one(),
            grad_out,
            true,
            x,
            false,
            T::one(),
            self.weight.grad_mut(),
        );
        let mut grad_in = vec![T::zero(); rows * self.inputs];
        T::gemm(
            rows,
            self.outputs,
            self.inputs,
            T::one(),
            grad_out,
            false,
            self.weight.values(),
            false,
            T::zero(),
            &mut grad_in,
        );
        grad_in
    }

    /// Accumulates parameter gradients and returns `∂L/∂x`.
    pub fn backward(&mut self, x: &[T], grad_out: &[T]) -> Vec<T> {
        self.bias.accumulate_grad(grad_out);
        T::gemm(
            self.outputs,
            1,
            self.inputs,
            T::one(),
            grad_out,
            false,
            x,
            false,
            T::one(),
            self.weight.grad_mut(),
        );
        let mut grad_in = vec![T::zero(); self.inputs];
        T::gemm(
            self.inputs,
            self.outputs,
            1,
            T::one(),
            self.weight.values(),
            true,
            grad_out,
            false,
            T::zero(),
            &mut grad_in,
        );
        grad_in
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(shape: Vec<usize>) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::new(
            shape,
            (0..n)
                .map(|i| ((i * 37 % 101) as f64) / 50.0 - 1.0)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn conv_output_sides() {
        let mut conv = ConvLayer::<f64>::zeros(4, 6, 5).unwrap();
        conv.init(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(
            conv.forward(&ramp(vec![4, 100, 100])).unwrap().shape(),
            &[6, 96, 96]
        );
        let conv2 = ConvLayer::<f64>::zeros(6, 12, 5).unwrap();
        assert_eq!(
            conv2.forward(&ramp(vec![6, 48, 48])).unwrap().shape(),
            &[12, 44, 44]
        );
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_even_kernels() {
        let conv = ConvLayer::<f64>::zeros(4, 6, 5).unwrap();
        assert!(matches!(
            conv.forward(&ramp(vec![3, 10, 10])),
            Err(CnnError::Shape(_))
        ));
        assert!(ConvLayer::<f64>::zeros(4, 6, 4).is_err());
    }

    #[test]
    fn delta_kernel_crops_center() {
        let mut conv = ConvLayer::<f64>::zeros(1, 1, 5).unwrap();
        conv.weight.values_mut()[12] = 1.0;
        let input = ramp(vec![1, 9, 8]);
        let out = conv.forward(&input).unwrap();
        assert_eq!(out.shape(), &[1, 5, 4]);
        for y in 0..5 {
            for x in 0..4 {
                assert_eq!(out.values()[y * 4 + x], input.values()[(y + 2) * 8 + x + 2]);
            }
        }
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut conv = ConvLayer::<f64>::zeros(2, 3, 3).unwrap();
        conv.init(&mut ChaCha8Rng::seed_from_u64(9));
        conv.bias.values_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let input = ramp(vec![2, 6, 7]);
        let out = conv.forward(&input).unwrap();
        let (w, x) = (conv.weight.values(), input.values());
        for o in 0..3 {
            for oy in 0..4 {
                for ox in 0..5 {
                    let mut acc = conv.bias.values()[o];
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                acc += w[((o * 2 + c) * 3 + ky) * 3 + kx]
                                    * x[(c * 6 + oy + ky) * 7 + ox + kx];
                            }
                        }
                    }
                    assert!((out.values()[(o * 4 + oy) * 5 + ox] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pooling_sides_match_architecture() {
        let avg = PoolLayer::new(PoolMode::Average, EdgeRule::Ceil);
        let max = PoolLayer::new(PoolMode::Max, EdgeRule::Floor);
        assert_eq!(avg.output_side(96), Some(48));
        assert_eq!(max.output_side(44), Some(21));
        assert_eq!(max.output_side(96), Some(47));
        assert_eq!(avg.output_side(2), None);
        let out = avg.forward(&ramp(vec![6, 96, 96])).unwrap();
        assert_eq!(out.output.shape(), &[6, 48, 48]);
        let out = max.forward(&ramp(vec![12, 44, 44])).unwrap();
        assert_eq!(out.output.shape(), &[12, 21, 21]);
        assert_eq!(out.argmax.unwrap().len(), 12 * 21 * 21);
    }

    #[test]
    fn pooling_constant_is_constant() {
        let input = Tensor::<f64>::new(vec![2, 9, 9], vec![0.7; 162]).unwrap();
        for layer in [
            PoolLayer::new(PoolMode::Average, EdgeRule::Ceil),
            PoolLayer::new(PoolMode::Max, EdgeRule::Floor),
        ] {
            let out = layer.forward(&input).unwrap().output;
            assert!(out.values().iter().all(|&v| (v - 0.7).abs() < 1e-12));
        }
    }

    #[test]
    fn ceil_average_divides_by_in_bounds_count() {
        // 4 wide: windows start at 0 and 2; the second covers columns 2..4 only.
        let input = Tensor::new(vec![1, 3, 4], (0..12).map(|v| v as f64).collect()).unwrap();
        let out = PoolLayer::new(PoolMode::Average, EdgeRule::Ceil)
            .forward(&input)
            .unwrap();
        assert_eq!(out.output.shape(), &[1, 1, 2]);
        assert_eq!(out.output.values(), &[5.0, 6.5]);
    }

    #[test]
    fn relu_examples() {
        let t = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&t).values(), &[0.0, 0.0, 2.0]);
        let neg = Tensor::new(vec![2], vec![-3.0, -0.5]).unwrap();
        assert_eq!(relu(&neg).values(), &[0.0, 0.0]);
        let pos = Tensor::new(vec![2], vec![3.0, 0.5]).unwrap();
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn fc_forward_batch_matches_single() {
        let mut fc = FcLayer::<f64>::zeros(5, 3);
        fc.init(&mut ChaCha8Rng::seed_from_u64(2));
        fc.bias.values_mut().copy_from_slice(&[1.0, 2.0, 3.0]);
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let batch = fc.forward_batch(&x, 2);
        assert_eq!(&batch[..3], fc.forward(&x[..5]).unwrap().as_slice());
        assert_eq!(&batch[3..], fc.forward(&x[5..]).unwrap().as_slice());
        assert!(fc.forward(&x[..4]).is_err());
    }
}
