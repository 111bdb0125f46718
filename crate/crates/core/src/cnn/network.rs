//! The patch classifier: two convolution stages followed by three linear
//! layers.
//!
//! ```text
//! conv(4→6,k) → ReLU → avgpool 3/2 (ceil) → conv(6→12,k) → ReLU
//!   → maxpool 3/2 (floor) → flatten → fc(·→120) → fc(120→80) → fc(80→6)
//! ```
//!
//! With 100×100 patches and 5×5 kernels the feature maps measure
//! 96, 48, 44 and 21 pixels and the flattened vector has 12·21·21 = 5292
//! entries. The six outputs score the patch's center pixel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cnn::layers::{relu, relu_backward, ConvLayer, EdgeRule, FcLayer, PoolLayer, PoolMode};
use crate::cnn::scalar::Scalar;
use crate::cnn::tensor::Tensor;
use crate::error::CnnError;
use crate::label::NUM_CLASSES;
use crate::raster::CHANNELS;

pub const CONV1_FILTERS: usize = 6;
pub const CONV2_FILTERS: usize = 12;
pub const FC1_UNITS: usize = 120;
pub const FC2_UNITS: usize = 80;

pub const AVG_POOL: PoolLayer = PoolLayer::new(PoolMode::Average, EdgeRule::Ceil);
pub const MAX_POOL: PoolLayer = PoolLayer::new(PoolMode::Max, EdgeRule::Floor);

/// Feature-map sides produced by a patch size / kernel size pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeChain {
    pub conv1: usize,
    pub pool1: usize,
    pub conv2: usize,
    pub pool2: usize,
    pub flat: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub patch_size: usize,
    pub kernel_size: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            patch_size: 100,
            kernel_size: 5,
        }
    }
}

impl NetConfig {
    pub fn new(patch_size: usize, kernel_size: usize) -> Self {
        Self {
            patch_size,
            kernel_size,
        }
    }

    /// Computes the dimension chain, failing when a stage would be empty.
    pub fn chain(&self) -> Result<ShapeChain, CnnError> {
        let (n, k) = (self.patch_size, self.kernel_size);
        if k % 2 == 0 || k == 0 {
            return Err(CnnError::Shape(format!("kernel size {k} must be odd")));
        }
        let too_small = |stage: &str| {
            CnnError::Shape(format!(
                "patch {n} with kernel {k}: feature map too small at {stage}"
            ))
        };
        let conv1 = n
            .checked_sub(k)
            .map(|s| s + 1)
            .ok_or_else(|| too_small("conv1"))?;
        let pool1 = AVG_POOL
            .output_side(conv1)
            .ok_or_else(|| too_small("pool1"))?;
        let conv2 = pool1
            .checked_sub(k)
            .map(|s| s + 1)
            .ok_or_else(|| too_small("conv2"))?;
        let pool2 = MAX_POOL
            .output_side(conv2)
            .ok_or_else(|| too_small("pool2"))?;
        Ok(ShapeChain {
            conv1,
            pool1,
            conv2,
            pool2,
            flat: CONV2_FILTERS * pool2 * pool2,
        })
    }

    pub fn is_feasible(&self) -> bool {
        self.chain().is_ok()
    }
}

/// Convolution-stage intermediates of one sample.
#[derive(Debug, Clone)]
struct ConvCache<T> {
    input: Tensor<T>,
    relu1: Tensor<T>,
    pool1: Tensor<T>,
    relu2: Tensor<T>,
    argmax2: Vec<u32>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
struct ForwardCache<T> {
    conv: ConvCache<T>,
    flat: Vec<T>,
    h1: Vec<T>,
    h2: Vec<T>,
    logits: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    config: NetConfig,
    chain: ShapeChain,
    pub conv1: ConvLayer<T>,
    pub conv2: ConvLayer<T>,
    pub fc1: FcLayer<T>,
    pub fc2: FcLayer<T>,
    pub fc3: FcLayer<T>,
    cache: Option<ForwardCache<T>>,
}

impl<T: Scalar> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.conv1 == other.conv1
            && self.conv2 == other.conv2
            && self.fc1 == other.fc1
            && self.fc2 == other.fc2
            && self.fc3 == other.fc3
    }
}

impl<T: Scalar> Network<T> {
    /// All weights and biases zero.
    pub fn zeros(config: NetConfig) -> Result<Self, CnnError> {
        let chain = config.chain()?;
        let k = config.kernel_size;
        Ok(Self {
            config,
            chain,
            conv1: ConvLayer::zeros(CHANNELS, CONV1_FILTERS, k)?,
            conv2: ConvLayer::zeros(CONV1_FILTERS, CONV2_FILTERS, k)?,
            fc1: FcLayer::zeros(chain.flat, FC1_UNITS),
            fc2: FcLayer::zeros(FC1_UNITS, FC2_UNITS),
            fc3: FcLayer::zeros(FC2_UNITS, NUM_CLASSES),
            cache: None,
        })
    }

    /// Glorot-uniform weights, zero biases, seeded.
    pub fn new(config: NetConfig, seed: u64) -> Result<Self, CnnError> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        net.conv1.init(&mut rng);
        net.conv2.init(&mut rng);
        net.fc1.init(&mut rng);
        net.fc2.init(&mut rng);
        net.fc3.init(&mut rng);
        Ok(net)
    }

    pub fn config(&self) -> NetConfig {
        self.config
    }

    pub fn chain(&self) -> ShapeChain {
        self.chain
    }

    pub fn parameters(&self) -> [&Tensor<T>; 10] {
        [
            &self.conv1.weight,
            &self.conv1.bias,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.fc1.weight,
            &self.fc1.bias,
            &self.fc2.weight,
            &self.fc2.bias,
            &self.fc3.weight,
            &self.fc3.bias,
        ]
    }

    pub fn parameters_mut(&mut self) -> [&mut Tensor<T>; 10] {
        [
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.fc2.weight,
            &mut self.fc2.bias,
            &mut self.fc3.weight,
            &mut self.fc3.bias,
        ]
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    fn input_tensor(&self, patch: &[T]) -> Result<Tensor<T>, CnnError> {
        let n = self.config.patch_size;
        if patch.len() != CHANNELS * n * n {
            return Err(CnnError::Shape(format!(
                "expected a {CHANNELS}x{n}x{n} patch ({} values), got {}",
                CHANNELS * n * n,
                patch.len()
            )));
        }
        Tensor::new(vec![CHANNELS, n, n], patch.to_vec())
    }

    /// Unnormalized scores for the patch's center pixel.
    pub fn forward(&self, patch: &[T]) -> Result<[T; NUM_CLASSES], CnnError> {
        let (logits, _) = self.run(patch, false)?;
        Ok(logits)
    }

    /// Shapes of every intermediate value, input first.
    pub fn forward_shapes(&self, patch: &[T]) -> Result<Vec<Vec<usize>>, CnnError> {
        let x = self.input_tensor(patch)?;
        let mut shapes = vec![x.shape().to_vec()];
        let c1 = relu(&self.conv1.forward(&x)?);
        shapes.push(c1.shape().to_vec());
        let p1 = AVG_POOL.forward(&c1)?.output;
        shapes.push(p1.shape().to_vec());
        let c2 = relu(&self.conv2.forward(&p1)?);
        shapes.push(c2.shape().to_vec());
        let p2 = MAX_POOL.forward(&c2)?.output;
        shapes.push(p2.shape().to_vec());
        shapes.push(vec![p2.len()]);
        let h1 = self.fc1.forward(p2.values())?;
        shapes.push(vec![h1.len()]);
        let h2 = self.fc2.forward(&h1)?;
        shapes.push(vec![h2.len()]);
        let out = self.fc3.forward(&h2)?;
        shapes.push(vec![out.len()]);
        Ok(shapes)
    }

    /// Forward pass that keeps the intermediates needed by [`backward`].
    ///
    /// [`backward`]: Network::backward
    pub fn forward_train(&mut self, patch: &[T]) -> Result<[T; NUM_CLASSES], CnnError> {
        let (logits, cache) = self.run(patch, true)?;
        self.cache = cache;
        Ok(logits)
    }

    /// Convolution stages up to the flattened max-pool output.
    fn conv_stack(&self, patch: &[T]) -> Result<(Vec<T>, ConvCache<T>), CnnError> {
        let input = self.input_tensor(patch)?;
        let relu1 = relu(&self.conv1.forward(&input)?);
        let pool1 = AVG_POOL.forward(&relu1)?.output;
        let relu2 = relu(&self.conv2.forward(&pool1)?);
        let pooled = MAX_POOL.forward(&relu2)?;
        let cache = ConvCache {
            input,
            relu1,
            pool1,
            relu2,
            argmax2: pooled.argmax.expect("max pooling records argmax"),
        };
        Ok((pooled.output.into_values(), cache))
    }

    fn conv_backward(&mut self, cache: &ConvCache<T>, g_flat: Vec<T>) -> Result<(), CnnError> {
        let p2 = self.chain.pool2;
        let g_pool2 = Tensor::new(vec![CONV2_FILTERS, p2, p2], g_flat)?;
        let c2 = self.chain.conv2;
        let g_relu2 = MAX_POOL.backward((CONV2_FILTERS, c2, c2), &g_pool2, Some(&cache.argmax2));
        let g_conv2 = relu_backward(&cache.relu2, &g_relu2);
        let g_pool1 = self
            .conv2
            .backward(&cache.pool1, &g_conv2, true)?
            .expect("input gradient requested");
        let c1 = self.chain.conv1;
        let g_relu1 = AVG_POOL.backward((CONV1_FILTERS, c1, c1), &g_pool1, None);
        let g_conv1 = relu_backward(&cache.relu1, &g_relu1);
        self.conv1.backward(&cache.input, &g_conv1, false)?;
        Ok(())
    }

    fn run(
        &self,
        patch: &[T],
        keep: bool,
    ) -> Result<([T; NUM_CLASSES], Option<ForwardCache<T>>), CnnError> {
        let (flat, conv) = self.conv_stack(patch)?;
        let h1 = self.fc1.forward(&flat)?;
        let h2 = self.fc2.forward(&h1)?;
        let out = self.fc3.forward(&h2)?;
        let mut logits = [T::zero(); NUM_CLASSES];
        logits.copy_from_slice(&out);
        let cache = keep.then_some(ForwardCache {
            conv,
            flat,
            h1,
            h2,
            logits: out,
        });
        Ok((logits, cache))
    }

    /// Backpropagates the softmax cross-entropy loss of the cached forward
    /// pass against `target`, scaled by `scale`, accumulating into every
    /// parameter's gradient. Returns the unscaled loss and consumes the
    /// cache.
    pub fn backward(&mut self, target: u8, scale: T) -> Result<T, CnnError> {
        let cache = self.cache.take().ok_or(CnnError::MissingForwardCache)?;
        check_target(target)?;
        let (loss, mut grad) = cross_entropy(&cache.logits, target as usize);
        grad.iter_mut().for_each(|g| *g = *g * scale);

        let g_h2 = self.fc3.backward(&cache.h2, &grad);
        let g_h1 = self.fc2.backward(&cache.h1, &g_h2);
        let g_flat = self.fc1.backward(&cache.flat, &g_h1);
        self.conv_backward(&cache.conv, g_flat)?;
        Ok(loss)
    }

    /// Forward and backward pass over a minibatch with the linear layers
    /// evaluated as matrix products. Gradients of every sample's loss,
    /// scaled by `scale`, are accumulated; the unscaled losses are returned.
    pub fn train_batch(
        &mut self,
        inputs: &[Vec<T>],
        targets: &[u8],
        scale: T,
    ) -> Result<Vec<T>, CnnError> {
        if inputs.len() != targets.len() {
            return Err(CnnError::Input(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        for &t in targets {
            check_target(t)?;
        }
        let rows = inputs.len();
        let flat_len = self.chain.flat;
        let mut flats = Vec::with_capacity(rows * flat_len);
        let mut caches = Vec::with_capacity(rows);
        for x in inputs {
            let (flat, cache) = self.conv_stack(x)?;
            flats.extend_from_slice(&flat);
            caches.push(cache);
        }
        let h1 = self.fc1.forward_batch(&flats, rows);
        let h2 = self.fc2.forward_batch(&h1, rows);
        let out = self.fc3.forward_batch(&h2, rows);

        let mut losses = Vec::with_capacity(rows);
        let mut g3 = Vec::with_capacity(rows * NUM_CLASSES);
        for (logits, &t) in out.chunks(NUM_CLASSES).zip(targets) {
            let (loss, grad) = cross_entropy(logits, t as usize);
            losses.push(loss);
            g3.extend(grad.into_iter().map(|g| g * scale));
        }
        let g2 = self.fc3.backward_batch(&h2, &g3, rows);
        let g1 = self.fc2.backward_batch(&h1, &g2, rows);
        let gx = self.fc1.backward_batch(&flats, &g1, rows);
        for (cache, g) in caches.iter().zip(gx.chunks(flat_len)) {
            self.conv_backward(cache, g.to_vec())?;
        }
        Ok(losses)
    }

    /// Index of the highest score, ties to the lowest index.
    pub fn predict(&self, patch: &[T]) -> Result<u8, CnnError> {
        Ok(argmax(&self.forward(patch)?) as u8)
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let conv = |c: &ConvLayer<T>| ConvLayer {
            in_channels: c.in_channels,
            out_channels: c.out_channels,
            kernel: c.kernel,
            weight: c.weight.cast(),
            bias: c.bias.cast(),
        };
        let fc = |f: &FcLayer<T>| FcLayer {
            inputs: f.inputs,
            outputs: f.outputs,
            weight: f.weight.cast(),
            bias: f.bias.cast(),
        };
        Network {
            config: self.config,
            chain: self.chain,
            conv1: conv(&self.conv1),
            conv2: conv(&self.conv2),
            fc1: fc(&self.fc1),
            fc2: fc(&self.fc2),
            fc3: fc(&self.fc3),
            cache: None,
        }
    }
}

fn check_target(target: u8) -> Result<(), CnnError> {
    if (target as usize) < NUM_CLASSES {
        Ok(())
    } else {
        Err(CnnError::Input(format!(
            "target label {target} out of range"
        )))
    }
}

pub(crate) fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax normalization `λᵢ = e^{φᵢ} / Σⱼ e^{φⱼ}`, evaluated with the
/// maximum subtracted first.
pub fn softmax_normalize(phi: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    softmax(phi)
}

pub(crate) fn softmax<T: Scalar, const N: usize>(phi: &[T; N]) -> [f64; N] {
    let max = phi
        .iter()
        .map(|v| v.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N];
    for (o, &p) in out.iter_mut().zip(phi) {
        *o = (p.as_f64() - max).exp();
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|o| *o /= total);
    out
}

/// Loss `log Σ e^{φ} − φ_target` and its gradient `softmax(φ) − onehot`.
pub fn cross_entropy<T: Scalar>(logits: &[T], target: usize) -> (T, Vec<T>) {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    let loss = total.ln() + max - logits[target];
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let p = e / total;
            if i == target {
                p - T::one()
            } else {
                p
            }
        })
        .collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(n: usize, seed: u64) -> Vec<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..CHANNELS * n * n)
            .map(|_| rng.gen_range(0.0..1.0))
            .collect()
    }

    #[test]
    fn default_chain_matches_architecture() {
        let chain = NetConfig::default().chain().unwrap();
        assert_eq!(
            chain,
            ShapeChain {
                conv1: 96,
                pool1: 48,
                conv2: 44,
                pool2: 21,
                flat: 5292
            }
        );
    }

    #[test]
    fn infeasible_pairs_are_rejected() {
        assert!(NetConfig::new(34, 5).is_feasible());
        assert!(NetConfig::new(34, 9).is_feasible());
        assert!(!NetConfig::new(34, 11).is_feasible());
        assert!(!NetConfig::new(34, 17).is_feasible());
        assert!(NetConfig::new(100, 17).is_feasible());
        assert!(!NetConfig::new(100, 6).is_feasible());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::<f64>::zeros(NetConfig::default()).unwrap();
        assert_eq!(net.forward(&patch(100, 1)).unwrap(), [0.0; 6]);
    }

    #[test]
    fn forward_is_deterministic() {
        let a = Network::<f64>::new(NetConfig::default(), 42).unwrap();
        let b = Network::<f64>::new(NetConfig::default(), 42).unwrap();
        let x = patch(100, 3);
        let pa = a.forward(&x).unwrap();
        let pb = b.forward(&x).unwrap();
        assert_eq!(pa.map(f64::to_bits), pb.map(f64::to_bits));
    }

    #[test]
    fn wrong_patch_size_is_a_shape_error() {
        let net = Network::<f64>::zeros(NetConfig::default()).unwrap();
        assert!(matches!(
            net.forward(&patch(99, 1)),
            Err(CnnError::Shape(_))
        ));
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let mut net = Network::<f64>::zeros(NetConfig::new(20, 5)).unwrap();
        assert!(matches!(
            net.backward(0, 1.0),
            Err(CnnError::MissingForwardCache)
        ));
        net.forward_train(&patch(20, 1)).unwrap();
        assert!(net.backward(0, 1.0).is_ok());
        assert!(matches!(
            net.backward(0, 1.0),
            Err(CnnError::MissingForwardCache)
        ));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_normalize(&[0.0; 6]), [1.0 / 6.0; 6]);
        let a = softmax_normalize(&[0.3, -1.0, 2.0, 0.0, 5.0, -4.0]);
        let b = softmax_normalize(&[100.3, 99.0, 102.0, 100.0, 105.0, 96.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_gradient_vanishes_at_one_hot() {
        let (loss, grad) = cross_entropy(&[1000.0f64, 0.0, 0.0, 0.0, 0.0, 0.0], 0);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }
}
