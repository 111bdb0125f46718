//! Minibatch SGD on softmax cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cnn::network::Network;
use crate::cnn::scalar::Scalar;
use crate::error::CnnError;
use crate::raster::{Composite, Patch};

/// Indexed collection of labeled network inputs.
pub trait TrainingSet {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes sample `i`'s `4·N·N` channel-major input into `buf`.
    fn fill<T: Scalar>(&self, i: usize, buf: &mut Vec<T>);

    fn label(&self, i: usize) -> u8;
}

/// In-memory samples, mostly for tests.
#[derive(Debug, Clone, Default)]
pub struct InMemorySet {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl TrainingSet for InMemorySet {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn fill<T: Scalar>(&self, i: usize, buf: &mut Vec<T>) {
        buf.clear();
        buf.extend(self.inputs[i].iter().map(|&v| T::from_f64(v)));
    }

    fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }
}

/// Patches referencing composite canvases.
#[derive(Debug, Clone, Copy)]
pub struct PatchSet<'a> {
    pub composites: &'a [Composite],
    pub patches: &'a [Patch],
}

impl TrainingSet for PatchSet<'_> {
    fn len(&self) -> usize {
        self.patches.len()
    }

    fn fill<T: Scalar>(&self, i: usize, buf: &mut Vec<T>) {
        let p = &self.patches[i];
        buf.clear();
        crate::raster::extract_window(&self.composites[p.source].canvas, p.x, p.y, p.size, |v| {
            buf.push(T::from_f64(v))
        });
    }

    fn label(&self, i: usize) -> u8 {
        self.patches[i].label
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.01,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace {
    pub epochs: Vec<f64>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (i, l) in self.epochs.iter().enumerate() {
            out.push_str(&format!("{},{l}\n", i + 1));
        }
        out
    }
}

/// Trains `net` in place. The per-epoch loss is the mean of each sample's
/// loss at the time it was visited, summed in sample-index order.
///
/// `on_epoch` is called after every epoch with the epoch number (1-based)
/// and its mean loss.
pub fn train<T: Scalar, S: TrainingSet>(
    net: &mut Network<T>,
    data: &S,
    params: &TrainParams,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<LossTrace, CnnError> {
    if data.is_empty() {
        return Err(CnnError::Input("no training samples".into()));
    }
    if params.batch_size == 0 {
        return Err(CnnError::Input("batch size must be positive".into()));
    }
    let rate = T::from_f64(params.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = vec![0.0f64; data.len()];
    let mut bufs: Vec<Vec<T>> = vec![Vec::new(); params.batch_size.min(data.len())];
    let mut targets = Vec::with_capacity(params.batch_size);
    let mut trace = Vec::with_capacity(params.epochs);

    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            net.zero_grad();
            let scale = T::one() / T::from_f64(batch.len() as f64);
            targets.clear();
            for (buf, &i) in bufs.iter_mut().zip(batch) {
                data.fill(i, buf);
                targets.push(data.label(i));
            }
            let batch_losses = net.train_batch(&bufs[..batch.len()], &targets, scale)?;
            for (&i, l) in batch.iter().zip(batch_losses) {
                losses[i] = l.as_f64();
            }
            for p in net.parameters_mut() {
                p.sgd_step(rate);
            }
        }
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        if !mean.is_finite() {
            return Err(CnnError::Diverged {
                epoch: epoch + 1,
                last_good: (epoch > 0).then_some(epoch),
            });
        }
        trace.push(mean);
        on_epoch(epoch + 1, mean);
    }
    Ok(LossTrace { epochs: trace })
}

/// Fraction of samples whose predicted class matches the label.
pub fn accuracy<T: Scalar, S: TrainingSet>(net: &Network<T>, data: &S) -> Result<f64, CnnError> {
    let mut buf = Vec::new();
    let mut hits = 0usize;
    for i in 0..data.len() {
        data.fill(i, &mut buf);
        if net.predict(&buf)? == data.label(i) {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len().max(1) as f64)
}
