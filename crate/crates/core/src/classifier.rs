//! Scale fusion and the one-vs-all linear SVM that maps fused likelihoods
//! to labels.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ClassifierError, FormatError};
use crate::grid::LabelGrid;
use crate::label::{NUM_CLASSES, UNKNOWN};
use crate::likelihood::{LikelihoodGrid, Tuple};

/// A likelihood grid at original raster resolution.
pub type LikelihoodMap = LikelihoodGrid;

/// Source coordinate and the two bracketing indices with the weight of the
/// upper one.
fn taps(t: usize, src: usize, dst: usize) -> (usize, usize, f64) {
    let u = ((t as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
    let lo = u.floor() as usize;
    let hi = (lo + 1).min(src - 1);
    (lo, hi, u - lo as f64)
}

/// Bilinear upscaling that only blends valid neighbors. A target pixel is
/// valued when its nearest source pixel is.
pub fn upscale(grid: &LikelihoodGrid, width: usize, height: usize) -> LikelihoodGrid {
    let mut out = LikelihoodGrid::empty(width, height);
    if grid.width() == 0 || grid.height() == 0 {
        return out;
    }
    let cols: Vec<_> = (0..width).map(|x| taps(x, grid.width(), width)).collect();
    for y in 0..height {
        let (y0, y1, fy) = taps(y, grid.height(), height);
        let ny = if fy < 0.5 { y0 } else { y1 };
        for (x, &(x0, x1, fx)) in cols.iter().enumerate() {
            let nx = if fx < 0.5 { x0 } else { x1 };
            if !grid.is_valid(nx, ny) {
                continue;
            }
            let mut acc = [0.0; NUM_CLASSES];
            let mut total = 0.0;
            for (sx, sy, w) in [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x1, y0, fx * (1.0 - fy)),
                (x0, y1, (1.0 - fx) * fy),
                (x1, y1, fx * fy),
            ] {
                if w == 0.0 {
                    continue;
                }
                if let Some(v) = grid.get(sx, sy) {
                    for (a, b) in acc.iter_mut().zip(v) {
                        *a += w * b;
                    }
                    total += w;
                }
            }
            acc.iter_mut().for_each(|a| *a /= total);
            out.set(x, y, Some(acc));
        }
    }
    out
}

/// Upscales every per-scale grid to `width × height` and averages the
/// scales that supply a value, renormalizing each result to sum to one.
pub fn fuse_scales(
    grids: &[LikelihoodGrid],
    width: usize,
    height: usize,
) -> Result<LikelihoodMap, ClassifierError> {
    if grids.is_empty() {
        return Err(ClassifierError::Shape("no scale grids to fuse".into()));
    }
    let up: Vec<LikelihoodGrid> = grids.iter().map(|g| upscale(g, width, height)).collect();
    let mut out = LikelihoodGrid::empty(width, height);
    for y in 0..height {
        for x in 0..width {
            let mut acc = [0.0; NUM_CLASSES];
            let mut count = 0usize;
            for v in up.iter().filter_map(|g| g.get(x, y)) {
                for (a, b) in acc.iter_mut().zip(v) {
                    *a += b;
                }
                count += 1;
            }
            if count == 0 {
                continue;
            }
            let total: f64 = acc.iter().sum();
            if total > 0.0 {
                acc.iter_mut().for_each(|a| *a /= total);
            } else {
                acc = [1.0 / NUM_CLASSES as f64; NUM_CLASSES];
            }
            out.set(x, y, Some(acc));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.1,
            regularization: 1e-4,
            seed: 0,
        }
    }
}

/// One linear scorer per class: `score_c = W[c]·Λ̄ + b[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: [[f64; NUM_CLASSES]; NUM_CLASSES],
    pub bias: [f64; NUM_CLASSES],
}

impl SvmModel {
    pub fn identity() -> Self {
        let mut weights = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (c, row) in weights.iter_mut().enumerate() {
            row[c] = 1.0;
        }
        Self {
            weights,
            bias: [0.0; NUM_CLASSES],
        }
    }

    pub fn scores(&self, x: &Tuple) -> [f64; NUM_CLASSES] {
        let mut s = self.bias;
        for (sc, row) in s.iter_mut().zip(&self.weights) {
            *sc += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        s
    }

    /// Highest-scoring class, ties to the lowest index.
    pub fn classify(&self, x: &Tuple) -> u8 {
        let s = self.scores(x);
        let mut best = 0;
        for c in 1..NUM_CLASSES {
            if s[c] > s[best] {
                best = c;
            }
        }
        best as u8
    }

    /// Six lines of seven numbers: the class weights followed by its bias.
    /// Lines starting with `#` are skipped when parsing.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (row, b) in self.weights.iter().zip(&self.bias) {
            let cells: Vec<String> = row
                .iter()
                .chain(std::iter::once(b))
                .map(|v| v.to_string())
                .collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ClassifierError> {
        let rows: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .collect();
        if rows.len() != NUM_CLASSES {
            return Err(FormatError::Syntax {
                line: rows.len().min(NUM_CLASSES) + 1,
                message: format!("expected {NUM_CLASSES} rows, found {}", rows.len()),
            }
            .into());
        }
        let mut model = Self {
            weights: [[0.0; NUM_CLASSES]; NUM_CLASSES],
            bias: [0.0; NUM_CLASSES],
        };
        for (c, (line, row)) in rows.into_iter().enumerate() {
            let syntax = |message: String| FormatError::Syntax {
                line: line + 1,
                message,
            };
            let nums = row
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| syntax(format!("`{t}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if nums.len() != NUM_CLASSES + 1 {
                return Err(syntax(format!(
                    "expected {} numbers, found {}",
                    NUM_CLASSES + 1,
                    nums.len()
                ))
                .into());
            }
            if nums.iter().any(|v| !v.is_finite()) {
                return Err(syntax("non-finite value".into()).into());
            }
            model.weights[c].copy_from_slice(&nums[..NUM_CLASSES]);
            model.bias[c] = nums[NUM_CLASSES];
        }
        Ok(model)
    }
}

/// Trains six hinge-loss classifiers (class vs rest) by stochastic
/// subgradient descent with L2 regularization. The bias is learned as the
/// weight of a constant input and the step at update `t` is
/// `rate / (1 + rate·λ·t)`.
pub fn train_svm(samples: &[(Tuple, u8)], params: &SvmParams) -> Result<SvmModel, ClassifierError> {
    if let Some((_, l)) = samples.iter().find(|(_, l)| *l as usize >= NUM_CLASSES) {
        return Err(ClassifierError::Shape(format!(
            "training label {l} is not a class"
        )));
    }
    let mut present = [false; NUM_CLASSES];
    samples
        .iter()
        .for_each(|(_, l)| present[*l as usize] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(ClassifierError::Degenerate(
            "need samples from at least two classes".into(),
        ));
    }
    if !(params.learning_rate > 0.0 && params.regularization >= 0.0) {
        return Err(ClassifierError::Shape(
            "rate must be positive and λ non-negative".into(),
        ));
    }

    let lambda = params.regularization;
    let mut w = [[0.0; NUM_CLASSES + 1]; NUM_CLASSES];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut t = 0usize;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (x, label) = &samples[i];
            let eta = params.learning_rate / (1.0 + params.learning_rate * lambda * t as f64);
            t += 1;
            for (c, wc) in w.iter_mut().enumerate() {
                let y = if c == *label as usize { 1.0 } else { -1.0 };
                let margin = y
                    * (wc[..NUM_CLASSES]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        + wc[NUM_CLASSES]);
                let shrink = 1.0 - eta * lambda;
                wc.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (v, xi) in wc.iter_mut().zip(x.iter().chain(std::iter::once(&1.0))) {
                        *v += eta * y * xi;
                    }
                }
            }
        }
    }

    let mut model = SvmModel {
        weights: [[0.0; NUM_CLASSES]; NUM_CLASSES],
        bias: [0.0; NUM_CLASSES],
    };
    for (c, wc) in w.iter().enumerate() {
        model.weights[c].copy_from_slice(&wc[..NUM_CLASSES]);
        model.bias[c] = wc[NUM_CLASSES];
    }
    Ok(model)
}

/// Labels every valued pixel; unvalued pixels become unknown.
pub fn predict_label(model: &SvmModel, map: &LikelihoodMap) -> LabelGrid {
    let labels = map
        .iter()
        .map(|(_, _, v)| v.map_or(UNKNOWN, |t| model.classify(t)))
        .collect();
    LabelGrid::new(map.width(), map.height(), labels)
}

/// Uniform subsample (without replacement) of valued pixels that carry a
/// class label in `reference`.
pub fn collect_samples(
    map: &LikelihoodMap,
    reference: &LabelGrid,
    count: usize,
    seed: u64,
) -> Result<Vec<(Tuple, u8)>, ClassifierError> {
    if map.width() != reference.width() || map.height() != reference.height() {
        return Err(ClassifierError::Shape(format!(
            "likelihood map {}x{} vs reference {}x{}",
            map.width(),
            map.height(),
            reference.width(),
            reference.height()
        )));
    }
    let mut pool: Vec<(Tuple, u8)> = map
        .iter()
        .filter_map(|(x, y, v)| {
            let l = reference.get(x, y);
            v.filter(|_| (l as usize) < NUM_CLASSES).map(|t| (*t, l))
        })
        .collect();
    if pool.len() > count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (chosen, _) = pool.partial_shuffle(&mut rng, count);
        pool = chosen.to_vec();
    }
    Ok(pool)
}
