//! Patch size × kernel size grid at a reduced training budget.

use std::fmt::Write as _;

use crate::classifier::{predict_label, SvmModel};
use crate::cnn::{train, NetConfig, Network, PatchSet, TrainParams};
use crate::error::PipelineError;
use crate::eval::{confusion, scores, ConfusionMatrix, REPORT_ORDER};
use crate::label::{NUM_CLASSES, UNKNOWN};
use crate::pipeline::{Pipeline, Split, Stage};
use crate::raster::{
    build_composite, load_label_grid, load_raster, sample_patches_joint, scale_side, NUM_SCALES,
};

#[derive(Debug, Clone, PartialEq)]
pub enum SweepOutcome {
    /// The pair gives no valid network or composite; the reason is kept.
    Infeasible(String),
    /// Overall accuracy and per-class recall on the test scenes, indexed by
    /// class.
    Trained {
        accuracy: f64,
        class_accuracy: [f64; NUM_CLASSES],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub patch_size: usize,
    pub kernel_size: usize,
    pub outcome: SweepOutcome,
}

/// Pure arithmetic check of a patch/kernel pair against a scene size.
pub fn feasibility(
    patch_size: usize,
    kernel_size: usize,
    width: usize,
    height: usize,
) -> Result<(), String> {
    NetConfig::new(patch_size, kernel_size)
        .chain()
        .map_err(|e| e.to_string())?;
    let smallest = scale_side(width.min(height), NUM_SCALES - 1);
    if smallest < 2 * patch_size {
        return Err(format!(
            "smallest scale {smallest} px is below twice the patch size"
        ));
    }
    Ok(())
}

/// Grid with patch sizes as rows and kernel sizes as columns. Trained cells
/// show overall accuracy in percent, infeasible cells show `--`.
pub fn render_sweep_table(
    cells: &[SweepCell],
    patch_sizes: &[usize],
    kernel_sizes: &[usize],
) -> String {
    let mut out = String::from("N \\ k");
    for k in kernel_sizes {
        let _ = write!(out, " | {k:>5}");
    }
    out.push('\n');
    for &n in patch_sizes {
        let _ = write!(out, "{n:<5}");
        for &k in kernel_sizes {
            let cell = cells
                .iter()
                .find(|c| c.patch_size == n && c.kernel_size == k);
            let text = match cell.map(|c| &c.outcome) {
                Some(SweepOutcome::Trained { accuracy, .. }) => format!("{:.1}", 100.0 * accuracy),
                _ => "--".to_string(),
            };
            let _ = write!(out, " | {text:>5}");
        }
        out.push('\n');
    }
    out
}

impl Pipeline {
    /// Trains and scores every feasible cell of the configured grid using
    /// the network output alone.
    pub fn sweep(&self) -> Result<Vec<SweepCell>, PipelineError> {
        let cfg = self.config();
        let train_names = self.require_scenes(Stage::Synth, Split::Train)?;
        let test_names = self.require_scenes(Stage::Synth, Split::Test)?;
        let mut train_rasters = Vec::new();
        for name in &train_names {
            let [d, c, l] = self.layout.scene_files(Split::Train, name);
            train_rasters.push(load_raster(&d, &c, Some(&l))?);
        }
        let mut test_scenes = Vec::new();
        for name in &test_names {
            let [d, c, l] = self.layout.scene_files(Split::Test, name);
            test_scenes.push((load_raster(&d, &c, None)?, load_label_grid(&l)?));
        }
        let (w, h) = train_rasters
            .iter()
            .chain(test_scenes.iter().map(|(r, _)| r))
            .fold((usize::MAX, usize::MAX), |(w, h), r| {
                (w.min(r.width()), h.min(r.height()))
            });

        let mut cells = Vec::new();
        for &n in &cfg.sweep.patch_sizes {
            for &k in &cfg.sweep.kernel_sizes {
                let outcome = match feasibility(n, k, w, h) {
                    Err(reason) => SweepOutcome::Infeasible(reason),
                    Ok(()) => self.sweep_cell(n, k, &train_rasters, &test_scenes)?,
                };
                if let SweepOutcome::Trained { accuracy, .. } = &outcome {
                    self.log(format!("[sweep] N={n} k={k}: accuracy {accuracy:.4}"));
                } else {
                    self.log(format!("[sweep] N={n} k={k}: infeasible"));
                }
                cells.push(SweepCell {
                    patch_size: n,
                    kernel_size: k,
                    outcome,
                });
            }
        }

        let mut csv = String::from("patch_size,kernel_size,status,accuracy");
        for c in REPORT_ORDER {
            let _ = write!(csv, ",acc_{}", c.name());
        }
        csv.push('\n');
        for cell in &cells {
            match &cell.outcome {
                SweepOutcome::Infeasible(_) => {
                    let _ = write!(csv, "{},{},infeasible,", cell.patch_size, cell.kernel_size);
                    csv.push_str(&",".repeat(NUM_CLASSES));
                }
                SweepOutcome::Trained {
                    accuracy,
                    class_accuracy,
                } => {
                    let _ = write!(
                        csv,
                        "{},{},trained,{accuracy:.6}",
                        cell.patch_size, cell.kernel_size
                    );
                    for c in REPORT_ORDER {
                        let _ = write!(csv, ",{:.6}", class_accuracy[c.index() as usize]);
                    }
                }
            }
            csv.push('\n');
        }
        self.write_text(&self.layout.sweep_csv(), &csv)?;
        let table = render_sweep_table(&cells, &cfg.sweep.patch_sizes, &cfg.sweep.kernel_sizes);
        self.write_text(&self.layout.sweep_table(), &table)?;
        self.finish_stage("sweep")?;
        Ok(cells)
    }

    fn sweep_cell(
        &self,
        n: usize,
        k: usize,
        train_rasters: &[crate::raster::Raster],
        test_scenes: &[(crate::raster::Raster, crate::grid::LabelGrid)],
    ) -> Result<SweepOutcome, PipelineError> {
        let cfg = self.config();
        let composites = train_rasters
            .iter()
            .map(|r| build_composite(r, n))
            .collect::<Result<Vec<_>, _>>()?;
        let patches =
            sample_patches_joint(&composites, cfg.sweep.samples, n, cfg.seed.wrapping_add(1));
        let set = PatchSet {
            composites: &composites,
            patches: &patches,
        };
        let mut net = Network::<f32>::new(NetConfig::new(n, k), cfg.seed)?;
        let params = TrainParams {
            epochs: cfg.sweep.epochs,
            ..cfg.train
        };
        train(&mut net, &set, &params, |_, _| {})?;
        let argmax = SvmModel::identity();
        let mut cm = ConfusionMatrix::default();
        for (raster, reference) in test_scenes {
            let map = Self::likelihood_map(&net, raster, cfg.stride)?;
            let labels = predict_label(&argmax, &map);
            let mask: Vec<bool> = labels.as_slice().iter().map(|&l| l != UNKNOWN).collect();
            cm.add(&confusion(reference, &labels, Some(&mask))?);
        }
        let s = scores(&cm);
        Ok(SweepOutcome::Trained {
            accuracy: s.accuracy,
            class_accuracy: s.recall,
        })
    }
}
