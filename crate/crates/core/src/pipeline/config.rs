//! Run configuration in the plain-text key/value format.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::classifier::SvmParams;
use crate::cnn::{NetConfig, TrainParams};
use crate::error::{FormatError, PipelineError};
use crate::kv::KeyValues;
use crate::mrf::{Connectivity, EnergyParams};
use crate::raster::{scale_side, NUM_SCALES};
use crate::reconstruct::ReconstructParams;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub scenes: usize,
    pub train_scenes: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub patch_sizes: Vec<usize>,
    pub kernel_sizes: Vec<usize>,
    pub epochs: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub output_dir: PathBuf,
    pub patch_size: usize,
    pub kernel_size: usize,
    pub seed: u64,
    pub train: TrainParams,
    /// Training patches drawn across all training scenes.
    pub samples: usize,
    pub stride: usize,
    pub svm: SvmParams,
    /// SVM samples drawn across all training scenes.
    pub svm_samples: usize,
    pub mrf: EnergyParams,
    pub max_sweeps: usize,
    pub reconstruct: ReconstructParams,
    pub synth: SynthSettings,
    pub sweep: SweepSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            checkpoint_dir: PathBuf::from("run/checkpoints"),
            output_dir: PathBuf::from("run"),
            patch_size: 100,
            kernel_size: 5,
            seed: 0,
            train: TrainParams {
                epochs: 30,
                ..TrainParams::default()
            },
            samples: 50_000,
            stride: 1,
            svm: SvmParams::default(),
            svm_samples: 20_000,
            mrf: EnergyParams::default(),
            max_sweeps: 10,
            reconstruct: ReconstructParams::default(),
            synth: SynthSettings {
                scenes: 10,
                train_scenes: 8,
                width: 600,
                height: 600,
            },
            sweep: SweepSettings {
                patch_sizes: vec![34, 70, 100],
                kernel_sizes: vec![5, 7, 9, 11, 13, 15, 17],
                epochs: 5,
                samples: 5_000,
            },
        }
    }
}

const PATH_KEYS: [&str; 3] = ["data_dir", "checkpoint_dir", "output_dir"];

fn invalid(field: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl PipelineConfig {
    /// Reads a config file. Relative paths resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_kv(&KeyValues::parse(&text)?, base)
    }

    /// Builds a config from keys, filling defaults for missing ones.
    /// Unknown keys are rejected.
    pub fn from_kv(kv: &KeyValues, base: &Path) -> Result<Self, PipelineError> {
        let d = Self::default();
        let known = d.to_kv();
        if let Some(k) = kv.keys().find(|k| !known.contains(k)) {
            return Err(invalid(k, "unknown key"));
        }
        let path = |key: &str, default: &Path| -> PathBuf {
            let p = kv
                .get_str(key)
                .map_or_else(|| default.to_path_buf(), PathBuf::from);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let list = |key: &str, default: &[usize]| -> Result<Vec<usize>, FormatError> {
            Ok(kv.get_list(key)?.unwrap_or_else(|| default.to_vec()))
        };
        let connectivity = match kv.get_or("mrf.connectivity", 4u8)? {
            4 => Connectivity::Four,
            8 => Connectivity::Eight,
            n => return Err(invalid("mrf.connectivity", format!("{n} is not 4 or 8"))),
        };
        let seed = kv.get_or("seed", d.seed)?;
        let cfg = Self {
            data_dir: path("data_dir", &d.data_dir),
            checkpoint_dir: path("checkpoint_dir", &d.checkpoint_dir),
            output_dir: path("output_dir", &d.output_dir),
            patch_size: kv.get_or("patch_size", d.patch_size)?,
            kernel_size: kv.get_or("kernel_size", d.kernel_size)?,
            seed,
            train: TrainParams {
                epochs: kv.get_or("train.epochs", d.train.epochs)?,
                learning_rate: kv.get_or("train.learning_rate", d.train.learning_rate)?,
                batch_size: kv.get_or("train.batch_size", d.train.batch_size)?,
                seed,
            },
            samples: kv.get_or("train.samples", d.samples)?,
            stride: kv.get_or("stride", d.stride)?,
            svm: SvmParams {
                epochs: kv.get_or("svm.epochs", d.svm.epochs)?,
                learning_rate: kv.get_or("svm.learning_rate", d.svm.learning_rate)?,
                regularization: kv.get_or("svm.regularization", d.svm.regularization)?,
                seed,
            },
            svm_samples: kv.get_or("svm.samples", d.svm_samples)?,
            mrf: EnergyParams {
                match_cost: kv.get_or("mrf.match_cost", d.mrf.match_cost)?,
                mismatch_cost: kv.get_or("mrf.mismatch_cost", d.mrf.mismatch_cost)?,
                unknown_cost: kv.get_or("mrf.unknown_cost", d.mrf.unknown_cost)?,
                pairwise_cost: kv.get_or("mrf.pairwise_cost", d.mrf.pairwise_cost)?,
                connectivity,
            },
            max_sweeps: kv.get_or("mrf.max_sweeps", d.max_sweeps)?,
            reconstruct: ReconstructParams {
                epsilon: kv.get_or("reconstruct.epsilon", d.reconstruct.epsilon)?,
                min_area: kv.get_or("reconstruct.min_area", d.reconstruct.min_area)?,
                ground_step: kv.get_or("reconstruct.ground_step", d.reconstruct.ground_step)?,
                pixel_size: kv.get_or("reconstruct.pixel_size", d.reconstruct.pixel_size)?,
                ground_percentile: kv.get_or(
                    "reconstruct.ground_percentile",
                    d.reconstruct.ground_percentile,
                )?,
            },
            synth: SynthSettings {
                scenes: kv.get_or("synth.scenes", d.synth.scenes)?,
                train_scenes: kv.get_or("synth.train_scenes", d.synth.train_scenes)?,
                width: kv.get_or("synth.width", d.synth.width)?,
                height: kv.get_or("synth.height", d.synth.height)?,
            },
            sweep: SweepSettings {
                patch_sizes: list("sweep.patch_sizes", &d.sweep.patch_sizes)?,
                kernel_sizes: list("sweep.kernel_sizes", &d.sweep.kernel_sizes)?,
                epochs: kv.get_or("sweep.epochs", d.sweep.epochs)?,
                samples: kv.get_or("sweep.samples", d.sweep.samples)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("data_dir", self.data_dir.display());
        kv.set("checkpoint_dir", self.checkpoint_dir.display());
        kv.set("output_dir", self.output_dir.display());
        kv.set("patch_size", self.patch_size);
        kv.set("kernel_size", self.kernel_size);
        kv.set("seed", self.seed);
        kv.set("train.epochs", self.train.epochs);
        kv.set("train.learning_rate", self.train.learning_rate);
        kv.set("train.batch_size", self.train.batch_size);
        kv.set("train.samples", self.samples);
        kv.set("stride", self.stride);
        kv.set("svm.epochs", self.svm.epochs);
        kv.set("svm.learning_rate", self.svm.learning_rate);
        kv.set("svm.regularization", self.svm.regularization);
        kv.set("svm.samples", self.svm_samples);
        kv.set("mrf.match_cost", self.mrf.match_cost);
        kv.set("mrf.mismatch_cost", self.mrf.mismatch_cost);
        kv.set("mrf.unknown_cost", self.mrf.unknown_cost);
        kv.set("mrf.pairwise_cost", self.mrf.pairwise_cost);
        kv.set(
            "mrf.connectivity",
            match self.mrf.connectivity {
                Connectivity::Four => 4,
                Connectivity::Eight => 8,
            },
        );
        kv.set("mrf.max_sweeps", self.max_sweeps);
        kv.set("reconstruct.epsilon", self.reconstruct.epsilon);
        kv.set("reconstruct.min_area", self.reconstruct.min_area);
        kv.set("reconstruct.ground_step", self.reconstruct.ground_step);
        kv.set("reconstruct.pixel_size", self.reconstruct.pixel_size);
        kv.set(
            "reconstruct.ground_percentile",
            self.reconstruct.ground_percentile,
        );
        kv.set("synth.scenes", self.synth.scenes);
        kv.set("synth.train_scenes", self.synth.train_scenes);
        kv.set("synth.width", self.synth.width);
        kv.set("synth.height", self.synth.height);
        kv.set("sweep.patch_sizes", join(&self.sweep.patch_sizes));
        kv.set("sweep.kernel_sizes", join(&self.sweep.kernel_sizes));
        kv.set("sweep.epochs", self.sweep.epochs);
        kv.set("sweep.samples", self.sweep.samples);
        kv
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig::new(self.patch_size, self.kernel_size)
    }

    /// Applies command-line overrides and revalidates.
    pub fn with_overrides(
        mut self,
        seed: Option<u64>,
        stride: Option<usize>,
    ) -> Result<Self, PipelineError> {
        if let Some(s) = seed {
            self.seed = s;
            self.train.seed = s;
            self.svm.seed = s;
        }
        if let Some(s) = stride {
            self.stride = s;
        }
        self.validate()?;
        Ok(self)
    }

    /// First 16 hex digits of the SHA-256 of every non-path setting.
    pub fn hash(&self) -> String {
        let kv = self.to_kv();
        let mut h = Sha256::new();
        for line in kv.to_text().lines() {
            if !PATH_KEYS
                .iter()
                .any(|k| line.starts_with(&format!("{k} =")))
            {
                h.update(line.as_bytes());
                h.update(b"\n");
            }
        }
        hex::encode(h.finalize())[..16].to_string()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(invalid(
                "kernel_size",
                format!("{} is not a positive odd number", self.kernel_size),
            ));
        }
        self.net_config()
            .chain()
            .map_err(|e| invalid("patch_size", format!("{e}")))?;
        let positive = [
            ("train.epochs", self.train.epochs),
            ("train.batch_size", self.train.batch_size),
            ("train.samples", self.samples),
            ("stride", self.stride),
            ("svm.epochs", self.svm.epochs),
            ("svm.samples", self.svm_samples),
            ("mrf.max_sweeps", self.max_sweeps),
            ("reconstruct.min_area", self.reconstruct.min_area),
            ("reconstruct.ground_step", self.reconstruct.ground_step),
            ("synth.scenes", self.synth.scenes),
            ("synth.train_scenes", self.synth.train_scenes),
            ("sweep.epochs", self.sweep.epochs),
            ("sweep.samples", self.sweep.samples),
        ];
        if let Some((field, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(invalid(field, "must be positive"));
        }
        let rates = [
            ("train.learning_rate", self.train.learning_rate),
            ("svm.learning_rate", self.svm.learning_rate),
            ("reconstruct.pixel_size", self.reconstruct.pixel_size),
        ];
        if let Some((field, v)) = rates.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid(field, format!("{v} is not a positive number")));
        }
        if !(self.svm.regularization.is_finite() && self.svm.regularization >= 0.0) {
            return Err(invalid("svm.regularization", "must be non-negative"));
        }
        let costs = [
            ("mrf.match_cost", self.mrf.match_cost),
            ("mrf.mismatch_cost", self.mrf.mismatch_cost),
            ("mrf.unknown_cost", self.mrf.unknown_cost),
            ("mrf.pairwise_cost", self.mrf.pairwise_cost),
        ];
        if let Some((field, v)) = costs.iter().find(|(_, v)| *v < 0) {
            return Err(invalid(field, format!("cost {v} is negative")));
        }
        if self.mrf.pairwise_cost == 0 {
            return Err(invalid("mrf.pairwise_cost", "must be positive"));
        }
        if !(self.reconstruct.epsilon.is_finite() && self.reconstruct.epsilon >= 0.0) {
            return Err(invalid("reconstruct.epsilon", "must be non-negative"));
        }
        if !(0.0..=100.0).contains(&self.reconstruct.ground_percentile) {
            return Err(invalid(
                "reconstruct.ground_percentile",
                "must lie in 0..=100",
            ));
        }
        if self.synth.train_scenes >= self.synth.scenes {
            return Err(invalid(
                "synth.train_scenes",
                format!(
                    "must leave at least one of {} scenes for testing",
                    self.synth.scenes
                ),
            ));
        }
        for (field, side) in [
            ("synth.width", self.synth.width),
            ("synth.height", self.synth.height),
        ] {
            let smallest = scale_side(side, NUM_SCALES - 1);
            if smallest < 2 * self.patch_size {
                return Err(invalid(
                    field,
                    format!("{side} px shrinks to {smallest} px, below twice the patch size"),
                ));
            }
        }
        if self.sweep.patch_sizes.is_empty() || self.sweep.kernel_sizes.is_empty() {
            return Err(invalid("sweep.patch_sizes", "sweep grid is empty"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let d = PipelineConfig::default();
        let kv = KeyValues::parse(&d.to_kv().to_text()).unwrap();
        let back = PipelineConfig::from_kv(&kv, Path::new("")).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.hash(), d.hash());
    }

    #[test]
    fn hash_ignores_paths_but_not_settings() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.stride = 2;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn errors_name_the_field() {
        let bad = |text: &str| match PipelineConfig::from_kv(
            &KeyValues::parse(text).unwrap(),
            Path::new(""),
        ) {
            Err(PipelineError::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        };
        assert_eq!(bad("patch_size = 12"), "patch_size");
        assert_eq!(bad("kernel_size = 4"), "kernel_size");
        assert_eq!(bad("mrf.pairwise_cost = -1"), "mrf.pairwise_cost");
        assert_eq!(bad("stride = 0"), "stride");
        assert_eq!(bad("synth.train_scenes = 10"), "synth.train_scenes");
        assert_eq!(bad("synth.width = 300"), "synth.width");
        assert_eq!(bad("bogus = 1"), "bogus");
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let kv = KeyValues::parse("output_dir = out\ndata_dir = /abs/data").unwrap();
        let c = PipelineConfig::from_kv(&kv, Path::new("/cfg")).unwrap();
        assert_eq!(c.output_dir, PathBuf::from("/cfg/out"));
        assert_eq!(c.data_dir, PathBuf::from("/abs/data"));
    }
}
