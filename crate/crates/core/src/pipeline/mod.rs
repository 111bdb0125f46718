//! Stage orchestration. Every stage reads its predecessors' files and
//! writes its own, so stages can be rerun and inspected one at a time.
//!
//! Text outputs start with a `# config <hash>` line. A manifest in the
//! output directory lists every written file with its SHA-256.

mod config;
mod stages;
mod sweep;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::PipelineError;
use crate::kv::KeyValues;

pub use config::{PipelineConfig, SweepSettings, SynthSettings};
pub use stages::{Evaluation, RefineSummary, RunSummary, SceneGeometry};
pub use sweep::{render_sweep_table, SweepCell, SweepOutcome};

/// Stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Preprocess,
    TrainCnn,
    Infer,
    TrainSvm,
    Refine,
    Evaluate,
    Reconstruct,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Synth,
        Stage::Preprocess,
        Stage::TrainCnn,
        Stage::Infer,
        Stage::TrainSvm,
        Stage::Refine,
        Stage::Evaluate,
        Stage::Reconstruct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Preprocess => "preprocess",
            Stage::TrainCnn => "train-cnn",
            Stage::Infer => "infer",
            Stage::TrainSvm => "train-svm",
            Stage::Refine => "refine",
            Stage::Evaluate => "evaluate",
            Stage::Reconstruct => "reconstruct",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

/// Train or test half of the scene set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// File locations for one run.
#[derive(Debug, Clone)]
pub struct Layout {
    pub data: PathBuf,
    pub checkpoints: PathBuf,
    pub output: PathBuf,
}

impl Layout {
    pub fn new(config: &PipelineConfig) -> Self {
        Self {
            data: config.data_dir.clone(),
            checkpoints: config.checkpoint_dir.clone(),
            output: config.output_dir.clone(),
        }
    }

    pub fn scene_dir(&self, split: Split) -> PathBuf {
        self.data.join(split.dir())
    }

    /// Depth, color and label paths of a scene.
    pub fn scene_files(&self, split: Split, name: &str) -> [PathBuf; 3] {
        let dir = self.scene_dir(split);
        ["depth", "color", "labels"].map(|k| dir.join(format!("{name}_{k}.png")))
    }

    pub fn composite_files(&self, i: usize) -> [PathBuf; 4] {
        let dir = self.output.join("preprocess");
        [
            dir.join(format!("composite_{i:02}_depth.png")),
            dir.join(format!("composite_{i:02}_color.png")),
            dir.join(format!("composite_{i:02}_labels.png")),
            dir.join(format!("composite_{i:02}_placements.txt")),
        ]
    }

    pub fn patches(&self) -> PathBuf {
        self.output.join("preprocess").join("patches.csv")
    }

    pub fn cnn_checkpoint(&self) -> PathBuf {
        self.checkpoints.join("cnn.ckpt")
    }

    pub fn loss_csv(&self) -> PathBuf {
        self.output.join("train").join("loss.csv")
    }

    pub fn likelihood(&self, split: Split, name: &str) -> PathBuf {
        self.output
            .join("likelihood")
            .join(split.dir())
            .join(format!("{name}.lhm"))
    }

    pub fn svm_model(&self) -> PathBuf {
        self.checkpoints.join("svm.txt")
    }

    pub fn raw_labels(&self, name: &str) -> PathBuf {
        self.output.join("labels").join(format!("{name}_raw.png"))
    }

    pub fn refined_labels(&self, name: &str) -> PathBuf {
        self.output
            .join("labels")
            .join(format!("{name}_refined.png"))
    }

    pub fn energy_trace(&self, name: &str) -> PathBuf {
        self.output
            .join("refine")
            .join(format!("{name}_energy.csv"))
    }

    pub fn metrics_csv(&self) -> PathBuf {
        self.output.join("eval").join("metrics.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.output.join("eval").join("report.txt")
    }

    pub fn diff_png(&self, name: &str) -> PathBuf {
        self.output.join("eval").join(format!("{name}_diff.png"))
    }

    pub fn obj(&self, name: &str) -> PathBuf {
        self.output.join("reconstruct").join(format!("{name}.obj"))
    }

    pub fn summary(&self) -> PathBuf {
        self.output.join("summary.txt")
    }

    pub fn sweep_csv(&self) -> PathBuf {
        self.output.join("sweep").join("sweep.csv")
    }

    pub fn sweep_table(&self) -> PathBuf {
        self.output.join("sweep").join("sweep.txt")
    }

    pub fn manifest(&self) -> PathBuf {
        self.output.join("manifest.txt")
    }

    /// Manifest key for a file: its path below one of the run roots.
    fn manifest_key(&self, path: &Path) -> String {
        for (root, tag) in [
            (&self.output, "output"),
            (&self.checkpoints, "checkpoints"),
            (&self.data, "data"),
        ] {
            if let Ok(rel) = path.strip_prefix(root) {
                let rel: Vec<_> = rel.iter().map(|c| c.to_string_lossy()).collect();
                return format!("{tag}/{}", rel.join("/"));
            }
        }
        path.display().to_string()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn ensure_parent(path: &Path) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(())
}

/// Runs stages against one config.
pub struct Pipeline {
    config: PipelineConfig,
    layout: Layout,
    hash: String,
    log: Box<dyn Fn(&str)>,
    written: std::cell::RefCell<Vec<PathBuf>>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            layout: Layout::new(&config),
            hash: config.hash(),
            config,
            log: Box::new(|_| {}),
            written: Default::default(),
        }
    }

    /// Receives one line per progress event.
    pub fn with_logger(mut self, log: impl Fn(&str) + 'static) -> Self {
        self.log = Box::new(log);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn log(&self, msg: impl AsRef<str>) {
        (self.log)(msg.as_ref());
    }

    /// Runs one stage and records its outputs in the manifest.
    pub fn run(&self, stage: Stage) -> Result<(), PipelineError> {
        self.log(format!("[{stage}] start"));
        match stage {
            Stage::Synth => self.synth().map(drop),
            Stage::Preprocess => self.preprocess().map(drop),
            Stage::TrainCnn => self.train_cnn().map(drop),
            Stage::Infer => self.infer(),
            Stage::TrainSvm => self.train_svm().map(drop),
            Stage::Refine => self.refine().map(drop),
            Stage::Evaluate => self.evaluate().map(drop),
            Stage::Reconstruct => self.reconstruct().map(drop),
        }?;
        self.finish_stage(stage.name())
    }

    /// Fails with an ordered-stage error if `path` is missing.
    fn require(&self, stage: Stage, upstream: Stage, path: &Path) -> Result<(), PipelineError> {
        if path.exists() {
            Ok(())
        } else {
            Err(PipelineError::MissingArtifact {
                stage: stage.name(),
                upstream: upstream.name(),
                path: path.to_path_buf(),
            })
        }
    }

    fn header(&self) -> String {
        format!("# config {}\n", self.hash)
    }

    /// Writes a text artifact prefixed with the config header.
    fn write_text(&self, path: &Path, body: &str) -> Result<(), PipelineError> {
        ensure_parent(path)?;
        fs::write(path, format!("{}{body}", self.header())).map_err(io_err(path))?;
        self.track(path);
        Ok(())
    }

    fn track(&self, path: &Path) {
        self.written.borrow_mut().push(path.to_path_buf());
    }

    fn read_text(&self, path: &Path) -> Result<String, PipelineError> {
        fs::read_to_string(path).map_err(io_err(path))
    }

    /// Adds this stage's files to the manifest. A manifest written under a
    /// different config is replaced.
    fn finish_stage(&self, stage: &str) -> Result<(), PipelineError> {
        let path = self.layout.manifest();
        let mut kv = match fs::read_to_string(&path) {
            Ok(text) => KeyValues::parse(&text)?,
            Err(_) => KeyValues::new(),
        };
        if kv.get_str("config_hash") != Some(self.hash.as_str()) {
            kv = KeyValues::new();
            kv.set("config_hash", &self.hash);
        }
        kv.set(&format!("stage.{stage}"), "done");
        for file in self.written.borrow_mut().drain(..) {
            let bytes = fs::read(&file).map_err(io_err(&file))?;
            let digest = hex::encode(Sha256::digest(&bytes));
            kv.set(&format!("file.{}", self.layout.manifest_key(&file)), digest);
        }
        ensure_parent(&path)?;
        fs::write(&path, kv.to_text()).map_err(io_err(&path))?;
        self.log(format!("[{stage}] done"));
        Ok(())
    }

    /// Scene names in a split, from the `*_depth.png` files, sorted.
    pub fn scenes(&self, split: Split) -> Vec<String> {
        let Ok(entries) = fs::read_dir(self.layout.scene_dir(split)) else {
            return Vec::new();
        };
        let mut names: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                e.file_name()
                    .to_str()
                    .and_then(|n| n.strip_suffix("_depth.png"))
                    .map(str::to_string)
            })
            .collect();
        names.sort();
        names
    }

    fn require_scenes(&self, stage: Stage, split: Split) -> Result<Vec<String>, PipelineError> {
        let names = self.scenes(split);
        if names.is_empty() {
            return Err(PipelineError::MissingArtifact {
                stage: stage.name(),
                upstream: Stage::Synth.name(),
                path: self.layout.scene_dir(split).join("*_depth.png"),
            });
        }
        Ok(names)
    }
}
