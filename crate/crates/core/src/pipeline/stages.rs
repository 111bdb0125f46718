//! The individual stages.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::classifier::{
    collect_samples, fuse_scales, predict_label, train_svm, LikelihoodMap, SvmModel,
};
use crate::cnn::{
    infer_dense, read_checkpoint, train, write_checkpoint, LossTrace, Network, PatchSet,
};
use crate::error::PipelineError;
use crate::eval::{
    confusion, diff_image, report_csv, report_table, scores, ConfusionMatrix, REPORT_ORDER,
};
use crate::grid::LabelGrid;
use crate::kv::KeyValues;
use crate::label::{ClassLabel, UNKNOWN};
use crate::likelihood::LikelihoodGrid;
use crate::mrf::alpha_expansion;
use crate::pipeline::{io_err, Pipeline, Split, Stage};
use crate::raster::{
    build_composite, load_label_grid, load_raster, sample_patches_joint, save_diff_png,
    save_label_grid, save_raster, Composite, Patch, Raster,
};
use crate::reconstruct::{export_obj, reconstruct_scene};
use crate::synth::{generate_scene, SceneSpec};

/// Seed offsets that keep the stages' random streams apart.
const PATCH_SEED: u64 = 1;
const SVM_SEED: u64 = 2;
const SCENE_SEED: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct RefineSummary {
    pub scene: String,
    pub initial_energy: i64,
    pub final_energy: i64,
    pub sweeps: usize,
    pub unknown_before: usize,
    pub unknown_after: usize,
}

/// Confusion matrices summed over the test scenes. `raw` and `refined`
/// cover the pixels the network labeled; `refined_full` covers the whole
/// image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub raw: ConfusionMatrix,
    pub refined: ConfusionMatrix,
    pub refined_full: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneGeometry {
    pub scene: String,
    pub buildings: usize,
    pub skipped: usize,
    pub cars: usize,
    pub trees: usize,
    /// Every exported building prism is a closed 2-manifold.
    pub manifold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub evaluation: Evaluation,
    pub refinement: Vec<RefineSummary>,
    pub geometry: Vec<SceneGeometry>,
    pub final_loss: f64,
}

impl RunSummary {
    pub fn raw_accuracy(&self) -> f64 {
        scores(&self.evaluation.raw).accuracy
    }

    pub fn refined_accuracy(&self) -> f64 {
        scores(&self.evaluation.refined).accuracy
    }

    pub fn building_f1(&self) -> f64 {
        scores(&self.evaluation.refined).f1[ClassLabel::Building.index() as usize]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "final_training_loss = {:.6}", self.final_loss);
        let _ = writeln!(out, "raw_accuracy = {:.4}", self.raw_accuracy());
        let _ = writeln!(out, "refined_accuracy = {:.4}", self.refined_accuracy());
        let _ = writeln!(
            out,
            "refinement_delta = {:.4}",
            self.refined_accuracy() - self.raw_accuracy()
        );
        let _ = writeln!(
            out,
            "refined_full_accuracy = {:.4}",
            scores(&self.evaluation.refined_full).accuracy
        );
        let s = scores(&self.evaluation.refined);
        for c in REPORT_ORDER {
            let _ = writeln!(out, "f1.{} = {:.4}", c.name(), s.f1[c.index() as usize]);
        }
        for r in &self.refinement {
            let _ = writeln!(
                out,
                "refine.{} = energy {} -> {}, {} sweeps, unknown {} -> {}",
                r.scene,
                r.initial_energy,
                r.final_energy,
                r.sweeps,
                r.unknown_before,
                r.unknown_after
            );
        }
        for g in &self.geometry {
            let _ = writeln!(
                out,
                "geometry.{} = {} buildings ({} skipped), {} cars, {} trees, manifold {}",
                g.scene, g.buildings, g.skipped, g.cars, g.trees, g.manifold
            );
        }
        out
    }
}

fn patches_csv(patches: &[Patch]) -> String {
    let mut out = String::from("source,x,y,size,scale,label\n");
    for p in patches {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.source, p.x, p.y, p.size, p.scale, p.label
        );
    }
    out
}

fn parse_patches(text: &str, path: &Path) -> Result<Vec<Patch>, PipelineError> {
    let bad = |line: usize, message: String| PipelineError::Artifact {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.starts_with("source") && !l.trim().is_empty())
        .map(|(i, l)| {
            let v = l
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|e| bad(i + 1, format!("`{t}`: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if v.len() != 6 || v[5] > u8::MAX as usize {
                return Err(bad(i + 1, "expected six fields".into()));
            }
            Ok(Patch {
                source: v[0],
                x: v[1],
                y: v[2],
                size: v[3],
                scale: v[4],
                label: v[5] as u8,
            })
        })
        .collect()
}

impl Pipeline {
    fn load_scene(
        &self,
        split: Split,
        name: &str,
        with_labels: bool,
    ) -> Result<Raster, PipelineError> {
        let [d, c, l] = self.layout.scene_files(split, name);
        Ok(load_raster(&d, &c, with_labels.then_some(l.as_path()))?)
    }

    fn load_reference(
        &self,
        stage: Stage,
        split: Split,
        name: &str,
    ) -> Result<LabelGrid, PipelineError> {
        let [_, _, l] = self.layout.scene_files(split, name);
        self.require(stage, Stage::Synth, &l)?;
        Ok(load_label_grid(&l)?)
    }

    /// Generates the synthetic scene set. Earlier generated scenes are
    /// removed first; other files in the data directory are left alone.
    pub fn synth(&self) -> Result<Vec<String>, PipelineError> {
        let cfg = &self.config.synth;
        for split in [Split::Train, Split::Test] {
            let dir = self.layout.scene_dir(split);
            if let Ok(entries) = fs::read_dir(&dir) {
                for e in entries.filter_map(|e| e.ok()) {
                    let name = e.file_name();
                    if name.to_str().is_some_and(|n| n.starts_with("scene_")) {
                        fs::remove_file(e.path()).map_err(io_err(&e.path()))?;
                    }
                }
            }
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let mut names = Vec::with_capacity(cfg.scenes);
        for i in 0..cfg.scenes {
            let split = if i < cfg.train_scenes {
                Split::Train
            } else {
                Split::Test
            };
            let name = format!("scene_{i:02}");
            let seed = self
                .config
                .seed
                .wrapping_mul(SCENE_SEED)
                .wrapping_add(i as u64);
            let spec = SceneSpec::for_canvas(cfg.width, cfg.height, seed);
            let scene = generate_scene(&spec)?;
            let [d, c, l] = self.layout.scene_files(split, &name);
            save_raster(&scene.raster, &d, &c, Some(&l))?;
            let spec_path = self
                .layout
                .scene_dir(split)
                .join(format!("{name}_spec.txt"));
            self.write_text(&spec_path, &spec.to_kv().to_text())?;
            for p in [&d, &c, &l] {
                self.track(p);
            }
            self.log(format!("[synth] {}/{name}", split.dir()));
            names.push(name);
        }
        Ok(names)
    }

    /// Packs every training scene into a composite and samples patches
    /// across them.
    pub fn preprocess(&self) -> Result<usize, PipelineError> {
        let names = self.require_scenes(Stage::Preprocess, Split::Train)?;
        let n = self.config.patch_size;
        let mut composites = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let raster = self.load_scene(Split::Train, name, true)?;
            let comp = build_composite(&raster, n)?;
            let [d, c, l, p] = self.layout.composite_files(i);
            super::ensure_parent(&d)?;
            save_raster(&comp.canvas, &d, &c, Some(&l))?;
            for f in [&d, &c, &l] {
                self.track(f);
            }
            self.write_text(&p, &comp.placements_kv().to_text())?;
            composites.push(comp);
        }
        let patches = sample_patches_joint(
            &composites,
            self.config.samples,
            n,
            self.config.seed.wrapping_add(PATCH_SEED),
        );
        self.write_text(&self.layout.patches(), &patches_csv(&patches))?;
        self.log(format!(
            "[preprocess] {} patches from {} scenes",
            patches.len(),
            names.len()
        ));
        Ok(patches.len())
    }

    fn load_composites(&self, count: usize) -> Result<Vec<Composite>, PipelineError> {
        (0..count)
            .map(|i| {
                let [d, c, l, p] = self.layout.composite_files(i);
                self.require(Stage::TrainCnn, Stage::Preprocess, &p)?;
                let canvas = load_raster(&d, &c, Some(&l))?;
                let kv = KeyValues::parse(&self.read_text(&p)?)?;
                let (source_width, source_height, placements) = Composite::placements_from_kv(&kv)?;
                Ok(Composite {
                    canvas,
                    placements,
                    source_width,
                    source_height,
                })
            })
            .collect()
    }

    pub fn train_cnn(&self) -> Result<LossTrace, PipelineError> {
        let path = self.layout.patches();
        self.require(Stage::TrainCnn, Stage::Preprocess, &path)?;
        let patches = parse_patches(&self.read_text(&path)?, &path)?;
        let sources = patches.iter().map(|p| p.source + 1).max().unwrap_or(0);
        let composites = self.load_composites(sources)?;
        if let Some(p) = patches.iter().find(|p| p.size != self.config.patch_size) {
            return Err(PipelineError::Config {
                field: "patch_size".into(),
                message: format!("patches were cut at {} px; rerun preprocess", p.size),
            });
        }
        let set = PatchSet {
            composites: &composites,
            patches: &patches,
        };
        let mut net = Network::<f32>::new(self.config.net_config(), self.config.seed)?;
        let trace = train(&mut net, &set, &self.config.train, |epoch, loss| {
            self.log(format!(
                "[train-cnn] epoch {epoch}/{} loss {loss:.5}",
                self.config.train.epochs
            ))
        })?;
        let ckpt = self.layout.cnn_checkpoint();
        super::ensure_parent(&ckpt)?;
        let file = fs::File::create(&ckpt).map_err(io_err(&ckpt))?;
        write_checkpoint(&net, BufWriter::new(file))?;
        self.track(&ckpt);
        self.write_text(&self.layout.loss_csv(), &trace.to_csv())?;
        Ok(trace)
    }

    fn load_network(&self, stage: Stage) -> Result<Network<f32>, PipelineError> {
        let ckpt = self.layout.cnn_checkpoint();
        self.require(stage, Stage::TrainCnn, &ckpt)?;
        let file = fs::File::open(&ckpt).map_err(io_err(&ckpt))?;
        let net: Network<f32> = read_checkpoint(BufReader::new(file))?;
        if net.config() != self.config.net_config() {
            return Err(PipelineError::Config {
                field: "patch_size".into(),
                message: format!(
                    "checkpoint was trained with patch {} and kernel {}; rerun train-cnn",
                    net.config().patch_size,
                    net.config().kernel_size
                ),
            });
        }
        Ok(net)
    }

    /// Fused likelihood map of one raster at its own resolution.
    pub(crate) fn likelihood_map(
        net: &Network<f32>,
        raster: &Raster,
        stride: usize,
    ) -> Result<LikelihoodMap, PipelineError> {
        let comp = build_composite(raster, net.config().patch_size)?;
        let grids = infer_dense(net, &comp, stride);
        Ok(fuse_scales(&grids, raster.width(), raster.height())?)
    }

    /// Likelihood maps for every train and test scene.
    pub fn infer(&self) -> Result<(), PipelineError> {
        let net = self.load_network(Stage::Infer)?;
        for split in [Split::Train, Split::Test] {
            for name in self.require_scenes(Stage::Infer, split)? {
                let raster = self.load_scene(split, &name, false)?;
                let map = Self::likelihood_map(&net, &raster, self.config.stride)?;
                let path = self.layout.likelihood(split, &name);
                super::ensure_parent(&path)?;
                let file = fs::File::create(&path).map_err(io_err(&path))?;
                map.write_to(BufWriter::new(file)).map_err(io_err(&path))?;
                self.track(&path);
                self.log(format!(
                    "[infer] {}/{name}: {} valued pixels",
                    split.dir(),
                    map.valid_count()
                ));
            }
        }
        Ok(())
    }

    fn load_likelihood(
        &self,
        stage: Stage,
        split: Split,
        name: &str,
    ) -> Result<LikelihoodMap, PipelineError> {
        let path = self.layout.likelihood(split, name);
        self.require(stage, Stage::Infer, &path)?;
        let file = fs::File::open(&path).map_err(io_err(&path))?;
        Ok(LikelihoodGrid::read_from(BufReader::new(file))?)
    }

    pub fn train_svm(&self) -> Result<SvmModel, PipelineError> {
        let names = self.require_scenes(Stage::TrainSvm, Split::Train)?;
        let per_scene = self.config.svm_samples.div_ceil(names.len());
        let mut samples = Vec::new();
        for (i, name) in names.iter().enumerate() {
            let map = self.load_likelihood(Stage::TrainSvm, Split::Train, name)?;
            let reference = self.load_reference(Stage::TrainSvm, Split::Train, name)?;
            let seed = self
                .config
                .seed
                .wrapping_add(SVM_SEED)
                .wrapping_add(i as u64);
            samples.extend(collect_samples(&map, &reference, per_scene, seed)?);
        }
        let model = train_svm(&samples, &self.config.svm)?;
        self.write_text(&self.layout.svm_model(), &model.to_text())?;
        self.log(format!("[train-svm] {} samples", samples.len()));
        Ok(model)
    }

    /// Labels the test scenes with the SVM and refines them.
    pub fn refine(&self) -> Result<Vec<RefineSummary>, PipelineError> {
        let svm_path = self.layout.svm_model();
        self.require(Stage::Refine, Stage::TrainSvm, &svm_path)?;
        let model = SvmModel::from_text(&self.read_text(&svm_path)?)?;
        let mut out = Vec::new();
        for name in self.require_scenes(Stage::Refine, Split::Test)? {
            let map = self.load_likelihood(Stage::Refine, Split::Test, &name)?;
            let raw = predict_label(&model, &map);
            let refined = alpha_expansion(&raw, &self.config.mrf, self.config.max_sweeps)?;
            for (path, grid) in [
                (self.layout.raw_labels(&name), &raw),
                (self.layout.refined_labels(&name), &refined.labels),
            ] {
                super::ensure_parent(&path)?;
                save_label_grid(grid, &path)?;
                self.track(&path);
            }
            self.write_text(&self.layout.energy_trace(&name), &refined.trace_csv())?;
            let summary = RefineSummary {
                scene: name.clone(),
                initial_energy: refined.initial_energy(),
                final_energy: refined.final_energy(),
                sweeps: refined.sweeps,
                unknown_before: raw.count_unknown(),
                unknown_after: refined.labels.count_unknown(),
            };
            self.log(format!(
                "[refine] {name}: energy {} -> {}, unknown {} -> {}",
                summary.initial_energy,
                summary.final_energy,
                summary.unknown_before,
                summary.unknown_after
            ));
            out.push(summary);
        }
        Ok(out)
    }

    pub fn evaluate(&self) -> Result<Evaluation, PipelineError> {
        let mut total = Evaluation::default();
        let mut csv = String::from("scene,pixels,accuracy,");
        csv.push_str(
            &REPORT_ORDER
                .iter()
                .map(|c| format!("f1_{}", c.name()))
                .collect::<Vec<_>>()
                .join(","),
        );
        csv.push_str(",labels\n");
        let row = |csv: &mut String, scene: &str, which: &str, cm: &ConfusionMatrix| {
            let s = scores(cm);
            let f1: Vec<String> = REPORT_ORDER
                .iter()
                .map(|c| format!("{:.6}", s.f1[c.index() as usize]))
                .collect();
            let _ = writeln!(
                csv,
                "{scene},{},{:.6},{},{which}",
                cm.total(),
                s.accuracy,
                f1.join(",")
            );
        };
        for name in self.require_scenes(Stage::Evaluate, Split::Test)? {
            let reference = self.load_reference(Stage::Evaluate, Split::Test, &name)?;
            let mut grids = Vec::new();
            for path in [
                self.layout.raw_labels(&name),
                self.layout.refined_labels(&name),
            ] {
                self.require(Stage::Evaluate, Stage::Refine, &path)?;
                grids.push(load_label_grid(&path)?);
            }
            let (raw, refined) = (&grids[0], &grids[1]);
            let mask: Vec<bool> = raw.as_slice().iter().map(|&l| l != UNKNOWN).collect();
            let scene = Evaluation {
                raw: confusion(&reference, raw, Some(&mask))?,
                refined: confusion(&reference, refined, Some(&mask))?,
                refined_full: confusion(&reference, refined, None)?,
            };
            row(&mut csv, &name, "raw", &scene.raw);
            row(&mut csv, &name, "refined", &scene.refined);
            row(&mut csv, &name, "refined_full", &scene.refined_full);
            total.raw.add(&scene.raw);
            total.refined.add(&scene.refined);
            total.refined_full.add(&scene.refined_full);
            let diff = self.layout.diff_png(&name);
            super::ensure_parent(&diff)?;
            save_diff_png(&diff_image(&reference, refined)?, &diff)?;
            self.track(&diff);
        }
        row(&mut csv, "all", "raw", &total.raw);
        row(&mut csv, "all", "refined", &total.refined);
        row(&mut csv, "all", "refined_full", &total.refined_full);
        self.write_text(&self.layout.metrics_csv(), &csv)?;

        let mut report = String::new();
        for (title, cm) in [
            ("network + SVM, labeled pixels", &total.raw),
            ("refined, labeled pixels", &total.refined),
            ("refined, all pixels", &total.refined_full),
        ] {
            let _ = writeln!(report, "## {title}\n\n{}", report_table(cm));
        }
        let _ = writeln!(
            report,
            "## refined, labeled pixels (csv)\n\n{}",
            report_csv(&total.refined)
        );
        self.write_text(&self.layout.report(), &report)?;
        self.log(format!(
            "[evaluate] accuracy {:.4} raw, {:.4} refined",
            scores(&total.raw).accuracy,
            scores(&total.refined).accuracy
        ));
        Ok(total)
    }

    pub fn reconstruct(&self) -> Result<Vec<SceneGeometry>, PipelineError> {
        let mut out = Vec::new();
        for name in self.require_scenes(Stage::Reconstruct, Split::Test)? {
            let path = self.layout.refined_labels(&name);
            self.require(Stage::Reconstruct, Stage::Refine, &path)?;
            let labels = load_label_grid(&path)?;
            let raster = self.load_scene(Split::Test, &name, false)?;
            let rec = reconstruct_scene(&labels, &raster, &self.config.reconstruct)?;
            let obj = self.layout.obj(&name);
            super::ensure_parent(&obj)?;
            export_obj(
                &rec.groups,
                &obj,
                &[format!("config {}", self.hash), format!("scene {name}")],
            )?;
            self.track(&obj);
            let manifold = rec
                .groups
                .iter()
                .filter(|g| g.name.starts_with("building_"))
                .all(|g| g.mesh.is_closed_manifold());
            let geo = SceneGeometry {
                scene: name.clone(),
                buildings: rec.footprints.len(),
                skipped: rec.skipped.len(),
                cars: rec.cars.len(),
                trees: rec.trees.len(),
                manifold,
            };
            self.log(format!(
                "[reconstruct] {name}: {} buildings, {} cars, {} trees",
                geo.buildings, geo.cars, geo.trees
            ));
            out.push(geo);
        }
        Ok(out)
    }

    /// Runs every stage in order and writes a summary. Scene generation is
    /// skipped when the data directory already holds training scenes.
    pub fn run_all(&self) -> Result<RunSummary, PipelineError> {
        if self.scenes(Split::Train).is_empty() {
            self.run(Stage::Synth)?;
        }
        self.run(Stage::Preprocess)?;
        self.log("[train-cnn] start");
        let trace = self.train_cnn()?;
        self.finish_stage(Stage::TrainCnn.name())?;
        self.run(Stage::Infer)?;
        self.run(Stage::TrainSvm)?;
        self.log("[refine] start");
        let refinement = self.refine()?;
        self.finish_stage(Stage::Refine.name())?;
        self.log("[evaluate] start");
        let evaluation = self.evaluate()?;
        self.finish_stage(Stage::Evaluate.name())?;
        self.log("[reconstruct] start");
        let geometry = self.reconstruct()?;
        self.finish_stage(Stage::Reconstruct.name())?;
        let summary = RunSummary {
            evaluation,
            refinement,
            geometry,
            final_loss: trace.epochs.last().copied().unwrap_or(f64::NAN),
        };
        self.write_text(&self.layout.summary(), &summary.to_text())?;
        self.finish_stage("run-all")?;
        Ok(summary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_rows_round_trip() {
        let p = vec![
            Patch {
                source: 1,
                x: 2,
                y: 3,
                size: 34,
                scale: 4,
                label: 5,
            };
            3
        ];
        let text = format!("# config abc\n{}", patches_csv(&p));
        assert_eq!(parse_patches(&text, Path::new("p.csv")).unwrap(), p);
        assert!(parse_patches("1,2,3\n", Path::new("p.csv")).is_err());
    }
}
