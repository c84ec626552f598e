//! Dataset loading, training and the two paired comparisons (fusion vs
//! image-only, image vs trajectory queries) shared by the subcommands and
//! the acceptance suite.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use t2c_core::captioner::{evaluate, train_with, CaptionModel, EpochLog, Example, ModelConfig, TrainConfig, TrainLog};
use t2c_core::dataset::{generate_corpus, load_manifest, resolve, CorpusSpec, GeneratedSample, Split, PAIR_PREFIX};
use t2c_core::encoders::{FusionKind, QuerySource};
use t2c_core::geometry::{CameraModel, TrajectoryPlan};
use t2c_core::metrics::EvalTable;
use t2c_core::raster::RgbImage;
use t2c_core::text::Vocab;

use crate::CliError;

/// Examples grouped by split, ready for the model.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub camera: CameraModel,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

impl Dataset {
    pub fn from_generated(samples: &[GeneratedSample], camera: &CameraModel) -> Self {
        let mut ds = Dataset {
            camera: camera.clone(),
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for s in samples {
            let ex = Example::from_plan(s.id.clone(), s.image.clone(), &s.plan, camera, s.caption.clone());
            ds.split_mut(s.split).push(ex);
        }
        ds
    }

    /// Reads `manifest.jsonl` and `calibration.json`. `path` is either the
    /// manifest itself or the directory holding it.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let manifest = manifest_path(path)?;
        let calib = manifest.with_file_name("calibration.json");
        let camera = CameraModel::load(&calib)?;
        let mut ds = Dataset {
            camera: camera.clone(),
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for s in load_manifest(&manifest)? {
            let image = RgbImage::load_ppm(resolve(&manifest, &s.image))?;
            let plan = TrajectoryPlan::load(resolve(&manifest, &s.plan))?;
            let ex = Example::from_plan(s.id, image, &plan, &camera, s.caption);
            ds.split_mut(s.split).push(ex);
        }
        Ok(ds)
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<Example> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    /// Vocabulary of the training captions.
    pub fn vocab(&self) -> Result<Vocab, CliError> {
        let caps: Vec<&str> = self.train.iter().map(|e| e.caption.as_str()).collect();
        Ok(Vocab::build(&caps)?)
    }

    pub fn select(&self, which: EvalSplit) -> Vec<Example> {
        match which {
            EvalSplit::Train => self.train.clone(),
            EvalSplit::Val => self.val.clone(),
            EvalSplit::Test => self.test.clone(),
            EvalSplit::Ambiguous => ambiguous(&self.test),
            EvalSplit::All => self.train.iter().chain(&self.val).chain(&self.test).cloned().collect(),
        }
    }
}

/// Which examples `eval` scores. `ambiguous` is the pair members of the
/// test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    Train,
    Val,
    Test,
    Ambiguous,
    All,
}

pub fn manifest_path(path: &Path) -> Result<PathBuf, CliError> {
    let m = if path.is_dir() { path.join("manifest.jsonl") } else { path.to_path_buf() };
    if !m.is_file() {
        return Err(CliError::User(format!("no manifest at {}", m.display())));
    }
    Ok(m)
}

pub fn ambiguous(examples: &[Example]) -> Vec<Example> {
    examples.iter().filter(|e| e.id.starts_with(PAIR_PREFIX)).cloned().collect()
}

/// Builds a model for `config` and trains it on `data`; the best
/// validation epoch is kept.
pub fn fit(
    config: ModelConfig,
    data: &Dataset,
    train: &TrainConfig,
    seed: u64,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(CaptionModel, TrainLog), CliError> {
    let mut model = CaptionModel::new(config, data.vocab()?, data.camera.clone(), seed)?;
    let log = train_with(&mut model, &data.train, &data.val, train, on_epoch)?;
    Ok((model, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub table: EvalTable,
    pub action_accuracy: f64,
    pub samples: usize,
}

pub fn score(model: &CaptionModel, examples: &[Example]) -> Result<Scores, CliError> {
    let rep = evaluate(model, examples)?;
    Ok(Scores {
        table: rep.table,
        action_accuracy: rep.action_accuracy(),
        samples: examples.len(),
    })
}

/// Corpus and schedule for the separation experiment: both models train on
/// the same corpus and are scored on a held-out set of ambiguous pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationSpec {
    pub seed: u64,
    pub standard: usize,
    pub pairs: usize,
    pub test_pairs: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for SeparationSpec {
    fn default() -> Self {
        SeparationSpec {
            seed: 0,
            standard: 200,
            pairs: 500,
            test_pairs: 200,
            epochs: 10,
            lr: crate::config::RUN_LR,
        }
    }
}

/// Seed offset for the held-out ambiguous corpus, so it never shares
/// scenes with the training corpus.
const HELD_OUT_SEED: u64 = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantResult {
    pub fusion: FusionKind,
    pub ambiguous: Scores,
    /// The training corpus's own test split.
    pub test: Scores,
    pub final_train_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationReport {
    pub spec: SeparationSpec,
    pub variants: Vec<VariantResult>,
    pub seconds: f64,
}

impl SeparationReport {
    pub fn get(&self, fusion: FusionKind) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.fusion == fusion)
    }
}

pub struct SeparationData {
    pub data: Dataset,
    pub held_out: Vec<Example>,
}

pub fn separation_data(spec: &SeparationSpec) -> Result<SeparationData, CliError> {
    let cam = CameraModel::toy_default();
    let corpus = generate_corpus(
        &CorpusSpec {
            seed: spec.seed,
            standard: spec.standard,
            pairs: spec.pairs,
        },
        &cam,
    )?;
    let held = generate_corpus(
        &CorpusSpec {
            seed: spec.seed + HELD_OUT_SEED,
            standard: 0,
            pairs: spec.test_pairs,
        },
        &cam,
    )?;
    let held_out = held
        .iter()
        .map(|s| Example::from_plan(s.id.clone(), s.image.clone(), &s.plan, &cam, s.caption.clone()))
        .collect();
    Ok(SeparationData {
        data: Dataset::from_generated(&corpus, &cam),
        held_out,
    })
}

/// Trains each fusion variant in turn on the same corpus and scores it.
pub fn separation(
    spec: &SeparationSpec,
    variants: &[FusionKind],
    mut progress: impl FnMut(FusionKind, &EpochLog),
) -> Result<SeparationReport, CliError> {
    let start = Instant::now();
    let SeparationData { data, held_out } = separation_data(spec)?;
    let train = TrainConfig {
        epochs: spec.epochs,
        seed: spec.seed,
        adam: t2c_core::tensor::AdamConfig {
            lr: spec.lr,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut out = Vec::new();
    for &fusion in variants {
        let t = Instant::now();
        let (model, log) = fit(ModelConfig::with_fusion(fusion, None), &data, &train, spec.seed, |e| progress(fusion, e))?;
        out.push(VariantResult {
            fusion,
            ambiguous: score(&model, &held_out)?,
            test: score(&model, &data.test)?,
            final_train_loss: log.epochs.last().map_or(f64::NAN, |e| e.train_loss),
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    Ok(SeparationReport {
        spec: *spec,
        variants: out,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub query: QuerySource,
    pub test: Scores,
    pub ambiguous: Option<Scores>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

/// Trains the cross-attention model once per query source and scores both
/// on the test split and on its ambiguous pairs.
pub fn ablation(
    base: ModelConfig,
    data: &Dataset,
    train: &TrainConfig,
    seed: u64,
    mut progress: impl FnMut(QuerySource, &EpochLog),
) -> Result<AblationReport, CliError> {
    let amb = ambiguous(&data.test);
    let mut rows = Vec::new();
    for query in [QuerySource::Image, QuerySource::Trajectory] {
        let config = ModelConfig {
            fusion: FusionKind::Xattn,
            xattn_query: Some(query),
            ..base
        };
        let (model, _) = fit(config, data, train, seed, |e| progress(query, e))?;
        rows.push(AblationRow {
            query,
            test: score(&model, &data.test)?,
            ambiguous: if amb.is_empty() { None } else { Some(score(&model, &amb)?) },
        });
    }
    Ok(AblationReport { rows })
}

pub const TABLE_HEADER: [&str; 6] = ["whole_b4", "whole_rl", "action_b4", "action_rl", "just_b4", "just_rl"];

/// Fixed-width rows: a label column, then the six metrics.
pub fn format_table(rows: &[(String, EvalTable)]) -> String {
    let mut s = format!("{:<12}", "");
    for h in TABLE_HEADER {
        s.push_str(&format!(" {h:>9}"));
    }
    s.push('\n');
    for (label, t) in rows {
        s.push_str(&format!("{label:<12}"));
        for v in t.values() {
            s.push_str(&format!(" {v:>9.4}"));
        }
        s.push('\n');
    }
    s
}
