//! Query bottleneck, language projection and a small causal decoder that
//! turns fused image/trajectory features into `action ; justification`
//! captions, plus the training loop.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{EncoderConfig, Fusion, FusionEncoder, FusionKind, QuerySource};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, TrajectoryPlan};
use crate::metrics::{score_predictions, EvalReport};
use crate::nn::{CrossAttentionBlock, DecoderBlock, LayerNorm, Linear};
use crate::raster::{render_trajectory_image, RgbImage};
use crate::tensor::{read_checkpoint, write_checkpoint, Adam, AdamConfig, Graph, ParamId, ParamStore, Tensor, Var};
use crate::text::{Vocab, BOS, EOS, PAD};

/// Weight init for the 64-wide toy model, about `1/sqrt(64)`.
pub const TOY_INIT_STD: f64 = 0.125;

const HEAD_STREAM: u64 = 99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub fusion: FusionKind,
    pub xattn_query: Option<QuerySource>,
    pub encoder: EncoderConfig,
    /// Learned query tokens in the bottleneck.
    pub queries: usize,
    pub qformer_blocks: usize,
    pub dec_dim: usize,
    pub dec_layers: usize,
    pub dec_heads: usize,
    /// Longest decoder input, BOS included.
    pub max_len: usize,
    /// Standard deviation of normally initialized weights.
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            fusion: FusionKind::Xattn,
            xattn_query: None,
            encoder: EncoderConfig::default(),
            queries: 8,
            qformer_blocks: 2,
            dec_dim: 64,
            dec_layers: 2,
            dec_heads: 4,
            max_len: 32,
            init_std: TOY_INIT_STD,
        }
    }
}

impl ModelConfig {
    pub fn with_fusion(fusion: FusionKind, xattn_query: Option<QuerySource>) -> Self {
        ModelConfig {
            fusion,
            xattn_query,
            ..Default::default()
        }
    }

    pub fn resolved_fusion(&self) -> Result<Fusion> {
        Fusion::from_parts(self.fusion, self.xattn_query)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.resolved_fusion()?;
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::Config(format!("init_std {} must be positive", self.init_std)));
        }
        if self.queries == 0 {
            return Err(Error::Config("at least one learned query is required".into()));
        }
        if self.max_len < 2 {
            return Err(Error::Config(format!("max_len {} is too small", self.max_len)));
        }
        if self.dec_heads == 0 || self.dec_dim % self.dec_heads != 0 {
            return Err(Error::Config(format!(
                "dec_dim {} is not divisible by {} heads",
                self.dec_dim, self.dec_heads
            )));
        }
        Ok(())
    }
}

/// Which parameter groups the optimizer leaves untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezePreset {
    #[default]
    None,
    /// Encoders and decoder frozen; fusion, bottleneck and projection train.
    PaperFreeze,
    All,
}

impl std::str::FromStr for FreezePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FreezePreset::None),
            "paper-freeze" => Ok(FreezePreset::PaperFreeze),
            "all" => Ok(FreezePreset::All),
            other => Err(Error::Config(format!(
                "unknown freeze preset `{other}` (expected none, paper-freeze or all)"
            ))),
        }
    }
}

// the decoder's final norm stays trainable: its gain starts at zero, so
// freezing it would hold every logit at 0 and starve the whole graph
const FROZEN_BY_PAPER_PRESET: [&str; 5] = ["enc_cam.", "enc_traj.", "dec.tok_emb", "dec.pos_emb", "dec.block"];

pub fn apply_freeze(store: &mut ParamStore, preset: FreezePreset) {
    store.set_frozen_prefix("", false);
    match preset {
        FreezePreset::None => {}
        FreezePreset::PaperFreeze => {
            for prefix in FROZEN_BY_PAPER_PRESET {
                store.set_frozen_prefix(prefix, true);
            }
        }
        FreezePreset::All => {
            store.set_frozen_prefix("", true);
        }
    }
}

pub struct CaptionModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub camera: CameraModel,
    pub store: ParamStore,
    encoder: FusionEncoder,
    queries: ParamId,
    qformer: Vec<CrossAttentionBlock>,
    qformer_ln: LayerNorm,
    proj: Linear,
    tok_emb: ParamId,
    pos_emb: ParamId,
    dec: Vec<DecoderBlock>,
    dec_ln: LayerNorm,
}

impl std::fmt::Debug for CaptionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CaptionModel")
            .field("config", &self.config)
            .field("vocab", &self.vocab.len())
            .field("params", &self.store.num_scalars())
            .finish()
    }
}

/// Inputs of one forward pass: the camera frame and, for fusion models,
/// the rendered trajectory image.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub image: RgbImage,
    pub trajectory: Option<RgbImage>,
    pub caption: String,
}

impl Example {
    pub fn from_plan(id: impl Into<String>, image: RgbImage, plan: &TrajectoryPlan, cam: &CameraModel, caption: impl Into<String>) -> Self {
        Example {
            id: id.into(),
            image,
            trajectory: Some(render_trajectory_image(plan, cam)),
            caption: caption.into(),
        }
    }
}

impl CaptionModel {
    pub fn new(config: ModelConfig, vocab: Vocab, camera: CameraModel, seed: u64) -> Result<Self> {
        config.validate()?;
        camera.validate()?;
        if camera.width != config.encoder.image_size || camera.height != config.encoder.image_size {
            return Err(Error::Config(format!(
                "camera canvas {}x{} does not match encoder input {}",
                camera.width, camera.height, config.encoder.image_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::with_init_std(config.init_std);
        let d = config.encoder.dim;
        let dd = config.dec_dim;
        let encoder = FusionEncoder::new(&mut store, config.resolved_fusion()?, config.encoder, &mut rng)?;
        let queries = store.add_init("qformer.queries", &[config.queries, d], &mut rng);
        let qformer = (0..config.qformer_blocks)
            .map(|i| CrossAttentionBlock::new(&mut store, &format!("qformer.block{i}"), d, config.encoder.heads, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let qformer_ln = LayerNorm::new(&mut store, "qformer.ln", d);
        let proj = Linear::new(&mut store, "proj", d, dd, &mut rng);
        // drawn from its own stream so vocabulary size does not shift the
        // draws of later parameters
        let mut head_rng = ChaCha8Rng::seed_from_u64(seed ^ HEAD_STREAM);
        let tok_emb = store.add_init("dec.tok_emb", &[vocab.len(), dd], &mut head_rng);
        let pos_emb = store.add_init("dec.pos_emb", &[config.max_len, dd], &mut rng);
        let dec = (0..config.dec_layers)
            .map(|i| DecoderBlock::new(&mut store, &format!("dec.block{i}"), dd, config.dec_heads, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let dec_ln = LayerNorm::new(&mut store, "dec.ln_f", dd);
        // zero gain on the last norm zeroes the hidden state fed to the tied
        // head: every initial logit is 0 and the first loss is ln|V|
        store.get_mut(dec_ln.gain).value.data_mut().fill(0.0);
        Ok(CaptionModel {
            config,
            vocab,
            camera,
            store,
            encoder,
            queries,
            qformer,
            qformer_ln,
            proj,
            tok_emb,
            pos_emb,
            dec,
            dec_ln,
        })
    }

    pub fn fusion(&self) -> Fusion {
        self.encoder.fusion
    }

    /// Trajectory image for `plan` under the model's camera, or `None` for
    /// the baseline which never looks at it.
    pub fn trajectory_image(&self, plan: Option<&TrajectoryPlan>) -> Result<Option<RgbImage>> {
        match (self.fusion().uses_plan(), plan) {
            (false, _) => Ok(None),
            (true, Some(p)) => Ok(Some(render_trajectory_image(p, &self.camera))),
            (true, None) => Err(Error::MissingPlan(self.config.fusion.to_string())),
        }
    }

    /// Projected bottleneck tokens, `queries × dec_dim`, reading parameters
    /// from `store` (which must share this model's layout).
    pub fn memory_with(&self, store: &ParamStore, g: &mut Graph, image: &RgbImage, traj: Option<&RgbImage>) -> Result<Var> {
        let traj = if self.fusion().uses_plan() { traj } else { None };
        let fused = self.encoder.forward(g, store, image, traj)?;
        let mut q = g.param(store, self.queries);
        for block in &self.qformer {
            q = block.forward(g, store, q, fused.tokens)?;
        }
        let q = self.qformer_ln.forward(g, store, q)?;
        self.proj.forward(g, store, q)
    }

    /// Logits for every position of `input` (which starts with BOS).
    pub fn decode_logits_with(&self, store: &ParamStore, g: &mut Graph, memory: Var, input: &[usize]) -> Result<Var> {
        if input.len() > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: input.len(),
                max: self.config.max_len,
            });
        }
        let emb = g.param(store, self.tok_emb);
        let tok = g.gather(emb, input)?;
        let pos_table = g.param(store, self.pos_emb);
        let pos = g.slice_rows(pos_table, 0, input.len())?;
        let mut x = g.add(tok, pos)?;
        for block in &self.dec {
            x = block.forward(g, store, x, memory)?;
        }
        let h = self.dec_ln.forward(g, store, x)?;
        g.matmul_bt(h, emb)
    }

    /// Teacher-forced mean token cross-entropy on a pre-rendered example.
    /// `target` runs `BOS … EOS` and may carry a PAD suffix, which is
    /// ignored.
    pub fn example_loss_with(
        &self,
        store: &ParamStore,
        g: &mut Graph,
        image: &RgbImage,
        traj: Option<&RgbImage>,
        target: &[usize],
    ) -> Result<Var> {
        if target.len() < 2 || target[0] != BOS {
            return Err(Error::InvalidArgument("target must start with BOS and hold at least two tokens".into()));
        }
        let input = &target[..target.len() - 1];
        if input.len() > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: input.len(),
                max: self.config.max_len,
            });
        }
        if self.fusion().uses_plan() && traj.is_none() {
            return Err(Error::MissingPlan(self.config.fusion.to_string()));
        }
        let memory = self.memory_with(store, g, image, traj)?;
        let logits = self.decode_logits_with(store, g, memory, input)?;
        let labels: Vec<Option<usize>> = target[1..].iter().map(|&t| (t != PAD).then_some(t)).collect();
        g.cross_entropy(logits, &labels)
    }

    pub fn memory(&self, g: &mut Graph, image: &RgbImage, traj: Option<&RgbImage>) -> Result<Var> {
        self.memory_with(&self.store, g, image, traj)
    }

    pub fn decode_logits(&self, g: &mut Graph, memory: Var, input: &[usize]) -> Result<Var> {
        self.decode_logits_with(&self.store, g, memory, input)
    }

    /// Teacher-forced mean token cross-entropy on a pre-rendered example.
    pub fn example_loss(&self, g: &mut Graph, image: &RgbImage, traj: Option<&RgbImage>, target: &[usize]) -> Result<Var> {
        self.example_loss_with(&self.store, g, image, traj, target)
    }

    /// Loss for a camera image, an optional plan and target ids.
    pub fn forward_caption(&self, g: &mut Graph, image: &RgbImage, plan: Option<&TrajectoryPlan>, target: &[usize]) -> Result<Var> {
        let traj = self.trajectory_image(plan)?;
        self.example_loss(g, image, traj.as_ref(), target)
    }

    /// Greedy token ids after BOS, EOS excluded; at most `max_len` tokens.
    pub fn greedy_ids(&self, image: &RgbImage, traj: Option<&RgbImage>) -> Result<Vec<usize>> {
        if self.fusion().uses_plan() && traj.is_none() {
            return Err(Error::MissingPlan(self.config.fusion.to_string()));
        }
        let mut g = Graph::new();
        let memory = self.memory(&mut g, image, traj)?;
        let mut input = vec![BOS];
        let mut out = Vec::new();
        while out.len() < self.config.max_len {
            let logits = self.decode_logits(&mut g, memory, &input)?;
            let t = g.value(logits);
            let last = t.row(t.rows() - 1);
            // first maximum wins, so ties go to the lowest id
            let mut best = 0;
            for (i, &x) in last.iter().enumerate() {
                if x > last[best] {
                    best = i;
                }
            }
            if best == EOS {
                break;
            }
            out.push(best);
            if input.len() == self.config.max_len {
                break;
            }
            input.push(best);
        }
        Ok(out)
    }

    pub fn decode_example(&self, image: &RgbImage, traj: Option<&RgbImage>) -> Result<String> {
        Ok(self.vocab.decode(&self.greedy_ids(image, traj)?))
    }

    pub fn decode_greedy(&self, image: &RgbImage, plan: Option<&TrajectoryPlan>) -> Result<String> {
        let traj = self.trajectory_image(plan)?;
        self.decode_example(image, traj.as_ref())
    }

    /// Writes the parameter checkpoint and its JSON sidecar
    /// (`<path>.json`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, write_checkpoint(&self.store)).map_err(|e| Error::io(path, e))?;
        let side = sidecar_path(path);
        let sidecar = Sidecar {
            config: self.config,
            vocab: self.vocab.clone(),
            camera: serde_json::from_str(&self.camera.to_json_string()).expect("calibration is JSON"),
        };
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        std::fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
        let camera = CameraModel::from_json_str(&sidecar.camera.to_string()).map_err(|e| Error::json(&side, e))?;
        let mut model = CaptionModel::new(sidecar.config, sidecar.vocab, camera, 0)?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        model.load_params(&bytes)?;
        Ok(model)
    }

    /// Replaces every parameter from checkpoint bytes; names and shapes must
    /// match exactly.
    pub fn load_params(&mut self, bytes: &[u8]) -> Result<()> {
        let records = read_checkpoint(bytes)?;
        if records.len() != self.store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                records.len(),
                self.store.len()
            )));
        }
        for (p, (name, t)) in self.store.iter_mut().zip(records) {
            if p.name != name || p.value.shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "expected {} {:?}, found {} {:?}",
                    p.name,
                    p.value.shape(),
                    name,
                    t.shape()
                )));
            }
            p.value = t;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: ModelConfig,
    vocab: Vocab,
    camera: serde_json::Value,
}

pub fn sidecar_path(checkpoint: &Path) -> std::path::PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub freeze: FreezePreset,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 16,
            adam: AdamConfig::default(),
            freeze: FreezePreset::None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: usize,
}

impl TrainLog {
    /// `epoch,split,loss` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "split", "loss"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), "train".into(), format!("{:?}", e.train_loss)])?;
            if let Some(v) = e.val_loss {
                w.write_record([e.epoch.to_string(), "val".into(), format!("{v:?}")])?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn diverged(err: Error, epoch: usize, id: &str) -> Error {
    match err {
        Error::NonFinite(op) => Error::Diverged(format!("non-finite value in {op} at epoch {epoch}, sample {id}")),
        other => other,
    }
}

/// Mean loss over `examples` without touching gradients.
pub fn mean_loss(model: &CaptionModel, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for ex in examples {
        let mut g = Graph::new();
        let target = model.vocab.encode(&ex.caption);
        let loss = model.example_loss(&mut g, &ex.image, ex.trajectory.as_ref(), &target)?;
        total += g.value(loss).item();
    }
    Ok(total / examples.len() as f64)
}

/// Epoch-at-a-time training state: optimizer moments, shuffle RNG and the
/// best validation snapshot.
pub struct Trainer {
    cfg: TrainConfig,
    adam: Adam,
    rng: ChaCha8Rng,
    targets: Vec<Vec<usize>>,
    order: Vec<usize>,
    best: Option<(f64, Vec<u8>)>,
    pub log: TrainLog,
}

impl Trainer {
    pub fn new(model: &mut CaptionModel, train_set: &[Example], cfg: &TrainConfig) -> Result<Self> {
        if train_set.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        apply_freeze(&mut model.store, cfg.freeze);
        Ok(Trainer {
            cfg: *cfg,
            adam: Adam::new(cfg.adam, &model.store),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            targets: train_set.iter().map(|ex| model.vocab.encode(&ex.caption)).collect(),
            order: (0..train_set.len()).collect(),
            best: None,
            log: TrainLog::default(),
        })
    }

    /// One pass over `train_set` in a fresh seeded permutation, then the
    /// validation loss when `val` is non-empty.
    pub fn epoch(&mut self, model: &mut CaptionModel, train_set: &[Example], val: &[Example]) -> Result<EpochLog> {
        if train_set.len() != self.targets.len() {
            return Err(Error::InvalidArgument("training set changed between epochs".into()));
        }
        let epoch = self.log.epochs.len() + 1;
        self.order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for batch in self.order.chunks(self.cfg.batch_size) {
            model.store.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &train_set[i];
                let mut g = Graph::new();
                let step = (|| {
                    let loss = model.example_loss(&mut g, &ex.image, ex.trajectory.as_ref(), &self.targets[i])?;
                    let value = g.value(loss).item();
                    let scaled = g.scale(loss, scale)?;
                    g.backward(scaled)?;
                    Ok(value)
                })();
                let value = step.map_err(|e| diverged(e, epoch, &ex.id))?;
                total += value;
                g.accumulate_param_grads(&mut model.store);
            }
            self.adam.step(&mut model.store);
        }
        let train_loss = total / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged(format!("mean loss {train_loss} at epoch {epoch}")));
        }
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(model, val).map_err(|e| diverged(e, epoch, "validation"))?)
        };
        match val_loss {
            Some(v) if self.best.as_ref().is_none_or(|(b, _)| v < *b) => {
                self.best = Some((v, write_checkpoint(&model.store)));
                self.log.best_epoch = epoch;
            }
            Some(_) => {}
            None => self.log.best_epoch = epoch,
        }
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
        };
        self.log.epochs.push(entry);
        Ok(entry)
    }

    /// Restores the best validation snapshot, if any, and returns the log.
    pub fn finish(self, model: &mut CaptionModel) -> Result<TrainLog> {
        if let Some((_, bytes)) = &self.best {
            model.load_params(bytes)?;
        }
        Ok(self.log)
    }
}

/// Adam over seeded per-epoch shuffles. When `val` is non-empty the
/// parameters from the epoch with the lowest validation loss are restored
/// at the end.
pub fn train(model: &mut CaptionModel, train_set: &[Example], val: &[Example], cfg: &TrainConfig) -> Result<TrainLog> {
    train_with(model, train_set, val, cfg, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with<F: FnMut(&EpochLog)>(
    model: &mut CaptionModel,
    train_set: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainLog> {
    let mut trainer = Trainer::new(model, train_set, cfg)?;
    for _ in 0..cfg.epochs {
        let entry = trainer.epoch(model, train_set, val)?;
        on_epoch(&entry);
    }
    trainer.finish(model)
}

/// Anything that maps an example to a caption.
pub trait Captioner {
    fn caption(&self, example: &Example) -> Result<String>;
}

impl Captioner for CaptionModel {
    fn caption(&self, example: &Example) -> Result<String> {
        self.decode_example(&example.image, example.trajectory.as_ref())
    }
}

/// Returns the reference caption; used to exercise the scoring path.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoOracle;

impl Captioner for EchoOracle {
    fn caption(&self, example: &Example) -> Result<String> {
        Ok(example.caption.clone())
    }
}

/// Greedy-decodes every example and scores the predictions.
pub fn evaluate<C: Captioner + ?Sized>(captioner: &C, examples: &[Example]) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let items = examples
        .iter()
        .map(|ex| Ok((ex.id.clone(), captioner.caption(ex)?, ex.caption.clone())))
        .collect::<Result<Vec<_>>>()?;
    score_predictions(&items)
}

/// Pads `ids` with PAD up to `len`.
pub fn pad_to(ids: &[usize], len: usize) -> Vec<usize> {
    let mut out = ids.to_vec();
    out.resize(len.max(ids.len()), PAD);
    out
}

/// Fixed-id sequence used by tests that need a target without a vocabulary
/// round trip.
pub fn target_from_ids(body: &[usize]) -> Vec<usize> {
    std::iter::once(BOS).chain(body.iter().copied()).chain(std::iter::once(EOS)).collect()
}

/// Copies every parameter value, for before/after comparisons.
pub fn snapshot(store: &ParamStore) -> Vec<Tensor> {
    store.iter().map(|p| p.value.clone()).collect()
}
