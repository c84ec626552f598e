//! Patch image encoder and the image/trajectory fusion variants.
//!
//! | fusion    | encoders | tokens                          |
//! |-----------|----------|---------------------------------|
//! | baseline  | 1        | n (camera only)                 |
//! | concat    | 2        | n_img + n_traj                  |
//! | overlay   | 1        | n (trajectory painted on image) |
//! | xattn     | 2        | n of the query side             |
//!
//! with `n = (H/p)² + 1` including the CLS token.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{CrossAttentionBlock, LayerNorm, Linear, SelfAttentionBlock};
use crate::raster::{overlay, RgbImage};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// Per-channel pixel standardization applied after scaling to `[0, 1]`.
pub const PIXEL_MEAN: f64 = 0.5;
pub const PIXEL_STD: f64 = 0.5;

/// Depth of the cross-attention fusion stack.
pub const XATTN_BLOCKS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            image_size: 64,
            patch_size: 16,
            dim: 64,
            layers: 2,
            heads: 4,
        }
    }
}

impl EncoderConfig {
    /// Token/width layout of the full-size vision encoder (224 px input,
    /// 14 px patches, 1408-wide features). Used for shape arithmetic only.
    pub fn full_scale() -> Self {
        EncoderConfig {
            image_size: 224,
            patch_size: 14,
            dim: 1408,
            layers: 39,
            heads: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "patch size {} does not divide image size {}",
                self.patch_size, self.image_size
            )));
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn patches(&self) -> usize {
        let per_side = self.image_size / self.patch_size;
        per_side * per_side
    }

    /// Output token count, CLS included.
    pub fn tokens(&self) -> usize {
        self.patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuerySource {
    Image,
    Trajectory,
}

impl FromStr for QuerySource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "image" => Ok(QuerySource::Image),
            "trajectory" => Ok(QuerySource::Trajectory),
            other => Err(Error::Config(format!(
                "unknown query source `{other}` (expected image or trajectory)"
            ))),
        }
    }
}

impl fmt::Display for QuerySource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuerySource::Image => "image",
            QuerySource::Trajectory => "trajectory",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    Baseline,
    Concat,
    Overlay,
    Xattn,
}

impl FromStr for FusionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(FusionKind::Baseline),
            "concat" => Ok(FusionKind::Concat),
            "overlay" => Ok(FusionKind::Overlay),
            "xattn" => Ok(FusionKind::Xattn),
            other => Err(Error::Config(format!(
                "unknown fusion `{other}` (expected baseline, concat, overlay or xattn)"
            ))),
        }
    }
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionKind::Baseline => "baseline",
            FusionKind::Concat => "concat",
            FusionKind::Overlay => "overlay",
            FusionKind::Xattn => "xattn",
        })
    }
}

/// Fusion variant plus the query side for cross-attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    Baseline,
    Concatenated,
    Overlaid,
    CrossAttention(QuerySource),
}

impl Fusion {
    pub fn from_parts(kind: FusionKind, query: Option<QuerySource>) -> Result<Self> {
        match (kind, query) {
            (FusionKind::Baseline, None) => Ok(Fusion::Baseline),
            (FusionKind::Concat, None) => Ok(Fusion::Concatenated),
            (FusionKind::Overlay, None) => Ok(Fusion::Overlaid),
            (FusionKind::Xattn, q) => Ok(Fusion::CrossAttention(q.unwrap_or(QuerySource::Image))),
            (k, Some(_)) => Err(Error::Config(format!("xattn_query is only valid with fusion=xattn, not {k}"))),
        }
    }

    pub fn kind(&self) -> FusionKind {
        match self {
            Fusion::Baseline => FusionKind::Baseline,
            Fusion::Concatenated => FusionKind::Concat,
            Fusion::Overlaid => FusionKind::Overlay,
            Fusion::CrossAttention(_) => FusionKind::Xattn,
        }
    }

    pub fn query_source(&self) -> Option<QuerySource> {
        match self {
            Fusion::CrossAttention(q) => Some(*q),
            _ => None,
        }
    }

    pub fn uses_plan(&self) -> bool {
        !matches!(self, Fusion::Baseline)
    }

    pub fn encoder_count(&self) -> usize {
        match self {
            Fusion::Concatenated | Fusion::CrossAttention(_) => 2,
            _ => 1,
        }
    }

    /// `(tokens, dim)` of the fused features for equal-size encoders.
    pub fn output_shape(&self, cfg: &EncoderConfig) -> (usize, usize) {
        match self {
            Fusion::Concatenated => (2 * cfg.tokens(), cfg.dim),
            _ => (cfg.tokens(), cfg.dim),
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fusion::CrossAttention(q) => write!(f, "xattn(query={q})"),
            other => write!(f, "{}", other.kind()),
        }
    }
}

/// Tokens produced by a fusion stage, tagged with how they were made.
#[derive(Debug, Clone, Copy)]
pub struct FusedFeatures {
    pub tokens: Var,
    pub fusion: Fusion,
    pub n_tokens: usize,
}

/// ViT-style encoder: patches → linear embed → CLS + positions → blocks → LN.
#[derive(Debug, Clone)]
pub struct ImageEncoder {
    pub config: EncoderConfig,
    pub patch_embed: Linear,
    pub cls: ParamId,
    pub pos: ParamId,
    pub blocks: Vec<SelfAttentionBlock>,
    pub ln_f: LayerNorm,
}

/// Flattens an image into `(H/p)²` rows of standardized patch pixels, in
/// row-major patch order with `(row, col, channel)` order inside a patch.
pub fn image_to_patches(img: &RgbImage, cfg: &EncoderConfig) -> Result<Tensor> {
    if img.width() != cfg.image_size || img.height() != cfg.image_size {
        return Err(Error::ImageSizeMismatch {
            left_w: img.width(),
            left_h: img.height(),
            right_w: cfg.image_size,
            right_h: cfg.image_size,
        });
    }
    let p = cfg.patch_size;
    let per_side = cfg.image_size / p;
    let bytes = img.as_bytes();
    let mut data = Vec::with_capacity(cfg.patches() * cfg.patch_dim());
    for py in 0..per_side {
        for px in 0..per_side {
            for y in py * p..(py + 1) * p {
                let row = y * cfg.image_size;
                for x in px * p..(px + 1) * p {
                    let i = (row + x) * 3;
                    for c in 0..3 {
                        data.push((bytes[i + c] as f64 / 255.0 - PIXEL_MEAN) / PIXEL_STD);
                    }
                }
            }
        }
    }
    Tensor::new(&[cfg.patches(), cfg.patch_dim()], data)
}

impl ImageEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        let patch_embed = Linear::new(store, &format!("{name}.patch"), config.patch_dim(), d, rng);
        let cls = store.add_init(format!("{name}.cls"), &[1, d], rng);
        let pos = store.add_init(format!("{name}.pos"), &[config.tokens(), d], rng);
        let blocks = (0..config.layers)
            .map(|i| SelfAttentionBlock::new(store, &format!("{name}.block{i}"), d, config.heads, rng))
            .collect::<Result<Vec<_>>>()?;
        let ln_f = LayerNorm::new(store, &format!("{name}.ln_f"), d);
        Ok(ImageEncoder {
            config,
            patch_embed,
            cls,
            pos,
            blocks,
            ln_f,
        })
    }

    /// Encodes an image into `tokens() × dim` features.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, img: &RgbImage) -> Result<Var> {
        let patches = g.constant(image_to_patches(img, &self.config)?);
        let x = self.patch_embed.forward(g, store, patches)?;
        let cls = g.param(store, self.cls);
        let x = g.concat_rows(&[cls, x])?;
        let pos = g.param(store, self.pos);
        let mut x = g.add(x, pos)?;
        for block in &self.blocks {
            x = block.forward(g, store, x, false)?;
        }
        let out = self.ln_f.forward(g, store, x)?;
        debug_assert_eq!(g.value(out).dims2(), Some((self.config.tokens(), self.config.dim)));
        Ok(out)
    }
}

fn check_dims(g: &Graph, a: Var, b: Var, op: &'static str) -> Result<()> {
    let (da, db) = (g.value(a).cols(), g.value(b).cols());
    if da != db {
        return Err(Error::shape(op, format!("feature dims {da} and {db}")));
    }
    Ok(())
}

/// Row-wise concatenation, image tokens first.
pub fn fuse_concatenated(g: &mut Graph, f_img: Var, f_traj: Var) -> Result<FusedFeatures> {
    check_dims(g, f_img, f_traj, "fuse_concatenated")?;
    let tokens = g.concat_rows(&[f_img, f_traj])?;
    let n_tokens = g.value(tokens).rows();
    assert_eq!(n_tokens, g.value(f_img).rows() + g.value(f_traj).rows());
    Ok(FusedFeatures {
        tokens,
        fusion: Fusion::Concatenated,
        n_tokens,
    })
}

/// Paints the trajectory over the camera image and encodes the result.
pub fn fuse_overlaid(
    g: &mut Graph,
    store: &ParamStore,
    encoder: &ImageEncoder,
    camera_img: &RgbImage,
    traj_img: &RgbImage,
) -> Result<FusedFeatures> {
    let merged = overlay(camera_img, traj_img)?;
    let tokens = encoder.encode(g, store, &merged)?;
    let n_tokens = g.value(tokens).rows();
    assert_eq!(n_tokens, encoder.config.tokens());
    Ok(FusedFeatures {
        tokens,
        fusion: Fusion::Overlaid,
        n_tokens,
    })
}

/// Stack of cross-attention blocks fusing the two feature sequences.
#[derive(Debug, Clone)]
pub struct CrossAttentionFusion {
    pub blocks: Vec<CrossAttentionBlock>,
}

impl CrossAttentionFusion {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        let blocks = (0..XATTN_BLOCKS)
            .map(|i| CrossAttentionBlock::new(store, &format!("{name}.block{i}"), dim, heads, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(CrossAttentionFusion { blocks })
    }

    /// `query_source` picks which features act as queries; the other side
    /// supplies keys and values.
    pub fn fuse(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        f_img: Var,
        f_traj: Var,
        query_source: QuerySource,
    ) -> Result<FusedFeatures> {
        check_dims(g, f_img, f_traj, "fuse_cross_attention")?;
        let (mut x, ctx) = match query_source {
            QuerySource::Image => (f_img, f_traj),
            QuerySource::Trajectory => (f_traj, f_img),
        };
        let n_q = g.value(x).rows();
        for block in &self.blocks {
            x = block.forward(g, store, x, ctx)?;
        }
        let n_tokens = g.value(x).rows();
        assert_eq!(n_tokens, n_q);
        Ok(FusedFeatures {
            tokens: x,
            fusion: Fusion::CrossAttention(query_source),
            n_tokens,
        })
    }
}

/// Camera encoder, optional trajectory encoder and optional fusion stack,
/// wired for one [`Fusion`] variant.
#[derive(Debug, Clone)]
pub struct FusionEncoder {
    pub fusion: Fusion,
    pub camera: ImageEncoder,
    pub trajectory: Option<ImageEncoder>,
    pub xattn: Option<CrossAttentionFusion>,
}

impl FusionEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, fusion: Fusion, config: EncoderConfig, rng: &mut R) -> Result<Self> {
        let camera = ImageEncoder::new(store, "enc_cam", config, rng)?;
        let trajectory = match fusion {
            Fusion::Concatenated | Fusion::CrossAttention(_) => {
                Some(ImageEncoder::new(store, "enc_traj", config, rng)?)
            }
            _ => None,
        };
        let xattn = match fusion {
            Fusion::CrossAttention(_) => Some(CrossAttentionFusion::new(store, "fusion", config.dim, config.heads, rng)?),
            _ => None,
        };
        Ok(FusionEncoder {
            fusion,
            camera,
            trajectory,
            xattn,
        })
    }

    /// `traj_img` is ignored by the baseline and required otherwise.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        camera_img: &RgbImage,
        traj_img: Option<&RgbImage>,
    ) -> Result<FusedFeatures> {
        let need_traj = || traj_img.ok_or_else(|| Error::MissingPlan(self.fusion.kind().to_string()));
        match self.fusion {
            Fusion::Baseline => {
                let tokens = self.camera.encode(g, store, camera_img)?;
                let n_tokens = g.value(tokens).rows();
                Ok(FusedFeatures {
                    tokens,
                    fusion: Fusion::Baseline,
                    n_tokens,
                })
            }
            Fusion::Overlaid => fuse_overlaid(g, store, &self.camera, camera_img, need_traj()?),
            Fusion::Concatenated => {
                let traj = need_traj()?;
                let f_img = self.camera.encode(g, store, camera_img)?;
                let f_traj = self.trajectory.as_ref().expect("two encoders").encode(g, store, traj)?;
                fuse_concatenated(g, f_img, f_traj)
            }
            Fusion::CrossAttention(q) => {
                let traj = need_traj()?;
                let f_img = self.camera.encode(g, store, camera_img)?;
                let f_traj = self.trajectory.as_ref().expect("two encoders").encode(g, store, traj)?;
                self.xattn.as_ref().expect("fusion stack").fuse(g, store, f_img, f_traj, q)
            }
        }
    }
}
