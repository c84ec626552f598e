//! Transformer building blocks on top of the autodiff graph.
//!
//! All blocks use the pre-LayerNorm layout: `x + Attn(LN(x))` then
//! `x + MLP(LN(x))`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Var};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Linear {
            weight: store.add_init(format!("{name}.w"), &[d_in, d_out], rng),
            bias: store.add_zeros(format!("{name}.b"), &[d_out]),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gain: store.add_ones(format!("{name}.g"), &[dim]),
            bias: store.add_zeros(format!("{name}.b"), &[dim]),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias, LN_EPS)
    }
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("dim {dim} is not divisible by {heads} heads")));
        }
        Ok(MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, rng),
            k: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            v: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            out: Linear::new(store, &format!("{name}.o"), dim, dim, rng),
            heads,
        })
    }

    /// Queries come from `x_q`, keys and values from `x_kv`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x_q: Var, x_kv: Var, causal: bool) -> Result<Var> {
        let q = self.q.forward(g, store, x_q)?;
        let k = self.k.forward(g, store, x_kv)?;
        let v = self.v.forward(g, store, x_kv)?;
        let dim = g.value(q).cols();
        let dh = dim / self.heads;
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            outs.push(g.attention(qh, kh, vh, causal)?);
        }
        let merged = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs)? };
        self.out.forward(g, store, merged)
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut R) -> Self {
        Mlp {
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, hidden, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, store, x)?;
        let h = g.gelu(h)?;
        self.fc2.forward(g, store, h)
    }
}

/// Self-attention + MLP.
#[derive(Debug, Clone)]
pub struct SelfAttentionBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

impl SelfAttentionBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        Ok(SelfAttentionBlock {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            mlp: Mlp::new(store, &format!("{name}.mlp"), dim, 4 * dim, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, causal: bool) -> Result<Var> {
        let h = self.ln1.forward(g, store, x)?;
        let a = self.attn.forward(g, store, h, h, causal)?;
        let x = g.add(x, a)?;
        let h = self.ln2.forward(g, store, x)?;
        let m = self.mlp.forward(g, store, h)?;
        g.add(x, m)
    }
}

/// Cross-attention from `x` into a context sequence, then MLP. The output
/// keeps `x`'s token count.
#[derive(Debug, Clone)]
pub struct CrossAttentionBlock {
    pub ln_q: LayerNorm,
    pub ln_kv: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

impl CrossAttentionBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        Ok(CrossAttentionBlock {
            ln_q: LayerNorm::new(store, &format!("{name}.ln_q"), dim),
            ln_kv: LayerNorm::new(store, &format!("{name}.ln_kv"), dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            mlp: Mlp::new(store, &format!("{name}.mlp"), dim, 4 * dim, rng),
        })
    }

    /// Output of the attention sublayer alone (before the residual), for
    /// inspection.
    pub fn attend(&self, g: &mut Graph, store: &ParamStore, x: Var, ctx: Var) -> Result<Var> {
        let q = self.ln_q.forward(g, store, x)?;
        let kv = self.ln_kv.forward(g, store, ctx)?;
        self.attn.forward(g, store, q, kv, false)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, ctx: Var) -> Result<Var> {
        let a = self.attend(g, store, x, ctx)?;
        let x = g.add(x, a)?;
        let h = self.ln2.forward(g, store, x)?;
        let m = self.mlp.forward(g, store, h)?;
        g.add(x, m)
    }
}

/// Causal self-attention, cross-attention into a memory, then MLP.
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    pub self_block: SelfAttentionBlock,
    pub ln_x: LayerNorm,
    pub ln_mem: LayerNorm,
    pub cross: MultiHeadAttention,
}

impl DecoderBlock {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        Ok(DecoderBlock {
            self_block: SelfAttentionBlock::new(store, &format!("{name}.self"), dim, heads, rng)?,
            ln_x: LayerNorm::new(store, &format!("{name}.ln_x"), dim),
            ln_mem: LayerNorm::new(store, &format!("{name}.ln_mem"), dim),
            cross: MultiHeadAttention::new(store, &format!("{name}.cross"), dim, heads, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, memory: Var) -> Result<Var> {
        let sb = &self.self_block;
        let h = sb.ln1.forward(g, store, x)?;
        let a = sb.attn.forward(g, store, h, h, true)?;
        let x = g.add(x, a)?;
        let h = self.ln_x.forward(g, store, x)?;
        let mem = self.ln_mem.forward(g, store, memory)?;
        let c = self.cross.forward(g, store, h, mem, false)?;
        let x = g.add(x, c)?;
        let h = sb.ln2.forward(g, store, x)?;
        let m = sb.mlp.forward(g, store, h)?;
        g.add(x, m)
    }
}
