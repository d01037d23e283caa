//! Token encoder (a small from-scratch stand-in for a pretrained encoder) and
//! the causal turn-level context transformer.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{uniform, xavier, Graph, Matrix, ParamId, ParamStore, Var};

/// Divisor applied to attention logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// `sqrt(attn_dim / heads)`, the per-head key size.
    #[default]
    PerHead,
    /// `sqrt(d_model)`, the encoder hidden size.
    PaperHb,
}

impl ScaleMode {
    pub fn divisor(self, d_model: usize, attn_dim: usize, heads: usize) -> f64 {
        match self {
            ScaleMode::PerHead => ((attn_dim / heads) as f64).sqrt(),
            ScaleMode::PaperHb => (d_model as f64).sqrt(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per_head" => Ok(ScaleMode::PerHead),
            "paper_hb" => Ok(ScaleMode::PaperHb),
            other => Err(Error::invalid(format!(
                "unknown scale_mode {other:?}; expected per_head or paper_hb"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScaleMode::PerHead => "per_head",
            ScaleMode::PaperHb => "paper_hb",
        }
    }
}

/// Multi-head scaled dot-product attention without an output projection:
/// per head `softmax(Q_h K_hᵀ / scale) V_h`, heads concatenated along columns.
/// With `causal`, position `i` attends only to positions `≤ i`.
#[allow(clippy::too_many_arguments)]
pub fn mha(
    g: &mut Graph,
    q_in: Var,
    k_in: Var,
    v_in: Var,
    wq: Var,
    wk: Var,
    wv: Var,
    heads: usize,
    scale: f64,
    causal: bool,
) -> Result<Var> {
    let attn_dim = g.shape(wq).1;
    if heads == 0 || !attn_dim.is_multiple_of(heads) {
        return Err(Error::invalid(format!(
            "attention width {attn_dim} not divisible by {heads} heads"
        )));
    }
    if g.shape(k_in).0 != g.shape(v_in).0 || (causal && g.shape(q_in).0 != g.shape(k_in).0) {
        return Err(Error::shape(
            "mha",
            format!(
                "query {:?} key {:?} value {:?}",
                g.shape(q_in),
                g.shape(k_in),
                g.shape(v_in)
            ),
        ));
    }
    let q = g.matmul(q_in, wq)?;
    let k = g.matmul(k_in, wk)?;
    let v = g.matmul(v_in, wv)?;
    let dh = attn_dim / heads;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * dh, dh)?;
        let kh = g.slice_cols(k, h * dh, dh)?;
        let vh = g.slice_cols(v, h * dh, dh)?;
        let kt = g.transpose(kh);
        let scores = g.matmul(qh, kt)?;
        let scores = g.scale(scores, 1.0 / scale);
        let attn = if causal {
            g.causal_softmax(scores)?
        } else {
            g.softmax(scores)
        };
        outs.push(g.matmul(attn, vh)?);
    }
    g.concat_cols(&outs)
}

/// `max(0, x W1 + b1) W2 + b2`.
pub fn ffn(g: &mut Graph, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
    let hidden = g.relu_affine(x, w1, b1)?;
    g.linear(hidden, w2, b2)
}

/// One post-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

impl Block {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        d_model: usize,
        attn_dim: usize,
        ffn_dim: usize,
    ) -> Result<Self> {
        if attn_dim != d_model {
            // concatenated heads feed the residual directly
            return Err(Error::invalid(format!(
                "attn_dim ({attn_dim}) must equal d_model ({d_model})"
            )));
        }
        let mut add = |name: &str, m: Matrix| store.add(format!("{prefix}.{name}"), m);
        Ok(Self {
            wq: add("W^Q", xavier(rng, d_model, attn_dim))?,
            wk: add("W^K", xavier(rng, d_model, attn_dim))?,
            wv: add("W^V", xavier(rng, d_model, attn_dim))?,
            ln1_gain: add("ln1.gain", Array2::ones((1, d_model)))?,
            ln1_bias: add("ln1.bias", Array2::zeros((1, d_model)))?,
            w1: add("W1", xavier(rng, attn_dim, ffn_dim))?,
            b1: add("b1", Array2::zeros((1, ffn_dim)))?,
            w2: add("W2", xavier(rng, ffn_dim, d_model))?,
            b2: add("b2", Array2::zeros((1, d_model)))?,
            ln2_gain: add("ln2.gain", Array2::ones((1, d_model)))?,
            ln2_bias: add("ln2.bias", Array2::zeros((1, d_model)))?,
        })
    }

    /// `x1 = LN(x + MHA(x, x, x))`, then `LN(x1 + FFN(x1))`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        heads: usize,
        scale: f64,
        causal: bool,
    ) -> Result<Var> {
        let p = |g: &mut Graph, id| g.param(store, id);
        let (wq, wk, wv) = (p(g, self.wq), p(g, self.wk), p(g, self.wv));
        let a = mha(g, x, x, x, wq, wk, wv, heads, scale, causal)?;
        let r = g.add(x, a)?;
        let (gain, bias) = (p(g, self.ln1_gain), p(g, self.ln1_bias));
        let x1 = g.layer_norm(r, gain, bias)?;
        let (w1, b1, w2, b2) = (p(g, self.w1), p(g, self.b1), p(g, self.w2), p(g, self.b2));
        let f = ffn(g, x1, w1, b1, w2, b2)?;
        let r = g.add(x1, f)?;
        let (gain, bias) = (p(g, self.ln2_gain), p(g, self.ln2_bias));
        g.layer_norm(r, gain, bias)
    }
}

/// Shape and attention settings shared by both encoders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttnShape {
    pub d_model: usize,
    pub attn_dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub scale_mode: ScaleMode,
}

impl AttnShape {
    pub fn scale(&self) -> f64 {
        self.scale_mode.divisor(self.d_model, self.attn_dim, self.heads)
    }
}

/// Sinusoidal position table: `sin(p / 10000^(2i/d))` on even columns,
/// `cos` on odd ones.
pub fn positions(len: usize, d: usize) -> Matrix {
    Array2::from_shape_fn((len, d), |(p, c)| {
        let angle = p as f64 / 10000f64.powf((c - c % 2) as f64 / d as f64);
        if c % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Output of [`TokenEncoder::forward`].
#[derive(Debug, Clone, Copy)]
pub struct TokenReps {
    /// `T × d_model` token rows.
    pub tokens: Var,
    /// `1 × d_model` sentinel row.
    pub summary: Var,
}

/// Embeddings plus sinusoidal positions through unmasked transformer blocks.
/// The input is prefixed with the sentinel id, whose output row summarises
/// the utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEncoder {
    pub embed: ParamId,
    pub blocks: Vec<Block>,
    pub shape: AttnShape,
}

impl TokenEncoder {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        vocab_size: usize,
        layers: usize,
        shape: AttnShape,
    ) -> Result<Self> {
        let embed = store.add("tok.embed", uniform(rng, vocab_size, shape.d_model, 1.0))?;
        let blocks = (0..layers)
            .map(|l| {
                Block::register(
                    store,
                    rng,
                    &format!("tok.{l}"),
                    shape.d_model,
                    shape.attn_dim,
                    shape.ffn_dim,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { embed, blocks, shape })
    }

    /// `ids` must already start with the sentinel id.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, ids: &[usize]) -> Result<TokenReps> {
        if ids.len() < 2 {
            return Err(Error::invalid("utterance has no tokens"));
        }
        let table = g.param(store, self.embed);
        let e = g.gather(table, ids)?;
        let pos = g.constant(positions(ids.len(), self.shape.d_model));
        let mut x = g.add(e, pos)?;
        for b in &self.blocks {
            x = b.forward(g, store, x, self.shape.heads, self.shape.scale(), false)?;
        }
        Ok(TokenReps {
            summary: g.slice_rows(x, 0, 1)?,
            tokens: g.slice_rows(x, 1, ids.len() - 1)?,
        })
    }
}

/// Stack of causal blocks over the turn sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEncoder {
    pub blocks: Vec<Block>,
    pub shape: AttnShape,
}

impl ContextEncoder {
    pub fn register<R: Rng>(store: &mut ParamStore, rng: &mut R, layers: usize, shape: AttnShape) -> Result<Self> {
        if layers < 1 {
            return Err(Error::invalid("context encoder needs at least one layer"));
        }
        let blocks = (0..layers)
            .map(|l| {
                Block::register(
                    store,
                    rng,
                    &format!("ctx.{l}"),
                    shape.d_model,
                    shape.attn_dim,
                    shape.ffn_dim,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { blocks, shape })
    }

    /// Maps `N × d_model` utterance vectors to `N × d_model` contexts where
    /// row `n` sees only turns `≤ n`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Var> {
        let mut c = h;
        for b in &self.blocks {
            c = b.forward(g, store, c, self.shape.heads, self.shape.scale(), true)?;
        }
        Ok(c)
    }
}
