//! Per-token attention over retrieved triples and the scalar knowledge gate.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::knowledge::KnowledgeRows;
use crate::numerics::{xavier, Graph, ParamId, ParamStore, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    /// `d_model × d_a`
    pub wh: ParamId,
    /// `d_k × d_a`
    pub wr: ParamId,
    /// `d_k × d_a`
    pub wt: ParamId,
    /// `2·d_k × d_model`, maps the attended `[r; t]` into token space.
    pub v_proj: ParamId,
    /// `2·d_model × 1`
    pub w_g: ParamId,
    /// `1 × 1`
    pub b_g: ParamId,
}

impl FusionParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        d_model: usize,
        d_k: usize,
        d_a: usize,
    ) -> Result<Self> {
        Ok(Self {
            wh: store.add("kg.W^H", xavier(rng, d_model, d_a))?,
            wr: store.add("kg.W^R", xavier(rng, d_k, d_a))?,
            wt: store.add("kg.W^T", xavier(rng, d_k, d_a))?,
            v_proj: store.add("kg.V_proj", xavier(rng, 2 * d_k, d_model))?,
            w_g: store.add("kg.w_g", xavier(rng, 2 * d_model, 1))?,
            b_g: store.add("kg.b_g", Array2::zeros((1, 1)))?,
        })
    }
}

/// Graph nodes of one token's attention.
#[derive(Debug, Clone, Copy)]
pub struct Attended {
    /// `1 × m` weights over the triple rows.
    pub alpha: Var,
    /// `1 × d_model` knowledge vector.
    pub v: Var,
}

/// `β_j = (h W^H) · tanh(r_j W^R + t_j W^T)`, `α = softmax(β)`,
/// `v = (Σ_j α_j [r_j; t_j]) V_proj`. `h` is `1 × d_model`; `r`, `t` are `m × d_k`.
pub fn knowledge_attention(
    g: &mut Graph,
    store: &ParamStore,
    p: &FusionParams,
    h: Var,
    r: Var,
    t: Var,
) -> Result<Attended> {
    if g.shape(h).0 != 1 || g.shape(r) != g.shape(t) {
        return Err(Error::shape(
            "knowledge_attention",
            format!("h {:?}, R {:?}, T {:?}", g.shape(h), g.shape(r), g.shape(t)),
        ));
    }
    let (wh, wr, wt, vp) = (
        g.param(store, p.wh),
        g.param(store, p.wr),
        g.param(store, p.wt),
        g.param(store, p.v_proj),
    );
    let q = g.matmul(h, wh)?;
    let rk = g.matmul(r, wr)?;
    let tk = g.matmul(t, wt)?;
    let k = g.add(rk, tk)?;
    let k = g.tanh(k);
    let kt = g.transpose(k);
    let beta = g.matmul(q, kt)?;
    let alpha = g.softmax(beta);
    let rt = g.concat_cols(&[r, t])?;
    let raw = g.matmul(alpha, rt)?;
    let v = g.matmul(raw, vp)?;
    Ok(Attended { alpha, v })
}

/// `g = σ([h; v] w_g + b_g)` per row and `h' = g·h + (1 − g)·v`. Rows of `h`
/// and `v` are tokens; returns `(h', g)` with `g` as an `n × 1` column.
pub fn gate_fuse(g: &mut Graph, store: &ParamStore, p: &FusionParams, h: Var, v: Var) -> Result<(Var, Var)> {
    if g.shape(h) != g.shape(v) {
        return Err(Error::shape(
            "gate_fuse",
            format!("h {:?} vs v {:?}", g.shape(h), g.shape(v)),
        ));
    }
    let (wg, bg) = (g.param(store, p.w_g), g.param(store, p.b_g));
    let hv = g.concat_cols(&[h, v])?;
    let z = g.linear(hv, wg, bg)?;
    let gate = g.sigmoid(z);
    let keep = g.mul_col(h, gate)?;
    let rest = g.affine(gate, -1.0, 1.0);
    let mixed = g.mul_col(v, rest)?;
    Ok((g.add(keep, mixed)?, gate))
}

/// Knowledge-enriched token matrix plus the per-token attention weights
/// (empty for tokens without triples, whose weights are uniform) and gates.
#[derive(Debug, Clone)]
pub struct Fused {
    pub h_k: Var,
    pub alphas: Vec<Option<Var>>,
    pub gates: Var,
}

/// Applies attention and gating to every row of `tokens` (`T × d_model`).
/// Tokens whose rows are all padding skip the attention graph: with zero
/// `R` and `T` every `β` is zero, so `α` is uniform and `v` is exactly zero,
/// and none of the attention weights receive gradient.
pub fn fuse_utterance(
    g: &mut Graph,
    store: &ParamStore,
    p: &FusionParams,
    tokens: Var,
    knowledge: &[KnowledgeRows],
) -> Result<Fused> {
    let (n, d) = g.shape(tokens);
    if knowledge.len() != n {
        return Err(Error::shape(
            "fuse_utterance",
            format!("{n} tokens but {} knowledge entries", knowledge.len()),
        ));
    }
    let mut rows = Vec::with_capacity(n);
    let mut alphas = Vec::with_capacity(n);
    let mut zero = None;
    for (i, k) in knowledge.iter().enumerate() {
        if k.is_empty() {
            let z = *zero.get_or_insert_with(|| g.constant(Array2::zeros((1, d))));
            rows.push(z);
            alphas.push(None);
            continue;
        }
        let h = g.slice_rows(tokens, i, 1)?;
        let r = g.constant(k.relations.clone());
        let t = g.constant(k.tails.clone());
        let a = knowledge_attention(g, store, p, h, r, t)?;
        rows.push(a.v);
        alphas.push(Some(a.alpha));
    }
    let v = g.concat_rows(&rows)?;
    let (h_k, gates) = gate_fuse(g, store, p, tokens, v)?;
    Ok(Fused { h_k, alphas, gates })
}
