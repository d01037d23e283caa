//! LSTM decoders, output heads, the joint loss and prediction.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::Rng;

use crate::corpus::{repair_bio, Labels};
use crate::error::{Error, Result};
use crate::numerics::{xavier, Graph, Matrix, ParamId, ParamStore, Var};

/// Weights of one LSTM direction. Gate blocks are ordered input, forget,
/// candidate, output along the `4·hidden` axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        input: usize,
        hidden: usize,
    ) -> Result<Self> {
        let mut b = Array2::zeros((1, 4 * hidden));
        b.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        Ok(Self {
            w_ih: store.add(format!("{prefix}.W_ih"), xavier(rng, input, 4 * hidden))?,
            w_hh: store.add(format!("{prefix}.W_hh"), xavier(rng, hidden, 4 * hidden))?,
            b: store.add(format!("{prefix}.b"), b)?,
            hidden,
        })
    }
}

/// One step given the precomputed input projection `x W_ih + b` (`1 × 4h`).
/// Returns the new `(hidden, cell)`.
pub fn lstm_step(g: &mut Graph, x_proj: Var, h: Var, c: Var, w_hh: Var, hidden: usize) -> Result<(Var, Var)> {
    let rec = g.matmul(h, w_hh)?;
    let z = g.add(x_proj, rec)?;
    let zi = g.slice_cols(z, 0, hidden)?;
    let zf = g.slice_cols(z, hidden, hidden)?;
    let zg = g.slice_cols(z, 2 * hidden, hidden)?;
    let zo = g.slice_cols(z, 3 * hidden, hidden)?;
    let (i, f, cand, o) = (g.sigmoid(zi), g.sigmoid(zf), g.tanh(zg), g.sigmoid(zo));
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Runs one direction over the rows of `x` (`T × input`) from hidden state
/// `h0` and a zero cell. Output rows stay aligned with input rows.
pub fn lstm_run(g: &mut Graph, store: &ParamStore, p: &LstmParams, x: Var, h0: Var, reverse: bool) -> Result<Var> {
    let steps = g.shape(x).0;
    let (w_ih, w_hh, b) = (g.param(store, p.w_ih), g.param(store, p.w_hh), g.param(store, p.b));
    let proj = g.linear(x, w_ih, b)?;
    let mut h = h0;
    let mut c = g.constant(Array2::zeros((1, p.hidden)));
    let mut outs = vec![h0; steps];
    let order: Vec<usize> = if reverse {
        (0..steps).rev().collect()
    } else {
        (0..steps).collect()
    };
    for t in order {
        let xp = g.slice_rows(proj, t, 1)?;
        (h, c) = lstm_step(g, xp, h, c, w_hh, p.hidden)?;
        outs[t] = h;
    }
    g.concat_rows(&outs)
}

/// Bidirectional slot decoder whose initial hidden states come from the
/// turn context: `h0_dir = tanh(c_n W_c^dir)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecoder {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub wc_fwd: ParamId,
    pub wc_bwd: ParamId,
    pub w_slot: ParamId,
    pub b_slot: ParamId,
}

impl SlotDecoder {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        d_model: usize,
        hidden: usize,
        tags: usize,
    ) -> Result<Self> {
        Ok(Self {
            fwd: LstmParams::register(store, rng, "slot.fwd", d_model, hidden)?,
            bwd: LstmParams::register(store, rng, "slot.bwd", d_model, hidden)?,
            wc_fwd: store.add("slot.W_c^fwd", xavier(rng, d_model, hidden))?,
            wc_bwd: store.add("slot.W_c^bwd", xavier(rng, d_model, hidden))?,
            w_slot: store.add("W_slot", xavier(rng, 2 * hidden, tags))?,
            b_slot: store.add("b_slot", Array2::zeros((1, tags)))?,
        })
    }

    /// `h_k`: `T × d_model`; `c_n`: `1 × d_model`. Returns `T × |tags|` logits.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h_k: Var, c_n: Var) -> Result<Var> {
        let wf = g.param(store, self.wc_fwd);
        let wb = g.param(store, self.wc_bwd);
        let hf = g.matmul(c_n, wf)?;
        let hf = g.tanh(hf);
        let hb = g.matmul(c_n, wb)?;
        let hb = g.tanh(hb);
        let of = lstm_run(g, store, &self.fwd, h_k, hf, false)?;
        let ob = lstm_run(g, store, &self.bwd, h_k, hb, true)?;
        let both = g.concat_cols(&[of, ob])?;
        let (w, b) = (g.param(store, self.w_slot), g.param(store, self.b_slot));
        g.linear(both, w, b)
    }
}

/// Unidirectional act decoder over the turn axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ActDecoder {
    pub lstm: LstmParams,
    pub w_act: ParamId,
    pub b_act: ParamId,
}

impl ActDecoder {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        d_model: usize,
        hidden: usize,
        acts: usize,
    ) -> Result<Self> {
        Ok(Self {
            lstm: LstmParams::register(store, rng, "act", d_model, hidden)?,
            w_act: store.add("W_act", xavier(rng, hidden, acts))?,
            b_act: store.add("b_act", Array2::zeros((1, acts)))?,
        })
    }

    /// `context`: `N × d_model`. Returns `N × |acts|` logits.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, context: Var) -> Result<Var> {
        let h0 = g.constant(Array2::zeros((1, self.lstm.hidden)));
        let out = lstm_run(g, store, &self.lstm, context, h0, false)?;
        let (w, b) = (g.param(store, self.w_act), g.param(store, self.b_act));
        g.linear(out, w, b)
    }
}

/// Gold labels of one turn as dense ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnTargets {
    /// Multi-hot over the act inventory.
    pub acts: Vec<f64>,
    pub tags: Vec<usize>,
}

impl TurnTargets {
    pub fn from_labels<S: AsRef<str>>(labels: &Labels, acts: &BTreeSet<String>, tags: &[S]) -> Result<Self> {
        let mut hot = vec![0.0; labels.acts.len()];
        for a in acts {
            let id = labels
                .acts
                .get(a)
                .ok_or_else(|| Error::invalid(format!("act {a:?} outside the inventory")))?;
            hot[id] = 1.0;
        }
        let tags = tags
            .iter()
            .map(|t| {
                labels
                    .tags
                    .get(t.as_ref())
                    .ok_or_else(|| Error::invalid(format!("tag {:?} outside the inventory", t.as_ref())))
            })
            .collect::<Result<_>>()?;
        Ok(Self { acts: hot, tags })
    }
}

/// `Σ_turns [mean-over-acts BCE + mean-over-tokens CE]`.
pub fn joint_loss(g: &mut Graph, act_logits: Var, slot_logits: &[Var], gold: &[TurnTargets]) -> Result<Var> {
    let (n, a) = g.shape(act_logits);
    if n != gold.len() || slot_logits.len() != gold.len() {
        return Err(Error::shape(
            "joint_loss",
            format!(
                "{n} act rows, {} slot blocks, {} gold turns",
                slot_logits.len(),
                gold.len()
            ),
        ));
    }
    let mut targets = Matrix::zeros((n, a));
    for (i, t) in gold.iter().enumerate() {
        if t.acts.len() != a {
            return Err(Error::shape(
                "joint_loss",
                format!("turn {i} has {} act targets, expected {a}", t.acts.len()),
            ));
        }
        for (j, &y) in t.acts.iter().enumerate() {
            targets[[i, j]] = y;
        }
    }
    let mut loss = g.bce_with_logits(act_logits, targets)?;
    for (logits, t) in slot_logits.iter().zip(gold) {
        let ce = g.softmax_cross_entropy(*logits, &t.tags)?;
        loss = g.add(loss, ce)?;
    }
    Ok(loss)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// A decoded turn.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnPrediction {
    pub acts: BTreeSet<String>,
    /// `σ(logit)` per act, in inventory order.
    pub act_probs: Vec<f64>,
    pub tags: Vec<String>,
}

/// Acts with `σ(logit) > threshold` (the single best act if none pass) and
/// per-token argmax tags after BIO repair.
pub fn predict(labels: &Labels, act_logits: &[f64], slot_logits: &Matrix, threshold: f64) -> Result<TurnPrediction> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold must be in (0, 1), got {threshold}")));
    }
    if act_logits.len() != labels.acts.len() || slot_logits.ncols() != labels.tags.len() {
        return Err(Error::shape(
            "predict",
            format!("{} act logits, {} tag columns", act_logits.len(), slot_logits.ncols()),
        ));
    }
    let act_probs: Vec<f64> = act_logits.iter().map(|&z| sigmoid(z)).collect();
    let mut acts: BTreeSet<String> = act_probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > threshold)
        .map(|(i, _)| labels.acts.label(i).to_string())
        .collect();
    if acts.is_empty() {
        let best = argmax(act_logits.iter().copied());
        acts.insert(labels.acts.label(best).to_string());
    }
    let raw: Vec<String> = slot_logits
        .rows()
        .into_iter()
        .map(|r| labels.tags.label(argmax(r.iter().copied())).to_string())
        .collect();
    Ok(TurnPrediction {
        acts,
        act_probs,
        tags: repair_bio(&raw),
    })
}

/// First index of the maximum.
fn argmax(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}
