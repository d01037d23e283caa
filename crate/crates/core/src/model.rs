//! Full model wiring, the ablation variants, input featurisation and
//! dialogue-level prediction.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dialogue, Labels, Vocab, CLS};
use crate::decoder::{joint_loss, lstm_run, predict, ActDecoder, LstmParams, SlotDecoder, TurnPrediction, TurnTargets};
use crate::encoder::{AttnShape, ContextEncoder, ScaleMode, TokenEncoder};
use crate::error::{Error, Result};
use crate::fusion::{fuse_utterance, FusionParams};
use crate::knowledge::{retrieve, triples_to_vectors, KgEmbeddings, KnowledgeRows, KnowledgeTriple, TripleStore};
use crate::numerics::{xavier, Graph, ParamId, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Full,
    /// Token reps go straight to the decoders.
    NoKg,
    /// A unidirectional LSTM over utterance vectors replaces the context transformer.
    NoCa,
    /// Affine heads replace both LSTM decoders.
    NoLstm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoKg, Variant::NoCa, Variant::NoLstm];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no_kg" => Ok(Variant::NoKg),
            "no_ca" => Ok(Variant::NoCa),
            "no_lstm" => Ok(Variant::NoLstm),
            other => Err(Error::invalid(format!(
                "unknown variant {other:?}; expected full, no_kg, no_ca or no_lstm"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoKg => "no_kg",
            Variant::NoCa => "no_ca",
            Variant::NoLstm => "no_lstm",
        }
    }

    pub fn uses_knowledge(self) -> bool {
        self != Variant::NoKg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub attn_dim: usize,
    pub heads: usize,
    pub token_layers: usize,
    pub context_layers: usize,
    pub ffn_dim: usize,
    pub lstm_hidden: usize,
    pub kg_dim: usize,
    pub d_a: usize,
    pub top_m: usize,
    pub scale_mode: ScaleMode,
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            attn_dim: 64,
            heads: 4,
            token_layers: 2,
            context_layers: 2,
            ffn_dim: 128,
            lstm_hidden: 64,
            kg_dim: 16,
            d_a: 32,
            top_m: 5,
            scale_mode: ScaleMode::PerHead,
            variant: Variant::Full,
        }
    }
}

impl ModelConfig {
    pub const KEYS: [&'static str; 12] = [
        "d_model",
        "attn_dim",
        "heads",
        "token_layers",
        "context_layers",
        "ffn_dim",
        "lstm_hidden",
        "kg_dim",
        "d_a",
        "top_m",
        "scale_mode",
        "variant",
    ];

    /// Sets one `key=value` field; returns `Ok(false)` for keys it does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = || -> Result<usize> {
            value
                .parse()
                .map_err(|_| Error::invalid(format!("{key}: expected a non-negative integer, got {value:?}")))
        };
        match key {
            "d_model" => self.d_model = num()?,
            "attn_dim" => self.attn_dim = num()?,
            // One head count serves both encoders; `context_heads` is an alias.
            "heads" | "context_heads" => self.heads = num()?,
            "token_layers" => self.token_layers = num()?,
            "context_layers" => self.context_layers = num()?,
            "ffn_dim" => self.ffn_dim = num()?,
            "lstm_hidden" => self.lstm_hidden = num()?,
            "kg_dim" => self.kg_dim = num()?,
            "d_a" => self.d_a = num()?,
            "top_m" => self.top_m = num()?,
            "scale_mode" => self.scale_mode = ScaleMode::parse(value)?,
            "variant" => self.variant = Variant::parse(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d_model", self.d_model.to_string()),
            ("attn_dim", self.attn_dim.to_string()),
            ("heads", self.heads.to_string()),
            ("token_layers", self.token_layers.to_string()),
            ("context_layers", self.context_layers.to_string()),
            ("ffn_dim", self.ffn_dim.to_string()),
            ("lstm_hidden", self.lstm_hidden.to_string()),
            ("kg_dim", self.kg_dim.to_string()),
            ("d_a", self.d_a.to_string()),
            ("top_m", self.top_m.to_string()),
            ("scale_mode", self.scale_mode.as_str().to_string()),
            ("variant", self.variant.as_str().to_string()),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("context_layers", self.context_layers),
            ("ffn_dim", self.ffn_dim),
            ("lstm_hidden", self.lstm_hidden),
            ("kg_dim", self.kg_dim),
            ("d_a", self.d_a),
            ("top_m", self.top_m),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{k} must be >= 1")));
            }
        }
        if self.attn_dim != self.d_model {
            return Err(Error::invalid(format!(
                "attn_dim ({}) must equal d_model ({})",
                self.attn_dim, self.d_model
            )));
        }
        if !self.attn_dim.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!(
                "attn_dim {} is not divisible by {} heads",
                self.attn_dim, self.heads
            )));
        }
        Ok(())
    }

    fn attn_shape(&self) -> AttnShape {
        AttnShape {
            d_model: self.d_model,
            attn_dim: self.attn_dim,
            heads: self.heads,
            ffn_dim: self.ffn_dim,
            scale_mode: self.scale_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContextModule {
    Attention(ContextEncoder),
    Lstm(LstmParams),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Heads {
    Lstm {
        slot: SlotDecoder,
        act: ActDecoder,
    },
    Direct {
        w_slot: ParamId,
        b_slot: ParamId,
        w_act: ParamId,
        b_act: ParamId,
    },
}

/// Parameters plus the wiring chosen by the variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub token: TokenEncoder,
    pub context: ContextModule,
    pub fusion: Option<FusionParams>,
    pub heads: Heads,
}

/// One featurised utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTurn {
    /// Sentinel id followed by the token ids.
    pub ids: Vec<usize>,
    /// Retrieved triple vectors per token; empty when the variant ignores the KB.
    pub knowledge: Vec<KnowledgeRows>,
}

/// Graph nodes produced by one forward pass over a dialogue.
#[derive(Debug, Clone)]
pub struct ForwardOut {
    /// `N × |acts|`
    pub act_logits: Var,
    /// One `T_n × |tags|` block per turn.
    pub slot_logits: Vec<Var>,
    /// Per turn: per-token attention weights (`None` for KB-absent tokens) and
    /// the `T_n × 1` gate column. Empty without knowledge fusion.
    pub knowledge: Vec<(Vec<Option<Var>>, Var)>,
}

impl Model {
    pub fn new(config: ModelConfig, vocab_size: usize, acts: usize, tags: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let shape = config.attn_shape();
        let token = TokenEncoder::register(&mut store, &mut rng, vocab_size, config.token_layers, shape)?;
        let context = match config.variant {
            Variant::NoCa => ContextModule::Lstm(LstmParams::register(
                &mut store,
                &mut rng,
                "ctx_lstm",
                config.d_model,
                config.d_model,
            )?),
            _ => ContextModule::Attention(ContextEncoder::register(
                &mut store,
                &mut rng,
                config.context_layers,
                shape,
            )?),
        };
        let fusion = if config.variant.uses_knowledge() {
            Some(FusionParams::register(
                &mut store,
                &mut rng,
                config.d_model,
                config.kg_dim,
                config.d_a,
            )?)
        } else {
            None
        };
        let heads = match config.variant {
            Variant::NoLstm => Heads::Direct {
                w_slot: store.add("W_slot", xavier(&mut rng, config.d_model, tags))?,
                b_slot: store.add("b_slot", ndarray::Array2::zeros((1, tags)))?,
                w_act: store.add("W_act", xavier(&mut rng, config.d_model, acts))?,
                b_act: store.add("b_act", ndarray::Array2::zeros((1, acts)))?,
            },
            _ => Heads::Lstm {
                slot: SlotDecoder::register(&mut store, &mut rng, config.d_model, config.lstm_hidden, tags)?,
                act: ActDecoder::register(&mut store, &mut rng, config.d_model, config.lstm_hidden, acts)?,
            },
        };
        Ok(Self {
            config,
            params: store,
            token,
            context,
            fusion,
            heads,
        })
    }

    /// Rebuilds the wiring and installs `params`, which must carry exactly
    /// the names and shapes this configuration registers, in order.
    pub fn with_params(
        config: ModelConfig,
        vocab_size: usize,
        acts: usize,
        tags: usize,
        params: ParamStore,
    ) -> Result<Self> {
        let mut model = Self::new(config, vocab_size, acts, tags, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::invalid(format!(
                "checkpoint has {} parameters, configuration expects {}",
                params.len(),
                model.params.len()
            )));
        }
        for ((_, want, wv), (_, got, gv)) in model.params.iter().zip(params.iter()) {
            if want != got || wv.dim() != gv.dim() {
                return Err(Error::invalid(format!(
                    "parameter mismatch: expected {want} {:?}, found {got} {:?}",
                    wv.dim(),
                    gv.dim()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn num_tags(&self) -> usize {
        match &self.heads {
            Heads::Lstm { slot, .. } => self.params.value(slot.w_slot).ncols(),
            Heads::Direct { w_slot, .. } => self.params.value(*w_slot).ncols(),
        }
    }

    /// Builds the graph for a whole dialogue using `store` for parameter values.
    pub fn forward_with(&self, g: &mut Graph, store: &ParamStore, turns: &[EncodedTurn]) -> Result<ForwardOut> {
        if turns.is_empty() {
            return Err(Error::invalid("dialogue has no turns"));
        }
        let mut summaries = Vec::with_capacity(turns.len());
        let mut token_rows = Vec::with_capacity(turns.len());
        for t in turns {
            let reps = self.token.forward(g, store, &t.ids)?;
            summaries.push(reps.summary);
            token_rows.push(reps.tokens);
        }
        let h = g.concat_rows(&summaries)?;
        let c = match &self.context {
            ContextModule::Attention(enc) => enc.forward(g, store, h)?,
            ContextModule::Lstm(p) => {
                let h0 = g.constant(ndarray::Array2::zeros((1, p.hidden)));
                lstm_run(g, store, p, h, h0, false)?
            }
        };

        let mut knowledge = Vec::new();
        let mut h_k = Vec::with_capacity(turns.len());
        for (t, &tok) in turns.iter().zip(&token_rows) {
            match &self.fusion {
                Some(fp) => {
                    let f = fuse_utterance(g, store, fp, tok, &t.knowledge)?;
                    h_k.push(f.h_k);
                    knowledge.push((f.alphas, f.gates));
                }
                None => h_k.push(tok),
            }
        }

        let (act_logits, slot_logits) = match &self.heads {
            Heads::Lstm { slot, act } => {
                let acts = act.forward(g, store, c)?;
                let mut slots = Vec::with_capacity(turns.len());
                for (n, &hk) in h_k.iter().enumerate() {
                    let cn = g.slice_rows(c, n, 1)?;
                    slots.push(slot.forward(g, store, hk, cn)?);
                }
                (acts, slots)
            }
            Heads::Direct {
                w_slot,
                b_slot,
                w_act,
                b_act,
            } => {
                let (ws, bs) = (g.param(store, *w_slot), g.param(store, *b_slot));
                let slots = h_k.iter().map(|&hk| g.linear(hk, ws, bs)).collect::<Result<Vec<_>>>()?;
                let (wa, ba) = (g.param(store, *w_act), g.param(store, *b_act));
                (g.linear(c, wa, ba)?, slots)
            }
        };
        Ok(ForwardOut {
            act_logits,
            slot_logits,
            knowledge,
        })
    }

    pub fn forward(&self, g: &mut Graph, turns: &[EncodedTurn]) -> Result<ForwardOut> {
        self.forward_with(g, &self.params, turns)
    }

    /// Joint loss of one dialogue under `store`.
    pub fn loss_with(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        turns: &[EncodedTurn],
        gold: &[TurnTargets],
    ) -> Result<Var> {
        let out = self.forward_with(g, store, turns)?;
        joint_loss(g, out.act_logits, &out.slot_logits, gold)
    }

    /// Per-turn predictions for one dialogue.
    pub fn predict(&self, labels: &Labels, turns: &[EncodedTurn], threshold: f64) -> Result<Vec<TurnPrediction>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, turns)?;
        let acts = g.value(out.act_logits).clone();
        out.slot_logits
            .iter()
            .enumerate()
            .map(|(n, &s)| predict(labels, &acts.row(n).to_vec(), g.value(s), threshold))
            .collect()
    }
}

/// Maps raw tokens to model inputs: vocabulary ids plus, for variants that
/// use it, the retrieved and embedded knowledge of every token.
#[derive(Debug, Clone, Copy)]
pub struct Featurizer<'a> {
    pub vocab: &'a Vocab,
    pub knowledge: Option<(&'a TripleStore, &'a KgEmbeddings)>,
    pub top_m: usize,
}

impl Featurizer<'_> {
    pub fn turn<S: AsRef<str>>(&self, tokens: &[S]) -> Result<EncodedTurn> {
        if tokens.is_empty() {
            return Err(Error::invalid("utterance has no tokens"));
        }
        let mut ids = Vec::with_capacity(tokens.len() + 1);
        ids.push(CLS);
        ids.extend(self.vocab.encode(tokens));
        let knowledge = match self.knowledge {
            Some((store, emb)) => tokens
                .iter()
                .map(|t| triples_to_vectors(&retrieve(store, t.as_ref(), self.top_m), emb, self.top_m))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        Ok(EncodedTurn { ids, knowledge })
    }

    pub fn dialogue(&self, d: &Dialogue) -> Result<Vec<EncodedTurn>> {
        d.turns.iter().map(|u| self.turn(&u.tokens)).collect()
    }

    /// The triples a token attends over, in row order.
    pub fn triples_for(&self, token: &str) -> Vec<KnowledgeTriple> {
        match self.knowledge {
            Some((store, _)) => retrieve(store, token, self.top_m).into_iter().cloned().collect(),
            None => Vec::new(),
        }
    }
}

/// Gold targets for every turn of a dialogue.
pub fn dialogue_targets(labels: &Labels, d: &Dialogue) -> Result<Vec<TurnTargets>> {
    d.turns
        .iter()
        .map(|u| TurnTargets::from_labels(labels, &u.acts, &u.slot_tags()))
        .collect()
}

/// Per-token knowledge diagnostics of one turn.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenExplanation {
    pub token: String,
    pub gate: f64,
    /// Retrieved triples with their attention weight. Empty for KB-absent
    /// tokens, whose weights are uniform over all-zero rows.
    pub triples: Vec<(KnowledgeTriple, f64)>,
    /// Weight on each padding row (`1/m` for KB-absent tokens).
    pub padding_alpha: Option<f64>,
}

impl Model {
    /// Attention weights and gate values for every token of every turn.
    pub fn explain(&self, feat: &Featurizer, d: &Dialogue) -> Result<Vec<Vec<TokenExplanation>>> {
        if self.fusion.is_none() {
            return Err(Error::invalid(
                "the no_kg variant has no knowledge attention to explain",
            ));
        }
        let turns = feat.dialogue(d)?;
        let mut g = Graph::new();
        let out = self.forward(&mut g, &turns)?;
        let m = self.config.top_m;
        let mut result = Vec::with_capacity(d.turns.len());
        for (u, (alphas, gates)) in d.turns.iter().zip(&out.knowledge) {
            let gates = g.value(*gates);
            let mut rows = Vec::with_capacity(u.tokens.len());
            for (i, tok) in u.tokens.iter().enumerate() {
                let triples = feat.triples_for(tok);
                let (listed, padding_alpha) = match alphas[i] {
                    Some(a) => {
                        let a = g.value(a);
                        let listed: Vec<(KnowledgeTriple, f64)> =
                            triples.iter().cloned().zip(a.row(0).iter().copied()).collect();
                        let pad = (listed.len() < m).then(|| a[[0, m - 1]]);
                        (listed, pad)
                    }
                    None => (Vec::new(), Some(1.0 / m as f64)),
                };
                rows.push(TokenExplanation {
                    token: tok.clone(),
                    gate: gates[[i, 0]],
                    triples: listed,
                    padding_alpha,
                });
            }
            result.push(rows);
        }
        Ok(result)
    }
}
