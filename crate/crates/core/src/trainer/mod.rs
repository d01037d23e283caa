//! Training loop, validation-based model selection, evaluation and the
//! flat `key=value` run configuration.

mod checkpoint;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::Checkpoint;

use crate::corpus::{build_vocab, decode_bio, Dialogue, Labels, Phenomena, SlotSpan, CLS, UNK};
use crate::decoder::{TurnPrediction, TurnTargets};
use crate::error::{Error, Result};
use crate::knowledge::{KgEmbeddings, TripleStore};
use crate::metrics::{act_accuracy, focused_span_f1, span_f1, EvalReport};
use crate::model::{dialogue_targets, EncodedTurn, Model, ModelConfig};
use crate::numerics::{adam_update, AdamConfig, AdamState, Graph, ParamGrads};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub lr: f64,
    pub batch_dialogues: usize,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub validation_fraction: f64,
    /// Probability of replacing a training token id with the unknown id.
    pub word_dropout: f64,
    /// Global gradient-norm cap; `None` leaves gradients untouched.
    pub clip_norm: Option<f64>,
    pub threshold: f64,
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            epochs: 60,
            lr: 1e-3,
            batch_dialogues: 4,
            seed: 0,
            patience: 10,
            validation_fraction: 0.1,
            word_dropout: 0.1,
            clip_norm: None,
            threshold: 0.5,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.model.set(key, value)? {
            return Ok(());
        }
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::invalid(format!("{key}: cannot parse {value:?}")))
        }
        match key {
            "epochs" => self.epochs = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "batch_dialogues" => self.batch_dialogues = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            "validation_fraction" => self.validation_fraction = num(key, value)?,
            "word_dropout" => self.word_dropout = num(key, value)?,
            "clip_norm" => {
                self.clip_norm = match value {
                    "" | "none" => None,
                    v => Some(num(key, v)?),
                }
            }
            "threshold" => self.threshold = num(key, value)?,
            "checkpoint" => self.checkpoint = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> std::result::Result<(), (usize, String)> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or((i + 1, format!("expected key=value, found {line:?}")))?;
            self.set(k.trim(), v.trim()).map_err(|e| (i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text).map_err(|(l, m)| Error::parse(path, l, m))?;
        Ok(cfg)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut p = self.model.pairs();
        p.extend([
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("batch_dialogues", self.batch_dialogues.to_string()),
            ("seed", self.seed.to_string()),
            ("patience", self.patience.to_string()),
            ("validation_fraction", self.validation_fraction.to_string()),
            ("word_dropout", self.word_dropout.to_string()),
            (
                "clip_norm",
                self.clip_norm.map_or("none".to_string(), |c| c.to_string()),
            ),
            ("threshold", self.threshold.to_string()),
            (
                "checkpoint",
                self.checkpoint
                    .as_ref()
                    .map_or(String::new(), |p| p.display().to_string()),
            ),
        ]);
        p
    }

    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.batch_dialogues == 0 {
            return Err(Error::invalid("batch_dialogues must be >= 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "validation_fraction must be in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.word_dropout) {
            return Err(Error::invalid(format!(
                "word_dropout must be in [0, 1), got {}",
                self.word_dropout
            )));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::invalid(format!("clip_norm must be > 0, got {c}")));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!(
                "threshold must be in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean joint loss per training dialogue.
    pub train_loss: f64,
    pub val_act_accuracy: f64,
    pub val_slot_f1: f64,
    pub seconds: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub config: BTreeMap<String, String>,
    pub train_dialogues: usize,
    pub validation_dialogues: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl RunLog {
    /// One JSON object per line: the config echo, each epoch, then a summary.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::json!({
            "config": self.config,
            "train_dialogues": self.train_dialogues,
            "validation_dialogues": self.validation_dialogues,
        })
        .to_string();
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("serialisable record"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::json!({"best_epoch": self.best_epoch, "stopped_early": self.stopped_early}).to_string(),
        );
        out.push('\n');
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// The log with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        let mut c = self.clone();
        for e in &mut c.epochs {
            e.seconds = 0.0;
        }
        c
    }
}

struct Prepared {
    turns: Vec<EncodedTurn>,
    gold: Vec<TurnTargets>,
}

/// Splits off a seeded validation set: `round(fraction · n)` dialogues, at least one.
pub fn split_validation(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 training dialogues to hold out a validation split, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    train.sort_unstable();
    Ok((train, val))
}

fn with_word_dropout(turns: &[EncodedTurn], p: f64, rng: &mut ChaCha8Rng) -> Vec<EncodedTurn> {
    turns
        .iter()
        .map(|t| EncodedTurn {
            ids: t
                .ids
                .iter()
                .map(|&id| if id != CLS && rng.gen::<f64>() < p { UNK } else { id })
                .collect(),
            knowledge: t.knowledge.clone(),
        })
        .collect()
}

/// Trains one model. Returns the checkpoint with the best validation score
/// (act accuracy + slot F1) and the per-epoch log.
pub fn train(
    dialogues: &[Dialogue],
    labels: &Labels,
    triples: &TripleStore,
    embeddings: &KgEmbeddings,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, RunLog)> {
    cfg.validate()?;
    if cfg.model.variant.uses_knowledge() && embeddings.dim != cfg.model.kg_dim {
        return Err(Error::invalid(format!(
            "embeddings have d_k={}, config kg_dim={}",
            embeddings.dim, cfg.model.kg_dim
        )));
    }
    for d in dialogues {
        d.validate(Some(labels))?;
    }
    let (train_idx, val_idx) = split_validation(dialogues.len(), cfg.validation_fraction, cfg.seed)?;
    let train_set: Vec<Dialogue> = train_idx.iter().map(|&i| dialogues[i].clone()).collect();
    let val_set: Vec<Dialogue> = val_idx.iter().map(|&i| dialogues[i].clone()).collect();

    let vocab = build_vocab(&train_set)?;
    let model = Model::new(cfg.model, vocab.len(), labels.acts.len(), labels.tags.len(), cfg.seed)?;
    let mut ckpt = Checkpoint {
        model,
        vocab,
        labels: labels.clone(),
        triples: triples.clone(),
        embeddings: embeddings.clone(),
    };
    let prepared: Vec<Prepared> = {
        let feat = ckpt.featurizer();
        train_set
            .iter()
            .map(|d| {
                Ok(Prepared {
                    turns: feat.dialogue(d)?,
                    gold: dialogue_targets(labels, d)?,
                })
            })
            .collect::<Result<_>>()?
    };

    let adam = AdamConfig::with_lr(cfg.lr);
    let mut state = AdamState::new(&ckpt.model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut best = (f64::NEG_INFINITY, ckpt.model.params.clone(), 0);
    let mut records = Vec::new();
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_dialogues).enumerate() {
            let mut grads = ParamGrads::zeros(&ckpt.model.params);
            for &i in batch {
                let p = &prepared[i];
                let turns = if cfg.word_dropout > 0.0 {
                    with_word_dropout(&p.turns, cfg.word_dropout, &mut rng)
                } else {
                    p.turns.clone()
                };
                let mut g = Graph::new();
                let loss = ckpt.model.loss_with(&mut g, &ckpt.model.params, &turns, &p.gold)?;
                let value = g.scalar(loss);
                if !value.is_finite() {
                    return Err(Error::Divergence(format!(
                        "loss is {value} at epoch {epoch}, batch {}",
                        b + 1
                    )));
                }
                total += value;
                grads.add_all(&g.backward(loss)?);
            }
            if let Some(c) = cfg.clip_norm {
                grads.clip_norm(c);
            }
            adam_update(&mut ckpt.model.params, &grads, &mut state, &adam).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Divergence(format!("{e} at epoch {epoch}, batch {}", b + 1)),
                other => other,
            })?;
        }

        let report = evaluate(&ckpt, &val_set, cfg.threshold, None)?;
        let score = report.act_accuracy + report.slot_f1;
        let improved = score > best.0;
        if improved {
            best = (score, ckpt.model.params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
        }
        let rec = EpochRecord {
            epoch,
            train_loss: total / prepared.len() as f64,
            val_act_accuracy: report.act_accuracy,
            val_slot_f1: report.slot_f1,
            seconds: started.elapsed().as_secs_f64(),
            improved,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} val acc {:.4} val F1 {:.4}{}",
            rec.train_loss,
            rec.val_act_accuracy,
            rec.val_slot_f1,
            if improved { " *" } else { "" }
        );
        records.push(rec);
        if cfg.patience > 0 && stale >= cfg.patience {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }

    ckpt.model.params = best.1;
    let log = RunLog {
        config: cfg.pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        train_dialogues: train_set.len(),
        validation_dialogues: val_set.len(),
        epochs: records,
        best_epoch: best.2,
        stopped_early,
    };
    if let Some(path) = &cfg.checkpoint {
        ckpt.save(path)?;
    }
    Ok((ckpt, log))
}

/// Predictions for every turn of every dialogue, using full dialogue context.
pub fn predict_corpus(ckpt: &Checkpoint, dialogues: &[Dialogue], threshold: f64) -> Result<Vec<Vec<TurnPrediction>>> {
    dialogues.iter().map(|d| ckpt.predict_dialogue(d, threshold)).collect()
}

/// Scores predictions against gold. With `phenomena`, also reports slot F1
/// over knowledge-dependent spans and act accuracy over context turns.
pub fn score(
    dialogues: &[Dialogue],
    preds: &[Vec<TurnPrediction>],
    phenomena: Option<&Phenomena>,
) -> Result<EvalReport> {
    if preds.len() != dialogues.len() {
        return Err(Error::invalid(format!(
            "{} predicted dialogues for {} gold dialogues",
            preds.len(),
            dialogues.len()
        )));
    }
    let mut pa = Vec::new();
    let mut ga = Vec::new();
    let mut ps = Vec::new();
    let mut gs = Vec::new();
    let mut ctx = (Vec::new(), Vec::new());
    let mut kb_pred = Vec::new();
    let mut kb_gold = Vec::new();
    let mut focus: BTreeMap<(&str, usize), Vec<SlotSpan>> = BTreeMap::new();
    if let Some(ph) = phenomena {
        for k in &ph.knowledge_spans {
            focus
                .entry((k.dialogue.as_str(), k.turn))
                .or_default()
                .push(k.span.clone());
        }
    }
    for (d, dp) in dialogues.iter().zip(preds) {
        if dp.len() != d.turns.len() {
            return Err(Error::invalid(format!(
                "dialogue {}: {} predicted turns for {} gold turns",
                d.id,
                dp.len(),
                d.turns.len()
            )));
        }
        for (n, (u, p)) in d.turns.iter().zip(dp).enumerate() {
            if p.tags.len() != u.tokens.len() {
                return Err(Error::invalid(format!(
                    "dialogue {} turn {n}: {} predicted tags for {} tokens",
                    d.id,
                    p.tags.len(),
                    u.tokens.len()
                )));
            }
            let spans = decode_bio(&p.tags).map_err(|e| Error::invalid(format!("dialogue {} turn {n}: {e}", d.id)))?;
            pa.push(p.acts.clone());
            ga.push(u.acts.clone());
            if let Some(f) = focus.get(&(d.id.as_str(), n)) {
                kb_pred.push(spans.clone());
                kb_gold.push(f.clone());
            }
            if phenomena.is_some_and(|ph| ph.is_context_turn(&d.id, n)) {
                ctx.0.push(p.acts.clone());
                ctx.1.push(u.acts.clone());
            }
            ps.push(spans);
            gs.push(u.slots.clone());
        }
    }
    let mut report = EvalReport::new(ga.len(), act_accuracy(&pa, &ga)?, span_f1(&ps, &gs)?);
    if let Some(ph) = phenomena {
        if !ph.knowledge_spans.is_empty() {
            report.knowledge_slot_f1 = Some(focused_span_f1(&kb_pred, &kb_gold)?.overall.f1);
        }
        if !ph.context_turns.is_empty() {
            report.context_act_accuracy = Some(act_accuracy(&ctx.0, &ctx.1)?);
        }
    }
    Ok(report)
}

/// Predicts and scores `dialogues`; the checkpoint is only read.
pub fn evaluate(
    ckpt: &Checkpoint,
    dialogues: &[Dialogue],
    threshold: f64,
    phenomena: Option<&Phenomena>,
) -> Result<EvalReport> {
    for d in dialogues {
        d.validate(Some(&ckpt.labels))
            .map_err(|e| Error::invalid(format!("corpus does not match the checkpoint inventories: {e}")))?;
    }
    let preds = predict_corpus(ckpt, dialogues, threshold)?;
    score(dialogues, &preds, phenomena)
}
