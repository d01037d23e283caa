//! Exact-set act accuracy and strict span-level slot F1.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{decode_bio, SlotSpan};
use crate::error::{Error, Result};

/// Fraction of utterances whose predicted act set equals the gold set.
/// An empty list scores 0.
pub fn act_accuracy(preds: &[BTreeSet<String>], golds: &[BTreeSet<String>]) -> Result<f64> {
    if preds.len() != golds.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold utterances",
            preds.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Ok(0.0);
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / golds.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanCounts {
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl SpanCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.gold)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    fn absorb(&mut self, other: SpanCounts) {
        self.true_positives += other.true_positives;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: SpanCounts,
}

impl From<SpanCounts> for SlotScores {
    fn from(c: SpanCounts) -> Self {
        Self {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            counts: c,
        }
    }
}

/// Micro-averaged span scores plus a per-slot-name table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotReport {
    pub overall: SlotScores,
    pub per_slot: BTreeMap<String, SlotScores>,
}

/// Span-set scoring: a predicted span counts only if an identical
/// `(name, start, end)` gold span exists in the same utterance.
pub fn span_f1(preds: &[Vec<SlotSpan>], golds: &[Vec<SlotSpan>]) -> Result<SlotReport> {
    if preds.len() != golds.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold utterances",
            preds.len(),
            golds.len()
        )));
    }
    let mut total = SpanCounts::default();
    let mut per: BTreeMap<String, SpanCounts> = BTreeMap::new();
    for (p, g) in preds.iter().zip(golds) {
        let p: BTreeSet<&SlotSpan> = p.iter().collect();
        let g: BTreeSet<&SlotSpan> = g.iter().collect();
        for s in &p {
            let e = per.entry(s.name.clone()).or_default();
            e.predicted += 1;
            if g.contains(s) {
                e.true_positives += 1;
            }
        }
        for s in &g {
            per.entry(s.name.clone()).or_default().gold += 1;
        }
    }
    for c in per.values() {
        total.absorb(*c);
    }
    Ok(SlotReport {
        overall: total.into(),
        per_slot: per.into_iter().map(|(k, c)| (k, c.into())).collect(),
    })
}

/// Strict span F1 over BIO tag sequences. Gold must be valid BIO;
/// predictions are expected to be repaired already and are rejected otherwise.
pub fn slot_f1<P: AsRef<str>, G: AsRef<str>>(preds: &[Vec<P>], golds: &[Vec<G>]) -> Result<SlotReport> {
    if preds.len() != golds.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} gold utterances",
            preds.len(),
            golds.len()
        )));
    }
    let mut ps = Vec::with_capacity(preds.len());
    let mut gs = Vec::with_capacity(golds.len());
    for (i, (p, g)) in preds.iter().zip(golds).enumerate() {
        if p.len() != g.len() {
            return Err(Error::invalid(format!(
                "utterance {i}: {} predicted tags for {} gold tags",
                p.len(),
                g.len()
            )));
        }
        gs.push(decode_bio(g).map_err(|e| Error::invalid(format!("gold utterance {i}: {e}")))?);
        ps.push(decode_bio(p).map_err(|e| Error::invalid(format!("predicted utterance {i}: {e}")))?);
    }
    span_f1(&ps, &gs)
}

/// Scores only the `focus` gold spans. A predicted span is kept when it
/// overlaps a focus span of its utterance, so predictions elsewhere in the
/// sentence neither help nor hurt.
pub fn focused_span_f1(preds: &[Vec<SlotSpan>], focus: &[Vec<SlotSpan>]) -> Result<SlotReport> {
    if preds.len() != focus.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} focus lists",
            preds.len(),
            focus.len()
        )));
    }
    let kept: Vec<Vec<SlotSpan>> = preds
        .iter()
        .zip(focus)
        .map(|(p, f)| {
            p.iter()
                .filter(|s| f.iter().any(|g| s.start < g.end && g.start < s.end))
                .cloned()
                .collect()
        })
        .collect();
    span_f1(&kept, focus)
}

/// Corpus-level evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub utterances: usize,
    pub act_accuracy: f64,
    pub slot_precision: f64,
    pub slot_recall: f64,
    pub slot_f1: f64,
    pub per_slot: BTreeMap<String, SlotScores>,
    /// Slot F1 over knowledge-dependent gold spans, when they are annotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_slot_f1: Option<f64>,
    /// Act accuracy over context-dependent turns, when they are annotated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_act_accuracy: Option<f64>,
}

impl EvalReport {
    pub fn new(utterances: usize, act_accuracy: f64, slots: SlotReport) -> Self {
        Self {
            utterances,
            act_accuracy,
            slot_precision: slots.overall.precision,
            slot_recall: slots.overall.recall,
            slot_f1: slots.overall.f1,
            per_slot: slots.per_slot,
            knowledge_slot_f1: None,
            context_act_accuracy: None,
        }
    }

    pub fn pretty(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "utterances      {}", self.utterances);
        let _ = writeln!(s, "act accuracy    {:.4}", self.act_accuracy);
        let _ = writeln!(
            s,
            "slot P/R/F1     {:.4} / {:.4} / {:.4}",
            self.slot_precision, self.slot_recall, self.slot_f1
        );
        if let Some(k) = self.knowledge_slot_f1 {
            let _ = writeln!(s, "kb-slot F1      {k:.4}");
        }
        if let Some(c) = self.context_act_accuracy {
            let _ = writeln!(s, "context act acc {c:.4}");
        }
        if !self.per_slot.is_empty() {
            let _ = writeln!(
                s,
                "{:<16} {:>7} {:>7} {:>7} {:>6} {:>6}",
                "slot", "P", "R", "F1", "pred", "gold"
            );
            for (name, sc) in &self.per_slot {
                let _ = writeln!(
                    s,
                    "{name:<16} {:>7.4} {:>7.4} {:>7.4} {:>6} {:>6}",
                    sc.precision, sc.recall, sc.f1, sc.counts.predicted, sc.counts.gold
                );
            }
        }
        s
    }
}
