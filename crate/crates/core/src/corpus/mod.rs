//! Dialogue data model, BIO codec, file formats, vocabulary and the synthetic
//! corpus generator.

mod bio;
mod io;
pub mod synth;
mod vocab;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use bio::{decode_bio, encode_bio, is_valid_bio, repair_bio, Bio, OUTSIDE};
pub use io::{load_dialogues, load_labels, save_dialogues, save_labels};
pub use synth::{generate_synthetic, GenConfig, Phenomena, SyntheticCorpus};
pub use vocab::{build_vocab, Vocab, CLS, PAD, UNK};

use crate::error::{Error, Result};

/// Maximum tokens per utterance.
pub const MAX_SEQ_LEN: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

/// A typed slot value occupying tokens `start..end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotSpan {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

impl SlotSpan {
    pub fn new(name: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            name: name.into(),
            start,
            end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub tokens: Vec<String>,
    pub acts: BTreeSet<String>,
    #[serde(default)]
    pub slots: Vec<SlotSpan>,
}

impl Utterance {
    /// Gold BIO tags, one per token.
    pub fn slot_tags(&self) -> Vec<String> {
        encode_bio(&self.slots, self.tokens.len()).expect("validated utterance")
    }

    /// Checks the utterance invariants, optionally against label inventories.
    pub fn validate(&self, labels: Option<&Labels>) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::invalid("utterance has no tokens"));
        }
        if self.tokens.len() > MAX_SEQ_LEN {
            return Err(Error::invalid(format!(
                "utterance has {} tokens, limit is {MAX_SEQ_LEN}",
                self.tokens.len()
            )));
        }
        if self
            .tokens
            .iter()
            .any(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::invalid("tokens must be non-empty and whitespace-free"));
        }
        if self.acts.is_empty() {
            return Err(Error::invalid("utterance has an empty act set"));
        }
        encode_bio(&self.slots, self.tokens.len())?;
        if let Some(labels) = labels {
            if let Some(a) = self.acts.iter().find(|a| labels.acts.get(a).is_none()) {
                return Err(Error::invalid(format!("unknown act label {a:?}")));
            }
            if let Some(s) = self.slots.iter().find(|s| !labels.has_slot(&s.name)) {
                return Err(Error::invalid(format!("unknown slot name {:?}", s.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Utterance>,
}

impl Dialogue {
    pub fn validate(&self, labels: Option<&Labels>) -> Result<()> {
        if self.turns.is_empty() {
            return Err(Error::invalid(format!("dialogue {} has no turns", self.id)));
        }
        for (i, t) in self.turns.iter().enumerate() {
            t.validate(labels)
                .map_err(|e| Error::invalid(format!("dialogue {} turn {i}: {e}", self.id)))?;
        }
        Ok(())
    }
}

/// An ordered label inventory with dense ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut set = LabelSet::default();
        for l in labels {
            let l = l.into();
            if l.is_empty() || set.index.contains_key(&l) {
                return Err(Error::invalid(format!("empty or duplicate label {l:?}")));
            }
            set.index.insert(l.clone(), set.labels.len());
            set.labels.push(l);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Act inventory plus the BIO tag inventory derived from slot names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub acts: LabelSet,
    pub slots: Vec<String>,
    /// `O`, then `B-x`, `I-x` for each slot in order.
    pub tags: LabelSet,
}

impl Labels {
    pub fn new(acts: Vec<String>, slots: Vec<String>) -> Result<Self> {
        let acts = LabelSet::new(acts)?;
        let mut tags = vec![OUTSIDE.to_string()];
        for s in &slots {
            tags.push(format!("B-{s}"));
            tags.push(format!("I-{s}"));
        }
        let tags = LabelSet::new(tags)?;
        Ok(Self { acts, slots, tags })
    }

    pub fn has_slot(&self, name: &str) -> bool {
        self.slots.iter().any(|s| s == name)
    }

    /// Inventory covering every label that occurs in `dialogues`, sorted.
    pub fn from_dialogues(dialogues: &[Dialogue]) -> Result<Self> {
        let mut acts = BTreeSet::new();
        let mut slots = BTreeSet::new();
        for t in dialogues.iter().flat_map(|d| &d.turns) {
            acts.extend(t.acts.iter().cloned());
            slots.extend(t.slots.iter().map(|s| s.name.clone()));
        }
        Self::new(acts.into_iter().collect(), slots.into_iter().collect())
    }
}
