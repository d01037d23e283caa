use std::collections::HashMap;
use std::path::Path;

use super::Dialogue;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
/// Utterance-summary sentinel prepended to every utterance.
pub const CLS: usize = 2;

const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<cls>"];

/// Token to dense id map. Ids 0..3 are reserved for padding, unknown and the
/// sentinel; content tokens follow in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::invalid("vocabulary must start with <pad>, <unk>, <cls>"));
        }
        let mut v = Vocab::default();
        for t in &tokens[RESERVED.len()..] {
            if v.contains(t) {
                return Err(Error::invalid(format!("duplicate vocabulary entry {t:?}")));
            }
            v.insert(t);
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::save_labels(&self.tokens, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tokens(super::load_labels(path)?)
    }
}

/// Vocabulary over every token of `corpus`.
pub fn build_vocab(corpus: &[Dialogue]) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    let mut v = Vocab::default();
    for t in corpus.iter().flat_map(|d| &d.turns).flat_map(|u| &u.tokens) {
        v.insert(t);
    }
    Ok(v)
}
