use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A weighted `(head, relation, tail)` fact.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub weight: f64,
}

impl KnowledgeTriple {
    pub fn new(
        head: impl Into<String>,
        relation: impl Into<String>,
        tail: impl Into<String>,
        weight: f64,
    ) -> Result<Self> {
        let t = Self {
            head: head.into().to_lowercase(),
            relation: relation.into(),
            tail: tail.into(),
            weight,
        };
        if t.head.is_empty() || t.relation.is_empty() || t.tail.is_empty() {
            return Err(Error::invalid("triple fields must be non-empty"));
        }
        if !t.weight.is_finite() || t.weight < 0.0 {
            return Err(Error::invalid(format!("triple weight {} is not >= 0", t.weight)));
        }
        Ok(t)
    }
}

/// Deduplicated triples with a per-head index sorted by descending weight.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripleStore {
    triples: Vec<KnowledgeTriple>,
    head_index: HashMap<String, Vec<usize>>,
}

/// Lines skipped while loading a triple file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub malformed: Vec<(usize, String)>,
}

impl TripleStore {
    /// Builds a store, keeping the first occurrence of every `(h, r, t)`.
    pub fn from_triples(triples: impl IntoIterator<Item = KnowledgeTriple>) -> Self {
        let mut seen = HashSet::new();
        let mut store = TripleStore::default();
        for t in triples {
            if seen.insert((t.head.clone(), t.relation.clone(), t.tail.clone())) {
                store.triples.push(t);
            }
        }
        for (i, t) in store.triples.iter().enumerate() {
            store.head_index.entry(t.head.clone()).or_default().push(i);
        }
        let triples = &store.triples;
        for ids in store.head_index.values_mut() {
            // stable: equal weights keep insertion order
            ids.sort_by(|&a, &b| triples[b].weight.total_cmp(&triples[a].weight));
        }
        store
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[KnowledgeTriple] {
        &self.triples
    }

    /// Triples with this (already case-folded) head, heaviest first.
    pub fn by_head(&self, head: &str) -> impl Iterator<Item = &KnowledgeTriple> {
        self.head_index
            .get(head)
            .into_iter()
            .flatten()
            .map(|&i| &self.triples[i])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("write to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// One `head<TAB>relation<TAB>tail<TAB>weight` line per triple.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for t in &self.triples {
            writeln!(w, "{}\t{}\t{}\t{}", t.head, t.relation, t.tail, t.weight)?;
        }
        Ok(())
    }
}

pub(crate) fn parse_line(line: &str) -> std::result::Result<KnowledgeTriple, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 tab-separated fields, found {}", fields.len()));
    }
    let weight: f64 = fields[3]
        .trim()
        .parse()
        .map_err(|e| format!("weight {:?}: {e}", fields[3]))?;
    KnowledgeTriple::new(fields[0].trim(), fields[1].trim(), fields[2].trim(), weight).map_err(|e| e.to_string())
}

/// Reads `head<TAB>relation<TAB>tail<TAB>weight` lines. Malformed lines are
/// skipped and reported; an empty file yields an empty store.
pub fn load_triples(path: &Path) -> Result<(TripleStore, LoadReport)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut report = LoadReport::default();
    let mut triples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Ok(t) => triples.push(t),
            Err(msg) => {
                log::warn!("{}:{}: {msg}", path.display(), i + 1);
                report.malformed.push((i + 1, msg));
            }
        }
    }
    if triples.is_empty() {
        log::warn!("{}: no triples loaded", path.display());
    }
    Ok((TripleStore::from_triples(triples), report))
}

/// The retrieval function: up to `m` triples whose head equals the case-folded
/// word, heaviest first. Words absent from the store retrieve nothing.
pub fn retrieve<'a>(store: &'a TripleStore, word: &str, m: usize) -> Vec<&'a KnowledgeTriple> {
    store.by_head(&word.to_lowercase()).take(m).collect()
}
