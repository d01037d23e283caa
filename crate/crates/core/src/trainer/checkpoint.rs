//! Self-contained text checkpoint: configuration, vocabulary, label
//! inventories, knowledge base, embeddings and parameters.
//!
//! The file is a sequence of `[section N]` headers, each followed by exactly
//! `N` lines, so section bodies may contain any printable text.

use std::io::Write;
use std::path::Path;

use crate::corpus::{Dialogue, Labels, Vocab};
use crate::decoder::TurnPrediction;
use crate::error::{Error, Result};
use crate::knowledge::{parse_triple_line, KgEmbeddings, TripleStore};
use crate::model::{Featurizer, Model, ModelConfig};
use crate::numerics::ParamStore;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocab,
    pub labels: Labels,
    pub triples: TripleStore,
    pub embeddings: KgEmbeddings,
}

const SECTIONS: [&str; 7] = ["config", "vocab", "acts", "slots", "triples", "embeddings", "params"];

fn section(out: &mut Vec<u8>, name: &str, body: Vec<u8>) {
    let lines = body.iter().filter(|&&b| b == b'\n').count();
    writeln!(out, "[{name} {lines}]").expect("write to memory");
    out.extend(body);
}

fn lines_of(items: &[String]) -> Vec<u8> {
    let mut b = Vec::new();
    for s in items {
        writeln!(b, "{s}").expect("write to memory");
    }
    b
}

impl Checkpoint {
    pub fn featurizer(&self) -> Featurizer<'_> {
        Featurizer {
            vocab: &self.vocab,
            knowledge: self
                .model
                .config
                .variant
                .uses_knowledge()
                .then_some((&self.triples, &self.embeddings)),
            top_m: self.model.config.top_m,
        }
    }

    pub fn predict_dialogue(&self, d: &Dialogue, threshold: f64) -> Result<Vec<TurnPrediction>> {
        let turns = self.featurizer().dialogue(d)?;
        self.model.predict(&self.labels, &turns, threshold)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut b = Vec::new();
        for (k, v) in self.model.config.pairs() {
            writeln!(b, "{k}={v}").expect("write to memory");
        }
        section(&mut out, "config", b);
        section(&mut out, "vocab", lines_of(self.vocab.tokens()));
        section(&mut out, "acts", lines_of(self.labels.acts.labels()));
        section(&mut out, "slots", lines_of(&self.labels.slots));
        let mut b = Vec::new();
        self.triples.write_to(&mut b).expect("write to memory");
        section(&mut out, "triples", b);
        let mut b = Vec::new();
        self.embeddings.write_to(&mut b).expect("write to memory");
        section(&mut out, "embeddings", b);
        let mut b = Vec::new();
        self.model.params.write_to(&mut b).expect("write to memory");
        section(&mut out, "params", b);
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|(line, msg)| Error::parse(path, line, msg))
    }

    /// Parses the text form; errors carry a 1-based line number.
    pub fn parse(text: &str) -> std::result::Result<Self, (usize, String)> {
        let lines: Vec<&str> = text.lines().collect();
        let mut pos = 0;
        let mut bodies: Vec<(usize, &[&str])> = Vec::new();
        for want in SECTIONS {
            let header = lines.get(pos).ok_or((pos + 1, format!("missing [{want}] section")))?;
            let count = header
                .strip_prefix('[')
                .and_then(|h| h.strip_suffix(']'))
                .and_then(|h| h.split_once(' '))
                .filter(|(name, _)| *name == want)
                .and_then(|(_, n)| n.parse::<usize>().ok())
                .ok_or((pos + 1, format!("expected [{want} <lines>], found {header:?}")))?;
            let start = pos + 1;
            let end = start + count;
            if end > lines.len() {
                return Err((
                    pos + 1,
                    format!("[{want}] promises {count} lines but the file ends early"),
                ));
            }
            bodies.push((start, &lines[start..end]));
            pos = end;
        }
        if pos != lines.len() {
            return Err((pos + 1, "trailing content after [params]".into()));
        }
        let owned = |(_, b): (usize, &[&str])| b.iter().map(|s| s.to_string()).collect::<Vec<_>>();

        let (cfg_start, cfg_lines) = bodies[0];
        let mut config = ModelConfig::default();
        for (i, l) in cfg_lines.iter().enumerate() {
            let (k, v) = l
                .split_once('=')
                .ok_or((cfg_start + i + 1, format!("expected key=value, found {l:?}")))?;
            match config.set(k, v) {
                Ok(true) => {}
                Ok(false) => return Err((cfg_start + i + 1, format!("unknown config key {k:?}"))),
                Err(e) => return Err((cfg_start + i + 1, e.to_string())),
            }
        }
        let vocab = Vocab::from_tokens(owned(bodies[1])).map_err(|e| (bodies[1].0, e.to_string()))?;
        let labels = Labels::new(owned(bodies[2]), owned(bodies[3])).map_err(|e| (bodies[2].0, e.to_string()))?;

        let (tri_start, tri_lines) = bodies[4];
        let mut triples = Vec::with_capacity(tri_lines.len());
        for (i, l) in tri_lines.iter().enumerate() {
            triples.push(parse_triple_line(l).map_err(|e| (tri_start + i + 1, e))?);
        }
        let triples = TripleStore::from_triples(triples);

        let (emb_start, emb_lines) = bodies[5];
        let embeddings = KgEmbeddings::parse(emb_lines.iter().copied()).map_err(|(l, m)| (emb_start + l, m))?;

        let (par_start, par_lines) = bodies[6];
        let mut params = ParamStore::new();
        for (i, l) in par_lines.iter().enumerate() {
            params.parse_line(l).map_err(|e| (par_start + i + 1, e))?;
        }
        let model = Model::with_params(config, vocab.len(), labels.acts.len(), labels.tags.len(), params)
            .map_err(|e| (par_start, e.to_string()))?;
        if model.config.variant.uses_knowledge() && embeddings.dim != model.config.kg_dim {
            return Err((
                emb_start,
                format!(
                    "embeddings have d_k={}, model expects {}",
                    embeddings.dim, model.config.kg_dim
                ),
            ));
        }
        Ok(Self {
            model,
            vocab,
            labels,
            triples,
            embeddings,
        })
    }
}
