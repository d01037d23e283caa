//! Translation embeddings: a true triple should satisfy `h + r ≈ t`.
//!
//! Trained with the margin ranking loss
//! `max(0, margin + ||h + r - t|| - ||h' + r - t'||)` where `(h', r, t')`
//! corrupts either the head or the tail (probability 0.5 each) with a
//! uniformly drawn entity. Entity vectors are projected back onto the unit
//! ball after every epoch.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::store::TripleStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransEConfig {
    pub dim: usize,
    pub epochs: usize,
    pub margin: f64,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TransEConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            epochs: 200,
            margin: 1.0,
            lr: 0.01,
            seed: 0,
        }
    }
}

/// Entity and relation vectors keyed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct KgEmbeddings {
    pub dim: usize,
    pub entities: BTreeMap<String, Vec<f64>>,
    pub relations: BTreeMap<String, Vec<f64>>,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn distance(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    h.iter()
        .zip(r)
        .zip(t)
        .map(|((h, r), t)| (h + r - t).powi(2))
        .sum::<f64>()
        .sqrt()
}

impl KgEmbeddings {
    pub fn entity(&self, name: &str) -> Option<&[f64]> {
        self.entities.get(name).map(Vec::as_slice)
    }

    pub fn relation(&self, name: &str) -> Option<&[f64]> {
        self.relations.get(name).map(Vec::as_slice)
    }

    /// `||h + r - t||`; lower is more plausible.
    pub fn score(&self, head: &str, relation: &str, tail: &str) -> Option<f64> {
        Some(distance(
            self.entity(head)?,
            self.relation(relation)?,
            self.entity(tail)?,
        ))
    }

    /// Header `d_k=<n>`, then `E <name> v1..vn` and `R <name> v1..vn` lines.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("write to memory");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "d_k={}", self.dim)?;
        for (tag, map) in [("E", &self.entities), ("R", &self.relations)] {
            for (name, v) in map {
                write!(w, "{tag} {name}")?;
                for x in v {
                    write!(w, " {x}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(text.lines()).map_err(|(line, msg)| Error::parse(path, line, msg))
    }

    /// Parses the text form; names may contain spaces since the last `d_k`
    /// fields of a line are always the vector.
    pub fn parse<'a>(mut lines: impl Iterator<Item = &'a str>) -> std::result::Result<Self, (usize, String)> {
        let header = lines.next().ok_or((1, "missing d_k header".to_string()))?;
        let dim: usize = header
            .strip_prefix("d_k=")
            .and_then(|d| d.trim().parse().ok())
            .filter(|&d| d > 0)
            .ok_or((1, format!("bad header {header:?}")))?;
        let mut emb = KgEmbeddings {
            dim,
            entities: BTreeMap::new(),
            relations: BTreeMap::new(),
        };
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() < dim + 2 {
                return Err((lineno, "too few fields".into()));
            }
            let split = fields.len() - dim;
            let name = fields[1..split].join(" ");
            let vec = fields[split..]
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| (lineno, e.to_string()))?;
            let map = match fields[0] {
                "E" => &mut emb.entities,
                "R" => &mut emb.relations,
                other => return Err((lineno, format!("unknown record kind {other:?}"))),
            };
            map.insert(name, vec);
        }
        Ok(emb)
    }
}

/// Stateful trainer; one call to [`TransE::epoch`] is one pass over the store.
pub struct TransE {
    cfg: TransEConfig,
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entities: Vec<Vec<f64>>,
    relations: Vec<Vec<f64>>,
    triples: Vec<(usize, usize, usize)>,
    rng: ChaCha8Rng,
}

impl TransE {
    pub fn new(store: &TripleStore, cfg: TransEConfig) -> Result<Self> {
        if cfg.dim < 1 {
            return Err(Error::invalid("embedding dimension must be >= 1"));
        }
        if cfg.margin.is_nan() || cfg.margin <= 0.0 {
            return Err(Error::invalid(format!("margin must be > 0, got {}", cfg.margin)));
        }
        if store.is_empty() {
            return Err(Error::invalid("cannot train embeddings on an empty store"));
        }
        let mut ent = BTreeSet::new();
        let mut rel = BTreeSet::new();
        for t in store.triples() {
            ent.insert(t.head.clone());
            ent.insert(t.tail.clone());
            rel.insert(t.relation.clone());
        }
        let entity_names: Vec<String> = ent.into_iter().collect();
        let relation_names: Vec<String> = rel.into_iter().collect();
        let eid = |n: &str| entity_names.binary_search_by(|x| x.as_str().cmp(n)).unwrap();
        let rid = |n: &str| relation_names.binary_search_by(|x| x.as_str().cmp(n)).unwrap();
        let triples = store
            .triples()
            .iter()
            .map(|t| (eid(&t.head), rid(&t.relation), eid(&t.tail)))
            .collect();

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bound = 6.0 / (cfg.dim as f64).sqrt();
        let init = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| {
                    let mut v: Vec<f64> = (0..cfg.dim).map(|_| rng.gen_range(-bound..bound)).collect();
                    let norm = l2(&v);
                    v.iter_mut().for_each(|x| *x /= norm);
                    v
                })
                .collect()
        };
        let relations = init(relation_names.len(), &mut rng);
        let entities = init(entity_names.len(), &mut rng);
        Ok(Self {
            cfg,
            entity_names,
            relation_names,
            entities,
            relations,
            triples,
            rng,
        })
    }

    fn corrupt(&mut self, (h, r, t): (usize, usize, usize)) -> (usize, usize, usize) {
        let n = self.entities.len();
        let replace_head = self.rng.gen_bool(0.5);
        let mut e = self.rng.gen_range(0..n);
        if n > 1 {
            let orig = if replace_head { h } else { t };
            while e == orig {
                e = self.rng.gen_range(0..n);
            }
        }
        if replace_head {
            (e, r, t)
        } else {
            (h, r, e)
        }
    }

    /// Gradient of `||h + r - t||` with respect to `h + r - t`.
    fn unit_residual(&self, (h, r, t): (usize, usize, usize)) -> (Vec<f64>, f64) {
        let diff: Vec<f64> = (0..self.cfg.dim)
            .map(|k| self.entities[h][k] + self.relations[r][k] - self.entities[t][k])
            .collect();
        let d = l2(&diff);
        let unit = if d > 0.0 {
            diff.iter().map(|x| x / d).collect()
        } else {
            vec![0.0; self.cfg.dim]
        };
        (unit, d)
    }

    /// One shuffled SGD pass; returns the mean hinge loss.
    pub fn epoch(&mut self) -> f64 {
        let mut order: Vec<usize> = (0..self.triples.len()).collect();
        order.shuffle(&mut self.rng);
        let lr = self.cfg.lr;
        let mut total = 0.0;
        for i in order {
            let pos = self.triples[i];
            let neg = self.corrupt(pos);
            let (gp, dp) = self.unit_residual(pos);
            let (gn, dn) = self.unit_residual(neg);
            let loss = self.cfg.margin + dp - dn;
            if loss <= 0.0 {
                continue;
            }
            total += loss;
            for k in 0..self.cfg.dim {
                // descend on d_pos, ascend on d_neg
                self.entities[pos.0][k] -= lr * gp[k];
                self.relations[pos.1][k] -= lr * gp[k];
                self.entities[pos.2][k] += lr * gp[k];
                self.entities[neg.0][k] += lr * gn[k];
                self.relations[neg.1][k] += lr * gn[k];
                self.entities[neg.2][k] -= lr * gn[k];
            }
        }
        for v in &mut self.entities {
            let norm = l2(v);
            if norm > 1.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
        total / self.triples.len() as f64
    }

    pub fn embeddings(&self) -> KgEmbeddings {
        KgEmbeddings {
            dim: self.cfg.dim,
            entities: self
                .entity_names
                .iter()
                .cloned()
                .zip(self.entities.iter().cloned())
                .collect(),
            relations: self
                .relation_names
                .iter()
                .cloned()
                .zip(self.relations.iter().cloned())
                .collect(),
        }
    }
}

pub fn train_transe(store: &TripleStore, cfg: TransEConfig) -> Result<KgEmbeddings> {
    let mut model = TransE::new(store, cfg)?;
    for _ in 0..cfg.epochs {
        model.epoch();
    }
    Ok(model.embeddings())
}
