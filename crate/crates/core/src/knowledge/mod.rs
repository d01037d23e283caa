//! Triple store, word-level retrieval and TransE embeddings.

mod store;
mod transe;

use ndarray::Array2;

pub(crate) use store::parse_line as parse_triple_line;
pub use store::{load_triples, retrieve, KnowledgeTriple, LoadReport, TripleStore};
pub use transe::{train_transe, KgEmbeddings, TransE, TransEConfig};

use crate::numerics::Matrix;

/// Default number of triples retrieved per word.
pub const TOP_M: usize = 5;

/// Relation and tail vectors for one word's retrieved triples, padded to `m` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeRows {
    pub relations: Matrix,
    pub tails: Matrix,
    /// `true` for rows backed by a triple with known embeddings.
    pub mask: Vec<bool>,
    /// Triples dropped because an embedding was missing.
    pub unknown: usize,
}

impl KnowledgeRows {
    pub fn zeros(m: usize, dim: usize) -> Self {
        Self {
            relations: Array2::zeros((m, dim)),
            tails: Array2::zeros((m, dim)),
            mask: vec![false; m],
            unknown: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }
}

/// Packs up to `m` triples into `m × d_k` relation and tail matrices. Missing
/// rows, and rows whose relation or tail has no embedding, stay exactly zero.
pub fn triples_to_vectors(
    triples: &[&KnowledgeTriple],
    embeddings: &KgEmbeddings,
    m: usize,
) -> crate::Result<KnowledgeRows> {
    if m < 1 {
        return Err(crate::Error::invalid("m must be >= 1"));
    }
    let mut rows = KnowledgeRows::zeros(m, embeddings.dim);
    for (j, t) in triples.iter().take(m).enumerate() {
        match (embeddings.relation(&t.relation), embeddings.entity(&t.tail)) {
            (Some(r), Some(tail)) => {
                rows.relations.row_mut(j).assign(&ndarray::ArrayView1::from(r));
                rows.tails.row_mut(j).assign(&ndarray::ArrayView1::from(tail));
                rows.mask[j] = true;
            }
            _ => rows.unknown += 1,
        }
    }
    Ok(rows)
}
