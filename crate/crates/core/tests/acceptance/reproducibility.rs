use std::fs;
use std::path::Path;

use kabem::corpus::{generate_synthetic, save_dialogues, GenConfig};
use kabem::knowledge::{train_transe, TransEConfig, TripleStore};
use kabem::trainer::{train, TrainConfig};

use crate::Outcome;

fn small_gen() -> GenConfig {
    GenConfig {
        train_dialogues: 24,
        test_dialogues: 6,
        ..GenConfig::default()
    }
}

/// Writes every generated artifact under `dir` and returns the file bytes.
fn generate_into(dir: &Path, seed: u64) -> Vec<(String, Vec<u8>)> {
    let c = generate_synthetic(&GenConfig::default(), seed).expect("corpus");
    save_dialogues(&c.train, &dir.join("train.jsonl")).unwrap();
    save_dialogues(&c.test, &dir.join("test.jsonl")).unwrap();
    TripleStore::from_triples(c.triples)
        .save(&dir.join("triples.tsv"))
        .unwrap();
    fs::write(dir.join("phenomena.json"), serde_json::to_vec(&c.phenomena).unwrap()).unwrap();
    ["train.jsonl", "test.jsonl", "triples.tsv", "phenomena.json"]
        .iter()
        .map(|f| (f.to_string(), fs::read(dir.join(f)).unwrap()))
        .collect()
}

fn train_once(dir: &Path, name: &str) -> Vec<u8> {
    let c = generate_synthetic(&small_gen(), 7).expect("corpus");
    let store = TripleStore::from_triples(c.triples.clone());
    let mut cfg = TrainConfig {
        seed: 7,
        epochs: 3,
        ..TrainConfig::default()
    };
    cfg.model.d_model = 16;
    cfg.model.attn_dim = 16;
    cfg.model.ffn_dim = 32;
    cfg.model.lstm_hidden = 16;
    cfg.model.kg_dim = 8;
    cfg.checkpoint = Some(dir.join(name));
    let emb = train_transe(
        &store,
        TransEConfig {
            dim: 8,
            epochs: 20,
            seed: 7,
            ..TransEConfig::default()
        },
    )
    .unwrap();
    train(&c.train, &c.labels, &store, &emb, &cfg).expect("training");
    fs::read(dir.join(name)).unwrap()
}

pub fn run() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    let first = generate_into(&a, 0);
    let second = generate_into(&b, 0);
    let corpus_same = first == second;

    let c1 = train_once(tmp.path(), "one.ckpt");
    let c2 = train_once(tmp.path(), "two.ckpt");
    let ckpt_same = c1 == c2 && !c1.is_empty();
    Outcome::new(
        corpus_same && ckpt_same,
        format!(
            "generated corpus files identical: {corpus_same} ({} files, {} bytes); checkpoints identical: {ckpt_same} ({} bytes)",
            first.len(),
            first.iter().map(|f| f.1.len()).sum::<usize>(),
            c1.len()
        ),
    )
}
