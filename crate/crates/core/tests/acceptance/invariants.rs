use std::collections::BTreeSet;

use kabem::corpus::{build_vocab, generate_synthetic, is_valid_bio, repair_bio, GenConfig, Labels, SyntheticCorpus};
use kabem::decoder::{lstm_run, predict, LstmParams};
use kabem::encoder::{AttnShape, ContextEncoder, ScaleMode};
use kabem::fusion::{fuse_utterance, knowledge_attention, FusionParams};
use kabem::knowledge::{train_transe, KgEmbeddings, KnowledgeRows, TransEConfig, TripleStore};
use kabem::metrics::{act_accuracy, slot_f1};
use kabem::model::{Featurizer, Model, ModelConfig, Variant};
use kabem::numerics::{uniform, Graph, ParamStore};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

fn small_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        d_model: 16,
        attn_dim: 16,
        heads: 2,
        token_layers: 1,
        context_layers: 2,
        ffn_dim: 16,
        lstm_hidden: 8,
        kg_dim: 8,
        d_a: 8,
        top_m: 5,
        scale_mode: ScaleMode::PerHead,
        variant,
    }
}

struct Fixture {
    corpus: SyntheticCorpus,
    store: TripleStore,
    emb: KgEmbeddings,
}

fn fixture() -> Fixture {
    let cfg = GenConfig {
        train_dialogues: 12,
        test_dialogues: 4,
        ..GenConfig::default()
    };
    let corpus = generate_synthetic(&cfg, 3).expect("corpus");
    let store = TripleStore::from_triples(corpus.triples.clone());
    let emb = train_transe(
        &store,
        TransEConfig {
            dim: 8,
            epochs: 5,
            ..TransEConfig::default()
        },
    )
    .expect("transe");
    Fixture { corpus, store, emb }
}

/// Failure messages collected by the checks below.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    counted: usize,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.counted += 1;
        if !ok && self.failures.len() < 5 {
            self.failures.push(what());
        }
    }
}

fn context_causality(c: &mut Checks) {
    let shape = AttnShape {
        d_model: 8,
        attn_dim: 8,
        heads: 2,
        ffn_dim: 8,
        scale_mode: ScaleMode::PerHead,
    };
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let enc = ContextEncoder::register(&mut store, &mut rng, 2, shape).unwrap();
        let n = rng.gen_range(2..=6);
        let h = uniform(&mut rng, n, 8, 1.0);
        let cut = rng.gen_range(1..n);
        let mut h2 = h.clone();
        for i in cut..n {
            for j in 0..8 {
                h2[[i, j]] += rng.gen_range(-5.0..5.0);
            }
        }
        let run = |h: &Array2<f64>| {
            let mut g = Graph::new();
            let x = g.constant(h.clone());
            let out = enc.forward(&mut g, &store, x).unwrap();
            g.value(out).clone()
        };
        let (a, b) = (run(&h), run(&h2));
        let same = (0..cut).all(|i| a.row(i).iter().zip(b.row(i)).all(|(x, y)| x.to_bits() == y.to_bits()));
        c.check(same, || {
            format!("context encoder row < {cut} changed after perturbing later rows (seed {seed})")
        });
    }
}

fn model_causality(c: &mut Checks, fx: &Fixture) {
    let vocab = build_vocab(&fx.corpus.train).unwrap();
    let labels = &fx.corpus.labels;
    for variant in Variant::ALL {
        let cfg = small_config(variant);
        let model = Model::new(cfg, vocab.len(), labels.acts.len(), labels.tags.len(), 11).unwrap();
        let feat = Featurizer {
            vocab: &vocab,
            knowledge: Some((&fx.store, &fx.emb)),
            top_m: cfg.top_m,
        };
        for d in fx.corpus.test.iter().filter(|d| d.turns.len() >= 2) {
            let turns = feat.dialogue(d).unwrap();
            let mut changed = d.clone();
            let last = changed.turns.last_mut().unwrap();
            last.tokens = vec!["zzz".into(), "boston".into(), "again".into()];
            let turns2 = feat.dialogue(&changed).unwrap();
            let logits = |t: &[kabem::model::EncodedTurn]| {
                let mut g = Graph::new();
                let out = model.forward(&mut g, t).unwrap();
                let acts = g.value(out.act_logits).clone();
                let slots: Vec<_> = out.slot_logits.iter().map(|&s| g.value(s).clone()).collect();
                (acts, slots)
            };
            let (a1, s1) = logits(&turns);
            let (a2, s2) = logits(&turns2);
            let n = d.turns.len();
            let acts_same =
                (0..n - 1).all(|i| a1.row(i).iter().zip(a2.row(i)).all(|(x, y)| x.to_bits() == y.to_bits()));
            let slots_same = (0..n - 1).all(|i| s1[i] == s2[i]);
            c.check(acts_same && slots_same, || {
                format!(
                    "{variant}: earlier-turn logits changed when the last turn of {} changed",
                    d.id
                )
            });
        }
    }
}

fn attention_simplex_and_gates(c: &mut Checks, fx: &Fixture) {
    let vocab = build_vocab(&fx.corpus.train).unwrap();
    let labels = &fx.corpus.labels;
    let cfg = small_config(Variant::Full);
    for seed in 0..3u64 {
        let model = Model::new(cfg, vocab.len(), labels.acts.len(), labels.tags.len(), seed).unwrap();
        let feat = Featurizer {
            vocab: &vocab,
            knowledge: Some((&fx.store, &fx.emb)),
            top_m: cfg.top_m,
        };
        for d in &fx.corpus.test {
            let turns = feat.dialogue(d).unwrap();
            let mut g = Graph::new();
            let out = model.forward(&mut g, &turns).unwrap();
            for (alphas, gates) in &out.knowledge {
                for a in alphas.iter().flatten() {
                    let a = g.value(*a);
                    let sum: f64 = a.iter().sum();
                    c.check((sum - 1.0).abs() <= 1e-9 && a.iter().all(|&x| x >= 0.0), || {
                        format!(
                            "alpha not on the simplex: sum {sum}, min {}",
                            a.iter().cloned().fold(f64::INFINITY, f64::min)
                        )
                    });
                }
                for &gv in g.value(*gates).iter() {
                    c.check(gv > 0.0 && gv < 1.0, || format!("gate {gv} outside (0, 1)"));
                }
            }
            for turn in model.explain(&feat, d).unwrap() {
                for tok in turn {
                    if tok.triples.is_empty() {
                        c.check(tok.padding_alpha == Some(1.0 / cfg.top_m as f64), || {
                            format!("KB-absent token {} reports {:?}", tok.token, tok.padding_alpha)
                        });
                    }
                }
            }
        }
    }
}

fn zero_triples(c: &mut Checks) {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, dk, m) = (rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=6));
        let mut store = ParamStore::new();
        let p = FusionParams::register(&mut store, &mut rng, d, dk, 4).unwrap();
        let h = uniform(&mut rng, 1, d, 2.0);
        let mut g = Graph::new();
        let hi = g.constant(h.clone());
        let r = g.constant(Array2::zeros((m, dk)));
        let t = g.constant(Array2::zeros((m, dk)));
        let a = knowledge_attention(&mut g, &store, &p, hi, r, t).unwrap();
        let uniform_alpha = g.value(a.alpha).iter().all(|&x| x == 1.0 / m as f64);
        let zero_v = g.value(a.v).iter().all(|&x| x == 0.0);
        c.check(uniform_alpha && zero_v, || {
            format!("zero triples (seed {seed}) gave non-uniform alpha or nonzero v")
        });

        // The fused path for an empty token must match gating with v = 0.
        let tokens = g.constant(h.clone());
        let fused = fuse_utterance(&mut g, &store, &p, tokens, &[KnowledgeRows::zeros(m, dk)]).unwrap();
        let gate = g.value(fused.gates)[[0, 0]];
        let expect: Vec<f64> = h.iter().map(|x| gate * x).collect();
        let got: Vec<f64> = g.value(fused.h_k).iter().copied().collect();
        c.check(fused.alphas[0].is_none() && got == expect, || {
            format!("empty token fusion differs from g*h (seed {seed})")
        });
    }
}

fn predictions_are_valid_bio(c: &mut Checks, fx: &Fixture) {
    let vocab = build_vocab(&fx.corpus.train).unwrap();
    let labels = &fx.corpus.labels;
    for variant in Variant::ALL {
        let cfg = small_config(variant);
        let model = Model::new(cfg, vocab.len(), labels.acts.len(), labels.tags.len(), 5).unwrap();
        let feat = Featurizer {
            vocab: &vocab,
            knowledge: variant.uses_knowledge().then_some((&fx.store, &fx.emb)),
            top_m: cfg.top_m,
        };
        for d in &fx.corpus.test {
            let preds = model.predict(labels, &feat.dialogue(d).unwrap(), 0.5).unwrap();
            for (u, p) in d.turns.iter().zip(&preds) {
                c.check(
                    p.tags.len() == u.tokens.len() && is_valid_bio(&p.tags) && !p.acts.is_empty(),
                    || format!("{variant}: invalid prediction {:?}", p.tags),
                );
            }
        }
    }
    let small = Labels::new(vec!["a".into(), "b".into(), "c".into()], vec!["x".into(), "y".into()]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..300 {
        let len = rng.gen_range(1..=10);
        let slots = uniform(&mut rng, len, small.tags.len(), 4.0);
        let acts: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let p = predict(&small, &acts, &slots, 0.5).unwrap();
        c.check(
            is_valid_bio(&p.tags) && p.tags.len() == len && !p.acts.is_empty(),
            || format!("random logits decoded to {:?}", p.tags),
        );
    }
}

/// Predicted tags, gold tags, predicted acts, gold acts.
type Row = (Vec<String>, Vec<String>, BTreeSet<String>, BTreeSet<String>);
type Suite<'a> = (&'static str, &'a dyn Fn(&mut Checks));

fn metric_permutations(c: &mut Checks) {
    let tags = ["O", "B-x", "I-x", "B-y", "I-y"];
    let acts = ["a", "b", "c"];
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=15);
        let mut rows: Vec<Row> = (0..n)
            .map(|_| {
                let len = rng.gen_range(1..=6);
                let mut draw = || repair_bio(&(0..len).map(|_| tags[rng.gen_range(0..5)]).collect::<Vec<_>>());
                let (p, g) = (draw(), draw());
                let pa = [acts[rng.gen_range(0..3)].to_string()].into();
                let ga = [acts[rng.gen_range(0..3)].to_string()].into();
                (p, g, pa, ga)
            })
            .collect();
        let score = |rows: &[Row]| {
            let p: Vec<_> = rows.iter().map(|r| r.0.clone()).collect();
            let g: Vec<_> = rows.iter().map(|r| r.1.clone()).collect();
            let pa: Vec<_> = rows.iter().map(|r| r.2.clone()).collect();
            let ga: Vec<_> = rows.iter().map(|r| r.3.clone()).collect();
            let s = slot_f1(&p, &g).unwrap().overall;
            (s.precision, s.recall, s.f1, act_accuracy(&pa, &ga).unwrap())
        };
        let before = score(&rows);
        rows.shuffle(&mut rng);
        let after = score(&rows);
        c.check(before == after, || {
            format!("metrics changed under permutation: {before:?} vs {after:?}")
        });
    }
}

fn lstm_bounded(c: &mut Checks) {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (input, hidden, steps) = (rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=12));
        let mut store = ParamStore::new();
        let p = LstmParams::register(&mut store, &mut rng, "l", input, hidden).unwrap();
        let mut g = Graph::new();
        let x = g.constant(uniform(&mut rng, steps, input, 3.0));
        let h0 = g.constant(uniform(&mut rng, 1, hidden, 0.99));
        for reverse in [false, true] {
            let out = lstm_run(&mut g, &store, &p, x, h0, reverse).unwrap();
            let bounded = g.value(out).iter().all(|v| v.abs() < 1.0);
            c.check(bounded, || format!("LSTM hidden state left (-1, 1) (seed {seed})"));
        }
    }
}

pub fn run() -> Outcome {
    let fx = fixture();
    let mut results = Vec::new();
    let suites: [Suite; 7] = [
        ("context causality", &context_causality),
        ("model causality", &|c| model_causality(c, &fx)),
        ("attention simplex and gate range", &|c| {
            attention_simplex_and_gates(c, &fx)
        }),
        ("zero triples", &zero_triples),
        ("valid BIO", &|c| predictions_are_valid_bio(c, &fx)),
        ("metric permutation", &metric_permutations),
        ("LSTM bound", &lstm_bounded),
    ];
    let mut ok = true;
    for (name, f) in suites {
        let mut c = Checks::default();
        f(&mut c);
        ok &= c.failures.is_empty() && c.counted > 0;
        if c.failures.is_empty() {
            results.push(format!("{name} {} ok", c.counted));
        } else {
            results.push(format!("{name} FAILED: {}", c.failures.join("; ")));
        }
    }
    Outcome::new(ok, results.join(", "))
}
