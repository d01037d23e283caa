use std::time::Instant;

use kabem::corpus::{build_vocab, Dialogue, Labels, SlotSpan, Speaker, Utterance};
use kabem::decoder::{joint_loss, lstm_step, LstmParams, TurnTargets};
use kabem::encoder::{ffn, mha};
use kabem::fusion::{gate_fuse, knowledge_attention, FusionParams};
use kabem::knowledge::{train_transe, KnowledgeTriple, TransEConfig, TripleStore};
use kabem::model::{dialogue_targets, Featurizer, Model, ModelConfig, Variant};
use kabem::numerics::{grad_check, grad_check_params, uniform, xavier, Graph, ParamId, ParamStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn all(store: &ParamStore) -> Vec<ParamId> {
    store.ids().collect()
}

fn mha_check(causal: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let ids = [
        store.add("W^Q", xavier(&mut rng, 6, 4)).unwrap(),
        store.add("W^K", xavier(&mut rng, 6, 4)).unwrap(),
        store.add("W^V", xavier(&mut rng, 6, 4)).unwrap(),
    ];
    let x = uniform(&mut rng, 3, 6, 1.0);
    let probe = uniform(&mut rng, 3, 4, 1.0);
    let params = grad_check_params(&store, &ids, EPS, None, 0, |g, s| {
        let xi = g.constant(x.clone());
        let (q, k, v) = (g.param(s, ids[0]), g.param(s, ids[1]), g.param(s, ids[2]));
        let out = mha(g, xi, xi, xi, q, k, v, 2, 2f64.sqrt(), causal)?;
        let p = g.constant(probe.clone());
        let m = g.mul(out, p)?;
        Ok(g.sum(m))
    })
    .unwrap()
    .max_relative_error;
    let inputs = grad_check(&x, EPS, |g, xi| {
        let (q, k, v) = (
            g.param(&store, ids[0]),
            g.param(&store, ids[1]),
            g.param(&store, ids[2]),
        );
        let out = mha(g, xi, xi, xi, q, k, v, 2, 2f64.sqrt(), causal)?;
        let p = g.constant(probe.clone());
        let m = g.mul(out, p)?;
        Ok(g.sum(m))
    })
    .unwrap();
    params.max(inputs)
}

fn ffn_check() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut store = ParamStore::new();
    let ids = [
        store.add("W1", xavier(&mut rng, 4, 6)).unwrap(),
        store.add("b1", uniform(&mut rng, 1, 6, 0.5)).unwrap(),
        store.add("W2", xavier(&mut rng, 6, 4)).unwrap(),
        store.add("b2", uniform(&mut rng, 1, 4, 0.5)).unwrap(),
    ];
    let x = uniform(&mut rng, 3, 4, 1.0);
    let probe = uniform(&mut rng, 3, 4, 1.0);
    let f = |g: &mut Graph, s: &ParamStore, xi| {
        let p: Vec<_> = ids.iter().map(|&i| g.param(s, i)).collect();
        let out = ffn(g, xi, p[0], p[1], p[2], p[3])?;
        let pr = g.constant(probe.clone());
        let m = g.mul(out, pr)?;
        Ok(g.sum(m))
    };
    let a = grad_check_params(&store, &ids, EPS, None, 0, |g, s| {
        let xi = g.constant(x.clone());
        f(g, s, xi)
    })
    .unwrap()
    .max_relative_error;
    a.max(grad_check(&x, EPS, |g, xi| f(g, &store, xi)).unwrap())
}

fn fusion_setup(seed: u64) -> (ParamStore, FusionParams, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let p = FusionParams::register(&mut store, &mut rng, 6, 4, 5).unwrap();
    store.value_mut(p.b_g)[[0, 0]] = 0.3;
    (store, p, rng)
}

fn knowledge_attention_check() -> f64 {
    let (store, p, mut rng) = fusion_setup(13);
    let h = uniform(&mut rng, 1, 6, 1.0);
    let r = uniform(&mut rng, 3, 4, 1.0);
    let t = uniform(&mut rng, 3, 4, 1.0);
    let probe = uniform(&mut rng, 1, 6, 1.0);
    let ids = [p.wh, p.wr, p.wt, p.v_proj];
    let f = |g: &mut Graph, s: &ParamStore, hi, ri, ti| {
        let a = knowledge_attention(g, s, &p, hi, ri, ti)?;
        let pr = g.constant(probe.clone());
        let m = g.mul(a.v, pr)?;
        Ok(g.sum(m))
    };
    let params = grad_check_params(&store, &ids, EPS, None, 0, |g, s| {
        let (hi, ri, ti) = (g.constant(h.clone()), g.constant(r.clone()), g.constant(t.clone()));
        f(g, s, hi, ri, ti)
    })
    .unwrap()
    .max_relative_error;
    let wrt_h = grad_check(&h, EPS, |g, hi| {
        let (ri, ti) = (g.constant(r.clone()), g.constant(t.clone()));
        f(g, &store, hi, ri, ti)
    })
    .unwrap();
    let wrt_r = grad_check(&r, EPS, |g, ri| {
        let (hi, ti) = (g.constant(h.clone()), g.constant(t.clone()));
        f(g, &store, hi, ri, ti)
    })
    .unwrap();
    params.max(wrt_h).max(wrt_r)
}

fn gate_check() -> f64 {
    let (store, p, mut rng) = fusion_setup(14);
    let h = uniform(&mut rng, 3, 6, 1.0);
    let v = uniform(&mut rng, 3, 6, 1.0);
    let probe = uniform(&mut rng, 3, 6, 1.0);
    let f = |g: &mut Graph, s: &ParamStore, hi, vi| {
        let (out, _) = gate_fuse(g, s, &p, hi, vi)?;
        let pr = g.constant(probe.clone());
        let m = g.mul(out, pr)?;
        Ok(g.sum(m))
    };
    let params = grad_check_params(&store, &[p.w_g, p.b_g], EPS, None, 0, |g, s| {
        let (hi, vi) = (g.constant(h.clone()), g.constant(v.clone()));
        f(g, s, hi, vi)
    })
    .unwrap()
    .max_relative_error;
    let wrt_v = grad_check(&v, EPS, |g, vi| {
        let hi = g.constant(h.clone());
        f(g, &store, hi, vi)
    })
    .unwrap();
    params.max(wrt_v)
}

fn lstm_cell_check() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut store = ParamStore::new();
    let p = LstmParams::register(&mut store, &mut rng, "cell", 4, 3).unwrap();
    let x = uniform(&mut rng, 1, 4, 1.0);
    let h0 = uniform(&mut rng, 1, 3, 0.9);
    let c0 = uniform(&mut rng, 1, 3, 1.0);
    let probe = uniform(&mut rng, 1, 6, 1.0);
    let f = |g: &mut Graph, s: &ParamStore, xi, hi| {
        let (wi, wh, b) = (g.param(s, p.w_ih), g.param(s, p.w_hh), g.param(s, p.b));
        let xp = g.linear(xi, wi, b)?;
        let ci = g.constant(c0.clone());
        let (h, c) = lstm_step(g, xp, hi, ci, wh, 3)?;
        let both = g.concat_cols(&[h, c])?;
        let pr = g.constant(probe.clone());
        let m = g.mul(both, pr)?;
        Ok(g.sum(m))
    };
    let params = grad_check_params(&store, &all(&store), EPS, None, 0, |g, s| {
        let (xi, hi) = (g.constant(x.clone()), g.constant(h0.clone()));
        f(g, s, xi, hi)
    })
    .unwrap()
    .max_relative_error;
    let wrt_h = grad_check(&h0, EPS, |g, hi| {
        let xi = g.constant(x.clone());
        f(g, &store, xi, hi)
    })
    .unwrap();
    params.max(wrt_h)
}

fn joint_loss_check() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let labels = Labels::new(vec!["a".into(), "b".into(), "c".into()], vec!["city".into()]).unwrap();
    let gold = vec![
        TurnTargets::from_labels(
            &labels,
            &["a".to_string(), "c".to_string()].into(),
            &["B-city", "I-city", "O"],
        )
        .unwrap(),
        TurnTargets::from_labels(&labels, &["b".to_string()].into(), &["O", "B-city"]).unwrap(),
    ];
    let acts = uniform(&mut rng, 2, 3, 2.0);
    let s1 = uniform(&mut rng, 3, 3, 2.0);
    let s2 = uniform(&mut rng, 2, 3, 2.0);
    let wrt_acts = grad_check(&acts, EPS, |g, a| {
        let (x, y) = (g.constant(s1.clone()), g.constant(s2.clone()));
        joint_loss(g, a, &[x, y], &gold)
    })
    .unwrap();
    let wrt_slots = grad_check(&s1, EPS, |g, x| {
        let (a, y) = (g.constant(acts.clone()), g.constant(s2.clone()));
        joint_loss(g, a, &[x, y], &gold)
    })
    .unwrap();
    wrt_acts.max(wrt_slots)
}

/// Two turns of at most five tokens with knowledge on some tokens.
fn end_to_end_check() -> f64 {
    let turn = |speaker, text: &str, act: &str, slots| Utterance {
        speaker,
        tokens: text.split_whitespace().map(String::from).collect(),
        acts: [act.to_string()].into(),
        slots,
    };
    let d = Dialogue {
        id: "toy".into(),
        turns: vec![
            turn(
                Speaker::User,
                "cheap comedy in boston",
                "request",
                vec![
                    SlotSpan::new("pricing", 0, 1),
                    SlotSpan::new("genre", 1, 2),
                    SlotSpan::new("city", 3, 4),
                ],
            ),
            turn(
                Speaker::System,
                "is boston ok ?",
                "confirm_question",
                vec![SlotSpan::new("city", 1, 2)],
            ),
        ],
    };
    let store = TripleStore::from_triples([
        KnowledgeTriple::new("comedy", "is a", "genre", 1.0).unwrap(),
        KnowledgeTriple::new("comedy", "related to", "funny", 0.8).unwrap(),
        KnowledgeTriple::new("boston", "is a", "city", 1.0).unwrap(),
        KnowledgeTriple::new("cheap", "related to", "price", 0.6).unwrap(),
    ]);
    let emb = train_transe(
        &store,
        TransEConfig {
            dim: 4,
            epochs: 10,
            ..TransEConfig::default()
        },
    )
    .unwrap();
    let labels = Labels::from_dialogues(std::slice::from_ref(&d)).unwrap();
    let vocab = build_vocab(std::slice::from_ref(&d)).unwrap();
    let cfg = ModelConfig {
        d_model: 8,
        attn_dim: 8,
        heads: 2,
        token_layers: 1,
        context_layers: 1,
        ffn_dim: 8,
        lstm_hidden: 4,
        kg_dim: 4,
        d_a: 4,
        top_m: 3,
        variant: Variant::Full,
        ..ModelConfig::default()
    };
    let model = Model::new(cfg, vocab.len(), labels.acts.len(), labels.tags.len(), 5).unwrap();
    let feat = Featurizer {
        vocab: &vocab,
        knowledge: Some((&store, &emb)),
        top_m: 3,
    };
    let turns = feat.dialogue(&d).unwrap();
    let gold = dialogue_targets(&labels, &d).unwrap();
    grad_check_params(&model.params, &all(&model.params), EPS, Some(6), 0, |g, s| {
        model.loss_with(g, s, &turns, &gold)
    })
    .unwrap()
    .max_relative_error
}

pub fn run() -> Outcome {
    let started = Instant::now();
    let checks: Vec<(&str, f64)> = vec![
        ("MHA", mha_check(false)),
        ("causal MHA", mha_check(true)),
        ("FFN", ffn_check()),
        ("knowledge attention", knowledge_attention_check()),
        ("gate", gate_check()),
        ("LSTM cell", lstm_cell_check()),
        ("BCE+CE joint loss", joint_loss_check()),
        ("end-to-end model", end_to_end_check()),
    ];
    let secs = started.elapsed().as_secs_f64();
    let worst = checks.iter().map(|c| c.1).fold(0.0, f64::max);
    let detail = checks
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    Outcome::new(
        worst < TOL && secs < 120.0,
        format!("max rel err {worst:.2e} (< {TOL:e}) in {secs:.1}s (< 120s): {detail}"),
    )
}
