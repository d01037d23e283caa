use std::collections::BTreeSet;

use kabem::corpus::repair_bio;
use kabem::decoder::{lstm_step, LstmParams};
use kabem::encoder::mha;
use kabem::fusion::{gate_fuse, knowledge_attention, FusionParams};
use kabem::metrics::{act_accuracy, slot_f1};
use kabem::numerics::{uniform, Graph, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::oracles::{self, max_abs_diff, to_mat};
use crate::Outcome;

const PER_SEED: usize = 10;
const TOL: f64 = 1e-12;

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(1..=5)
}

fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let (r, c) = store.value(id).dim();
        *store.value_mut(id) = uniform(rng, r, c, 1.5);
    }
}

fn mha_case(rng: &mut ChaCha8Rng) -> f64 {
    let heads = rng.gen_range(1..=2);
    let width = heads * rng.gen_range(1..=2);
    let (n, m, d) = (dim(rng), dim(rng), dim(rng));
    let causal = rng.gen_bool(0.5);
    let m = if causal { n } else { m };
    let q_in = uniform(rng, n, d, 1.0);
    let kv_in = uniform(rng, m, d, 1.0);
    let ws: Vec<_> = (0..3).map(|_| uniform(rng, d, width, 1.0)).collect();
    let scale = rng.gen_range(0.5..3.0);
    let mut g = Graph::new();
    let (q, kv) = (g.constant(q_in.clone()), g.constant(kv_in.clone()));
    let w: Vec<_> = ws.iter().map(|w| g.constant(w.clone())).collect();
    let out = mha(&mut g, q, kv, kv, w[0], w[1], w[2], heads, scale, causal).unwrap();
    let expect = oracles::mha(
        &to_mat(&q_in),
        &to_mat(&kv_in),
        &to_mat(&kv_in),
        &to_mat(&ws[0]),
        &to_mat(&ws[1]),
        &to_mat(&ws[2]),
        heads,
        scale,
        causal,
    );
    max_abs_diff(&to_mat(g.value(out)), &expect)
}

fn knowledge_case(rng: &mut ChaCha8Rng) -> f64 {
    let (d, dk, da, m) = (dim(rng), dim(rng), dim(rng), dim(rng));
    let mut store = ParamStore::new();
    let p = FusionParams::register(&mut store, rng, d, dk, da).unwrap();
    randomize(&mut store, rng);
    let h = uniform(rng, 1, d, 1.0);
    let r = uniform(rng, m, dk, 1.0);
    let t = uniform(rng, m, dk, 1.0);
    let mut g = Graph::new();
    let (hi, ri, ti) = (g.constant(h.clone()), g.constant(r.clone()), g.constant(t.clone()));
    let a = knowledge_attention(&mut g, &store, &p, hi, ri, ti).unwrap();
    let (alpha, v) = oracles::knowledge_attention(
        &to_mat(&h)[0],
        &to_mat(&r),
        &to_mat(&t),
        &to_mat(store.value(p.wh)),
        &to_mat(store.value(p.wr)),
        &to_mat(store.value(p.wt)),
        &to_mat(store.value(p.v_proj)),
    );
    max_abs_diff(&to_mat(g.value(a.alpha)), &vec![alpha]).max(max_abs_diff(&to_mat(g.value(a.v)), &vec![v]))
}

fn gate_case(rng: &mut ChaCha8Rng) -> f64 {
    let (n, d) = (dim(rng), dim(rng));
    let mut store = ParamStore::new();
    let p = FusionParams::register(&mut store, rng, d, 2, 2).unwrap();
    randomize(&mut store, rng);
    let h = uniform(rng, n, d, 1.0);
    let v = uniform(rng, n, d, 1.0);
    let mut g = Graph::new();
    let (hi, vi) = (g.constant(h.clone()), g.constant(v.clone()));
    let (out, gates) = gate_fuse(&mut g, &store, &p, hi, vi).unwrap();
    let wg: Vec<f64> = store.value(p.w_g).iter().copied().collect();
    let bg = store.value(p.b_g)[[0, 0]];
    let (hm, vm) = (to_mat(&h), to_mat(&v));
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let (row, gi) = oracles::gate(&hm[i], &vm[i], &wg, bg);
        worst = worst.max((g.value(gates)[[i, 0]] - gi).abs());
        worst = worst.max(max_abs_diff(&vec![g.value(out).row(i).to_vec()], &vec![row]));
    }
    worst
}

fn lstm_case(rng: &mut ChaCha8Rng) -> f64 {
    let (input, hidden) = (dim(rng), dim(rng));
    let mut store = ParamStore::new();
    let p = LstmParams::register(&mut store, rng, "cell", input, hidden).unwrap();
    randomize(&mut store, rng);
    let x = uniform(rng, 1, input, 1.0);
    let h = uniform(rng, 1, hidden, 1.0);
    let c = uniform(rng, 1, hidden, 1.0);
    let mut g = Graph::new();
    let (xi, hi, ci) = (g.constant(x.clone()), g.constant(h.clone()), g.constant(c.clone()));
    let (wi, wh, b) = (g.param(&store, p.w_ih), g.param(&store, p.w_hh), g.param(&store, p.b));
    let xp = g.linear(xi, wi, b).unwrap();
    let (h2, c2) = lstm_step(&mut g, xp, hi, ci, wh, hidden).unwrap();
    let (eh, ec) = oracles::lstm_cell(
        &to_mat(&x)[0],
        &to_mat(&h)[0],
        &to_mat(&c)[0],
        &to_mat(store.value(p.w_ih)),
        &to_mat(store.value(p.w_hh)),
        &to_mat(store.value(p.b))[0],
    );
    max_abs_diff(&to_mat(g.value(h2)), &vec![eh]).max(max_abs_diff(&to_mat(g.value(c2)), &vec![ec]))
}

const SLOTS: [&str; 3] = ["city", "date", "genre"];

fn random_tags(rng: &mut ChaCha8Rng, len: usize) -> Vec<String> {
    let raw: Vec<String> = (0..len)
        .map(|_| match rng.gen_range(0..3) {
            0 => "O".to_string(),
            1 => format!("B-{}", SLOTS[rng.gen_range(0..3)]),
            _ => format!("I-{}", SLOTS[rng.gen_range(0..3)]),
        })
        .collect();
    repair_bio(&raw)
}

/// Returns whether library and oracle agree exactly.
fn metrics_case(rng: &mut ChaCha8Rng) -> bool {
    let n = rng.gen_range(1..=12);
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    let mut pa = Vec::new();
    let mut ga = Vec::new();
    let acts = ["inform", "request", "confirm", "deny"];
    let pick = |rng: &mut ChaCha8Rng| -> BTreeSet<String> {
        let k = rng.gen_range(1..=2);
        (0..k).map(|_| acts[rng.gen_range(0..acts.len())].to_string()).collect()
    };
    for _ in 0..n {
        let len = rng.gen_range(1..=8);
        let gold = random_tags(rng, len);
        let pred = if rng.gen_bool(0.4) {
            gold.clone()
        } else {
            random_tags(rng, len)
        };
        preds.push(pred);
        golds.push(gold);
        let g = pick(rng);
        pa.push(if rng.gen_bool(0.5) { g.clone() } else { pick(rng) });
        ga.push(g);
    }
    let lib = slot_f1(&preds, &golds).unwrap().overall;
    let (p, r, f) = oracles::slot_prf(&preds, &golds);
    let acc = act_accuracy(&pa, &ga).unwrap();
    lib.precision == p && lib.recall == r && lib.f1 == f && acc == oracles::act_accuracy(&pa, &ga)
}

pub fn run() -> Outcome {
    let mut worst = [0.0f64; 4];
    let mut metric_mismatches = 0;
    let mut instances = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..PER_SEED {
            worst[0] = worst[0].max(mha_case(&mut rng));
            worst[1] = worst[1].max(knowledge_case(&mut rng));
            worst[2] = worst[2].max(gate_case(&mut rng));
            worst[3] = worst[3].max(lstm_case(&mut rng));
            if !metrics_case(&mut rng) {
                metric_mismatches += 1;
            }
            instances += 1;
        }
    }
    let ok = worst.iter().all(|&w| w <= TOL) && metric_mismatches == 0;
    Outcome::new(
        ok,
        format!(
            "{instances} instances per op over seeds 0-9; max abs diff MHA {:.1e}, knowledge attention {:.1e}, \
             gate {:.1e}, LSTM cell {:.1e} (<= {TOL:e}); slot F1 / act accuracy exact mismatches {metric_mismatches}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}
