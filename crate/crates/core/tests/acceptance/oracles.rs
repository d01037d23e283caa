//! Naive scalar-loop reference implementations. Nothing here calls into the
//! library's numerics; matrices are plain nested vectors.

use std::collections::BTreeSet;

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(m: &ndarray::Array2<f64>) -> Mat {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-head attention with explicit score loops; heads concatenated.
#[allow(clippy::too_many_arguments)]
pub fn mha(
    q_in: &Mat,
    k_in: &Mat,
    v_in: &Mat,
    wq: &Mat,
    wk: &Mat,
    wv: &Mat,
    heads: usize,
    scale: f64,
    causal: bool,
) -> Mat {
    let (q, k, v) = (matmul(q_in, wq), matmul(k_in, wk), matmul(v_in, wv));
    let width = wq[0].len();
    let dh = width / heads;
    let mut out = vec![vec![0.0; width]; q.len()];
    for h in 0..heads {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..q.len() {
            let visible = if causal { i + 1 } else { k.len() };
            let scores: Vec<f64> = (0..visible)
                .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / scale)
                .collect();
            let w = softmax(&scores);
            for c in cols.clone() {
                out[i][c] = (0..visible).map(|j| w[j] * v[j][c]).sum();
            }
        }
    }
    out
}

/// Returns `(alpha, v)` for one token.
pub fn knowledge_attention(
    h: &[f64],
    r: &Mat,
    t: &Mat,
    wh: &Mat,
    wr: &Mat,
    wt: &Mat,
    vproj: &Mat,
) -> (Vec<f64>, Vec<f64>) {
    let d_a = wh[0].len();
    let q: Vec<f64> = (0..d_a).map(|a| (0..h.len()).map(|i| h[i] * wh[i][a]).sum()).collect();
    let mut beta = Vec::with_capacity(r.len());
    for j in 0..r.len() {
        let mut s = 0.0;
        for a in 0..d_a {
            let rk: f64 = (0..r[j].len()).map(|i| r[j][i] * wr[i][a]).sum();
            let tk: f64 = (0..t[j].len()).map(|i| t[j][i] * wt[i][a]).sum();
            s += q[a] * (rk + tk).tanh();
        }
        beta.push(s);
    }
    let alpha = softmax(&beta);
    let dk = r[0].len();
    let mut mixed = vec![0.0; 2 * dk];
    for j in 0..r.len() {
        for i in 0..dk {
            mixed[i] += alpha[j] * r[j][i];
            mixed[dk + i] += alpha[j] * t[j][i];
        }
    }
    let d = vproj[0].len();
    let v = (0..d)
        .map(|c| (0..2 * dk).map(|i| mixed[i] * vproj[i][c]).sum())
        .collect();
    (alpha, v)
}

/// Returns `(h', g)` for one token.
pub fn gate(h: &[f64], v: &[f64], wg: &[f64], bg: f64) -> (Vec<f64>, f64) {
    let z: f64 = h.iter().chain(v).zip(wg).map(|(a, w)| a * w).sum::<f64>() + bg;
    let g = sigmoid(z);
    (h.iter().zip(v).map(|(a, b)| g * a + (1.0 - g) * b).collect(), g)
}

/// One LSTM step with gate blocks ordered input, forget, candidate, output.
pub fn lstm_cell(x: &[f64], h: &[f64], c: &[f64], w_ih: &Mat, w_hh: &Mat, b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let hidden = h.len();
    let z: Vec<f64> = (0..4 * hidden)
        .map(|k| {
            b[k] + (0..x.len()).map(|i| x[i] * w_ih[i][k]).sum::<f64>()
                + (0..hidden).map(|i| h[i] * w_hh[i][k]).sum::<f64>()
        })
        .collect();
    let mut h2 = vec![0.0; hidden];
    let mut c2 = vec![0.0; hidden];
    for u in 0..hidden {
        let i = sigmoid(z[u]);
        let f = sigmoid(z[hidden + u]);
        let g = z[2 * hidden + u].tanh();
        let o = sigmoid(z[3 * hidden + u]);
        c2[u] = f * c[u] + i * g;
        h2[u] = o * c2[u].tanh();
    }
    (h2, c2)
}

pub fn act_accuracy(preds: &[BTreeSet<String>], golds: &[BTreeSet<String>]) -> f64 {
    let mut hits = 0usize;
    for i in 0..golds.len() {
        let same = preds[i].len() == golds[i].len() && preds[i].iter().all(|a| golds[i].contains(a));
        if same {
            hits += 1;
        }
    }
    hits as f64 / golds.len() as f64
}

/// `(name, start, end)` spans from a valid BIO sequence.
pub fn spans(tags: &[String]) -> Vec<(String, usize, usize)> {
    let mut out: Vec<(String, usize, usize)> = Vec::new();
    for (i, t) in tags.iter().enumerate() {
        if let Some(name) = t.strip_prefix("B-") {
            out.push((name.to_string(), i, i + 1));
        } else if t.starts_with("I-") {
            out.last_mut().expect("valid BIO").2 = i + 1;
        }
    }
    out
}

/// Brute-force micro P/R/F1: every predicted span is compared with every
/// gold span of its utterance.
pub fn slot_prf(preds: &[Vec<String>], golds: &[Vec<String>]) -> (f64, f64, f64) {
    let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (p, g) in preds.iter().zip(golds) {
        let (ps, gs) = (spans(p), spans(g));
        np += ps.len();
        ng += gs.len();
        for s in &ps {
            if gs.iter().any(|x| x == s) {
                tp += 1;
            }
        }
    }
    let p = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
    let r = if ng == 0 { 0.0 } else { tp as f64 / ng as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    let mut m: f64 = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(rb) {
            m = m.max((x - y).abs());
        }
    }
    m
}
