//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Matrix, Var};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn finite(value: f64, coordinate: usize, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite {
            coordinate,
            context: what.to_string(),
        })
    }
}

/// Compares the reverse-mode gradient of `f` at `point` against central
/// differences with step `eps`, returning the maximum relative error
/// `|a - n| / max(1e-8, |a| + |n|)` over all coordinates.
pub fn grad_check<F>(point: &Matrix, eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let eval = |p: &Matrix| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.input(p.clone());
        let y = f(&mut g, x)?;
        Ok(g.scalar(y))
    };

    let mut g = Graph::new();
    let x = g.input(point.clone());
    let y = f(&mut g, x)?;
    finite(g.scalar(y), 0, "function value at the base point")?;
    let grads = g.backward(y)?;
    let zeros = Matrix::zeros(point.dim());
    let analytic = grads.wrt(x).unwrap_or(&zeros);

    let mut worst: f64 = 0.0;
    let mut probe = point.clone();
    for (i, a) in analytic.iter().enumerate() {
        let orig = probe.as_slice().expect("standard layout")[i];
        probe.as_slice_mut().expect("standard layout")[i] = orig + eps;
        let plus = finite(eval(&probe)?, i, "f(x + eps)")?;
        probe.as_slice_mut().expect("standard layout")[i] = orig - eps;
        let minus = finite(eval(&probe)?, i, "f(x - eps)")?;
        probe.as_slice_mut().expect("standard layout")[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        worst = worst.max(relative_error(*a, numeric));
    }
    Ok(worst)
}

/// Outcome of a parameter-level gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub max_relative_error: f64,
    /// Parameter name and flat coordinate of the worst entry.
    pub worst: Option<(String, usize)>,
    pub coordinates_checked: usize,
}

/// Finite-difference check of the gradient of `loss` with respect to stored
/// parameters. When `per_param` is set, at most that many coordinates of each
/// parameter are sampled (seeded); otherwise every coordinate is checked.
pub fn grad_check_params<F>(
    store: &ParamStore,
    ids: &[ParamId],
    eps: f64,
    per_param: Option<usize>,
    seed: u64,
    loss: F,
) -> Result<ParamCheck>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let y = loss(&mut g, store)?;
    finite(g.scalar(y), 0, "loss at the base point")?;
    let grads = g.backward(y)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = store.clone();
    let mut out = ParamCheck {
        max_relative_error: 0.0,
        worst: None,
        coordinates_checked: 0,
    };
    for &id in ids {
        let n = store.value(id).len();
        let coords: Vec<usize> = match per_param {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        let zeros = Matrix::zeros(store.value(id).dim());
        let analytic = grads.param(id).unwrap_or(&zeros);
        for c in coords {
            let orig = store.value(id).as_slice().expect("standard layout")[c];
            let mut eval_at = |v: f64| -> Result<f64> {
                probe.value_mut(id).as_slice_mut().expect("standard layout")[c] = v;
                let mut g = Graph::new();
                let y = loss(&mut g, &probe)?;
                finite(g.scalar(y), c, store.name(id))
            };
            let plus = eval_at(orig + eps)?;
            let minus = eval_at(orig - eps)?;
            eval_at(orig)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.as_slice().expect("standard layout")[c];
            let err = relative_error(a, numeric);
            out.coordinates_checked += 1;
            if err > out.max_relative_error || out.worst.is_none() {
                out.max_relative_error = out.max_relative_error.max(err);
                out.worst = Some((store.name(id).to_string(), c));
            }
        }
    }
    Ok(out)
}
