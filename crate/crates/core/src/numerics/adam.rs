use ndarray::{Array2, Zip};

use super::graph::Matrix;
use super::params::{ParamGrads, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Matrix>,
    pub second_moment: Vec<Matrix>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Matrix> = store.iter().map(|(_, _, v)| Array2::zeros(v.dim())).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam step over every parameter in `store`.
///
/// Gradients are validated before anything is written, so a refused update
/// leaves both the parameters and the optimiser state untouched.
pub fn adam_update(store: &mut ParamStore, grads: &ParamGrads, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if cfg.lr.is_nan() || cfg.lr <= 0.0 {
        return Err(Error::invalid(format!("learning rate must be > 0, got {}", cfg.lr)));
    }
    if grads.as_slice().len() != store.len() || state.first_moment.len() != store.len() {
        return Err(Error::shape(
            "adam_update",
            format!(
                "{} params, {} grads, {} moments",
                store.len(),
                grads.as_slice().len(),
                state.first_moment.len()
            ),
        ));
    }
    for (id, name, value) in store.iter() {
        let g = grads.get(id);
        if g.dim() != value.dim() {
            return Err(Error::shape(
                "adam_update",
                format!("{name}: param {:?} grad {:?}", value.dim(), g.dim()),
            ));
        }
        if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                coordinate: pos,
                context: format!("gradient of {name}"),
            });
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let i = id.index();
        let g = grads.get(id);
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        Zip::from(store.value_mut(id))
            .and(m)
            .and(v)
            .and(g)
            .for_each(|p, m, v, &g| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            });
    }
    Ok(())
}
