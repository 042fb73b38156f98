//! GRU cell. The candidate activation is the logistic function under
//! [`GateVariant::Paper`] and tanh under [`GateVariant::Standard`]. The
//! gates carry no bias terms. The candidate reads the previous state
//! through the reset gate; the update gate mixes it with the previous
//! state.

use crate::numerics::{hadamard, sigmoid_vec, Activation, Rng};

use super::{GateVariant, GateWeights, TensorSet};

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub reset: GateWeights,
    pub update: GateWeights,
    pub cand: GateWeights,
}

impl GruParams {
    pub fn new(hidden: usize, input_dim: usize, rng: &Rng, label: &str) -> Self {
        GruParams {
            reset: GateWeights::new(hidden, input_dim, false, rng, &format!("{label}.reset")),
            update: GateWeights::new(hidden, input_dim, false, rng, &format!("{label}.update")),
            cand: GateWeights::new(hidden, input_dim, false, rng, &format!("{label}.cand")),
        }
    }

    pub fn zeros(hidden: usize, input_dim: usize) -> Self {
        GruParams {
            reset: GateWeights::zeros(hidden, input_dim, false),
            update: GateWeights::zeros(hidden, input_dim, false),
            cand: GateWeights::zeros(hidden, input_dim, false),
        }
    }

    pub fn zeros_like(&self) -> Self {
        GruParams::zeros(self.hidden(), self.input_dim())
    }

    pub fn hidden(&self) -> usize {
        self.reset.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.reset.input_dim()
    }

    fn cand_activation(variant: GateVariant) -> Activation {
        match variant {
            GateVariant::Paper => Activation::Sigmoid,
            GateVariant::Standard => Activation::Tanh,
        }
    }
}

impl TensorSet for GruParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(6);
        for (gate, prefix) in [
            (&self.reset, "reset"),
            (&self.update, "update"),
            (&self.cand, "cand"),
        ] {
            for (name, t) in gate.tensors() {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(6);
        for (gate, prefix) in [
            (&mut self.reset, "reset"),
            (&mut self.update, "update"),
            (&mut self.cand, "cand"),
        ] {
            for (name, t) in gate.tensors_mut() {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub reset: Vec<f64>,
    pub update: Vec<f64>,
    pub reset_h: Vec<f64>,
    pub cand: Vec<f64>,
}

/// One GRU step; returns (h_t, cache).
/// h_t = (1-z) * h_prev + z * cand, with the candidate computed from the
/// reset-scaled previous state.
pub fn gru_step(
    p: &GruParams,
    x: &[f64],
    h_prev: &[f64],
    variant: GateVariant,
) -> (Vec<f64>, GruCache) {
    assert!(
        x.len() == p.input_dim() && h_prev.len() == p.hidden(),
        "contract violation: gru_step shapes"
    );
    let reset = sigmoid_vec(&p.reset.preact(x, h_prev));
    let update = sigmoid_vec(&p.update.preact(x, h_prev));
    let reset_h = hadamard(&reset, h_prev);
    let cand = GruParams::cand_activation(variant).apply(&p.cand.preact(x, &reset_h));
    let h: Vec<f64> = (0..p.hidden())
        .map(|k| (1.0 - update[k]) * h_prev[k] + update[k] * cand[k])
        .collect();
    let cache = GruCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        reset,
        update,
        reset_h,
        cand,
    };
    (h, cache)
}

pub(super) fn gru_step_backward_into(
    p: &GruParams,
    cache: &GruCache,
    d_h: &[f64],
    variant: GateVariant,
    grads: &mut GruParams,
) -> (Vec<f64>, Vec<f64>) {
    let hidden = p.hidden();
    assert!(
        cache.x.len() == p.input_dim() && cache.h_prev.len() == hidden,
        "contract violation: cache does not match gru params"
    );
    assert_eq!(d_h.len(), hidden, "contract violation: d_h length");
    let act = GruParams::cand_activation(variant);

    let mut d_x = vec![0.0; p.input_dim()];
    let mut d_h_prev = vec![0.0; hidden];
    let mut d_reset_h = vec![0.0; hidden];

    // h = (1-z) h_prev + z cand
    let d_pre_cand: Vec<f64> = (0..hidden)
        .map(|k| d_h[k] * cache.update[k] * act.derivative_from_output(cache.cand[k]))
        .collect();
    let d_pre_update: Vec<f64> = (0..hidden)
        .map(|k| {
            let z = cache.update[k];
            d_h[k] * (cache.cand[k] - cache.h_prev[k]) * z * (1.0 - z)
        })
        .collect();

    // candidate consumes (x, reset.h_prev)
    p.cand.backward(
        &d_pre_cand,
        &cache.x,
        &cache.reset_h,
        &mut grads.cand,
        &mut d_x,
        &mut d_reset_h,
    );

    let d_pre_reset: Vec<f64> = (0..hidden)
        .map(|k| {
            let r = cache.reset[k];
            d_reset_h[k] * cache.h_prev[k] * r * (1.0 - r)
        })
        .collect();

    p.reset.backward(
        &d_pre_reset,
        &cache.x,
        &cache.h_prev,
        &mut grads.reset,
        &mut d_x,
        &mut d_h_prev,
    );
    p.update.backward(
        &d_pre_update,
        &cache.x,
        &cache.h_prev,
        &mut grads.update,
        &mut d_x,
        &mut d_h_prev,
    );

    for k in 0..hidden {
        d_h_prev[k] += d_h[k] * (1.0 - cache.update[k]) + d_reset_h[k] * cache.reset[k];
    }
    (d_x, d_h_prev)
}

/// Reverse-mode derivatives of [`gru_step`]. Returns the parameter
/// gradients plus d_x and d_h_prev.
pub fn gru_step_backward(
    p: &GruParams,
    cache: &GruCache,
    d_h: &[f64],
    variant: GateVariant,
) -> (GruParams, Vec<f64>, Vec<f64>) {
    let mut grads = p.zeros_like();
    let (d_x, d_h_prev) = gru_step_backward_into(p, cache, d_h, variant, &mut grads);
    (grads, d_x, d_h_prev)
}
