//! LSTM cell. The input gate activation is tanh under
//! [`GateVariant::Paper`] and sigmoid under [`GateVariant::Standard`];
//! forget and output gates are always sigmoid; the cell state updates
//! additively through the gates. Bias terms are opt-in and default off.

use crate::numerics::{hadamard, sigmoid_vec, tanh_vec, Activation, Rng};

use super::{GateVariant, GateWeights, TensorSet};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: GateWeights,
    pub forget: GateWeights,
    pub output: GateWeights,
    pub cand: GateWeights,
}

impl LstmParams {
    pub fn new(hidden: usize, input_dim: usize, use_bias: bool, rng: &Rng, label: &str) -> Self {
        LstmParams {
            input: GateWeights::new(hidden, input_dim, use_bias, rng, &format!("{label}.input")),
            forget: GateWeights::new(hidden, input_dim, use_bias, rng, &format!("{label}.forget")),
            output: GateWeights::new(hidden, input_dim, use_bias, rng, &format!("{label}.output")),
            cand: GateWeights::new(hidden, input_dim, use_bias, rng, &format!("{label}.cand")),
        }
    }

    pub fn zeros(hidden: usize, input_dim: usize, use_bias: bool) -> Self {
        LstmParams {
            input: GateWeights::zeros(hidden, input_dim, use_bias),
            forget: GateWeights::zeros(hidden, input_dim, use_bias),
            output: GateWeights::zeros(hidden, input_dim, use_bias),
            cand: GateWeights::zeros(hidden, input_dim, use_bias),
        }
    }

    pub fn zeros_like(&self) -> Self {
        LstmParams::zeros(self.hidden(), self.input_dim(), self.input.bias.is_some())
    }

    pub fn hidden(&self) -> usize {
        self.input.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.input.input_dim()
    }

    fn input_gate_activation(variant: GateVariant) -> Activation {
        match variant {
            GateVariant::Paper => Activation::Tanh,
            GateVariant::Standard => Activation::Sigmoid,
        }
    }
}

impl TensorSet for LstmParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(12);
        for (gate, prefix) in [
            (&self.input, "input"),
            (&self.forget, "forget"),
            (&self.output, "output"),
            (&self.cand, "cand"),
        ] {
            for (name, t) in gate.tensors() {
                out.push((format!("{prefix}.{name}"), t));
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(12);
        for (gate, prefix) in [
            (&mut self.input, "input"),
            (&mut self.forget, "forget"),
            (&mut self.output, "output"),
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
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub cand: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One LSTM step; returns (h_t, c_t, cache).
pub fn lstm_step(
    p: &LstmParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    variant: GateVariant,
) -> (Vec<f64>, Vec<f64>, LstmCache) {
    assert!(
        x.len() == p.input_dim() && h_prev.len() == p.hidden() && c_prev.len() == p.hidden(),
        "contract violation: lstm_step shapes"
    );
    let act_i = LstmParams::input_gate_activation(variant);
    let input_gate = act_i.apply(&p.input.preact(x, h_prev));
    let forget_gate = sigmoid_vec(&p.forget.preact(x, h_prev));
    let output_gate = sigmoid_vec(&p.output.preact(x, h_prev));
    let cand = tanh_vec(&p.cand.preact(x, h_prev));

    let mut c = hadamard(&forget_gate, c_prev);
    crate::numerics::add_assign(&mut c, &hadamard(&input_gate, &cand));
    let tanh_c = tanh_vec(&c);
    let h = hadamard(&output_gate, &tanh_c);

    let cache = LstmCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        input_gate,
        forget_gate,
        output_gate,
        cand,
        c: c.clone(),
        tanh_c,
    };
    (h, c, cache)
}

pub(super) fn lstm_step_backward_into(
    p: &LstmParams,
    cache: &LstmCache,
    d_h: &[f64],
    d_c_in: &[f64],
    variant: GateVariant,
    grads: &mut LstmParams,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = p.hidden();
    assert!(
        cache.x.len() == p.input_dim() && cache.h_prev.len() == hidden,
        "contract violation: cache does not match lstm params"
    );
    assert!(
        d_h.len() == hidden && d_c_in.len() == hidden,
        "contract violation: lstm backward gradient shapes"
    );
    let act_i = LstmParams::input_gate_activation(variant);

    let mut d_x = vec![0.0; p.input_dim()];
    let mut d_h_prev = vec![0.0; hidden];

    // h = o * tanh(c)
    let d_pre_o: Vec<f64> = (0..hidden)
        .map(|k| {
            let o = cache.output_gate[k];
            d_h[k] * cache.tanh_c[k] * o * (1.0 - o)
        })
        .collect();
    // total gradient on c: carried-in plus through tanh(c)
    let d_c: Vec<f64> = (0..hidden)
        .map(|k| {
            let tc = cache.tanh_c[k];
            d_c_in[k] + d_h[k] * cache.output_gate[k] * (1.0 - tc * tc)
        })
        .collect();
    // c = f * c_prev + i * g
    let d_pre_f: Vec<f64> = (0..hidden)
        .map(|k| {
            let f = cache.forget_gate[k];
            d_c[k] * cache.c_prev[k] * f * (1.0 - f)
        })
        .collect();
    let d_pre_i: Vec<f64> = (0..hidden)
        .map(|k| {
            d_c[k] * cache.cand[k] * act_i.derivative_from_output(cache.input_gate[k])
        })
        .collect();
    let d_pre_g: Vec<f64> = (0..hidden)
        .map(|k| {
            let g = cache.cand[k];
            d_c[k] * cache.input_gate[k] * (1.0 - g * g)
        })
        .collect();
    let d_c_prev: Vec<f64> = (0..hidden).map(|k| d_c[k] * cache.forget_gate[k]).collect();

    p.output
        .backward(&d_pre_o, &cache.x, &cache.h_prev, &mut grads.output, &mut d_x, &mut d_h_prev);
    p.forget
        .backward(&d_pre_f, &cache.x, &cache.h_prev, &mut grads.forget, &mut d_x, &mut d_h_prev);
    p.input
        .backward(&d_pre_i, &cache.x, &cache.h_prev, &mut grads.input, &mut d_x, &mut d_h_prev);
    p.cand
        .backward(&d_pre_g, &cache.x, &cache.h_prev, &mut grads.cand, &mut d_x, &mut d_h_prev);

    (d_x, d_h_prev, d_c_prev)
}

/// Reverse-mode derivatives of [`lstm_step`]. Returns the parameter
/// gradients plus d_x, d_h_prev, and d_c_prev.
pub fn lstm_step_backward(
    p: &LstmParams,
    cache: &LstmCache,
    d_h: &[f64],
    d_c: &[f64],
    variant: GateVariant,
) -> (LstmParams, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut grads = p.zeros_like();
    let (d_x, d_h_prev, d_c_prev) = lstm_step_backward_into(p, cache, d_h, d_c, variant, &mut grads);
    (grads, d_x, d_h_prev, d_c_prev)
}
