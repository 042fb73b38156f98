//! Single-timestep forward and backward computation for the three
//! recurrent cells: vanilla RNN, LSTM, and GRU.
//!
//! Forward ops return the new state plus a [`StepCache`] holding the gate
//! activations of that step; backward ops consume the cache and produce
//! exact reverse-mode derivatives. All ops are pure: params and caches are
//! never mutated, so disjoint sequences can be processed concurrently.

mod gru;
mod lstm;
mod rnn;

pub use gru::{gru_step, gru_step_backward, GruCache, GruParams};
pub use lstm::{lstm_step, lstm_step_backward, LstmCache, LstmParams};
pub use rnn::{rnn_step, rnn_step_backward, RnnCache, RnnParams};

use crate::numerics::{add_assign, Matrix, Rng};

/// Which recurrent cell a model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Rnn,
    Lstm,
    Gru,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Rnn => "rnn",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }
}

/// Gate-activation variant.
///
/// Under `Paper` the LSTM input gate goes through tanh and the GRU
/// candidate through the logistic function; `Standard` swaps those for
/// the conventional choices (sigmoid input gate, tanh candidate). Both
/// are first-class: forward and backward are exact for either.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GateVariant {
    #[default]
    Paper,
    Standard,
}

impl GateVariant {
    pub fn name(self) -> &'static str {
        match self {
            GateVariant::Paper => "paper",
            GateVariant::Standard => "standard",
        }
    }
}

/// One gate's weights: an input projection, a recurrent projection, and an
/// optional bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub bias: Option<Vec<f64>>,
}

impl GateWeights {
    pub fn new(hidden: usize, input_dim: usize, with_bias: bool, rng: &Rng, label: &str) -> Self {
        let mut rx = rng.substream(&format!("{label}.w_x"));
        let mut rh = rng.substream(&format!("{label}.w_h"));
        GateWeights {
            w_x: Matrix::glorot_uniform(hidden, input_dim, &mut rx),
            w_h: Matrix::glorot_uniform(hidden, hidden, &mut rh),
            bias: with_bias.then(|| vec![0.0; hidden]),
        }
    }

    pub fn zeros(hidden: usize, input_dim: usize, with_bias: bool) -> Self {
        GateWeights {
            w_x: Matrix::zeros(hidden, input_dim),
            w_h: Matrix::zeros(hidden, hidden),
            bias: with_bias.then(|| vec![0.0; hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_x.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.cols()
    }

    /// w_x x + w_h h_prev (+ bias).
    pub fn preact(&self, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let mut a = self.w_x.matvec(x);
        add_assign(&mut a, &self.w_h.matvec(h_prev));
        if let Some(b) = &self.bias {
            add_assign(&mut a, b);
        }
        a
    }

    /// Accumulates gradients for a pre-activation gradient `d_pre`, adding
    /// the input-side contributions into `d_x` and `d_h_prev`.
    pub fn backward(
        &self,
        d_pre: &[f64],
        x: &[f64],
        h_prev: &[f64],
        grads: &mut GateWeights,
        d_x: &mut [f64],
        d_h_prev: &mut [f64],
    ) {
        grads.w_x.add_outer(d_pre, x);
        grads.w_h.add_outer(d_pre, h_prev);
        if let Some(db) = &mut grads.bias {
            add_assign(db, d_pre);
        }
        add_assign(d_x, &self.w_x.matvec_t(d_pre));
        add_assign(d_h_prev, &self.w_h.matvec_t(d_pre));
    }
}

/// Uniform access to a parameter container's tensors, in a stable order.
/// Drives SGD updates, norm clipping, serialization, and finite-difference
/// sweeps without per-cell special cases.
pub trait TensorSet {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn sq_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|x| x * x)
            .sum()
    }

    fn scale_all(&mut self, s: f64) {
        for (_, t) in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= s;
            }
        }
    }

    /// self += a * other, tensor by tensor.
    fn axpy(&mut self, a: f64, other: &Self)
    where
        Self: Sized,
    {
        let theirs = other.tensors();
        for ((name, mine), (oname, ours)) in self.tensors_mut().into_iter().zip(theirs) {
            assert_eq!(name, oname, "contract violation: tensor order mismatch");
            assert_eq!(mine.len(), ours.len(), "contract violation: tensor shape");
            for (m, o) in mine.iter_mut().zip(ours) {
                *m += a * o;
            }
        }
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

impl TensorSet for GateWeights {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![
            ("w_x".to_string(), self.w_x.as_slice()),
            ("w_h".to_string(), self.w_h.as_slice()),
        ];
        if let Some(b) = &self.bias {
            out.push(("bias".to_string(), b.as_slice()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![
            ("w_x".to_string(), self.w_x.as_mut_slice()),
            ("w_h".to_string(), self.w_h.as_mut_slice()),
        ];
        if let Some(b) = &mut self.bias {
            out.push(("bias".to_string(), b.as_mut_slice()));
        }
        out
    }
}

/// Parameters of one directional chain, dispatched by cell kind.
#[derive(Debug, Clone, PartialEq)]
pub enum CellParams {
    Rnn(RnnParams),
    Lstm(LstmParams),
    Gru(GruParams),
}

/// Recurrent state carried between steps; `c` is present only for LSTM.
#[derive(Debug, Clone)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Option<Vec<f64>>,
}

/// Per-step activations retained for the backward pass.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum StepCache {
    Rnn(RnnCache),
    Lstm(LstmCache),
    Gru(GruCache),
}

impl CellParams {
    pub fn new(
        kind: CellKind,
        hidden: usize,
        input_dim: usize,
        use_bias: bool,
        rng: &Rng,
        label: &str,
    ) -> Self {
        match kind {
            CellKind::Rnn => CellParams::Rnn(RnnParams::new(hidden, input_dim, rng, label)),
            CellKind::Lstm => {
                CellParams::Lstm(LstmParams::new(hidden, input_dim, use_bias, rng, label))
            }
            CellKind::Gru => CellParams::Gru(GruParams::new(hidden, input_dim, rng, label)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            CellParams::Rnn(p) => CellParams::Rnn(p.zeros_like()),
            CellParams::Lstm(p) => CellParams::Lstm(p.zeros_like()),
            CellParams::Gru(p) => CellParams::Gru(p.zeros_like()),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Rnn(_) => CellKind::Rnn,
            CellParams::Lstm(_) => CellKind::Lstm,
            CellParams::Gru(_) => CellKind::Gru,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            CellParams::Rnn(p) => p.hidden(),
            CellParams::Lstm(p) => p.hidden(),
            CellParams::Gru(p) => p.hidden(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            CellParams::Rnn(p) => p.input_dim(),
            CellParams::Lstm(p) => p.input_dim(),
            CellParams::Gru(p) => p.input_dim(),
        }
    }

    /// Zero initial state at a sequence end.
    pub fn zero_state(&self) -> CellState {
        CellState {
            h: vec![0.0; self.hidden()],
            c: matches!(self, CellParams::Lstm(_)).then(|| vec![0.0; self.hidden()]),
        }
    }

    pub fn step(&self, x: &[f64], state: &CellState, variant: GateVariant) -> (CellState, StepCache) {
        match self {
            CellParams::Rnn(p) => {
                let (h, cache) = rnn_step(p, x, &state.h);
                (CellState { h, c: None }, StepCache::Rnn(cache))
            }
            CellParams::Lstm(p) => {
                let c_prev = state.c.as_ref().expect("contract violation: LSTM state has no cell");
                let (h, c, cache) = lstm_step(p, x, &state.h, c_prev, variant);
                (CellState { h, c: Some(c) }, StepCache::Lstm(cache))
            }
            CellParams::Gru(p) => {
                let (h, cache) = gru_step(p, x, &state.h, variant);
                (CellState { h, c: None }, StepCache::Gru(cache))
            }
        }
    }

    /// Reverse-mode step. `d_h` is the loss gradient on this step's output;
    /// `d_c` the gradient on this step's cell state (LSTM only, from the
    /// following step). Returns (d_x, d_h_prev, d_c_prev).
    pub fn step_backward(
        &self,
        cache: &StepCache,
        d_h: &[f64],
        d_c: Option<&[f64]>,
        variant: GateVariant,
        grads: &mut CellParams,
    ) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
        match (self, cache, grads) {
            (CellParams::Rnn(p), StepCache::Rnn(c), CellParams::Rnn(g)) => {
                let (d_x, d_h_prev) = rnn::rnn_step_backward_into(p, c, d_h, g);
                (d_x, d_h_prev, None)
            }
            (CellParams::Lstm(p), StepCache::Lstm(c), CellParams::Lstm(g)) => {
                let zero = vec![0.0; p.hidden()];
                let d_c = d_c.unwrap_or(&zero);
                let (d_x, d_h_prev, d_c_prev) =
                    lstm::lstm_step_backward_into(p, c, d_h, d_c, variant, g);
                (d_x, d_h_prev, Some(d_c_prev))
            }
            (CellParams::Gru(p), StepCache::Gru(c), CellParams::Gru(g)) => {
                let (d_x, d_h_prev) = gru::gru_step_backward_into(p, c, d_h, variant, g);
                (d_x, d_h_prev, None)
            }
            _ => panic!("contract violation: cache/params/grads cell kind mismatch"),
        }
    }
}

impl TensorSet for CellParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        match self {
            CellParams::Rnn(p) => p.tensors(),
            CellParams::Lstm(p) => p.tensors(),
            CellParams::Gru(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        match self {
            CellParams::Rnn(p) => p.tensors_mut(),
            CellParams::Lstm(p) => p.tensors_mut(),
            CellParams::Gru(p) => p.tensors_mut(),
        }
    }
}
