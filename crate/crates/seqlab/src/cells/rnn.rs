//! Vanilla recurrent cell: h_t = sigmoid(w_x x_t + w_h h_{t-1} + bias).
//! With w_h = 0 this reduces to a plain feed-forward sigmoid neuron.

use crate::numerics::{sigmoid_vec, Matrix, Rng};

use super::{GateWeights, TensorSet};

#[derive(Debug, Clone, PartialEq)]
pub struct RnnParams {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub bias: Vec<f64>,
}

impl RnnParams {
    pub fn new(hidden: usize, input_dim: usize, rng: &Rng, label: &str) -> Self {
        let g = GateWeights::new(hidden, input_dim, true, rng, label);
        RnnParams {
            w_x: g.w_x,
            w_h: g.w_h,
            bias: g.bias.unwrap(),
        }
    }

    pub fn zeros(hidden: usize, input_dim: usize) -> Self {
        RnnParams {
            w_x: Matrix::zeros(hidden, input_dim),
            w_h: Matrix::zeros(hidden, hidden),
            bias: vec![0.0; hidden],
        }
    }

    pub fn zeros_like(&self) -> Self {
        RnnParams::zeros(self.hidden(), self.input_dim())
    }

    pub fn hidden(&self) -> usize {
        self.w_x.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.cols()
    }
}

impl TensorSet for RnnParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![
            ("w_x".to_string(), self.w_x.as_slice()),
            ("w_h".to_string(), self.w_h.as_slice()),
            ("bias".to_string(), self.bias.as_slice()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("w_x".to_string(), self.w_x.as_mut_slice()),
            ("w_h".to_string(), self.w_h.as_mut_slice()),
            ("bias".to_string(), self.bias.as_mut_slice()),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct RnnCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn rnn_step(p: &RnnParams, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, RnnCache) {
    assert_eq!(
        x.len(),
        p.input_dim(),
        "contract violation: rnn_step input length"
    );
    assert_eq!(
        h_prev.len(),
        p.hidden(),
        "contract violation: rnn_step state length"
    );
    let mut a = p.w_x.matvec(x);
    crate::numerics::add_assign(&mut a, &p.w_h.matvec(h_prev));
    crate::numerics::add_assign(&mut a, &p.bias);
    let h = sigmoid_vec(&a);
    let cache = RnnCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        h: h.clone(),
    };
    (h, cache)
}

pub(super) fn rnn_step_backward_into(
    p: &RnnParams,
    cache: &RnnCache,
    d_h: &[f64],
    grads: &mut RnnParams,
) -> (Vec<f64>, Vec<f64>) {
    assert!(
        cache.x.len() == p.input_dim() && cache.h_prev.len() == p.hidden(),
        "contract violation: cache does not match rnn params"
    );
    assert_eq!(d_h.len(), p.hidden(), "contract violation: d_h length");
    // d_pre = d_h * sigmoid'(pre) expressed through the output
    let d_pre: Vec<f64> = d_h
        .iter()
        .zip(&cache.h)
        .map(|(g, y)| g * y * (1.0 - y))
        .collect();
    grads.w_x.add_outer(&d_pre, &cache.x);
    grads.w_h.add_outer(&d_pre, &cache.h_prev);
    crate::numerics::add_assign(&mut grads.bias, &d_pre);
    let d_x = p.w_x.matvec_t(&d_pre);
    let d_h_prev = p.w_h.matvec_t(&d_pre);
    (d_x, d_h_prev)
}

/// Reverse-mode derivatives of [`rnn_step`]. Returns the parameter
/// gradients plus d_x and d_h_prev.
pub fn rnn_step_backward(
    p: &RnnParams,
    cache: &RnnCache,
    d_h: &[f64],
) -> (RnnParams, Vec<f64>, Vec<f64>) {
    let mut grads = p.zeros_like();
    let (d_x, d_h_prev) = rnn_step_backward_into(p, cache, d_h, &mut grads);
    (grads, d_x, d_h_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::fdcheck;
    use crate::numerics::sigmoid;

    #[test]
    fn zero_params_give_half_activation() {
        let p = RnnParams::zeros(3, 2);
        let (h, _) = rnn_step(&p, &[0.7, -1.3], &[0.2, 0.4, -0.9]);
        assert_eq!(h, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn identity_input_weights_zero_input_reduce_to_feedforward() {
        // w_h = 0, bias = 0, w_x = I, x = 0: the recurrent term vanishes and
        // the step is a plain feed-forward neuron at its zero point.
        let mut p = RnnParams::zeros(2, 2);
        p.w_x = Matrix::identity(2);
        let (h, _) = rnn_step(&p, &[0.0, 0.0], &[0.9, -0.3]);
        assert_eq!(h, vec![0.5, 0.5]);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn matches_straight_line_reevaluation() {
        // Independent oracle: re-evaluate the formula with scalar loops.
        let rng = Rng::new(404);
        let p = RnnParams::new(3, 2, &rng, "t");
        let x = [0.3, -0.8];
        let h_prev = [0.1, 0.2, -0.5];
        let (h, _) = rnn_step(&p, &x, &h_prev);
        for i in 0..3 {
            let mut a = p.bias[i];
            for (j, xv) in x.iter().enumerate() {
                a += p.w_x.get(i, j) * xv;
            }
            for (j, hv) in h_prev.iter().enumerate() {
                a += p.w_h.get(i, j) * hv;
            }
            assert!((h[i] - sigmoid(a)).abs() < 1e-15);
        }
    }

    #[test]
    #[should_panic(expected = "contract violation")]
    fn shape_mismatch_panics() {
        let p = RnnParams::zeros(3, 2);
        rnn_step(&p, &[1.0], &[0.0; 3]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let rng = Rng::new(1);
        let p = RnnParams::new(3, 2, &rng, "t");
        let (_, cache) = rnn_step(&p, &[0.5, -0.5], &[0.1, 0.1, 0.1]);
        let (g, d_x, d_h_prev) = rnn_step_backward(&p, &cache, &[0.0; 3]);
        assert!(g.tensors().iter().all(|(_, t)| t.iter().all(|&v| v == 0.0)));
        assert!(d_x.iter().chain(&d_h_prev).all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        for seed in 0..20u64 {
            let rng = Rng::new(seed);
            let mut p = RnnParams::new(4, 3, &rng, "t");
            let mut s = rng.substream("inputs");
            let x: Vec<f64> = (0..3).map(|_| s.uniform(-1.0, 1.0)).collect();
            let h_prev: Vec<f64> = (0..4).map(|_| s.uniform(-1.0, 1.0)).collect();
            let d_h: Vec<f64> = (0..4).map(|_| s.uniform(-1.0, 1.0)).collect();

            let (_, cache) = rnn_step(&p, &x, &h_prev);
            let (grads, d_x, d_h_prev) = rnn_step_backward(&p, &cache, &d_h);

            // loss = d_h . h(theta)
            let loss = |p: &RnnParams, x: &[f64], h_prev: &[f64]| {
                let (h, _) = rnn_step(p, x, h_prev);
                crate::numerics::dot(&d_h, &h)
            };

            let flat_grads = fdcheck::flatten(&grads);
            let err = fdcheck::max_rel_err_params(
                &mut p,
                &flat_grads,
                |p| loss(p, &x, &h_prev),
                1e-5,
            );
            assert!(err < 1e-6, "seed {seed}: param grad err {err}");

            // input-side gradients
            let mut xv = x.clone();
            let e1 = fdcheck::max_rel_err_vec(&mut xv, &d_x, |x| loss(&p, x, &h_prev), 1e-5);
            let mut hv = h_prev.clone();
            let e2 = fdcheck::max_rel_err_vec(&mut hv, &d_h_prev, |h| loss(&p, &x, h), 1e-5);
            assert!(e1.max(e2) < 1e-6, "seed {seed}: input grad err {e1} {e2}");
        }
    }
}
