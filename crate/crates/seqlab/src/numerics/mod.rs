//! Dense 64-bit linear algebra, activations, and seeded initialization.
//!
//! Everything downstream (cells, the bidirectional stack, the CRF) is built
//! on the handful of kernels here. Shape mismatches are programming errors
//! and panic with a "contract violation" message rather than returning
//! `Result`.

mod rng;

pub use rng::Rng;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "contract violation: matrix data length {} != {}x{}",
            data.len(),
            rows,
            cols
        );
        Matrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Entries drawn uniform in [-r, r] with r = sqrt(6/(fan_in+fan_out)).
    /// `fan_in` is `cols`, `fan_out` is `rows`.
    pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let r = (6.0 / (rows + cols) as f64).sqrt();
        Matrix::fill_uniform(rows, cols, -r, r, rng)
    }

    pub fn fill_uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// y = M v.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(
            v.len(),
            self.cols,
            "contract violation: matvec expects length {}, got {}",
            self.cols,
            v.len()
        );
        self.data
            .chunks_exact(self.cols)
            .map(|row| dot(row, v))
            .collect()
    }

    /// y = M^T v.
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(
            v.len(),
            self.rows,
            "contract violation: matvec_t expects length {}, got {}",
            self.rows,
            v.len()
        );
        let mut out = vec![0.0; self.cols];
        for (x, row) in v.iter().zip(self.data.chunks_exact(self.cols)) {
            if *x != 0.0 {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += x * w;
                }
            }
        }
        out
    }

    /// Accumulates the outer product: M += a b^T.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        assert!(
            a.len() == self.rows && b.len() == self.cols,
            "contract violation: add_outer {}x{} vs {}x{}",
            a.len(),
            b.len(),
            self.rows,
            self.cols
        );
        for (ai, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if *ai != 0.0 {
                for (m, bj) in row.iter_mut().zip(b) {
                    *m += ai * bj;
                }
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Elementwise product.
pub fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(
        a.len(),
        b.len(),
        "contract violation: hadamard lengths {} vs {}",
        a.len(),
        b.len()
    );
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(
        a.len(),
        b.len(),
        "contract violation: add lengths {} vs {}",
        a.len(),
        b.len()
    );
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn add_assign(a: &mut [f64], b: &[f64]) {
    assert_eq!(
        a.len(),
        b.len(),
        "contract violation: add_assign lengths {} vs {}",
        a.len(),
        b.len()
    );
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

pub fn scale(a: &mut [f64], s: f64) {
    for x in a.iter_mut() {
        *x *= s;
    }
}

/// Pointwise nonlinearity used by the recurrent cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply_scalar(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn apply(self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|&x| self.apply_scalar(x)).collect()
    }

    /// d/dx of the activation at input x.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    /// Derivative expressed through the activation's own output y = f(x).
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Numerically stable logistic function; saturates instead of overflowing.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| sigmoid(x)).collect()
}

pub fn tanh_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.tanh()).collect()
}

/// Softmax with max-subtraction; the output sums to 1 for any finite input.
pub fn softmax(u: &[f64]) -> Vec<f64> {
    assert!(!u.is_empty(), "contract violation: softmax of empty vector");
    let m = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = u.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= z;
    }
    out
}

/// log(sum(exp(v))) with max-subtraction.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity() {
        let m = Matrix::identity(2);
        assert_eq!(m.matvec(&[3.0, 4.0]), vec![3.0, 4.0]);
    }

    #[test]
    fn matvec_zero() {
        let m = Matrix::zeros(2, 3);
        assert_eq!(m.matvec(&[1.0, -2.0, 5.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn matvec_hand_case() {
        // [[1,2],[3,4]] * (1,1) = (3,7)
        let m = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![3.0, 7.0]);
    }

    #[test]
    #[should_panic(expected = "contract violation")]
    fn matvec_dimension_mismatch_panics() {
        Matrix::zeros(2, 3).matvec(&[1.0, 2.0]);
    }

    #[test]
    fn matvec_distributes_over_addition() {
        let mut rng = Rng::new(100);
        for _ in 0..20 {
            let m = Matrix::fill_uniform(4, 3, -2.0, 2.0, &mut rng);
            let a: Vec<f64> = (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let lhs = m.matvec(&add(&a, &b));
            let rhs = add(&m.matvec(&a), &m.matvec(&b));
            for (x, y) in lhs.iter().zip(&rhs) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn matvec_t_matches_explicit_transpose() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.matvec_t(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn hadamard_cases() {
        assert_eq!(hadamard(&[1.0, 1.0], &[5.0, 7.0]), vec![5.0, 7.0]);
        assert_eq!(hadamard(&[0.0, 0.0], &[5.0, 7.0]), vec![0.0, 0.0]);
        assert_eq!(hadamard(&[2.0, 3.0], &[4.0, 5.0]), vec![8.0, 15.0]);
    }

    #[test]
    #[should_panic(expected = "contract violation")]
    fn hadamard_length_mismatch_panics() {
        hadamard(&[1.0], &[1.0, 2.0]);
    }

    #[test]
    fn sigmoid_tanh_at_zero() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(Activation::Tanh.apply_scalar(0.0), 0.0);
    }

    #[test]
    fn sigmoid_closed_form_point() {
        // sigmoid(ln 3) = 3/4
        assert!((sigmoid(3.0f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_symmetry() {
        let mut rng = Rng::new(8);
        for _ in 0..200 {
            let x = rng.uniform(-50.0, 50.0);
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        assert_eq!(sigmoid(1e4), 1.0);
        assert_eq!(sigmoid(-1e4), 0.0);
        assert!(sigmoid(f64::MAX).is_finite());
    }

    #[test]
    fn activation_ranges_and_monotonicity() {
        let mut rng = Rng::new(12);
        let mut prev_s = f64::NEG_INFINITY;
        let mut xs: Vec<f64> = (0..100).map(|_| rng.uniform(-10.0, 10.0)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for x in xs {
            let s = sigmoid(x);
            let t = x.tanh();
            assert!(s > 0.0 && s < 1.0);
            assert!(t > -1.0 && t < 1.0);
            assert!(s >= prev_s);
            prev_s = s;
        }
    }

    #[test]
    fn activation_derivative_matches_finite_differences() {
        let mut rng = Rng::new(77);
        let h = 1e-6;
        for kind in [Activation::Sigmoid, Activation::Tanh] {
            for _ in 0..100 {
                let x = rng.uniform(-3.0, 3.0);
                let fd = (kind.apply_scalar(x + h) - kind.apply_scalar(x - h)) / (2.0 * h);
                let an = kind.derivative(x);
                let rel = (fd - an).abs() / an.abs().max(fd.abs());
                assert!(rel < 1e-7, "{kind:?} at {x}: fd={fd} an={an} rel={rel}");
            }
        }
    }

    #[test]
    fn softmax_uniform_on_constant_input() {
        for c in [-3.0, 0.0, 7.5] {
            let p = softmax(&[c, c, c]);
            for x in p {
                assert!((x - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_closed_form_point() {
        let p = softmax(&[2.0f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_no_overflow_on_large_logits() {
        let p = softmax(&[1000.0, 0.0]);
        assert!(p.iter().all(|x| x.is_finite()));
        assert!(p[0] > 1.0 - 1e-12 && p[1] < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = Rng::new(21);
        for _ in 0..50 {
            let u: Vec<f64> = (0..5).map(|_| rng.uniform(-4.0, 4.0)).collect();
            let c = rng.uniform(-10.0, 10.0);
            let shifted: Vec<f64> = u.iter().map(|x| x + c).collect();
            let p = softmax(&u);
            let q = softmax(&shifted);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn log_sum_exp_matches_naive_on_small_values() {
        let v: [f64; 3] = [0.3, -1.2, 2.0];
        let naive = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - naive).abs() < 1e-12);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2.0f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn glorot_range() {
        let mut rng = Rng::new(5);
        let m = Matrix::glorot_uniform(10, 20, &mut rng);
        let r = (6.0 / 30.0f64).sqrt();
        assert!(m.as_slice().iter().all(|x| x.abs() <= r));
        assert!(m.as_slice().iter().any(|x| x.abs() > r / 10.0));
    }
}
