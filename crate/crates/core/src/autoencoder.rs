//! Tied-weight ReLU autoencoder `yhat = W^T ReLU(W y - eps)` with squared
//! loss `L = 1/2 |yhat - y|^2`, and its exact gradient with respect to each
//! encoder row `W_i`:
//!
//! ```text
//! dL/dW_i = Th(W_i.y - eps_i) [ (W_i.y - eps_i) I + y W_i^T ] (W^T r - y)
//! ```
//!
//! `Th` is the ReLU derivative with `Th(0) = 0`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{invalid, mismatch, Error, Result};
use crate::reduce::{chunk_bounds, tree_reduce};
use crate::synth::{CodeModel, Dictionary, SampleBatch};

/// Distance to the ReLU kink below which a gradient is flagged.
pub const KINK_TOLERANCE: f64 = 1e-9;

/// Samples per leaf of the batch reduction tree.
pub const BATCH_CHUNK: usize = 64;

/// Encoder weights (`h x n`, row `i` is `W_i`) and the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl EncoderState {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(mismatch(format!(
                "weights have {} rows but bias has {} entries",
                weights.nrows(),
                bias.len()
            )));
        }
        if bias.iter().any(|&e| !(e >= 0.0)) {
            return Err(invalid("bias entries must be nonnegative"));
        }
        Ok(Self { weights, bias })
    }

    /// `W = A*^T`.
    pub fn at_dictionary(dict: &Dictionary, bias: Array1<f64>) -> Result<Self> {
        Self::new(dict.atoms().t().to_owned(), bias)
    }

    /// Checks that the state pairs with `dict` (same `n` and `h`).
    pub fn check_against(&self, dict: &Dictionary) -> Result<()> {
        if self.n() != dict.n() || self.h() != dict.h() {
            return Err(mismatch(format!(
                "encoder is {}x{} but dictionary is {}x{}",
                self.h(),
                self.n(),
                dict.n(),
                dict.h()
            )));
        }
        Ok(())
    }

    pub fn h(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.weights.row(i)
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }
}

/// Bias with every entry `prefactor * m1 * k * (delta + coherence)`.
/// A prefactor of 2 gives the support-recovery bias; the landscape
/// experiments use 0.3.
pub fn theorem_bias(model: &CodeModel, delta: f64, coherence: f64, prefactor: f64) -> Result<Array1<f64>> {
    if !(delta >= 0.0 && coherence >= 0.0) {
        return Err(invalid("delta and coherence must be nonnegative"));
    }
    if !(prefactor > 0.0) {
        return Err(invalid("bias prefactor must be positive"));
    }
    let value = prefactor * model.m1 * model.k as f64 * (delta + coherence);
    Ok(Array1::from_elem(model.h, value))
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub preact: Array1<f64>,
    pub activations: Array1<f64>,
    /// `{i : preact_i > 0}`, ascending.
    pub active: Vec<usize>,
    pub reconstruction: Array1<f64>,
    pub loss: f64,
}

pub fn forward(state: &EncoderState, y: ArrayView1<'_, f64>) -> ForwardTrace {
    assert_eq!(y.len(), state.n(), "signal length must match encoder input size");
    let preact = state.weights.dot(&y) - &state.bias;
    let activations = preact.mapv(|z| z.max(0.0));
    let active: Vec<usize> = preact
        .iter()
        .enumerate()
        .filter_map(|(i, &z)| (z > 0.0).then_some(i))
        .collect();
    let mut reconstruction = Array1::zeros(state.n());
    for &i in &active {
        reconstruction.scaled_add(activations[i], &state.weights.row(i));
    }
    let loss = 0.5 * squared_distance(reconstruction.view(), y);
    ForwardTrace {
        preact,
        activations,
        active,
        reconstruction,
        loss,
    }
}

pub fn loss(state: &EncoderState, y: ArrayView1<'_, f64>) -> f64 {
    forward(state, y).loss
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Gradient of the loss with respect to one encoder row.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnGradient {
    pub grad: Array1<f64>,
    /// `|W_i.y - eps_i| < KINK_TOLERANCE`: the loss is not differentiable
    /// there and `grad` is the `Th(0) = 0` one-sided value.
    pub near_kink: bool,
}

pub fn grad_column(state: &EncoderState, y: ArrayView1<'_, f64>, i: usize) -> ColumnGradient {
    let trace = forward(state, y);
    let z = trace.preact[i];
    let near_kink = z.abs() < KINK_TOLERANCE;
    let mut grad = Array1::zeros(state.n());
    if z > 0.0 {
        let residual = &trace.reconstruction - &y;
        let wi = state.row(i);
        grad.scaled_add(z, &residual);
        grad.scaled_add(wi.dot(&residual), &y);
    }
    ColumnGradient { grad, near_kink }
}

/// Batch-mean loss and gradient (`h x n`, row `i` is the mean of `dL/dW_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub loss: f64,
    pub grad: Array2<f64>,
}

impl BatchGradient {
    /// `|mean dL/dW_i|_2` for every row.
    pub fn column_norms(&self) -> Array1<f64> {
        self.grad.map_axis(Axis(1), |row| row.dot(&row).sqrt())
    }

    /// Average of [`Self::column_norms`].
    pub fn mean_column_norm(&self) -> f64 {
        self.column_norms().mean().unwrap_or(0.0)
    }
}

/// Mean gradient over a batch of signals.
pub fn grad_full(state: &EncoderState, batch: &SampleBatch) -> Result<Array2<f64>> {
    Ok(batch_loss_and_grad(state, batch.signals().view())?.grad)
}

/// Mean loss and gradient over the rows of `signals` (`N x n`).
///
/// Samples are processed in fixed chunks of [`BATCH_CHUNK`] and the chunk
/// sums are combined pairwise, so the result does not depend on the thread
/// count.
pub fn batch_loss_and_grad(state: &EncoderState, signals: ArrayView2<'_, f64>) -> Result<BatchGradient> {
    if signals.nrows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if signals.ncols() != state.n() {
        return Err(mismatch(format!(
            "signals have length {} but encoder expects {}",
            signals.ncols(),
            state.n()
        )));
    }
    let chunks = chunk_bounds(signals.nrows(), BATCH_CHUNK);
    let leaf = |c: usize| {
        let (lo, hi) = chunks[c];
        chunk_sum(state, signals.slice(s![lo..hi, ..]))
    };
    let combine = |mut a: BatchGradient, b: BatchGradient| {
        a.loss += b.loss;
        a.grad += &b.grad;
        a
    };
    let mut total = tree_reduce(chunks.len(), &leaf, &combine);
    let count = signals.nrows() as f64;
    total.loss /= count;
    total.grad /= count;
    Ok(total)
}

fn chunk_sum(state: &EncoderState, signals: ArrayView2<'_, f64>) -> BatchGradient {
    let w = &state.weights;
    let preact = signals.dot(&w.t()) - &state.bias;
    let mut grad = Array2::<f64>::zeros(w.dim());
    let mut loss = 0.0;
    let mut residual = Array1::<f64>::zeros(state.n());
    let mut active = Vec::new();
    for (z, y) in preact.outer_iter().zip(signals.outer_iter()) {
        active.clear();
        active.extend(z.iter().enumerate().filter_map(|(i, &v)| (v > 0.0).then_some(i)));
        residual.assign(&y);
        residual.mapv_inplace(|v| -v);
        for &i in &active {
            residual.scaled_add(z[i], &w.row(i));
        }
        loss += 0.5 * residual.dot(&residual);
        for &i in &active {
            let proj = w.row(i).dot(&residual);
            let mut g = grad.row_mut(i);
            g.scaled_add(z[i], &residual);
            g.scaled_add(proj, &y);
        }
    }
    BatchGradient { loss, grad }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::synth::generate_dictionary;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn random_state(h: usize, n: usize, seed: u64, bias: f64) -> EncoderState {
        let mut rng = stream(seed, 0);
        let w = Array2::from_shape_fn((h, n), |_| StandardNormal.sample(&mut rng));
        EncoderState::new(w, Array1::from_elem(h, bias)).unwrap()
    }

    fn random_signal(n: usize, seed: u64) -> Array1<f64> {
        let mut rng = stream(seed, 1);
        Array1::from_shape_fn(n, |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn bias_formula() {
        let model = CodeModel::with_support_size(10, 2, 1.0, 10.0).unwrap();
        let eps = theorem_bias(&model, 0.1, 0.1, 2.0).unwrap();
        assert!(eps.iter().all(|&e| (e - 4.4).abs() < 1e-12));
        assert!(theorem_bias(&model, 0.0, 0.0, 2.0).unwrap().iter().all(|&e| e == 0.0));
        assert!(theorem_bias(&model, 0.1, 0.1, 0.0).is_err());
    }

    #[test]
    fn identity_reconstructs_nonnegative_signals() {
        let state = EncoderState::new(Array2::eye(3), Array1::zeros(3)).unwrap();
        let y = array![1.0, 0.5, 2.0];
        let t = forward(&state, y.view());
        assert_eq!(t.reconstruction, y);
        assert_eq!(t.loss, 0.0);
        assert_eq!(t.active, vec![0, 1, 2]);
    }

    #[test]
    fn huge_bias_silences_everything() {
        let state = random_state(6, 4, 1, 1e6);
        let y = random_signal(4, 2);
        let t = forward(&state, y.view());
        assert!(t.active.is_empty());
        assert!(t.reconstruction.iter().all(|&v| v == 0.0));
        assert!((t.loss - 0.5 * y.dot(&y)).abs() < 1e-12);
        for i in 0..6 {
            assert!(grad_column(&state, y.view(), i).grad.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn forward_matches_naive_loops() {
        let state = random_state(7, 5, 3, 0.2);
        let y = random_signal(5, 4);
        let t = forward(&state, y.view());
        let (h, n) = (7, 5);
        let mut r = vec![0.0; h];
        for i in 0..h {
            let mut z = -state.bias()[i];
            for a in 0..n {
                z += state.weights()[[i, a]] * y[a];
            }
            r[i] = if z > 0.0 { z } else { 0.0 };
            assert!((t.activations[i] - r[i]).abs() < 1e-12);
        }
        let mut loss = 0.0;
        for a in 0..n {
            let mut yh = 0.0;
            for i in 0..h {
                yh += state.weights()[[i, a]] * r[i];
            }
            assert!((yh - t.reconstruction[a]).abs() < 1e-12);
            loss += 0.5 * (yh - y[a]) * (yh - y[a]);
        }
        assert!((loss - t.loss).abs() < 1e-12);
    }

    #[test]
    fn inactive_unit_has_zero_gradient() {
        let state = EncoderState::new(array![[1.0, 0.0], [-1.0, 0.0]], array![0.0, 0.0]).unwrap();
        let y = array![1.0, 1.0];
        assert!(grad_column(&state, y.view(), 1).grad.iter().all(|&g| g == 0.0));
        assert!(!grad_column(&state, y.view(), 1).near_kink);
        let kink = EncoderState::new(array![[1.0, 0.0], [0.0, 1.0]], array![1.0, 0.0]).unwrap();
        let g = grad_column(&kink, y.view(), 0);
        assert!(g.near_kink);
        assert!(g.grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        for trial in 0..20 {
            let state = random_state(6, 4, 10 + trial, 0.1);
            let y = random_signal(4, 100 + trial);
            let t = forward(&state, y.view());
            if t.preact.iter().any(|z| z.abs() < 1e-3) {
                continue;
            }
            for i in 0..6 {
                let g = grad_column(&state, y.view(), i).grad;
                for b in 0..4 {
                    let step = 1e-5;
                    let mut plus = state.weights().clone();
                    plus[[i, b]] += step;
                    let mut minus = state.weights().clone();
                    minus[[i, b]] -= step;
                    let lp = loss(&EncoderState::new(plus, state.bias().clone()).unwrap(), y.view());
                    let lm = loss(&EncoderState::new(minus, state.bias().clone()).unwrap(), y.view());
                    let fd = (lp - lm) / (2.0 * step);
                    assert!((fd - g[b]).abs() <= 1e-6 * (1.0 + g[b].abs()), "trial {trial} row {i}: {fd} vs {}", g[b]);
                }
            }
        }
    }

    #[test]
    fn homogeneity_without_bias() {
        let state = random_state(5, 3, 8, 0.0);
        let y = random_signal(3, 9);
        let t = forward(&state, y.view());
        let scaled = forward(&state, y.mapv(|v| 2.5 * v).view());
        for i in 0..5 {
            assert!((scaled.activations[i] - 2.5 * t.activations[i]).abs() < 1e-12);
        }
        assert!((scaled.loss - 6.25 * t.loss).abs() < 1e-10 * (1.0 + t.loss));
    }

    #[test]
    fn batch_gradient_is_mean_of_columns() {
        let d = generate_dictionary(5, 9, 4).unwrap();
        let model = CodeModel::with_support_size(9, 3, 1.0, 10.0).unwrap();
        let batch = crate::synth::make_batch(&d, &model, 150, 6).unwrap();
        let state = EncoderState::at_dictionary(&d, Array1::from_elem(9, 0.5)).unwrap();
        let bg = batch_loss_and_grad(&state, batch.signals().view()).unwrap();
        let mut expected = Array2::<f64>::zeros((9, 5));
        let mut expected_loss = 0.0;
        for s in 0..batch.len() {
            expected_loss += loss(&state, batch.signal(s));
            for i in 0..9 {
                let g = grad_column(&state, batch.signal(s), i).grad;
                expected.row_mut(i).scaled_add(1.0, &g);
            }
        }
        expected /= batch.len() as f64;
        expected_loss /= batch.len() as f64;
        assert!((bg.loss - expected_loss).abs() < 1e-12 * (1.0 + expected_loss));
        for (a, b) in bg.grad.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_batch_gives_same_mean() {
        let d = generate_dictionary(4, 6, 2).unwrap();
        let model = CodeModel::with_support_size(6, 2, 1.0, 10.0).unwrap();
        let batch = crate::synth::make_batch(&d, &model, 64, 3).unwrap();
        let twice = ndarray::concatenate![Axis(0), batch.signals().view(), batch.signals().view()];
        let state = EncoderState::at_dictionary(&d, Array1::from_elem(6, 0.3)).unwrap();
        let once = batch_loss_and_grad(&state, batch.signals().view()).unwrap();
        let doubled = batch_loss_and_grad(&state, twice.view()).unwrap();
        for (a, b) in once.grad.iter().zip(doubled.grad.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let state = random_state(3, 2, 0, 0.0);
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(batch_loss_and_grad(&state, empty.view()), Err(Error::EmptyBatch)));
    }

    #[test]
    fn never_active_rows_are_exactly_zero() {
        let d = generate_dictionary(5, 8, 1).unwrap();
        let model = CodeModel::with_support_size(8, 2, 1.0, 10.0).unwrap();
        let batch = crate::synth::make_batch(&d, &model, 100, 2).unwrap();
        let mut bias = Array1::from_elem(8, 0.5);
        bias[3] = 1e9;
        let state = EncoderState::at_dictionary(&d, bias).unwrap();
        let g = grad_full(&state, &batch).unwrap();
        assert!(g.row(3).iter().all(|&v| v == 0.0));
    }
}
