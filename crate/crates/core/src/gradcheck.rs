//! Finite-difference check of [`grad_column`].
//!
//! Each configuration draws a random encoder, bias and signal, resampling
//! until every preactivation is at least `margin` away from the ReLU kink so
//! that a central difference with step `step` never crosses it.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autoencoder::{forward, grad_column, loss, EncoderState};
use crate::error::{invalid, Result};
use crate::rng::{child_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub configs: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Minimum `|W_i.y - eps_i|` accepted for a configuration.
    pub margin: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { configs: 100, step: 1e-5, tolerance: 1e-6, margin: 1e-3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckCase {
    pub index: usize,
    pub n: usize,
    pub h: usize,
    pub active: usize,
    /// `|G_analytic - G_fd|_F / max(|G_fd|_F, 1e-8)` over all rows.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub config: GradcheckConfig,
    pub cases: Vec<GradcheckCase>,
    pub max_rel_error: f64,
    /// Configurations thrown away for sitting too close to a kink.
    pub rejected: usize,
    pub passed: bool,
}

/// One random smooth configuration: `(state, y)`.
fn draw_case<R: Rng>(rng: &mut R, margin: f64) -> (EncoderState, Array1<f64>, usize) {
    let mut rejected = 0;
    loop {
        let n = rng.random_range(2..=8);
        let h = rng.random_range(n..=2 * n + 2);
        let scale = 1.0 / (n as f64).sqrt();
        let w = Array2::from_shape_fn((h, n), |_| scale * Distribution::<f64>::sample(&StandardNormal, rng));
        let bias = Array1::from_shape_fn(h, |_| rng.random::<f64>() * 0.2);
        let y = Array1::from_shape_fn(n, |_| Distribution::<f64>::sample(&StandardNormal, rng));
        let state = EncoderState::new(w, bias).expect("bias is nonnegative");
        if forward(&state, y.view()).preact.iter().all(|z| z.abs() > margin) {
            return (state, y, rejected);
        }
        rejected += 1;
    }
}

/// Central differences of the loss over every entry of `W`.
pub fn finite_difference_grad(state: &EncoderState, y: &Array1<f64>, step: f64) -> Array2<f64> {
    let (h, n) = (state.h(), state.n());
    let mut out = Array2::zeros((h, n));
    for i in 0..h {
        for r in 0..n {
            let shifted = |delta: f64| {
                let mut w = state.weights().clone();
                w[[i, r]] += delta;
                let s = EncoderState::new(w, state.bias().clone()).expect("same bias");
                loss(&s, y.view())
            };
            out[[i, r]] = (shifted(step) - shifted(-step)) / (2.0 * step);
        }
    }
    out
}

pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.configs == 0 || !(cfg.step > 0.0) || !(cfg.tolerance > 0.0) {
        return Err(invalid("gradcheck needs configs > 0, step > 0, tolerance > 0"));
    }
    let base = child_seed(cfg.seed, "gradcheck", 0);
    let mut cases = Vec::with_capacity(cfg.configs);
    let mut rejected = 0;
    for index in 0..cfg.configs {
        let mut rng = stream(base, index as u64);
        let (state, y, skipped) = draw_case(&mut rng, cfg.margin);
        rejected += skipped;
        let fd = finite_difference_grad(&state, &y, cfg.step);
        let mut diff = 0.0;
        for i in 0..state.h() {
            let g = grad_column(&state, y.view(), i).grad;
            diff += g.iter().zip(fd.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        let fd_norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        cases.push(GradcheckCase {
            index,
            n: state.n(),
            h: state.h(),
            active: forward(&state, y.view()).active.len(),
            rel_error: diff.sqrt() / fd_norm.max(1e-8),
        });
    }
    let max_rel_error = cases.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        config: *cfg,
        passed: max_rel_error <= cfg.tolerance,
        cases,
        max_rel_error,
        rejected,
    })
}
