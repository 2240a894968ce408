//! Gradient norms and loss profiles of the autoencoder near `W = A*^T`.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{batch_loss_and_grad, theorem_bias, EncoderState};
use crate::error::{invalid, Result};
use crate::rng::{child_seed, stream};
use crate::synth::{make_batch, CodeModel, Dictionary};

/// Bias prefactor used by the landscape experiments.
pub const EXPERIMENT_PREFACTOR: f64 = 0.3;

/// `delta = h^(-2p)`, the ball radius used by the experiments.
pub fn experiment_delta(model: &CodeModel) -> f64 {
    (model.h as f64).powf(-2.0 * model.p)
}

/// Moves every atom by exactly `distance` in an independent uniformly random
/// direction. Returns the `h x n` encoder weights (rows are the moved atoms).
pub fn perturb_columnwise<R: Rng + ?Sized>(dict: &Dictionary, distance: f64, rng: &mut R) -> Result<Array2<f64>> {
    if !(distance >= 0.0) {
        return Err(invalid(format!("perturbation distance must be nonnegative, got {distance}")));
    }
    let mut w = dict.atoms().t().to_owned();
    if distance == 0.0 {
        return Ok(w);
    }
    let n = dict.n();
    let mut dir = vec![0.0; n];
    for mut row in w.rows_mut() {
        let norm = loop {
            dir.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                break norm;
            }
        };
        row.iter_mut().zip(&dir).for_each(|(w, d)| *w += distance * d / norm);
    }
    Ok(w)
}

/// Settings for one cell of the gradient-norm table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradTableConfig {
    /// Per-column distance of the evaluation points from `A*`.
    pub distance: f64,
    /// `delta` entering the bias.
    pub bias_delta: f64,
    pub prefactor: f64,
    pub points: usize,
    pub samples: usize,
    pub seed: u64,
}

impl GradTableConfig {
    /// Points at `delta / 2` with `delta = h^(-2p)`, 200 points, 5000 samples,
    /// prefactor 0.3.
    pub fn experiment_defaults(model: &CodeModel, seed: u64) -> Self {
        let delta = experiment_delta(model);
        Self {
            distance: delta / 2.0,
            bias_delta: delta,
            prefactor: EXPERIMENT_PREFACTOR,
            points: 200,
            samples: 5000,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientStats {
    pub h: usize,
    pub p: f64,
    pub distance: f64,
    pub points: usize,
    pub samples: usize,
    /// Mean over points and columns of `|mean_batch dL/dW_i|`.
    pub mean_col_norm: f64,
    /// `h^(p-1)`.
    pub reference: f64,
    pub per_point: Vec<f64>,
}

impl GradientStats {
    pub fn ratio(&self) -> f64 {
        self.mean_col_norm / self.reference
    }
}

/// Average column norm of the batch gradient at `points` random matrices at
/// columnwise distance `cfg.distance` from `A*`. One batch is shared by all
/// points; point `t` draws its directions from its own stream.
pub fn gradient_table(dict: &Dictionary, model: &CodeModel, cfg: &GradTableConfig) -> Result<GradientStats> {
    if cfg.points == 0 || cfg.samples == 0 {
        return Err(invalid("gradient table needs at least one point and one sample"));
    }
    let batch = make_batch(dict, model, cfg.samples, child_seed(cfg.seed, "batch", 0))?;
    let bias = theorem_bias(model, cfg.bias_delta, dict.coherence(), cfg.prefactor)?;
    let perturb_seed = child_seed(cfg.seed, "perturb", 0);
    let per_point = (0..cfg.points)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(perturb_seed, t as u64);
            let w = perturb_columnwise(dict, cfg.distance, &mut rng)?;
            let state = EncoderState::new(w, bias.clone())?;
            Ok(batch_loss_and_grad(&state, batch.signals().view())?.mean_column_norm())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean_col_norm = per_point.iter().sum::<f64>() / per_point.len() as f64;
    Ok(GradientStats {
        h: model.h,
        p: model.p,
        distance: cfg.distance,
        points: cfg.points,
        samples: cfg.samples,
        mean_col_norm,
        reference: (model.h as f64).powf(model.p - 1.0),
        per_point,
    })
}

/// Loss and gradient norm along `W(t) = (A* + t dW)^T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub ts: Vec<f64>,
    pub loss_vals: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub direction_seed: u64,
}

impl ScanResult {
    /// Index of the grid point closest to `t = 0`.
    pub fn origin_index(&self) -> usize {
        argmin(self.ts.iter().map(|t| t.abs()))
    }

    /// The sampled loss is smallest at the grid point nearest `t = 0`.
    pub fn loss_minimized_at_origin(&self) -> bool {
        let o = self.origin_index();
        self.loss_vals.iter().all(|&f| f >= self.loss_vals[o])
    }

    /// Walking inward from either end of the grid, the gradient norm never
    /// increases until the point nearest `t = 0`.
    pub fn grad_norm_decreases_toward_origin(&self) -> bool {
        let o = self.origin_index();
        let left = self.grad_norms[..=o].windows(2).all(|w| w[1] <= w[0]);
        let right = self.grad_norms[o..].windows(2).all(|w| w[0] <= w[1]);
        left && right
    }
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    values
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
        .0
}

/// 41 points symmetric about 0: zero and +-20 log-spaced offsets in `[1e-3, 1]`.
pub fn default_t_grid() -> Vec<f64> {
    let side: Vec<f64> = (0..20).map(|j| 10f64.powf(-3.0 + 3.0 * j as f64 / 19.0)).collect();
    side.iter()
        .rev()
        .map(|t| -t)
        .chain(std::iter::once(0.0))
        .chain(side.iter().copied())
        .collect()
}

/// Settings for a loss scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub ts: Vec<f64>,
    pub samples: usize,
    pub prefactor: f64,
    pub seed: u64,
}

/// Evaluates the batch-mean loss and mean column-gradient norm along a random
/// direction whose columns are unit normalized. The same batch is used for
/// every `t`.
pub fn loss_scan(dict: &Dictionary, model: &CodeModel, cfg: &ScanConfig) -> Result<ScanResult> {
    if cfg.ts.is_empty() {
        return Err(invalid("scan grid is empty"));
    }
    let batch = make_batch(dict, model, cfg.samples, child_seed(cfg.seed, "batch", 0))?;
    let bias = theorem_bias(model, experiment_delta(model), dict.coherence(), cfg.prefactor)?;
    let direction_seed = child_seed(cfg.seed, "direction", 0);
    let direction = random_direction(dict, direction_seed);
    let base = dict.atoms().t().to_owned();
    let evaluated = cfg
        .ts
        .par_iter()
        .map(|&t| {
            let mut w = base.clone();
            w.scaled_add(t, &direction);
            let state = EncoderState::new(w, bias.clone())?;
            let bg = batch_loss_and_grad(&state, batch.signals().view())?;
            Ok((bg.loss, bg.mean_column_norm()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (loss_vals, grad_norms) = evaluated.into_iter().unzip();
    Ok(ScanResult {
        ts: cfg.ts.clone(),
        loss_vals,
        grad_norms,
        direction_seed,
    })
}

/// Standard Gaussian `h x n` matrix with unit rows, rows drawn from stream
/// `(seed, i)`.
pub fn random_direction(dict: &Dictionary, seed: u64) -> Array2<f64> {
    let (n, h) = (dict.n(), dict.h());
    let mut d = Array2::<f64>::zeros((h, n));
    for (i, mut row) in d.rows_mut().into_iter().enumerate() {
        let mut rng = stream(seed, i as u64);
        row.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        let norm = row.dot(&row).sqrt();
        row.mapv_inplace(|v| v / norm);
    }
    d
}

/// Fraction of samples for which no hidden unit fires at `W = A*^T` with the
/// experiment bias `prefactor * m1 * k * (h^(-2p) + coherence)`.
pub fn dead_relu_check(dict: &Dictionary, model: &CodeModel, prefactor: f64, samples: usize, seed: u64) -> Result<f64> {
    let bias = theorem_bias(model, experiment_delta(model), dict.coherence(), prefactor)?;
    dead_fraction(dict, model, &bias, samples, seed)
}

/// Fraction of samples with an all-zero hidden layer at `W = A*^T` for an
/// arbitrary bias.
pub fn dead_fraction(dict: &Dictionary, model: &CodeModel, bias: &Array1<f64>, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(invalid("dead-unit check needs at least one sample"));
    }
    let batch = make_batch(dict, model, samples, child_seed(seed, "batch", 0))?;
    let preact = batch.signals().dot(dict.atoms()) - bias;
    let dead = preact.rows().into_iter().filter(|z| z.iter().all(|&v| v <= 0.0)).count();
    Ok(dead as f64 / samples as f64)
}
