//! Support-gated proxy of the expected gradient.
//!
//! Replacing every ReLU derivative by the support indicator turns the
//! expected gradient of row `i` into
//!
//! ```text
//! proxy_i = E_S[ 1{i in S} G_i(S) ]
//! G_i(S)  = E_x[ ((W_i.y - eps_i) I + y W_i^T) (sum_{j in S} (W_j.y - eps_j) W_j - y) ]
//! ```
//!
//! which only depends on the amplitude law through `m1` and `m2`. It splits
//! as `alpha_i W_i - beta_i A*_i + e_i` where the coefficients are sums over
//! index tuples weighted by the inclusion probabilities `q1..q4`.
//!
//! Three independent routes are provided:
//!
//! * [`alpha_beta_e`]: the closed-form coefficients, `O(h n)` per row;
//! * [`proxy_gradient_exact`]: enumeration of supports with amplitude
//!   moments taken from the second-moment matrix of `x_S`;
//! * [`proxy_gradient_mc`]: plain Monte Carlo over sampled codes.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::autoencoder::EncoderState;
use crate::error::{mismatch, Error, Result};
use crate::rng::child_seed;
use crate::support::theoretical_failure_bound;
use crate::synth::{make_batch, CodeModel, Dictionary, SampleBatch};

/// Largest number of supports [`proxy_gradient_exact`] will enumerate.
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// Probabilities that 1, 2, 3 or 4 fixed distinct indices all lie in the
/// random support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportLawMoments {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
}

/// Falling-factorial ratios `q_j = prod_{t<j} (k - t) / (h - t)` of the
/// uniform `k`-subset law.
pub fn support_law_moments(model: &CodeModel) -> SupportLawMoments {
    let q = |j: usize| -> f64 {
        if model.k < j {
            return 0.0;
        }
        (0..j).map(|t| (model.k - t) as f64 / (model.h - t) as f64).product()
    };
    SupportLawMoments { q1: q(1), q2: q(2), q3: q(3), q4: q(4) }
}

/// `C(n, r)` as a float.
pub fn binomial(n: usize, r: usize) -> f64 {
    if r > n {
        return 0.0;
    }
    let r = r.min(n - r);
    (0..r).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

/// Calls `visit` on every `r`-subset of `0..n` in lexicographic order.
pub fn for_each_combination(n: usize, r: usize, mut visit: impl FnMut(&[usize])) {
    if r > n {
        return;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        visit(&idx);
        let Some(pos) = (0..r).rev().find(|&p| idx[p] != p + n - r) else {
            return;
        };
        idx[pos] += 1;
        for q in pos + 1..r {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// `alpha_i W_i - beta_i A*_i + e_i` for one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyDecomposition {
    pub i: usize,
    pub alpha: f64,
    pub beta: f64,
    pub e: Vec<f64>,
    pub reconstructed: Vec<f64>,
    /// `h^(p-1) max(m1^2, m2)`.
    pub reference_scale: f64,
    /// `alpha / (m2 h^(p-1))`.
    pub alpha_ratio: f64,
    /// `beta / (m2 h^(p-1))`.
    pub beta_ratio: f64,
    /// `|alpha - beta| / reference_scale`.
    pub gap_ratio: f64,
    /// `|e| / reference_scale`.
    pub e_ratio: f64,
}

impl ProxyDecomposition {
    pub fn e_norm(&self) -> f64 {
        self.e.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Row-independent products shared by every [`alpha_beta_e`] call.
pub struct ProxyContext<'a> {
    dict: &'a Dictionary,
    model: CodeModel,
    state: &'a EncoderState,
    q: SupportLawMoments,
    /// `W_j . A*_j`.
    diag: Array1<f64>,
    /// `sum_k W_j . A*_k`.
    rsum: Array1<f64>,
}

impl<'a> ProxyContext<'a> {
    pub fn new(dict: &'a Dictionary, model: &CodeModel, state: &'a EncoderState) -> Result<Self> {
        state.check_against(dict)?;
        if model.h != dict.h() {
            return Err(mismatch("code model and dictionary disagree on h"));
        }
        let w = state.weights();
        let a = dict.atoms();
        let diag = Array1::from_iter((0..dict.h()).map(|j| w.row(j).dot(&a.column(j))));
        let rsum = w.dot(&a.sum_axis(Axis(1)));
        Ok(Self { dict, model: *model, state, q: support_law_moments(model), diag, rsum })
    }

    /// Closed-form `alpha_i`, `beta_i`, `e_i` (dummy constant `D = 1`).
    pub fn decompose(&self, i: usize) -> ProxyDecomposition {
        let SupportLawMoments { q1, q2, q3, q4 } = self.q;
        let (m1, m2) = (self.model.m1, self.model.m2);
        let m1sq = m1 * m1;
        let w = self.state.weights();
        let a = self.dict.atoms();
        let eps = self.state.bias();
        let wi = w.row(i);
        let ei = eps[i];

        // m_row[k] = W_i.A_k, m_col[j] = W_j.A_i, p_row[j] = W_i.W_j
        let m_row = a.t().dot(&wi);
        let m_col = w.dot(&a.column(i));
        let p_row = w.dot(&wi);
        // t_row[j] = sum_k (W_i.A_k)(W_j.A_k)
        let t_row = w.dot(&a.dot(&m_row));
        // v_row[k] = sum_j (W_i.W_j)(W_j.A_k)
        let v_row = a.t().dot(&w.t().dot(&p_row));

        let (diag, rsum) = (&self.diag, &self.rsum);
        let mii = m_row[i];
        let pii = p_row[i];
        let ri = rsum[i];
        let s2 = t_row[i];
        let u = p_row.dot(eps);
        let x = p_row.dot(rsum);
        let yy = p_row.dot(diag);
        let z = p_row.dot(&m_col);

        let alpha = m2 * (q1 * mii * mii + q2 * (s2 - mii * mii))
            + m1sq * (2.0 * q2 * mii * (ri - mii) + q3 * ((ri - mii).powi(2) - (s2 - mii * mii)))
            - 2.0 * m1 * ei * (q1 * mii + q2 * (ri - mii))
            + q1 * ei * ei;

        let beta = 2.0 * m1sq * q2 * (ri - mii) + 2.0 * m2 * q1 * mii - m1 * q1 * ei
            + m1 * (q1 * ei * pii + q2 * (u - ei * pii))
            - m2 * (q1 * pii * mii + q2 * (z - pii * mii))
            - m1sq
                * (q2 * pii * (ri - mii)
                    + q2 * (yy - pii * mii)
                    + q3 * ((x - pii * ri) - (z - pii * mii) - (yy - pii * mii)));

        let h = self.dict.h();
        let mut cw = Array1::<f64>::zeros(h);
        let mut ca = Array1::<f64>::zeros(h);
        for j in (0..h).filter(|&j| j != i) {
            let (mij, mji, mjj, rj, tij, pij, vij) =
                (m_row[j], m_col[j], diag[j], rsum[j], t_row[j], p_row[j], v_row[j]);
            let ej = eps[j];
            // Sums over the free index restricted to indices outside {i, j}.
            let row_i_out = ri - mii - mij;
            let row_j_out = rj - mji - mjj;
            let t_out = tij - mii * mji - mij * mjj;

            cw[j] = q2 * ei * ej
                - m1 * ei * (q2 * (mji + mjj) + q3 * row_j_out)
                - m1 * ej * (q2 * (mii + mij) + q3 * row_i_out)
                + m2 * (q2 * (mii * mji + mij * mjj) + q3 * t_out)
                + m1sq
                    * (q2 * (mii * mjj + mij * mji)
                        + q3 * ((mii + mij) * row_j_out + row_i_out * (mji + mjj))
                        + q4 * (row_i_out * row_j_out - t_out));

            // Direction A*_j (j plays the role of k in the A-terms).
            let (mik, mki, mkk, rk, pik, vik) = (mij, mji, mjj, rj, pij, vij);
            let ek = ej;
            let z_out = z - pii * mii - pik * mki;
            let y_out = yy - pii * mii - pik * mkk;
            let x_out = x - pii * ri - pik * rk;
            let v_out = vik - pii * mik - pik * mkk;
            ca[j] = -2.0 * m1sq * (q2 * mii + q3 * (ri - mii - mik))
                - 2.0 * m2 * q2 * mik
                + m1 * ei * q2
                - m1 * (q2 * (ei * pii + ek * pik) + q3 * (u - ei * pii - ek * pik))
                + m2 * (q2 * (pii * mik + pik * mkk) + q3 * v_out)
                + m1sq
                    * (pii * (q2 * mii + q3 * (ri - mii - mik))
                        + pik * (q2 * mki + q3 * (rk - mki - mkk))
                        + q3 * (z_out + y_out)
                        + q4 * (x_out - z_out - v_out - y_out));
        }
        let e = w.t().dot(&cw) + a.dot(&ca);
        let reconstructed = alpha * &wi - beta * &a.column(i) + &e;

        let scale_h = (h as f64).powf(self.model.p - 1.0);
        let reference_scale = scale_h * m1sq.max(m2);
        let e_norm = e.dot(&e).sqrt();
        ProxyDecomposition {
            i,
            alpha,
            beta,
            e: e.to_vec(),
            reconstructed: reconstructed.to_vec(),
            reference_scale,
            alpha_ratio: alpha / (m2 * scale_h),
            beta_ratio: beta / (m2 * scale_h),
            gap_ratio: (alpha - beta).abs() / reference_scale,
            e_ratio: e_norm / reference_scale,
        }
    }
}

/// Closed-form decomposition of the proxy gradient for row `i`.
pub fn alpha_beta_e(dict: &Dictionary, model: &CodeModel, state: &EncoderState, i: usize) -> Result<ProxyDecomposition> {
    check_index(state, i)?;
    Ok(ProxyContext::new(dict, model, state)?.decompose(i))
}

fn check_index(state: &EncoderState, i: usize) -> Result<()> {
    if i >= state.h() {
        return Err(mismatch(format!("row index {i} out of range for h={}", state.h())));
    }
    Ok(())
}

/// Exact proxy gradient by enumerating every support that contains `i`.
///
/// For a fixed support the integrand is a quadratic polynomial in `x_S`, so
/// its mean only needs `E[x_S] = m1 1` and
/// `E[x_S x_S^T] = m1^2 11^T + (m2 - m1^2) I`.
pub fn proxy_gradient_exact(dict: &Dictionary, model: &CodeModel, state: &EncoderState, i: usize) -> Result<Array1<f64>> {
    state.check_against(dict)?;
    check_index(state, i)?;
    let (h, k) = (model.h, model.k);
    let count = binomial(h, k);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard { h, k, count, limit: ENUMERATION_LIMIT });
    }
    let weight = 1.0 / count;
    let others: Vec<usize> = (0..h).filter(|&j| j != i).collect();
    let mut acc = Compensated::new(dict.n());
    let mut support = Vec::with_capacity(k);
    for_each_combination(others.len(), k - 1, |rest| {
        support.clear();
        support.push(i);
        support.extend(rest.iter().map(|&r| others[r]));
        let g = expected_integrand(dict, model, state, i, &support);
        acc.add_scaled(weight, g.view());
    });
    Ok(acc.total())
}

/// `G_i(S)` from the amplitude moments.
fn expected_integrand(dict: &Dictionary, model: &CodeModel, state: &EncoderState, i: usize, support: &[usize]) -> Array1<f64> {
    let k = support.len();
    let (m1, m2) = (model.m1, model.m2);
    let a_s = dict.atoms().select(Axis(1), support); // n x k
    let w_s = state.weights().select(Axis(0), support); // k x n
    let eps = state.bias();
    let wi = state.row(i);

    let mean = Array1::from_elem(k, m1);
    let mut second = Array2::from_elem((k, k), m1 * m1);
    second.diag_mut().fill(m2);

    // u(x) = u0 + u_lin.x ; g(x) = g0 + g_lin x ; W_i.g(x) = c0 + c_lin.x ; y = A_S x
    let u0 = -eps[i];
    let u_lin = a_s.t().dot(&wi);
    let mut g0 = Array1::<f64>::zeros(dict.n());
    for (r, &j) in support.iter().enumerate() {
        g0.scaled_add(-eps[j], &w_s.row(r));
    }
    let g_lin = w_s.t().dot(&w_s.dot(&a_s)) - &a_s;
    let c0 = wi.dot(&g0);
    let c_lin = g_lin.t().dot(&wi);

    let mut out = u0 * &g0;
    out += &(u0 * g_lin.dot(&mean));
    out.scaled_add(u_lin.dot(&mean), &g0);
    out += &g_lin.dot(&second.dot(&u_lin));
    out += &a_s.dot(&(c0 * &mean + second.dot(&c_lin)));
    out
}

/// Neumaier-compensated vector accumulator.
struct Compensated {
    sum: Array1<f64>,
    carry: Array1<f64>,
}

impl Compensated {
    fn new(n: usize) -> Self {
        Self { sum: Array1::zeros(n), carry: Array1::zeros(n) }
    }

    fn add_scaled(&mut self, scale: f64, v: ArrayView1<'_, f64>) {
        for ((s, c), &x) in self.sum.iter_mut().zip(self.carry.iter_mut()).zip(v.iter()) {
            let x = scale * x;
            let t = *s + x;
            if s.abs() >= x.abs() {
                *c += (*s - t) + x;
            } else {
                *c += (x - t) + *s;
            }
            *s = t;
        }
    }

    fn total(self) -> Array1<f64> {
        self.sum + self.carry
    }
}

/// Proxy integrand for one sample: `1{i in S} [(W_i.y - eps_i) I + y W_i^T]
/// (sum_{j in S} (W_j.y - eps_j) W_j - y)`.
pub fn proxy_integrand(state: &EncoderState, support: &[usize], y: ArrayView1<'_, f64>, i: usize) -> Array1<f64> {
    let mut out = Array1::zeros(y.len());
    if support.binary_search(&i).is_err() {
        return out;
    }
    let w = state.weights();
    let eps = state.bias();
    let mut g = y.mapv(|v| -v);
    for &j in support {
        g.scaled_add(w.row(j).dot(&y) - eps[j], &w.row(j));
    }
    let wi = w.row(i);
    out.scaled_add(wi.dot(&y) - eps[i], &g);
    out.scaled_add(wi.dot(&g), &y);
    out
}

/// Monte Carlo mean with per-coordinate standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: Array1<f64>,
    pub stderr: Array1<f64>,
    pub samples: usize,
}

/// Proxy gradient averaged over a batch drawn from `child_seed(seed, "batch", 0)`.
pub fn proxy_gradient_mc(dict: &Dictionary, model: &CodeModel, state: &EncoderState, i: usize, samples: usize, seed: u64) -> Result<McEstimate> {
    state.check_against(dict)?;
    check_index(state, i)?;
    if samples == 0 {
        return Err(Error::EmptyBatch);
    }
    let batch = make_batch(dict, model, samples, child_seed(seed, "batch", 0))?;
    Ok(proxy_gradient_on(&batch, state, i))
}

/// Proxy gradient averaged over an existing batch.
pub fn proxy_gradient_on(batch: &SampleBatch, state: &EncoderState, i: usize) -> McEstimate {
    let n = batch.n();
    let mut sum = Array1::<f64>::zeros(n);
    let mut sq = Array1::<f64>::zeros(n);
    for s in 0..batch.len() {
        let v = proxy_integrand(state, &batch.supports()[s], batch.signal(s), i);
        sum += &v;
        sq += &v.mapv(|x| x * x);
    }
    let count = batch.len() as f64;
    let mean = sum / count;
    let var = (sq / count - mean.mapv(|m| m * m)).mapv(|v| v.max(0.0));
    let stderr = if batch.len() > 1 {
        var.mapv(|v| (v / (count - 1.0)).sqrt())
    } else {
        Array1::zeros(n)
    };
    McEstimate { mean, stderr, samples: batch.len() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub i: usize,
    pub samples: usize,
    /// Empirical `P[Th(W_i.y - eps_i) != 1{i in S}]`.
    pub rate: f64,
    pub stderr: f64,
    /// `exp(-2 k m1^2 / (b - a)^2)`.
    pub bound: f64,
}

impl MismatchReport {
    /// `rate <= bound + 3 sigma`, sigma the binomial error under the bound.
    pub fn within_bound(&self) -> bool {
        let sigma = (self.bound * (1.0 - self.bound) / self.samples as f64).sqrt();
        self.rate <= self.bound + 3.0 * sigma
    }
}

pub fn mismatch_probability(dict: &Dictionary, model: &CodeModel, state: &EncoderState, i: usize, samples: usize, seed: u64) -> Result<MismatchReport> {
    state.check_against(dict)?;
    check_index(state, i)?;
    if samples == 0 {
        return Err(Error::EmptyBatch);
    }
    let batch = make_batch(dict, model, samples, child_seed(seed, "batch", 0))?;
    let wi = state.row(i);
    let eps = state.bias()[i];
    let disagree = (0..batch.len())
        .filter(|&s| {
            let fires = wi.dot(&batch.signal(s)) - eps > 0.0;
            fires != batch.supports()[s].binary_search(&i).is_ok()
        })
        .count();
    let rate = disagree as f64 / samples as f64;
    Ok(MismatchReport {
        i,
        samples,
        rate,
        stderr: (rate * (1.0 - rate) / samples as f64).sqrt(),
        bound: theoretical_failure_bound(model),
    })
}

/// [`mismatch_probability`] for every unit on one shared batch.
pub fn mismatch_rates(dict: &Dictionary, model: &CodeModel, state: &EncoderState, samples: usize, seed: u64) -> Result<Vec<MismatchReport>> {
    state.check_against(dict)?;
    if samples == 0 {
        return Err(Error::EmptyBatch);
    }
    let batch = make_batch(dict, model, samples, child_seed(seed, "batch", 0))?;
    let preact = batch.signals().dot(&state.weights().t()) - state.bias();
    let mut disagree = vec![0usize; state.h()];
    for (s, row) in preact.rows().into_iter().enumerate() {
        let support = &batch.supports()[s];
        for (i, &z) in row.iter().enumerate() {
            if (z > 0.0) != support.binary_search(&i).is_ok() {
                disagree[i] += 1;
            }
        }
    }
    let bound = theoretical_failure_bound(model);
    Ok(disagree
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let rate = c as f64 / samples as f64;
            MismatchReport { i, samples, rate, stderr: (rate * (1.0 - rate) / samples as f64).sqrt(), bound }
        })
        .collect())
}

/// Distance between the empirical mean gradient and the proxy on a shared
/// batch, with the Cauchy-Schwarz bound `C sqrt(P[mismatch])`.
///
/// The mismatch event is "some unit's firing disagrees with support
/// membership". Row `i` of the true gradient depends on every unit's gate
/// through the residual, so this union (not unit `i`'s own disagreement) is
/// the event outside which the two integrands coincide. With `d` the
/// per-sample discrepancy, `C` is its root mean square over mismatching
/// samples and `|mean d| <= rate C <= sqrt(rate) C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyGap {
    pub i: usize,
    pub samples: usize,
    pub gap_norm: f64,
    /// Fraction of samples in the union mismatch event.
    pub mismatch_rate: f64,
    pub constant: f64,
    /// Largest `|d|` over mismatching samples.
    pub max_discrepancy: f64,
    /// Largest `|d|` over the remaining samples (rounding only).
    pub off_event_discrepancy: f64,
    /// Largest per-sample `|true gradient|`, the scale for rounding.
    pub scale: f64,
    pub bound: f64,
}

impl ProxyGap {
    /// The bound holds and the integrands agree off the event.
    pub fn holds(&self) -> bool {
        let slack = 1e-10 * (1.0 + self.scale);
        self.off_event_discrepancy <= slack && self.gap_norm <= self.bound + slack
    }
}

pub fn proxy_gap(dict: &Dictionary, model: &CodeModel, state: &EncoderState, i: usize, samples: usize, seed: u64) -> Result<ProxyGap> {
    state.check_against(dict)?;
    check_index(state, i)?;
    if samples == 0 {
        return Err(Error::EmptyBatch);
    }
    let batch = make_batch(dict, model, samples, child_seed(seed, "batch", 0))?;
    let mut gap = Array1::<f64>::zeros(dict.n());
    let (mut event_sq, mut max_d, mut off_max, mut scale, mut events) = (0.0, 0.0_f64, 0.0_f64, 0.0_f64, 0usize);
    for s in 0..batch.len() {
        let y = batch.signal(s);
        let support = &batch.supports()[s];
        let trace = crate::autoencoder::forward(state, y);
        let mismatch = (0..state.h()).any(|j| (trace.preact[j] > 0.0) != support.binary_search(&j).is_ok());
        let truth = crate::autoencoder::grad_column(state, y, i).grad;
        scale = scale.max(truth.dot(&truth).sqrt());
        let d = truth - proxy_integrand(state, support, y, i);
        let norm = d.dot(&d).sqrt();
        if mismatch {
            events += 1;
            event_sq += norm * norm;
            max_d = max_d.max(norm);
        } else {
            off_max = off_max.max(norm);
        }
        gap += &d;
    }
    let count = samples as f64;
    gap /= count;
    let rate = events as f64 / count;
    let constant = if events > 0 { (event_sq / events as f64).sqrt() } else { 0.0 };
    Ok(ProxyGap {
        i,
        samples,
        gap_norm: gap.dot(&gap).sqrt(),
        mismatch_rate: rate,
        constant,
        max_discrepancy: max_d,
        off_event_discrepancy: off_max,
        scale,
        bound: constant * rate.sqrt(),
    })
}
