//! Ground-truth dictionaries and sparse codes.
//!
//! Signals follow `y = A* x*` exactly: `A*` is an `n x h` matrix with unit
//! columns (atoms) and `x*` is nonnegative with a uniformly random support of
//! size `k`, whose entries are i.i.d. uniform on `[a, b]`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::rng::stream;

/// Unit-norm atoms stored as the columns of an `n x h` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
    coherence: f64,
    xi: f64,
}

impl Dictionary {
    /// Builds a dictionary from explicit columns, normalizing each to unit
    /// length and measuring its coherence.
    pub fn from_matrix(mut atoms: Array2<f64>) -> Result<Self> {
        let (n, h) = atoms.dim();
        if n == 0 {
            return Err(invalid("signal dimension n must be positive"));
        }
        if h < n {
            return Err(invalid(format!("need h >= n, got n={n}, h={h}")));
        }
        for mut col in atoms.columns_mut() {
            let norm = col.dot(&col).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(invalid("dictionary column with zero or non-finite norm"));
            }
            col.mapv_inplace(|v| v / norm);
        }
        let (coherence, xi) = coherence_of(&atoms);
        Ok(Self {
            atoms,
            coherence,
            xi,
        })
    }

    /// Accepts columns that are already unit length (within 1e-12) and
    /// keeps them bit for bit.
    pub fn from_unit_columns(atoms: Array2<f64>) -> Result<Self> {
        let (n, h) = atoms.dim();
        if n == 0 || h < n {
            return Err(invalid(format!("need 0 < n <= h, got n={n}, h={h}")));
        }
        if atoms.columns().into_iter().any(|c| !((c.dot(&c).sqrt() - 1.0).abs() <= 1e-12)) {
            return Err(invalid("dictionary column is not unit length"));
        }
        let (coherence, xi) = coherence_of(&atoms);
        Ok(Self { atoms, coherence, xi })
    }

    pub fn n(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn h(&self) -> usize {
        self.atoms.ncols()
    }

    /// The `n x h` matrix `A*`.
    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> ArrayView1<'_, f64> {
        self.atoms.column(i)
    }

    /// `max_{i != j} |<A*_i, A*_j>|`.
    pub fn coherence(&self) -> f64 {
        self.coherence
    }

    /// Coherence exponent: `coherence = h^(-xi)`; `+inf` for orthogonal atoms.
    pub fn xi(&self) -> f64 {
        self.xi
    }
}

/// Draws `h` standard Gaussian columns in `R^n` and normalizes them.
/// Column `j` comes from stream `(seed, j)`.
pub fn generate_dictionary(n: usize, h: usize, seed: u64) -> Result<Dictionary> {
    if n == 0 {
        return Err(invalid("signal dimension n must be positive"));
    }
    if h < n {
        return Err(invalid(format!("need h >= n, got n={n}, h={h}")));
    }
    let mut atoms = Array2::<f64>::zeros((n, h));
    for (j, mut col) in atoms.columns_mut().into_iter().enumerate() {
        let mut rng = stream(seed, j as u64);
        col.iter_mut()
            .for_each(|v| *v = StandardNormal.sample(&mut rng));
    }
    Dictionary::from_matrix(atoms)
}

/// Exhaustive pair scan for `max_{i != j} |<A_i, A_j>|` and the exponent
/// `xi = -ln(coherence) / ln(h)`.
pub fn mutual_coherence(dict: &Dictionary) -> (f64, f64) {
    coherence_of(&dict.atoms)
}

fn coherence_of(atoms: &Array2<f64>) -> (f64, f64) {
    let h = atoms.ncols();
    // Row-major copy of the columns keeps the inner loop contiguous.
    let cols: Vec<Vec<f64>> = atoms.columns().into_iter().map(|c| c.to_vec()).collect();
    let mut best = 0.0_f64;
    for i in 0..h {
        for j in (i + 1)..h {
            let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            best = best.max(dot.abs());
        }
    }
    (best, xi_from(best, h))
}

fn xi_from(coherence: f64, h: usize) -> f64 {
    if coherence == 0.0 || h < 2 {
        f64::INFINITY
    } else {
        -coherence.ln() / (h as f64).ln()
    }
}

/// Support and amplitude law of the sparse codes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeModel {
    pub h: usize,
    pub k: usize,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub m1: f64,
    pub m2: f64,
    pub q1: f64,
    pub q2: f64,
}

impl CodeModel {
    /// Uniform `k`-subset supports with `k = max(1, round(h^p))` and
    /// amplitudes uniform on `[a, b]`.
    pub fn uniform(h: usize, p: f64, a: f64, b: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!("sparsity exponent p must lie in (0,1), got {p}")));
        }
        if h == 0 {
            return Err(invalid("code dimension h must be positive"));
        }
        let k = support_size(h, p);
        Self::build(h, k, p, a, b)
    }

    /// Same law with an explicit support size; `p` is recorded as `ln k / ln h`.
    pub fn with_support_size(h: usize, k: usize, a: f64, b: f64) -> Result<Self> {
        if k == 0 || k > h {
            return Err(invalid(format!("support size must satisfy 0 < k <= h, got k={k}, h={h}")));
        }
        let p = if h > 1 { (k as f64).ln() / (h as f64).ln() } else { 0.0 };
        Self::build(h, k, p, a, b)
    }

    fn build(h: usize, k: usize, p: f64, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b >= a && b.is_finite()) {
            return Err(invalid(format!("amplitudes need 0 < a <= b, got a={a}, b={b}")));
        }
        let q1 = k as f64 / h as f64;
        let q2 = if h > 1 {
            (k * (k - 1)) as f64 / (h * (h - 1)) as f64
        } else {
            0.0
        };
        Ok(Self {
            h,
            k,
            p,
            a,
            b,
            m1: (a + b) / 2.0,
            m2: (a * a + a * b + b * b) / 3.0,
            q1,
            q2,
        })
    }
}

/// `max(1, round(h^p))`, capped at `h`.
pub fn support_size(h: usize, p: f64) -> usize {
    ((h as f64).powf(p).round() as usize).clamp(1, h)
}

/// Uniformly random `k`-subset of `0..h`, sorted ascending.
pub fn sample_support<R: Rng + ?Sized>(model: &CodeModel, rng: &mut R) -> Vec<usize> {
    let mut idx = rand::seq::index::sample(rng, model.h, model.k).into_vec();
    idx.sort_unstable();
    idx
}

/// Amplitudes for the entries of `support`, i.i.d. uniform on `[a, b]`.
pub fn sample_code<R: Rng + ?Sized>(model: &CodeModel, support: &[usize], rng: &mut R) -> Vec<f64> {
    if model.a == model.b {
        return vec![model.a; support.len()];
    }
    let law = Uniform::new_inclusive(model.a, model.b).expect("a < b checked by CodeModel");
    support.iter().map(|_| law.sample(rng)).collect()
}

/// `N` sparse codes with their signals.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    h: usize,
    supports: Vec<Vec<usize>>,
    amplitudes: Vec<Vec<f64>>,
    /// One signal per row (`N x n`).
    signals: Array2<f64>,
}

impl SampleBatch {
    /// Assembles a batch from explicit sparse codes, computing `y = A* x*`.
    pub fn from_codes(dict: &Dictionary, supports: Vec<Vec<usize>>, amplitudes: Vec<Vec<f64>>) -> Result<Self> {
        if supports.len() != amplitudes.len() {
            return Err(mismatch("supports and amplitudes differ in length"));
        }
        let mut signals = Array2::<f64>::zeros((supports.len(), dict.n()));
        for (s, (support, amps)) in supports.iter().zip(&amplitudes).enumerate() {
            if support.len() != amps.len() {
                return Err(mismatch(format!("sample {s}: support and amplitude lengths differ")));
            }
            if let Some(&j) = support.iter().find(|&&j| j >= dict.h()) {
                return Err(mismatch(format!("sample {s}: index {j} out of range for h={}", dict.h())));
            }
            let mut row = signals.row_mut(s);
            for (&j, &x) in support.iter().zip(amps) {
                row.scaled_add(x, &dict.atom(j));
            }
        }
        Ok(Self {
            h: dict.h(),
            supports,
            amplitudes,
            signals,
        })
    }

    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn n(&self) -> usize {
        self.signals.ncols()
    }

    pub fn supports(&self) -> &[Vec<usize>] {
        &self.supports
    }

    pub fn amplitudes(&self) -> &[Vec<f64>] {
        &self.amplitudes
    }

    /// `N x n`, one signal per row.
    pub fn signals(&self) -> &Array2<f64> {
        &self.signals
    }

    pub fn signal(&self, s: usize) -> ArrayView1<'_, f64> {
        self.signals.row(s)
    }

    /// Dense `x*` for sample `s`.
    pub fn code(&self, s: usize) -> Array1<f64> {
        let mut x = Array1::zeros(self.h);
        for (&j, &v) in self.supports[s].iter().zip(&self.amplitudes[s]) {
            x[j] = v;
        }
        x
    }

    /// Dense `h x N` code matrix.
    pub fn code_matrix(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.h, self.len()));
        for (s, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
            for (&j, &v) in self.supports[s].iter().zip(&self.amplitudes[s]) {
                col[j] = v;
            }
        }
        x
    }
}

/// `N` independent (support, code, signal) triples; element `s` draws from
/// stream `(seed, s)`.
pub fn make_batch(dict: &Dictionary, model: &CodeModel, count: usize, seed: u64) -> Result<SampleBatch> {
    if dict.h() != model.h {
        return Err(mismatch(format!("dictionary has h={}, code model h={}", dict.h(), model.h)));
    }
    let (supports, amplitudes): (Vec<_>, Vec<_>) = (0..count)
        .map(|s| {
            let mut rng = stream(seed, s as u64);
            let support = sample_support(model, &mut rng);
            let amps = sample_code(model, &support, &mut rng);
            (support, amps)
        })
        .unzip();
    SampleBatch::from_codes(dict, supports, amplitudes)
}
