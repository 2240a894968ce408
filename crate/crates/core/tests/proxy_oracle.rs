//! Closed-form proxy coefficients against brute-force enumeration and
//! Monte Carlo.

use aecrit::autoencoder::EncoderState;
use aecrit::proxy::{alpha_beta_e, proxy_gradient_exact, proxy_gradient_mc, ProxyContext};
use aecrit::rng::stream;
use aecrit::synth::{generate_dictionary, CodeModel, Dictionary};
use ndarray::{Array1, Array2};
use rand::Rng;

fn generic_state(dict: &Dictionary, seed: u64) -> EncoderState {
    let mut rng = stream(seed, 0);
    let (h, n) = (dict.h(), dict.n());
    let w = Array2::from_shape_fn((h, n), |(i, r)| dict.atoms()[[r, i]] + 0.3 * (rng.random::<f64>() - 0.5));
    let bias = Array1::from_shape_fn(h, |_| rng.random::<f64>() * 0.4);
    EncoderState::new(w, bias).unwrap()
}

/// Brute force straight from the definition: enumerate supports and
/// integrate the quadratic in x by evaluating it on every pair of
/// amplitudes drawn from a two-point law with the same m1, m2.
fn brute_force(dict: &Dictionary, model: &CodeModel, state: &EncoderState, i: usize) -> Array1<f64> {
    use aecrit::proxy::{for_each_combination, proxy_integrand};
    let (h, k) = (model.h, model.k);
    // Two-point law with mean m1 and second moment m2 reproduces every
    // moment of degree <= 2 per coordinate; coordinates are independent.
    let sd = (model.m2 - model.m1 * model.m1).sqrt();
    let points = [model.m1 - sd, model.m1 + sd];
    let mut total = Array1::<f64>::zeros(dict.n());
    let mut supports = 0usize;
    for_each_combination(h, k, |s| {
        supports += 1;
        for mask in 0..(1usize << k) {
            let x: Vec<f64> = (0..k).map(|t| points[(mask >> t) & 1]).collect();
            let mut y = Array1::<f64>::zeros(dict.n());
            for (t, &j) in s.iter().enumerate() {
                y.scaled_add(x[t], &dict.atom(j));
            }
            total += &(proxy_integrand(state, s, y.view(), i) / (1usize << k) as f64);
        }
    });
    total / supports as f64
}

fn max_abs_diff(a: &[f64], b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn exact_matches_brute_force() {
    for (n, h, k, seed) in [(3, 5, 2, 1), (4, 6, 3, 2), (3, 7, 4, 3), (5, 5, 1, 4)] {
        let d = generate_dictionary(n, h, seed).unwrap();
        let m = CodeModel::with_support_size(h, k, 0.5, 2.0).unwrap();
        let state = generic_state(&d, seed + 10);
        for i in 0..h {
            let exact = proxy_gradient_exact(&d, &m, &state, i).unwrap();
            let brute = brute_force(&d, &m, &state, i);
            let err = max_abs_diff(exact.as_slice().unwrap(), &brute);
            assert!(err < 1e-10, "n={n} h={h} k={k} i={i}: {err}");
        }
    }
}

#[test]
fn closed_form_matches_enumeration() {
    for (n, h, k, seed) in [(3, 5, 2, 1), (4, 8, 3, 2), (5, 9, 4, 3), (6, 10, 5, 5), (4, 6, 1, 6), (6, 12, 4, 8)] {
        let d = generate_dictionary(n, h, seed).unwrap();
        let m = CodeModel::with_support_size(h, k, 1.0, 3.0).unwrap();
        let state = generic_state(&d, seed + 100);
        let ctx = ProxyContext::new(&d, &m, &state).unwrap();
        for i in 0..h {
            let exact = proxy_gradient_exact(&d, &m, &state, i).unwrap();
            let dec = ctx.decompose(i);
            let scale = exact.iter().map(|v| v.abs()).fold(1.0, f64::max);
            let err = max_abs_diff(&dec.reconstructed, &exact) / scale;
            assert!(err < 1e-10, "n={n} h={h} k={k} i={i}: rel err {err}");
        }
    }
}

#[test]
fn closed_form_matches_monte_carlo() {
    let d = generate_dictionary(8, 16, 4).unwrap();
    let m = CodeModel::with_support_size(16, 3, 1.0, 4.0).unwrap();
    let state = generic_state(&d, 44);
    let dec = alpha_beta_e(&d, &m, &state, 5).unwrap();
    let mc = proxy_gradient_mc(&d, &m, &state, 5, 200_000, 9).unwrap();
    for r in 0..8 {
        let z = (dec.reconstructed[r] - mc.mean[r]) / mc.stderr[r].max(1e-12);
        assert!(z.abs() < 5.0, "coordinate {r}: z = {z}");
    }
}
