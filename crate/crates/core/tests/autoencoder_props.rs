use aecrit::autoencoder::{batch_loss_and_grad, forward, grad_column, grad_full, EncoderState};
use aecrit::synth::{generate_dictionary, make_batch, CodeModel};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

fn state(h: usize, n: usize, w: &[f64], bias: &[f64]) -> EncoderState {
    let w = Array2::from_shape_vec((h, n), w.to_vec()).unwrap();
    EncoderState::new(w, Array1::from_vec(bias.to_vec())).unwrap()
}

/// Direct transcription of the loss with no shared helpers.
fn naive_loss(w: &Array2<f64>, bias: &Array1<f64>, y: &Array1<f64>) -> f64 {
    let (h, n) = w.dim();
    let mut yhat = vec![0.0; n];
    for i in 0..h {
        let z: f64 = (0..n).map(|r| w[[i, r]] * y[r]).sum::<f64>() - bias[i];
        if z > 0.0 {
            for r in 0..n {
                yhat[r] += z * w[[i, r]];
            }
        }
    }
    0.5 * (0..n).map(|r| (yhat[r] - y[r]).powi(2)).sum::<f64>()
}

proptest! {
    #[test]
    fn loss_matches_naive(
        (h, n, w, b, y) in (1usize..6, 1usize..5).prop_flat_map(|(h, n)| (
            Just(h), Just(n),
            prop::collection::vec(-2.0f64..2.0, h * n),
            prop::collection::vec(0.0f64..1.0, h),
            prop::collection::vec(-3.0f64..3.0, n),
        ))
    ) {
        let s = state(h, n, &w, &b);
        let y = Array1::from_vec(y);
        let t = forward(&s, y.view());
        let want = naive_loss(s.weights(), s.bias(), &y);
        prop_assert!((t.loss - want).abs() <= 1e-12 * (1.0 + want));
        prop_assert!(t.loss >= 0.0);
    }

    #[test]
    fn inactive_rows_have_zero_gradient(
        (h, n, w, b, y) in (1usize..6, 1usize..5).prop_flat_map(|(h, n)| (
            Just(h), Just(n),
            prop::collection::vec(-2.0f64..2.0, h * n),
            prop::collection::vec(0.0f64..1.0, h),
            prop::collection::vec(-3.0f64..3.0, n),
        ))
    ) {
        let s = state(h, n, &w, &b);
        let y = Array1::from_vec(y);
        let t = forward(&s, y.view());
        for i in 0..h {
            let g = grad_column(&s, y.view(), i);
            if t.preact[i] <= 0.0 {
                prop_assert!(g.grad.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn zero_signal_gives_zero_loss_and_gradient(
        (h, n, w, b) in (1usize..6, 1usize..5).prop_flat_map(|(h, n)| (
            Just(h), Just(n),
            prop::collection::vec(-2.0f64..2.0, h * n),
            prop::collection::vec(0.0f64..1.0, h),
        ))
    ) {
        let s = state(h, n, &w, &b);
        let y = Array1::zeros(n);
        prop_assert_eq!(forward(&s, y.view()).loss, 0.0);
        for i in 0..h {
            prop_assert!(grad_column(&s, y.view(), i).grad.iter().all(|&v| v == 0.0));
        }
    }
}

#[test]
fn batch_gradient_is_mean_of_per_sample_gradients() {
    let d = generate_dictionary(6, 10, 2).unwrap();
    let m = CodeModel::with_support_size(10, 2, 1.0, 3.0).unwrap();
    let batch = make_batch(&d, &m, 200, 5).unwrap();
    let s = EncoderState::at_dictionary(&d, Array1::from_elem(10, 0.3)).unwrap();
    let g = grad_full(&s, &batch).unwrap();
    for i in 0..10 {
        let mut acc = Array1::<f64>::zeros(6);
        for t in 0..batch.len() {
            acc += &grad_column(&s, batch.signal(t), i).grad;
        }
        acc /= batch.len() as f64;
        for (u, v) in acc.iter().zip(g.row(i)) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn batch_result_is_independent_of_thread_count() {
    let d = generate_dictionary(8, 16, 4).unwrap();
    let m = CodeModel::with_support_size(16, 2, 1.0, 4.0).unwrap();
    let batch = make_batch(&d, &m, 1000, 6).unwrap();
    let s = EncoderState::at_dictionary(&d, Array1::from_elem(16, 0.2)).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| batch_loss_and_grad(&s, batch.signals().view()).unwrap());
    let b = four.install(|| batch_loss_and_grad(&s, batch.signals().view()).unwrap());
    assert_eq!(a, b);
}

#[test]
fn empty_and_mismatched_batches_are_rejected() {
    let s = EncoderState::new(Array2::zeros((3, 2)), Array1::zeros(3)).unwrap();
    assert!(batch_loss_and_grad(&s, Array2::<f64>::zeros((0, 2)).view()).is_err());
    assert!(batch_loss_and_grad(&s, Array2::<f64>::zeros((4, 3)).view()).is_err());
}

#[test]
fn negative_bias_is_rejected() {
    assert!(EncoderState::new(Array2::zeros((2, 2)), Array1::from_vec(vec![0.1, -0.1])).is_err());
}
