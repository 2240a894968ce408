use aecrit::autoencoder::EncoderState;
use aecrit::support::{
    default_nu_sq, feasibility_from, recover_support, run_recovery_experiment, theoretical_failure_bound, RecoveryConfig,
};
use aecrit::synth::{generate_dictionary, CodeModel};
use ndarray::{arr1, Array1, Array2};

#[test]
fn failure_bound_for_default_amplitudes() {
    // k = round(1024^0.05) = 1, m1 = 5.5: exp(-2 * 30.25 / 81).
    let m = CodeModel::uniform(1024, 0.05, 1.0, 10.0).unwrap();
    assert_eq!(m.k, 1);
    let want = (-60.5_f64 / 81.0).exp();
    assert!((theoretical_failure_bound(&m) - want).abs() < 1e-15);
    assert!((theoretical_failure_bound(&m) - 0.4738).abs() < 5e-5);
}

#[test]
fn failure_bound_vanishes_for_fixed_amplitude() {
    let m = CodeModel::uniform(64, 0.1, 3.0, 3.0).unwrap();
    assert_eq!(theoretical_failure_bound(&m), 0.0);
}

#[test]
fn nu_sq_below_p_is_flagged() {
    let m = CodeModel::uniform(1024, 0.05, 1.0, 10.0).unwrap();
    let f = feasibility_from(&m, 0.1, 0.5, 0.001, 0.04);
    let c = f.structural.iter().find(|c| c.name.starts_with("p < min")).unwrap();
    assert!(!c.holds);
    assert!(c.margin < 0.0);
    assert!(!f.all_hold());
}

#[test]
fn default_nu_sq_is_just_above_p() {
    assert!((default_nu_sq(0.05) - 0.06).abs() < 1e-15);
}

#[test]
fn hand_built_feasible_regime_holds() {
    let m = CodeModel::uniform(512, 0.01, 9.0, 10.0).unwrap();
    let f = feasibility_from(&m, 0.19, 0.26, 0.01, 0.05);
    assert!(f.all_hold(), "{f:?}");
}

#[test]
fn recovered_support_follows_threshold() {
    let w = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
    let s = EncoderState::new(w, arr1(&[0.5, 0.5, 2.5])).unwrap();
    assert_eq!(recover_support(&s, arr1(&[1.0, 0.2]).view()), vec![0]);
    assert_eq!(recover_support(&s, arr1(&[2.0, 1.0]).view()), vec![0, 1, 2]);
    // Exactly at threshold the unit stays off.
    assert_eq!(recover_support(&s, arr1(&[0.5, 0.0]).view()), Vec::<usize>::new());
}

#[test]
fn larger_bias_never_fires_more_units() {
    let d = generate_dictionary(10, 20, 5).unwrap();
    let y = d.atoms().column(3).to_owned() * 2.0 + d.atoms().column(7).to_owned();
    let mut last = usize::MAX;
    for e in [0.0, 0.1, 0.3, 0.6, 1.0, 1.5, 2.5] {
        let s = EncoderState::at_dictionary(&d, Array1::from_elem(20, e)).unwrap();
        let fired = recover_support(&s, y.view()).len();
        assert!(fired <= last);
        last = fired;
    }
}

#[test]
fn single_trial_and_zero_trials() {
    let d = generate_dictionary(8, 8, 1).unwrap();
    let m = CodeModel::uniform(8, 0.01, 9.0, 10.0).unwrap();
    let cfg = RecoveryConfig { delta: 0.01, nu_sq: 0.05, prefactor: 2.0, trials: 1, seed: 0 };
    let rep = run_recovery_experiment(&d, &m, &cfg).unwrap();
    assert_eq!(rep.trials, 1);
    assert!((0.0..=1.0).contains(&rep.tpr));
    assert!(run_recovery_experiment(&d, &m, &RecoveryConfig { trials: 0, ..cfg }).is_err());
}

#[test]
fn recovery_is_deterministic() {
    let d = generate_dictionary(16, 24, 2).unwrap();
    let m = CodeModel::uniform(24, 0.2, 2.0, 6.0).unwrap();
    let cfg = RecoveryConfig { delta: 0.05, nu_sq: 0.25, prefactor: 0.5, trials: 300, seed: 9 };
    let a = run_recovery_experiment(&d, &m, &cfg).unwrap();
    let b = run_recovery_experiment(&d, &m, &cfg).unwrap();
    assert_eq!(a.outcomes, b.outcomes);
    assert_eq!(a.tpr, b.tpr);
    assert_eq!(a.fpr, b.fpr);
}
