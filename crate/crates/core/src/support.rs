//! Support recovery by the ReLU layer.
//!
//! With `W` columnwise `delta`-close to `A*` and bias
//! `2 m1 k (delta + coherence)`, a unit fires for every index in the support
//! of `x*` and, with probability at least `1 - exp(-2 k m1^2 / (b - a)^2)`,
//! stays silent off the support.

use ndarray::ArrayView1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{theorem_bias, EncoderState};
use crate::error::{invalid, Result};
use crate::landscape::perturb_columnwise;
use crate::rng::{child_seed, stream};
use crate::synth::{sample_code, sample_support, CodeModel, Dictionary};

/// Default `nu^2 = p + 0.01`.
pub fn default_nu_sq(p: f64) -> f64 {
    p + 0.01
}

/// `{i : (W y - eps)_i > 0}`, ascending.
pub fn recover_support(state: &EncoderState, y: ArrayView1<'_, f64>) -> Vec<usize> {
    state
        .weights()
        .dot(&y)
        .iter()
        .zip(state.bias())
        .enumerate()
        .filter_map(|(i, (&wy, &e))| (wy - e > 0.0).then_some(i))
        .collect()
}

/// `exp(-2 k m1^2 / (b - a)^2)`; zero for degenerate amplitudes.
pub fn theoretical_failure_bound(model: &CodeModel) -> f64 {
    let width = model.b - model.a;
    if width <= 0.0 {
        return 0.0;
    }
    (-2.0 * model.k as f64 * model.m1 * model.m1 / (width * width)).exp()
}

/// One hypothesis `lhs <relation> rhs` with its margin (positive when it holds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

impl Condition {
    fn less(name: &str, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, margin: rhs - lhs, holds: lhs < rhs }
    }

    fn at_most(name: &str, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, margin: rhs - lhs, holds: lhs <= rhs }
    }

    fn at_least(name: &str, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, margin: lhs - rhs, holds: lhs >= rhs }
    }
}

/// Hypotheses of the recovery and criticality results, evaluated with unit
/// constants, plus the explicit inequality that makes in-support activation
/// deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    /// `p + nu^2 < xi`, `delta <= h^(-p-nu^2)`, `a >= b h^(-nu^2)`,
    /// `p < min(1/2, nu^2)`.
    pub structural: Vec<Condition>,
    /// `a (1 - delta) >= (b + 2 m1) k (delta + coherence)`.
    pub in_support: Condition,
}

impl Feasibility {
    pub fn structural_hold(&self) -> bool {
        self.structural.iter().all(|c| c.holds)
    }

    pub fn all_hold(&self) -> bool {
        self.structural_hold() && self.in_support.holds
    }
}

pub fn feasibility_check(model: &CodeModel, dict: &Dictionary, delta: f64, nu_sq: f64) -> Feasibility {
    feasibility_from(model, dict.coherence(), dict.xi(), delta, nu_sq)
}

/// [`feasibility_check`] for a given coherence and exponent.
pub fn feasibility_from(model: &CodeModel, coherence: f64, xi: f64, delta: f64, nu_sq: f64) -> Feasibility {
    let h = model.h as f64;
    let p = model.p;
    let structural = vec![
        Condition::less("p + nu^2 < xi", p + nu_sq, xi),
        Condition::at_most("delta <= h^(-p-nu^2)", delta, h.powf(-p - nu_sq)),
        Condition::at_least("a >= b h^(-nu^2)", model.a, model.b * h.powf(-nu_sq)),
        Condition::less("p < min(1/2, nu^2)", p, nu_sq.min(0.5)),
    ];
    let in_support = Condition::at_least(
        "a (1 - delta) >= (b + 2 m1) k (delta + coherence)",
        model.a * (1.0 - delta),
        (model.b + 2.0 * model.m1) * model.k as f64 * (delta + coherence),
    );
    Feasibility { structural, in_support }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub n: usize,
    pub h: usize,
    pub k: usize,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub nu_sq: f64,
    pub xi: f64,
    pub coherence: f64,
    pub prefactor: f64,
    pub bias: f64,
}

/// Per-trial counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub support_size: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub trials: usize,
    /// In-support units that fired / in-support units.
    pub tpr: f64,
    /// Off-support units that fired / off-support units.
    pub fpr: f64,
    /// Binomial standard error of `fpr` under the bound.
    pub fpr_sigma: f64,
    /// Fraction of trials whose active set equals the support.
    pub exact_rate: f64,
    pub bound: f64,
    pub regime: Regime,
    pub feasibility: Feasibility,
    pub assumptions_violated: bool,
    #[serde(skip)]
    pub outcomes: Vec<TrialOutcome>,
}

impl RecoveryReport {
    /// `fpr <= bound + 3 sigma`.
    pub fn off_support_within_bound(&self) -> bool {
        self.fpr <= self.bound + 3.0 * self.fpr_sigma
    }
}

/// Settings for [`run_recovery_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub delta: f64,
    pub nu_sq: f64,
    pub prefactor: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Each trial draws a fresh `W` at columnwise distance `delta` from `A*` and
/// a fresh code, then compares the active set with the true support. Trial
/// `t` uses stream `(child_seed(seed, "recovery", 0), t)`.
pub fn run_recovery_experiment(dict: &Dictionary, model: &CodeModel, cfg: &RecoveryConfig) -> Result<RecoveryReport> {
    if cfg.trials == 0 {
        return Err(invalid("recovery experiment needs at least one trial"));
    }
    if dict.h() != model.h {
        return Err(crate::error::mismatch("dictionary and code model disagree on h"));
    }
    let bias = theorem_bias(model, cfg.delta, dict.coherence(), cfg.prefactor)?;
    let trial_seed = child_seed(cfg.seed, "recovery", 0);
    let outcomes = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(trial_seed, t as u64);
            let w = perturb_columnwise(dict, cfg.delta, &mut rng)?;
            let support = sample_support(model, &mut rng);
            let amps = sample_code(model, &support, &mut rng);
            let mut y = ndarray::Array1::<f64>::zeros(dict.n());
            for (&j, &x) in support.iter().zip(&amps) {
                y.scaled_add(x, &dict.atom(j));
            }
            let state = EncoderState::new(w, bias.clone())?;
            let active = recover_support(&state, y.view());
            let true_positives = active.iter().filter(|i| support.binary_search(i).is_ok()).count();
            Ok(TrialOutcome {
                trial: t,
                support_size: support.len(),
                true_positives,
                false_positives: active.len() - true_positives,
                exact: active == support,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let in_total: usize = outcomes.iter().map(|o| o.support_size).sum();
    let in_hits: usize = outcomes.iter().map(|o| o.true_positives).sum();
    let off_total = cfg.trials * model.h - in_total;
    let off_hits: usize = outcomes.iter().map(|o| o.false_positives).sum();
    let exact = outcomes.iter().filter(|o| o.exact).count();
    let bound = theoretical_failure_bound(model);
    let fpr_sigma = if off_total > 0 {
        (bound * (1.0 - bound) / off_total as f64).sqrt()
    } else {
        0.0
    };
    let feasibility = feasibility_check(model, dict, cfg.delta, cfg.nu_sq);
    Ok(RecoveryReport {
        trials: cfg.trials,
        tpr: in_hits as f64 / in_total as f64,
        fpr: if off_total > 0 { off_hits as f64 / off_total as f64 } else { 0.0 },
        fpr_sigma,
        exact_rate: exact as f64 / cfg.trials as f64,
        bound,
        regime: Regime {
            n: dict.n(),
            h: model.h,
            k: model.k,
            p: model.p,
            a: model.a,
            b: model.b,
            delta: cfg.delta,
            nu_sq: cfg.nu_sq,
            xi: dict.xi(),
            coherence: dict.coherence(),
            prefactor: cfg.prefactor,
            bias: bias[0],
        },
        assumptions_violated: !feasibility.all_hold(),
        feasibility,
        outcomes,
    })
}
