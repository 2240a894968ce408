//! The built-in experiment modes.
//!
//! Seeds: the dictionary comes from `child_seed(seed, "dictionary", 0)` in
//! every mode, so runs that share `(n, seed)` share atoms (a dictionary with
//! larger `h` extends a smaller one column by column). Each library routine
//! derives its own children from the master seed.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::ExperimentConfig;
use super::registry::{Experiment, Outcome};
use crate::autoencoder::{theorem_bias, EncoderState};
use crate::error::{Error, Result};
use crate::format::{save_batch, save_dictionary, save_sidecar, write_codes_csv, write_signals_csv, Sidecar};
use crate::gradcheck::{run_gradcheck, GradcheckConfig};
use crate::landscape::{
    default_t_grid, gradient_table, loss_scan, perturb_columnwise, GradTableConfig, GradientStats, ScanConfig,
    EXPERIMENT_PREFACTOR,
};
use crate::proxy::{mismatch_rates, proxy_gradient_exact, support_law_moments, ProxyContext};
use crate::rng::{child_seed, stream};
use crate::support::{run_recovery_experiment, RecoveryConfig};
use crate::synth::{generate_dictionary, make_batch, CodeModel, Dictionary};

/// Bias prefactor of the recovery theorem.
pub const THEOREM_PREFACTOR: f64 = 2.0;

pub const TABLE1_H: [usize; 5] = [256, 512, 1024, 2048, 4096];
pub const TABLE1_P: [f64; 4] = [0.01, 0.02, 0.05, 0.1];

pub const GRADTABLE_HEADER: &str = "h,p,distance,mean_col_norm,reference,points,samples,seed";

fn dictionary(cfg: &ExperimentConfig, h: usize) -> Result<Dictionary> {
    generate_dictionary(cfg.n, h, child_seed(cfg.seed, "dictionary", 0))
}

fn measured(d: &Dictionary) -> Option<(f64, f64)> {
    Some((d.coherence(), d.xi()))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::write(dir.join(name), text)?;
    Ok(PathBuf::from(name))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}

fn write_with(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<PathBuf> {
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    body(&mut w)?;
    w.flush()?;
    Ok(PathBuf::from(name))
}

/// Theory-side encoder: every row at distance `delta = h^(-p - nu^2)` from
/// its atom, bias `prefactor m1 k (delta + coherence)`.
fn theory_state(cfg: &ExperimentConfig, d: &Dictionary, model: &CodeModel) -> Result<(EncoderState, f64)> {
    let delta = (model.h as f64).powf(-model.p - cfg.nu_sq());
    let mut rng = stream(child_seed(cfg.seed, "perturb", 0), 0);
    let w = perturb_columnwise(d, delta, &mut rng)?;
    let bias = theorem_bias(model, delta, d.coherence(), cfg.prefactor_or(THEOREM_PREFACTOR))?;
    Ok((EncoderState::new(w, bias)?, delta))
}

fn gradtable_row(s: &GradientStats, seed: u64) -> String {
    format!("{},{},{},{},{},{},{},{}", s.h, s.p, s.distance, s.mean_col_norm, s.reference, s.points, s.samples, seed)
}

pub struct Gen;

impl Experiment for Gen {
    fn name(&self) -> &'static str {
        "gen"
    }

    fn about(&self) -> &'static str {
        "dictionary + sample batch in binary, JSON sidecar, CSV of codes and signals"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let model = cfg.model()?;
        let d = dictionary(cfg, cfg.h)?;
        let batch = make_batch(&d, &model, cfg.samples, child_seed(cfg.seed, "batch", 0))?;
        let dir = &cfg.out;
        save_dictionary(&dir.join("dictionary.bin"), &d)?;
        save_sidecar(&dir.join("dictionary.json"), &Sidecar::describe(&d, cfg.p, cfg.a, cfg.b, cfg.seed))?;
        save_batch(&dir.join("batch.bin"), &batch)?;
        let codes = write_with(dir, "codes.csv", |w| write_codes_csv(w, &batch))?;
        let signals = write_with(dir, "signals.csv", |w| write_signals_csv(w, &batch))?;
        Ok(Outcome {
            artifacts: vec!["dictionary.bin".into(), "dictionary.json".into(), "batch.bin".into(), codes, signals],
            measured: measured(&d),
            summary: json!({ "k": model.k, "samples": batch.len() }),
        })
    }
}

pub struct Support;

impl Experiment for Support {
    fn name(&self) -> &'static str {
        "support"
    }

    fn about(&self) -> &'static str {
        "support recovery trials at the theorem bias (samples = trials)"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let model = cfg.model()?;
        let d = dictionary(cfg, cfg.h)?;
        let rc = RecoveryConfig {
            delta: (cfg.h as f64).powf(-cfg.p - cfg.nu_sq()),
            nu_sq: cfg.nu_sq(),
            prefactor: cfg.prefactor_or(THEOREM_PREFACTOR),
            trials: cfg.samples,
            seed: cfg.seed,
        };
        let report = run_recovery_experiment(&d, &model, &rc)?;
        let json_name = write_json(&cfg.out, "support.json", &report)?;
        let csv_name = write_with(&cfg.out, "support_trials.csv", |w| {
            writeln!(w, "trial,support_size,true_positives,false_positives,exact")?;
            for o in &report.outcomes {
                writeln!(w, "{},{},{},{},{}", o.trial, o.support_size, o.true_positives, o.false_positives, o.exact)?;
            }
            Ok(())
        })?;
        Ok(Outcome {
            artifacts: vec![json_name, csv_name],
            measured: measured(&d),
            summary: json!({
                "tpr": report.tpr,
                "fpr": report.fpr,
                "bound": report.bound,
                "assumptions_violated": report.assumptions_violated,
            }),
        })
    }
}

pub struct GradTable;

impl Experiment for GradTable {
    fn name(&self) -> &'static str {
        "gradtable"
    }

    fn about(&self) -> &'static str {
        "mean column gradient norm at points delta/2 from the dictionary, against h^(p-1)"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let model = cfg.model()?;
        let d = dictionary(cfg, cfg.h)?;
        let stats = gradient_table(&d, &model, &table_config(cfg, &model))?;
        let name = write_text(&cfg.out, "gradtable.csv", &format!("{GRADTABLE_HEADER}\n{}\n", gradtable_row(&stats, cfg.seed)))?;
        Ok(Outcome {
            artifacts: vec![name],
            measured: measured(&d),
            summary: json!({ "mean_col_norm": stats.mean_col_norm, "reference": stats.reference, "ratio": stats.ratio() }),
        })
    }
}

fn table_config(cfg: &ExperimentConfig, model: &CodeModel) -> GradTableConfig {
    GradTableConfig {
        points: cfg.points,
        samples: cfg.samples,
        prefactor: cfg.prefactor_or(EXPERIMENT_PREFACTOR),
        ..GradTableConfig::experiment_defaults(model, cfg.seed)
    }
}

pub struct Scan;

impl Experiment for Scan {
    fn name(&self) -> &'static str {
        "scan"
    }

    fn about(&self) -> &'static str {
        "loss and mean column gradient norm along one random direction"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let model = cfg.model()?;
        let d = dictionary(cfg, cfg.h)?;
        let sc = ScanConfig {
            ts: default_t_grid(),
            samples: cfg.samples,
            prefactor: cfg.prefactor_or(EXPERIMENT_PREFACTOR),
            seed: cfg.seed,
        };
        let r = loss_scan(&d, &model, &sc)?;
        let mut text = String::from("t,loss,grad_norm\n");
        for ((t, l), g) in r.ts.iter().zip(&r.loss_vals).zip(&r.grad_norms) {
            writeln!(text, "{t},{l},{g}").expect("writing to a String");
        }
        let name = write_text(&cfg.out, "scan.csv", &text)?;
        Ok(Outcome {
            artifacts: vec![name],
            measured: measured(&d),
            summary: json!({
                "direction_seed": r.direction_seed,
                "loss_minimized_at_origin": r.loss_minimized_at_origin(),
                "grad_norm_decreases_toward_origin": r.grad_norm_decreases_toward_origin(),
            }),
        })
    }
}

pub struct Decompose;

#[derive(Serialize)]
struct ColumnRow {
    i: usize,
    alpha: f64,
    beta: f64,
    e_norm: f64,
    /// `|alpha W_i - beta A_i + e_i - exact proxy|`, only with `exact`.
    residual: Option<f64>,
    alpha_ratio: f64,
    beta_ratio: f64,
    gap_ratio: f64,
    e_ratio: f64,
}

impl Experiment for Decompose {
    fn name(&self) -> &'static str {
        "decompose"
    }

    fn about(&self) -> &'static str {
        "closed-form alpha, beta, e of the proxy gradient for every column"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let model = cfg.model()?;
        let d = dictionary(cfg, cfg.h)?;
        let (state, delta) = theory_state(cfg, &d, &model)?;
        if cfg.exact {
            // Fail before any work if enumeration is out of reach.
            proxy_gradient_exact(&d, &model, &state, 0)?;
        }
        let ctx = ProxyContext::new(&d, &model, &state)?;
        let rows = (0..model.h)
            .into_par_iter()
            .map(|i| {
                let dec = ctx.decompose(i);
                let residual = if cfg.exact {
                    let exact = proxy_gradient_exact(&d, &model, &state, i)?;
                    Some(dec.reconstructed.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                } else {
                    None
                };
                Ok(ColumnRow {
                    i,
                    alpha: dec.alpha,
                    beta: dec.beta,
                    e_norm: dec.e_norm(),
                    residual,
                    alpha_ratio: dec.alpha_ratio,
                    beta_ratio: dec.beta_ratio,
                    gap_ratio: dec.gap_ratio,
                    e_ratio: dec.e_ratio,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let median = |f: fn(&ColumnRow) -> f64| median(rows.iter().map(f).collect());
        let summary = json!({
            "median_alpha_ratio": median(|r| r.alpha_ratio),
            "median_gap_ratio": median(|r| r.gap_ratio),
            "median_e_ratio": median(|r| r.e_ratio),
            "max_residual": rows.iter().filter_map(|r| r.residual).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))),
        });
        let q = support_law_moments(&model);
        let body = json!({
            "h": model.h, "p": model.p, "k": model.k, "m1": model.m1, "m2": model.m2,
            "q1": q.q1, "q2": q.q2, "q3": q.q3, "q4": q.q4,
            "delta": delta,
            "reference_scale": (model.h as f64).powf(model.p - 1.0) * (model.m1 * model.m1).max(model.m2),
            "columns": rows,
        });
        let name = write_json(&cfg.out, "decompose.json", &body)?;
        Ok(Outcome { artifacts: vec![name], measured: measured(&d), summary })
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub struct Mismatch;

impl Experiment for Mismatch {
    fn name(&self) -> &'static str {
        "mismatch"
    }

    fn about(&self) -> &'static str {
        "per-unit rate at which firing disagrees with support membership"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let model = cfg.model()?;
        let d = dictionary(cfg, cfg.h)?;
        let (state, delta) = theory_state(cfg, &d, &model)?;
        let reports = mismatch_rates(&d, &model, &state, cfg.samples, cfg.seed)?;
        let rates: Vec<f64> = reports.iter().map(|r| r.rate).collect();
        let bound = reports[0].bound;
        let mean_rate = rates.iter().sum::<f64>() / rates.len() as f64;
        let max_rate = rates.iter().copied().fold(0.0, f64::max);
        let within = reports.iter().filter(|r| r.within_bound()).count();
        let body = json!({
            "samples": cfg.samples, "delta": delta, "bound": bound,
            "mean_rate": mean_rate, "max_rate": max_rate,
            "units_within_bound": within, "units": reports.len(),
            "rates": rates,
        });
        let name = write_json(&cfg.out, "mismatch.json", &body)?;
        Ok(Outcome {
            artifacts: vec![name],
            measured: measured(&d),
            summary: json!({ "mean_rate": mean_rate, "max_rate": max_rate, "bound": bound }),
        })
    }
}

pub struct GradCheck;

impl Experiment for GradCheck {
    fn name(&self) -> &'static str {
        "gradcheck"
    }

    fn about(&self) -> &'static str {
        "finite-difference check of the analytic gradient (fails the run above 1e-6)"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let report = run_gradcheck(&GradcheckConfig { seed: cfg.seed, ..Default::default() })?;
        let name = write_json(&cfg.out, "gradcheck.json", &report)?;
        if !report.passed {
            return Err(Error::CheckFailed(format!(
                "max relative error {:e} above {:e}",
                report.max_rel_error, report.config.tolerance
            )));
        }
        Ok(Outcome {
            artifacts: vec![name],
            measured: None,
            summary: json!({ "configs": report.cases.len(), "max_rel_error": report.max_rel_error }),
        })
    }
}

pub struct Table1;

impl Experiment for Table1 {
    fn name(&self) -> &'static str {
        "table1"
    }

    fn about(&self) -> &'static str {
        "gradtable over h in 256..4096 and p in {0.01, 0.02, 0.05, 0.1} (ignores --h, --p)"
    }

    fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        let cells = table1_suite(cfg)?;
        let mut long = format!("{GRADTABLE_HEADER}\n");
        for s in &cells {
            long.push_str(&gradtable_row(s, cfg.seed));
            long.push('\n');
        }
        let mut wide = String::from("h");
        for p in TABLE1_P {
            write!(wide, ",{p}").expect("writing to a String");
        }
        wide.push('\n');
        for (r, h) in TABLE1_H.iter().enumerate() {
            write!(wide, "{h}").expect("writing to a String");
            for s in &cells[r * TABLE1_P.len()..(r + 1) * TABLE1_P.len()] {
                write!(wide, ",\"({:.4}, {:.4})\"", s.mean_col_norm, s.reference).expect("writing to a String");
            }
            wide.push('\n');
        }
        let a = write_text(&cfg.out, "table1.csv", &long)?;
        let b = write_text(&cfg.out, "table1_wide.csv", &wide)?;
        let d = dictionary(cfg, TABLE1_H[0])?;
        Ok(Outcome {
            artifacts: vec![a, b],
            measured: measured(&d),
            summary: json!({ "cells": cells.len() }),
        })
    }
}

/// All 20 cells in row-major `(h, p)` order. Cells run in parallel and are
/// independent: each uses the same master seed as a single `gradtable` run.
pub fn table1_suite(cfg: &ExperimentConfig) -> Result<Vec<GradientStats>> {
    table_cells(cfg, &TABLE1_H, &TABLE1_P)
}

pub fn table_cells(cfg: &ExperimentConfig, hs: &[usize], ps: &[f64]) -> Result<Vec<GradientStats>> {
    let grid: Vec<(usize, f64)> = hs.iter().flat_map(|&h| ps.iter().map(move |&p| (h, p))).collect();
    grid.par_iter()
        .map(|&(h, p)| {
            let cell = ExperimentConfig { h, p, ..cfg.clone() };
            cell.validate()?;
            let model = cell.model()?;
            gradient_table(&dictionary(&cell, h)?, &model, &table_config(&cell, &model))
        })
        .collect()
}
