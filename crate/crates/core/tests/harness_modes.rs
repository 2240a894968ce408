use aecrit::harness::{run, run_with, ExperimentConfig, Experiment, Outcome, Registry, GRADTABLE_HEADER, TABLE1_H, TABLE1_P};
use aecrit::Error;

fn cfg(mode: &str, out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig { mode: mode.into(), n: 4, h: 8, samples: 40, points: 2, out: out.to_path_buf(), ..Default::default() }
}

#[test]
fn table1_writes_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&cfg("table1", dir.path())).unwrap();
    assert_eq!(m.summary["cells"], 20);
    let long = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    let mut lines = long.lines();
    assert_eq!(lines.next(), Some(GRADTABLE_HEADER));
    assert_eq!(lines.count(), TABLE1_H.len() * TABLE1_P.len());
    let wide = std::fs::read_to_string(dir.path().join("table1_wide.csv")).unwrap();
    assert_eq!(wide.lines().count(), 1 + TABLE1_H.len());
}

#[test]
fn every_builtin_mode_runs_on_a_small_config() {
    for name in Registry::builtin().names() {
        if name == "table1" {
            continue;
        }
        let dir = tempfile::tempdir().unwrap();
        let m = run(&cfg(name, dir.path())).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(m.mode, name);
        assert!(dir.path().join("manifest.json").exists());
        for a in &m.artifacts {
            assert!(dir.path().join(a).exists(), "{name}: missing {a}");
        }
    }
}

struct Echo;

impl Experiment for Echo {
    fn name(&self) -> &'static str {
        "echo"
    }

    fn about(&self) -> &'static str {
        "writes nothing"
    }

    fn run(&self, cfg: &ExperimentConfig) -> aecrit::Result<Outcome> {
        Ok(Outcome { summary: serde_json::json!({ "seed": cfg.seed }), ..Default::default() })
    }
}

#[test]
fn custom_modes_plug_into_the_registry() {
    let mut r = Registry::empty();
    r.register(Box::new(Echo));
    let dir = tempfile::tempdir().unwrap();
    let m = run_with(&r, &ExperimentConfig { seed: 5, ..cfg("echo", dir.path()) }).unwrap();
    assert_eq!(m.summary["seed"], 5);
    assert!(matches!(run_with(&r, &cfg("gen", dir.path())), Err(Error::UnknownMode(_))));
}

#[test]
fn same_config_same_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&cfg("gen", a.path())).unwrap();
    run(&cfg("gen", b.path())).unwrap();
    for f in ["dictionary.bin", "batch.bin", "codes.csv", "signals.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
