mod common;

use amos_core::checkpoint::{load_checkpoint, save_checkpoint};
use amos_core::Error;
use amos_harness::runner::{final_checkpoint_path, run_experiment_in};
use amos_harness::Runner;
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn same_config_gives_identical_metrics_files() {
    let cfg = config(&mlp_toml(120, "kind = \"amos\"\nmomentum = 0.9"));
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment_in(&cfg, a.path(), None).unwrap();
    run_experiment_in(&cfg, b.path(), None).unwrap();
    for f in ["metrics.jsonl", "metrics.csv", "summary.json", "final.ckpt"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn resumed_runs_match_uninterrupted_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let optimizers = [
        "kind = \"amos\"\nmomentum = 0.9",
        "kind = \"amos\"",
        "kind = \"adamw\"\nalpha = 0.003\nwarmup_steps = 10",
        "kind = \"adagrad\"\nalpha = 0.05",
        "kind = \"sgd\"\nalpha = 0.01\nlambda = 0.001",
    ];
    for (i, opt) in optimizers.iter().enumerate() {
        let text = if i % 2 == 0 { lstm_toml(200, opt) } else { mlp_toml(200, opt) };
        let cfg = config(&text);
        let t = rng.random_range(1..100);
        let k = rng.random_range(1..100);
        let first = train(&cfg, t);
        let path = dir.path().join(format!("{i}.ckpt"));
        save_checkpoint(&first.checkpoint(), &path).unwrap();
        let mut resumed = Runner::resume(cfg.clone(), &load_checkpoint(&path).unwrap()).unwrap();
        resumed.run_until(t + k, None, None).unwrap();
        let straight = train(&cfg, t + k);
        assert!(bit_identical(resumed.params(), straight.params()), "{opt} t={t} k={k}");
        assert_eq!(resumed.state(), straight.state());
        let name = &straight.specs()[0].name;
        assert_eq!(resumed.tracker(name), straight.tracker(name));
    }
}

#[test]
fn resuming_through_run_experiment_appends_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let short = config(&quadratic_toml(50, "kind = \"amos\""));
    run_experiment_in(&short, dir.path(), None).unwrap();
    let mut long = short.clone();
    long.run.steps = 80;
    let summary = run_experiment_in(&long, dir.path(), Some(&final_checkpoint_path(dir.path()))).unwrap();
    assert_eq!(summary.steps, 80);
    let records = amos_harness::metrics::read_jsonl(&dir.path().join("metrics.jsonl")).unwrap();
    let steps: Vec<u64> = records.iter().map(|r| r.step).collect();
    assert_eq!(steps, (1..=8).map(|i| i * 10).collect::<Vec<_>>());
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("step")).count(), 1);
}

#[test]
fn resume_rejects_a_different_optimizer() {
    let amos = config(&quadratic_toml(10, "kind = \"amos\""));
    let ckpt = train(&amos, 5).checkpoint();
    let adamw = config(&quadratic_toml(10, "kind = \"adamw\"\nalpha = 0.01"));
    assert!(Runner::resume(adamw, &ckpt).is_err());
}

#[test]
fn amos_scale_on_quadratic_matches_eta() {
    let cfg = config(&quadratic_toml(2000, "kind = \"amos\""));
    let r = train(&cfg, 2000);
    let m2 = r.params()["theta"].m2().unwrap();
    assert!((m2 / 0.2 - 1.0).abs() < 0.25, "m2 = {m2}");
}

#[test]
fn divergence_names_the_step() {
    let cfg = config(&quadratic_toml(500, "kind = \"sgd\"\nalpha = 50.0"));
    let mut r = Runner::new(cfg).unwrap();
    let err = r.run_until(500, None, None).unwrap_err();
    match err.downcast_ref::<Error>() {
        Some(Error::Divergence { step, .. }) => assert!(*step < 500),
        other => panic!("expected divergence, got {other:?} / {err:#}"),
    }
}

#[test]
fn restarting_a_linear_schedule_raises_the_loss() {
    // Train to the end of a linear decay, then continue with a longer horizon:
    // the learning rate jumps back up and the eval loss rises.
    let t = 1000;
    let opt = |max: u64| format!("kind = \"adamw\"\nalpha = 0.01\nwarmup_steps = 50\nmax_steps = {max}");
    let cfg = config(&quadratic_toml(t, &opt(t)));
    let done = train(&cfg, t);
    let before = done.evaluate().unwrap();
    let cont = config(&quadratic_toml(2 * t, &opt(2 * t)));
    let mut r = Runner::resume(cont, &done.checkpoint()).unwrap();
    r.run_until(t + 100, None, None).unwrap();
    let after = r.evaluate().unwrap();
    assert!(after > before, "{after} <= {before}");

    // Amos carries its state across the same boundary without a jump.
    let amos = config(&quadratic_toml(2 * t, "kind = \"amos\"\nwarmup_steps = 50"));
    let first = train(&amos, t);
    let mut r = Runner::resume(amos.clone(), &first.checkpoint()).unwrap();
    r.run_until(t + 100, None, None).unwrap();
    assert!(bit_identical(r.params(), train(&amos, t + 100).params()));
}
