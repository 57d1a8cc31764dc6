//! End-to-end runs of the command-line entry point.

use std::path::{Path, PathBuf};

use isscert::cli::{run_command, Checkpoint, RunConfig, FORMAT_VERSION};
use isscert::environments::EnvKind;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["isscert"];
    argv.extend_from_slice(args);
    run_command(argv)
}

fn trained(dir: &Path) -> PathBuf {
    let out = dir.join("smoke.json");
    let status = run(&["train", "--config", config("smoke.json").to_str().unwrap(), "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(status, 0);
    out
}

#[test]
fn shipped_configs_parse() {
    for (name, kind) in [
        ("platoon5.json", EnvKind::Platoon),
        ("platoon5_full.json", EnvKind::Platoon),
        ("platoon5_robust.json", EnvKind::Platoon),
        ("drone2x2.json", EnvKind::PlanarDrone),
        ("microgrid5.json", EnvKind::Microgrid),
        ("smoke.json", EnvKind::Platoon),
    ] {
        let rc = RunConfig::load(&config(name)).unwrap();
        assert_eq!(rc.env.kind, kind, "{name}");
        rc.train_config().unwrap();
        rc.env.build().unwrap();
    }
    let desk = RunConfig::load(&config("platoon5.json")).unwrap().train_config().unwrap();
    assert_eq!((desk.batch_size, desk.total_iters()), (512, 3000));
}

#[test]
fn train_writes_checkpoint_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let ck_path = trained(dir.path());
    let ck = Checkpoint::load(&ck_path).unwrap();
    assert_eq!(ck.format_version, FORMAT_VERSION);
    assert_eq!(ck.seed, 3);
    assert_eq!(ck.history.iterations, 20);
    let hist = std::fs::read_to_string(dir.path().join("smoke.json.history.csv")).unwrap();
    assert_eq!(hist.lines().next().unwrap(), "iteration,goal,A,B,ctrl,total");
    assert_eq!(hist.lines().count(), 21);

    let text = std::fs::read_to_string(&ck_path).unwrap();
    let again = dir.path().join("again.json");
    Checkpoint::load(&ck_path).unwrap().save(&again).unwrap();
    assert_eq!(std::fs::read_to_string(&again).unwrap(), text);
}

#[test]
fn verify_reports_rates_per_node() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path());
    let rep = dir.path().join("report.json");
    let status = run(&["verify", "--checkpoint", ck.to_str().unwrap(), "--samples", "2000", "--goal-samples", "100", "--out", rep.to_str().unwrap()]);
    assert_eq!(status, 0);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    let rates = json["implication_violation_rate"].as_array().unwrap();
    assert_eq!(rates.len(), 5);
    assert!(rates.iter().all(|r| (0.0..=1.0).contains(&r.as_f64().unwrap())));
    assert_eq!(json["n_samples"], 2000);
}

#[test]
fn port_to_hundred_trucks() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path());
    let out = dir.path().join("p100.json");
    assert_eq!(run(&["port", "--checkpoint", ck.to_str().unwrap(), "--target-n", "100", "--out", out.to_str().unwrap()]), 0);
    let p = Checkpoint::load(&out).unwrap();
    assert_eq!(p.env.n, Some(100));
    assert_eq!(p.bundle.n(), 100);
    assert_eq!(p.bundle.groups.len(), 3);
    let mut used = p.bundle.node_group.clone();
    used.dedup();
    assert_eq!(used, vec![0, 1, 2]);
}

#[test]
fn eval_and_compare_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let ck = trained(dir.path());
    let trace = dir.path().join("trace.csv");
    assert_eq!(run(&["eval", "--checkpoint", ck.to_str().unwrap(), "--seed", "1", "--steps", "50", "--out", trace.to_str().unwrap()]), 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("step,time,dist_0,"));
    assert_eq!(text.lines().count(), 52);

    let base = dir.path().join("lqr.csv");
    let cfg = config("platoon5.json");
    assert_eq!(run(&["eval", "--config", cfg.to_str().unwrap(), "--baseline", "lqr", "--out", base.to_str().unwrap()]), 0);

    let cmp = dir.path().join("cmp.csv");
    assert_eq!(
        run(&["compare", "--checkpoint", ck.to_str().unwrap(), "--baseline", "lqr", "--seeds", "2", "--steps", "50", "--out", cmp.to_str().unwrap()]),
        0
    );
    let rows = std::fs::read_to_string(&cmp).unwrap();
    assert!(rows.lines().any(|l| l.starts_with("neural,1,")));
    assert!(rows.lines().any(|l| l.starts_with("lqr,0,")));
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["train", "--frobnicate"]), 2);
    assert_eq!(run(&["launch"]), 2);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"env": {"kind": "platoon"}, "train": {"mu_x": 1}}"#).unwrap();
    assert_eq!(run(&["train", "--config", bad.to_str().unwrap()]), 1);
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(run(&["train", "--config", bad.to_str().unwrap()]), 1);

    let ck = trained(dir.path());
    let text = std::fs::read_to_string(&ck).unwrap();
    let old = dir.path().join("old.json");
    std::fs::write(&old, text.replacen(&format!("\"format_version\": {FORMAT_VERSION}"), "\"format_version\": 0", 1)).unwrap();
    assert!(matches!(Checkpoint::load(&old), Err(isscert::Error::Version { found: 0, .. })));
    assert_eq!(run(&["verify", "--checkpoint", old.to_str().unwrap()]), 1);

    let mg = config("microgrid5.json");
    assert_eq!(run(&["verify", "--checkpoint", ck.to_str().unwrap(), "--config", mg.to_str().unwrap(), "--samples", "10"]), 1);
    assert_eq!(run(&["eval", "--config", mg.to_str().unwrap()]), 1);
}
