use std::fs;
use std::process::{Command, Output};

fn lifi_po(args: &[&str], cwd: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lifi-po")).args(args).current_dir(cwd).output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let o = lifi_po(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let t = text(&o);
    for cmd in ["generate-dataset", "train", "evaluate-predictor", "solve", "run-po-experiment", "plot-data"] {
        assert!(t.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = lifi_po(&["train", "--config", "nope.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("nope.toml"));

    fs::write(dir.path().join("bad.toml"), "[mobility]\nsped = 2.0\n").unwrap();
    let o = lifi_po(&["generate-dataset", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o).contains("mobility.speed"), "{}", text(&o));

    assert_eq!(lifi_po(&["no-such-command"], dir.path()).status.code(), Some(1));
    assert_eq!(lifi_po(&["solve"], dir.path()).status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = lifi_po(&["train", "--dataset", "missing.meta"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solve_writes_solution_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("p.txt"),
        "delta: 0.5\nnoise_term: 2e-14\nr_th: 1.0\nh:\n1e-5, 2e-6, 1e-6, 3e-6\n2e-6, 9e-6, 1e-6, 1e-6\n",
    )
    .unwrap();
    for solver in ["ccp", "multistart", "grid"] {
        let o = lifi_po(&["solve", "--problem", "p.txt", "--solver", solver, "--out-dir", solver], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
        let sol = fs::read_to_string(dir.path().join(solver).join("solution.txt")).unwrap();
        assert!(sol.contains(&format!("method: {solver}")));
        assert!(sol.contains("admitted: 0, 1"));
        let trace = fs::read_to_string(dir.path().join(solver).join("trace.csv")).unwrap();
        assert!(trace.starts_with("iteration,objective_nats\n"));
    }
}

#[test]
fn small_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "seed = 3\n[dataset]\nq = 120\n[train]\nhidden_size = 6\nepochs = 1\n[scenario]\nn_slots = 4\nk_sweep = [2]\nr_th_sweep = [0.5, 1.0]\ntiming_k_sweep = [2]\ntiming_slots = 2\n",
    )
    .unwrap();
    for cmd in ["generate-dataset", "train", "evaluate-predictor", "run-po-experiment", "plot-data"] {
        let o = lifi_po(&[cmd, "--config", "c.toml", "--out-dir", "out", "--text"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", text(&o));
    }
    let out = dir.path().join("out");
    for f in [
        "dataset.meta",
        "dataset.csv",
        "model.meta",
        "model.bin",
        "history.csv",
        "predictor_eval.csv",
        "sumrate_vs_k.csv",
        "sumrate_vs_rth.csv",
        "timing.csv",
        "run_manifest.txt",
        "plot/sumrate_vs_k_ccp.dat",
        "plot/timing.dat",
        "plot/loss.dat",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let header = fs::read_to_string(out.join("sumrate_vs_k.csv")).unwrap();
    assert!(header.starts_with("k,r_th_nats,solver,case,slots,mean_sum_rate_nats"));
    let manifest = fs::read_to_string(out.join("run_manifest.txt")).unwrap();
    assert!(manifest.contains("seed: 3") && manifest.contains("config_fingerprint: "));
}
