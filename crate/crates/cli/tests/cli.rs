use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ginit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ginit")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.json");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_SBM: &str = r#"{"kind": "sbm", "communities": 2, "nodes_per_community": 12, "p_in": 0.5,
    "p_out": 0.05, "feature_dim": 4, "feature_noise": 0.5}"#;

#[test]
fn init_stats_ginit() {
    let o = ginit(&["init-stats", "g-init", "--ginit-d", "2", "--fan", "128", "--samples", "200000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().nth(1).unwrap().starts_with("g-init:2,128,200000,0,0.1767766952966369"), "{out}");
}

#[test]
fn init_stats_kaiming_target() {
    let o = ginit(&["init-stats", "kaiming-normal", "--fan", "128", "--samples", "100000", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["target_std"], 0.125);
}

#[test]
fn init_stats_rejects_bad_input() {
    let o = ginit(&["init-stats", "kaiming-normal", "--fan", "128", "--samples", "10"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("samples"));
    let o = ginit(&["init-stats", "he-normal", "--fan", "128"]);
    assert_eq!(o.status.code(), Some(1));
    let o = ginit(&["init-stats"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn probe_is_deterministic_and_reports_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{"data": {SMALL_SBM}, "model": {{"depth": 4, "hidden": 16}}, "seeds": [0, 1], "probe": {{"n_trials": 8}}}}"#),
    );
    let out = dir.path().join("report");
    let a = ginit(&["--config", &cfg, "--json", "--out", out.to_str().unwrap(), "probe"]);
    assert!(matches!(a.status.code(), Some(0 | 2)), "{}", stderr(&a));
    let b = ginit(&["--config", &cfg, "--json", "probe"]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.status.code(), b.status.code());
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2 * 2 * 4);
    for agg in v["aggregates"].as_array().unwrap() {
        assert_eq!(agg["forward_var"]["n_seeds"], 2);
        assert!(agg["forward_var"]["std"].is_number());
    }
    let csv = fs::read_to_string(out.join("probe.csv")).unwrap();
    assert!(csv.starts_with("layer,scheme,seed,forward_var,backward_var,forward_lower"));
    assert_eq!(csv.lines().count(), 17);
    assert!(out.join("probe_summary.csv").exists());
    assert!(out.join("probe.json").exists());
}

#[test]
fn misspelled_key_fails_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!(r#"{{"data": {SMALL_SBM}, "model": {{"hiden": 16}}}}"#));
    let o = ginit(&["--config", &cfg, "probe"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/model/hiden"), "{}", stderr(&o));
    let cfg = write_config(dir.path(), &format!(r#"{{"data": {SMALL_SBM}, "seeds": []}}"#));
    assert_eq!(ginit(&["--config", &cfg, "probe"]).status.code(), Some(1));
}

#[test]
fn coldstart_needs_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{"data": {SMALL_SBM}, "model": {{"hidden": 8, "epochs": 5}}, "seeds": [0]}}"#),
    );
    let o = ginit(&["--config", &cfg, "coldstart", "--depths", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cold-start"));
    let o = ginit(&["--config", &cfg, "coldstart", "--depths", "2,3", "--cold-start"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("scheme,best_depth,n_seeds,mean,std"));
}

#[test]
fn single_depth_single_seed_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{"data": {SMALL_SBM}, "model": {{"hidden": 8, "epochs": 5}}, "schemes": ["g-init"]}}"#),
    );
    let out = dir.path().join("o");
    let o = ginit(&["--config", &cfg, "--seed", "4", "--out", out.to_str().unwrap(), "sweep-depth", "--depths", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep_depth.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("3,g-init:2,4,"));
}

#[test]
fn empty_graph_set_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("graphs.jsonl");
    fs::write(&set, "").unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(r#"{{"data": {{"kind": "graph-set", "path": {:?}}}, "seeds": [0]}}"#, set.to_str().unwrap()),
    );
    let o = ginit(&["--config", &cfg, "graphcls"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn identity_spectrum_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"data": {"kind": "sbm", "communities": 2, "nodes_per_community": 6, "p_in": 0.5, "p_out": 0.1,
            "feature_dim": 8, "feature_noise": 0.1},
            "model": {"depth": 3, "hidden": 8, "layers": [
                {"kind": "conv", "alpha": 1, "beta": 0, "gamma": 0, "delta": 1, "epsilon": 0, "width_in": 8, "width_out": 8},
                {"kind": "conv", "alpha": 1, "beta": 0, "gamma": 0, "delta": 1, "epsilon": 0, "width_in": 8, "width_out": 2}]},
            "schemes": ["identity"], "seeds": [0], "spectrum": {"circular_law_n": 0}}"#,
    );
    let o = ginit(&["--config", &cfg, "--json", "spectrum"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["sigma_max"] == 1.0));
}

#[test]
fn gen_sbm_bundle_feeds_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    let o = ginit(&["--out", bundle.to_str().unwrap(), "--seed", "2", "gen-sbm", "--nodes-per-community", "10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["edges.tsv", "features.csv", "labels.csv", "masks.csv"] {
        assert!(bundle.join(f).exists(), "{f}");
    }
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"data": {{"kind": "bundle", "path": {:?}}}, "model": {{"hidden": 8, "epochs": 3, "depth": 2}}, "seeds": [0]}}"#,
            bundle.to_str().unwrap()
        ),
    );
    let out = dir.path().join("emb");
    let o = ginit(&["--config", &cfg, "--out", out.to_str().unwrap(), "export-embeddings", "--layer", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("embeddings.csv")).unwrap();
    assert!(csv.starts_with("node,label,h0,h1,"));
    assert_eq!(csv.lines().count(), 41);
}
