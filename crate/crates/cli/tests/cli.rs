use std::fs;
use std::process::{Command, Output};

fn stein(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stein")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn poisson_sweep_csv_has_status_column() {
    let o = stein(&["poisson-sweep", "--n", "10,20", "--p", "0.1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,p,lambda,exact_lo,exact_hi,stein_bound,lecam_bound,margin,status"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.ends_with(",ok")));
}

#[test]
fn json_output_carries_config_and_version() {
    let o = stein(&["concentration-demo", "--n", "25", "--format", "json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["experiment"], "concentration_demo");
    assert_eq!(v["suite_version"], "1");
    assert_eq!(v["config"]["n"], serde_json::json!([25]));
    assert!(!v["rows"].as_array().unwrap().is_empty());
}

#[test]
fn config_file_key_value_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let kv = dir.path().join("sweep.conf");
    fs::write(&kv, "# small sweep\nn = 10\np = 0.05,0.1\n").unwrap();
    let json = dir.path().join("sweep.json");
    fs::write(&json, r#"{"n": [10], "p": [0.05, 0.1]}"#).unwrap();
    let a = stein(&["poisson-sweep", "--config", kv.to_str().unwrap()]);
    let b = stein(&["poisson-sweep", "--config", json.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 3);

    // Flags override the file.
    let c = stein(&["poisson-sweep", "--config", kv.to_str().unwrap(), "--p", "0.02"]);
    assert_eq!(stdout(&c).lines().count(), 2);
}

#[test]
fn out_writes_table_and_plot_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("normal.csv");
    let o = stein(&["normal-demo", "--n", "25,100", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert!(fs::read_to_string(&out).unwrap().starts_with("n,beta,"));
    let plots: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".dat"))
        .collect();
    assert_eq!(plots.len(), 3);
    for p in plots {
        let text = fs::read_to_string(p.path()).unwrap();
        assert!(text.starts_with("# n "));
        assert_eq!(text.lines().count(), 3);
    }
}

#[test]
fn exit_codes() {
    assert_eq!(stein(&["poisson-sweep", "--bound-scale", "0.5"]).status.code(), Some(1));
    assert_eq!(stein(&["verify", "--truncation-eps", "1e-3"]).status.code(), Some(2));
    assert_eq!(stein(&["poisson-sweep", "--p", "1.5"]).status.code(), Some(2));
    assert_eq!(stein(&["process-demo", "--n", "30", "--p", "0.1"]).status.code(), Some(3));
    assert_eq!(stein(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn output_independent_of_jobs() {
    let a = stein(&["process-demo", "--jobs", "1"]);
    let b = stein(&["process-demo", "--jobs", "3"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}
