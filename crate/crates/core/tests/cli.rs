use std::path::Path;
use std::process::{Command, Output};

fn rmsds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rmsds")).args(args).output().unwrap()
}

fn error_record(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "seed = 5\n[experiment]\nsizes = 6, 9, 12\nreplicas = 6\n[integrator]\ndt = 0.01\nintervals = 4\n";

#[test]
fn unknown_experiment_kind_exits_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.ini", "experiment = spectral\n");
    let out_dir = dir.path().join("out");
    let out = rmsds(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let rec = error_record(&out);
    assert_eq!(rec["status"], 2);
    assert_eq!(rec["kind"], "config");
    assert!(rec["message"].as_str().unwrap().contains("spectral"));
    let saved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("error.json")).unwrap()).unwrap();
    assert_eq!(saved, rec);
}

#[test]
fn unknown_key_and_mismatched_kind_exit_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.ini", "[integrator]\ndtt = 0.1\n");
    let out = rmsds(&["universality", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_record(&out)["message"].as_str().unwrap().contains("line 2"));
    let cfg = write(dir.path(), "kind.ini", "experiment = aging\n");
    assert_eq!(rmsds(&["rayleigh", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(rmsds(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_with_status_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "big.ini", "[taylor]\nn = 6\n");
    let out_dir = dir.path().join("out");
    let out = rmsds(&["taylor-check", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["kind"], "invalid_argument");
    assert!(out_dir.join("error.json").exists());
    assert!(!out_dir.join("results.csv").exists());
}

#[test]
fn outputs_are_byte_identical_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "u.ini", SMALL);
    let mut runs = Vec::new();
    for (i, threads) in ["1", "2", "4", "1"].iter().enumerate() {
        let out_dir = dir.path().join(format!("run{i}"));
        let out = rmsds(&["universality", "--config", &cfg, "--threads", threads, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let files: Vec<Vec<u8>> = ["results.csv", "slopes.csv", "summary.txt"].iter().map(|f| std::fs::read(out_dir.join(f)).unwrap()).collect();
        runs.push(files);
    }
    assert!(runs.iter().all(|r| *r == runs[0]));
    let csv = String::from_utf8(runs[0][0].clone()).unwrap();
    assert!(csv.starts_with("# config-hash: "));
    assert_eq!(csv.lines().nth(1).unwrap(), "n,observable,mean_diff,se,mean_a,mean_b,replicas");
    assert_eq!(csv.lines().count(), 2 + 3 * 2);
}

#[test]
fn seed_flag_changes_results_and_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "u.ini", SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(rmsds(&["universality", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    assert!(rmsds(&["universality", "--config", &cfg, "--seed", "6", "--out", b.to_str().unwrap()]).status.success());
    let ra = std::fs::read_to_string(a.join("results.csv")).unwrap();
    let rb = std::fs::read_to_string(b.join("results.csv")).unwrap();
    assert_ne!(ra, rb);
    let resolved = std::fs::read_to_string(b.join("config.resolved.ini")).unwrap();
    assert!(resolved.contains("seed = 6\n"));
    // The resolved configuration reproduces the run on its own.
    let c = dir.path().join("c");
    assert!(rmsds(&["run", "--config", b.join("config.resolved.ini").to_str().unwrap(), "--out", c.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read_to_string(c.join("results.csv")).unwrap(), rb);
}

#[test]
fn every_subcommand_runs_on_a_small_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let base = "[experiment]\nsizes = 8\nreplicas = 3\n[integrator]\ndt = 0.01\nintervals = 2\n[taylor]\npaths = 50\ndt = 0.01\norder = 3\n[moments]\nmax_word = 2\n";
    let gradient = format!("{base}[system]\nbeta = inf\nk = 0\n");
    let linear = format!("{base}[system]\ntemplate = linear\n");
    let cases: [(&str, &str, &[&str]); 8] = [
        ("simulate", base, &["trajectory.csv", "observables.csv"]),
        ("universality", base, &["results.csv", "slopes.csv"]),
        ("concentration", base, &["results.csv", "tails.csv"]),
        ("aging", &gradient, &["results.csv"]),
        ("taylor-check", &linear, &["results.csv"]),
        ("moments-check", &linear, &["results.csv"]),
        ("hopfield", base, &["results.csv"]),
        ("rayleigh", &gradient, &["results.csv", "eigen.csv"]),
    ];
    for (cmd, text, files) in cases {
        let cfg = write(dir.path(), &format!("{cmd}.ini"), text);
        let out_dir = dir.path().join(cmd);
        let out = rmsds(&[cmd, "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        for f in files.iter().chain(&["summary.txt", "config.resolved.ini"]) {
            assert!(out_dir.join(f).exists(), "{cmd}: missing {f}");
        }
        for f in files {
            let text = std::fs::read_to_string(out_dir.join(f)).unwrap();
            assert!(text.starts_with("# config-hash: "), "{cmd}/{f}");
        }
    }
}
