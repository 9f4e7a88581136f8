//! Drives the binary end to end.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stability-lab"))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("stability-lab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = scratch("override");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        "experiment = sweep-rounds\nrounds = 3\nshots = 500\nseed = 1\n",
    )
    .unwrap();
    let out = dir.join("out");
    let status = bin()
        .args([
            "--config",
            cfg.to_str().unwrap(),
            "--rounds",
            "3,4",
            "--seed",
            "5",
            "--decoder",
            "clustering",
        ])
        .args(["--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.starts_with("# stability-lab "));
    assert!(csv.contains("seed=5"));
    assert_eq!(
        csv.lines()
            .filter(|l| l.starts_with("3,500,") || l.starts_with("4,500,"))
            .count(),
        2
    );
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["results"]["decoder"], "clustering");
    assert_eq!(summary["provenance"]["seed"], 5);
}

#[test]
fn invalid_values_fail_with_field_name() {
    for (args, field) in [
        (vec!["--rounds", ""], "rounds"),
        (vec!["--shots", "0"], "shots"),
        (vec!["--p", "lots"], "p"),
        (vec!["--rounds", "1"], "rounds"),
        (vec!["--experiment", "nonsense"], "experiment"),
    ] {
        let out = scratch("invalid");
        let o = bin()
            .args(&args)
            .args(["--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(!o.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(&format!("{field}:")), "{args:?}: {err}");
        assert!(!out.join("results.csv").exists());
    }
}

#[test]
fn sampled_file_decodes_like_internal_sampling() {
    let dir = scratch("roundtrip");
    let sample = dir.join("sample");
    let common = ["--rounds", "4", "--shots", "300", "--seed", "8"];
    let o = bin()
        .args(["--experiment", "sample"])
        .args(common)
        .args(["--out", sample.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    let from_file = dir.join("from_file");
    let internal = dir.join("internal");
    let input = sample.join("results.csv");
    let o = bin()
        .args(["--experiment", "decode", "--input", input.to_str().unwrap()])
        .args(common)
        .args(["--out", from_file.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = bin()
        .args(["--experiment", "decode"])
        .args(common)
        .args(["--out", internal.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(o.status.success());
    let body = |p: &Path| {
        let s = std::fs::read_to_string(p.join("results.csv")).unwrap();
        s.lines().skip(1).map(String::from).collect::<Vec<_>>()
    };
    assert_eq!(body(&from_file), body(&internal));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = scratch("repeat-a");
    let b = scratch("repeat-b");
    for out in [&a, &b] {
        let o = bin()
            .args([
                "--experiment",
                "soft-compare",
                "--rounds",
                "3,5",
                "--shots",
                "400",
                "--seed",
                "12",
            ])
            .args(["--set", "graph=true", "--out", out.to_str().unwrap()])
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));
}
