//! End-to-end checks of the batch front end: output files, exit codes,
//! config precedence, and bit-identical reruns.

use std::path::{Path, PathBuf};
use std::process::Command;

fn griffith() -> Command {
    Command::new(env!("CARGO_BIN_EXE_griffith"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("griffith_cli_{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn solve_writes_field_and_report() {
    let dir = scratch("solve");
    let status = griffith()
        .args(["--out-dir"])
        .arg(&dir)
        .args(["solve", "--radius", "8", "--k", "0.46", "--damped"])
        .status()
        .unwrap();
    assert!(status.success());
    let report = read(&dir.join("report.json"));
    assert!(report.contains("\"converged\": true"));
    assert!(report.contains("\"n_sites\""));
    let field = read(&dir.join("field.csv"));
    assert!(field.starts_with("l1,l2,u\n"));
    assert!(read(&dir.join("config.json")).contains("\"radius\""));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn trace_outputs_are_reproducible() {
    let run = |dir: &Path| {
        let status = griffith()
            .args(["--out-dir"])
            .arg(dir)
            .args([
                "trace",
                "--radius",
                "8",
                "--k-start",
                "0.46",
                "--max-steps",
                "4",
                "--dump-final-field",
            ])
            .status()
            .unwrap();
        assert!(status.success());
    };
    let a = scratch("trace_a");
    let b = scratch("trace_b");
    run(&a);
    run(&b);
    let path_a = read(&a.join("path.csv"));
    assert!(path_a.starts_with("step,s,k,h1_norm_u,tau_k,mu,class\n"));
    assert_eq!(path_a, read(&b.join("path.csv")));
    assert_eq!(read(&a.join("folds.json")), read(&b.join("folds.json")));
    assert_eq!(
        read(&a.join("final_field.csv")),
        read(&b.join("final_field.csv"))
    );
    std::fs::remove_dir_all(&a).ok();
    std::fs::remove_dir_all(&b).ok();
}

#[test]
fn config_file_feeds_defaults_and_flags_override() {
    let dir = scratch("config");
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("run.json");
    std::fs::write(&config, r#"{ "radius": 8.0, "k": 0.3 }"#).unwrap();
    let out = dir.join("out");
    let status = griffith()
        .args(["--out-dir"])
        .arg(&out)
        .args(["--config"])
        .arg(&config)
        // The flag overrides the file's k = 0.3.
        .args(["solve", "--k", "0.05"])
        .status()
        .unwrap();
    assert!(status.success());
    let report = read(&out.join("report.json"));
    assert!(report.contains("\"k\": 0.05"), "flag must win: {report}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes_distinguish_config_and_numerical_failures() {
    // Domain too small: configuration error.
    let dir = scratch("exit2");
    let status = griffith()
        .args(["--out-dir"])
        .arg(&dir)
        .args(["solve", "--radius", "1", "--k", "0.1"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Plain Newton outside its basin: numerical failure, error name in the
    // report.
    let status = griffith()
        .args(["--out-dir"])
        .arg(&dir)
        .args(["solve", "--radius", "16", "--k", "0.2"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let report = read(&dir.join("report.json"));
    assert!(report.contains("\"error\""), "{report}");
    std::fs::remove_dir_all(&dir).ok();

    // Unknown config fields are rejected.
    let dir = scratch("badcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("bad.json");
    std::fs::write(&config, r#"{ "radiu": 8.0 }"#).unwrap();
    let status = griffith()
        .args(["--config"])
        .arg(&config)
        .args(["solve"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn folds_command_emits_table() {
    let dir = scratch("folds");
    let output = griffith()
        .args(["--out-dir"])
        .arg(&dir)
        .args([
            "folds",
            "--radius",
            "22.627417",
            "--k-start",
            "0.46",
            "--max-folds",
            "2",
            "--max-steps",
            "600",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("s->u"), "table missing: {stdout}");
    let table = read(&dir.join("folds.csv"));
    assert!(table.starts_with("ordinal,s,k,family,mu_left,mu_right,b_dot_gamma,third\n"));
    assert!(table.lines().count() >= 3);
    std::fs::remove_dir_all(&dir).ok();
}
