//! End-to-end tests of the `tcs` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tcs_hierarchy::io::{RunManifest, MANIFEST_NAME};

fn tcs(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcs"))
        .args(args)
        .env("TCS_OUTPUT_ROOT", root)
        .output()
        .expect("spawn tcs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const MACRO: &str = r#"
scenario = "macro-strong"
output = "macro"
reduction = "deterministic"
[grid]
m = 32
t_end = 0.5
output_dt = 0.1
snapshots = [0.25, 0.5]
"#;

const KINETIC: &str = r#"
scenario = "kinetic"
output = "kin"
reduction = "deterministic"
[grid]
m = 32
t_end = 0.3
snapshots = [0.3]
[kinetic]
relaxation = "weak"
epsilon = 0.1
n = 128
moment_m = 32
"#;

fn file_bytes(dir: &Path, m: &RunManifest) -> Vec<(String, Vec<u8>)> {
    m.files
        .iter()
        .map(|f| (f.path.clone(), fs::read(dir.join(&f.path)).unwrap()))
        .collect()
}

#[test]
fn deterministic_runs_are_bitwise_identical_and_replayable() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "macro.toml", MACRO);
    let cfg = cfg.to_str().unwrap();
    let a = root.path().join("a");
    let b = root.path().join("b");
    for out in [&a, &b] {
        let o = tcs(&["run", cfg, "--out", out.to_str().unwrap()], root.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ma = RunManifest::read(&a.join(MANIFEST_NAME)).unwrap();
    let mb = RunManifest::read(&b.join(MANIFEST_NAME)).unwrap();
    assert!(!ma.incomplete);
    assert!(ma.files.iter().any(|f| f.path == "macro_series.csv"));
    assert_eq!(file_bytes(&a, &ma), file_bytes(&b, &mb));

    // replay from the stored manifest; the relative output lands under the root
    let o = tcs(&["run", a.join(MANIFEST_NAME).to_str().unwrap()], root.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let replay = root.path().join("macro");
    let mr = RunManifest::read(&replay.join(MANIFEST_NAME)).unwrap();
    assert_eq!(mr.config_hash, ma.config_hash);
    assert_eq!(file_bytes(&replay, &mr), file_bytes(&a, &ma));
}

#[test]
fn check_accepts_clean_runs_and_flags_tampering() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "kin.toml", KINETIC);
    let o = tcs(&["run", cfg.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = root.path().join("kin");
    let manifest = dir.join(MANIFEST_NAME);
    let m = RunManifest::read(&manifest).unwrap();
    assert!(m.invariants.iter().any(|c| c.name == "moment_lemma_margin" && c.passed));
    assert!(m.invariants.iter().any(|c| c.name == "weak_velocity_support" && c.passed));

    let o = tcs(&["check", manifest.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));

    let series = dir.join("kinetic_series.csv");
    let mut text = fs::read_to_string(&series).unwrap();
    let last = text.lines().last().unwrap().to_string();
    text.push_str(&last);
    text.push('\n');
    fs::write(&series, text).unwrap();
    let o = tcs(&["check", manifest.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn configuration_errors_exit_with_2() {
    let root = tempfile::tempdir().unwrap();
    let bad_key = write_config(root.path(), "a.toml", "scenario = \"macro-strong\"\n[grid]\nmm = 3\n");
    let o = tcs(&["run", bad_key.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mm"));

    let o = tcs(&["run", root.path().join("missing.toml").to_str().unwrap()], root.path());
    assert_eq!(code(&o), 2);

    let concentrated = write_config(
        root.path(),
        "b.toml",
        "scenario = \"kinetic\"\n[kinetic]\nkernels = \"singular\"\nepsilon = 0.001\nlambda1 = 0.5\n",
    );
    let o = tcs(&["run", concentrated.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("concentration"));

    let sweep = write_config(root.path(), "c.toml", MACRO);
    let o = tcs(&["sweep", sweep.to_str().unwrap(), "--eps", "0.1,0.2"], root.path());
    assert_eq!(code(&o), 2);
    let o = tcs(&["frobnicate"], root.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn numerical_failure_exits_with_3_and_leaves_incomplete_manifest() {
    let root = tempfile::tempdir().unwrap();
    // the temperature equation is far too stiff for any admissible step
    let cfg = write_config(
        root.path(),
        "stiff.toml",
        "scenario = \"particle\"\noutput = \"stiff\"\n[grid]\nt_end = 1.0\n[particle]\nn1 = 8\nnu = 1e16\ndt = 0.1\n",
    );
    let o = tcs(&["run", cfg.to_str().unwrap()], root.path());
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::read(&root.path().join("stiff").join(MANIFEST_NAME)).unwrap();
    assert!(m.incomplete);
    assert!(m.error.is_some());

    let o = tcs(&["check", root.path().join("stiff").join(MANIFEST_NAME).to_str().unwrap()], root.path());
    assert_eq!(code(&o), 4);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            tcs_hierarchy::config::load_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
