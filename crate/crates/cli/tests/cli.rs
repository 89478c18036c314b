use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn orthoedit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orthoedit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SPEC: &str = "\
d = 32
n_v = 24
n_tokens = 10
r_true = 4
q_true = 3
visual_energy = 0.2
prior_energy = 0.6
residual_energy = 0.2
noise_sigma = 0.001
seed = 42
n_prompt = 4
";

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn planted(dir: &TempDir, spec: &str) -> PathBuf {
    let spec = write(dir.path(), "spec.toml", spec);
    let trace = dir.path().join("t.hedt");
    let out = orthoedit(&["gen", "--spec", spec.to_str().unwrap(), "--out", trace.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    trace
}

#[test]
fn gen_writes_trace_and_sidecar_deterministically() {
    let dir = TempDir::new().unwrap();
    let trace = planted(&dir, SPEC);
    let first = fs::read(&trace).unwrap();
    // 24-byte header, 24x32 visual floats, 14 tokens of 2x32 floats plus a kind byte.
    assert_eq!(first.len(), 24 + 4 * 24 * 32 + 14 * (8 * 32 + 1));
    let gt = fs::read(dir.path().join("t.hedt.gt")).unwrap();
    assert_eq!(gt.len(), 20 + 4 * 32 * (4 + 3));
    planted(&dir, SPEC);
    assert_eq!(fs::read(&trace).unwrap(), first);
}

#[test]
fn gen_echoes_spec() {
    let dir = TempDir::new().unwrap();
    let spec = write(dir.path(), "spec.toml", SPEC);
    let trace = dir.path().join("t.hedt");
    let out = orthoedit(&["gen", "--spec", spec.to_str().unwrap(), "--out", trace.to_str().unwrap()]);
    assert!(stdout(&out).contains("seed = 42"));
}

#[test]
fn gen_rejects_all_zero_energies() {
    let dir = TempDir::new().unwrap();
    let bad = SPEC
        .replace("visual_energy = 0.2", "visual_energy = 0")
        .replace("prior_energy = 0.6", "prior_energy = 0")
        .replace("residual_energy = 0.2", "residual_energy = 0");
    let spec = write(dir.path(), "spec.toml", &bad);
    let out = orthoedit(&["gen", "--spec", spec.to_str().unwrap(), "--out", "/dev/null"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("energy"));
}

#[test]
fn run_emits_one_csv_row_per_generated_token() {
    let dir = TempDir::new().unwrap();
    let trace = planted(&dir, SPEC);
    let report = dir.path().join("r.csv");
    let out = orthoedit(&[
        "run",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "token_idx,vcr_before,pcr_before,vcr_after,pcr_after,gated,lambda_n,lambda_p,alpha_p,alpha_r,delta_u_norm,delta_p_norm,edit_micros"
    );
    assert_eq!(lines.len(), 1 + 10);
    let summary: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(summary["tokens"], 10);
}

#[test]
fn run_json_lines_to_stdout() {
    let dir = TempDir::new().unwrap();
    let trace = planted(&dir, SPEC);
    let out = orthoedit(&["run", "--trace", trace.to_str().unwrap(), "--format", "json-lines"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows: Vec<serde_json::Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r["delta_u_norm"].as_f64().unwrap() < 1e-8));
}

#[test]
fn run_without_prior_energy_never_gates() {
    let dir = TempDir::new().unwrap();
    let spec = SPEC
        .replace("visual_energy = 0.2", "visual_energy = 1.0")
        .replace("prior_energy = 0.6", "prior_energy = 0")
        .replace("residual_energy = 0.2", "residual_energy = 0.05")
        .replace("q_true = 3", "q_true = 0")
        .replace("n_prompt = 4", "n_prompt = 0");
    let trace = planted(&dir, &spec);
    let out = orthoedit(&["run", "--trace", trace.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(summary["gate_rate"], 0.0);
}

#[test]
fn run_dimension_mismatch_exits_3() {
    let dir = TempDir::new().unwrap();
    let trace = planted(&dir, SPEC);
    let cfg = write(dir.path(), "cfg.toml", "preset = \"llava7b\"\nd = 4096\n");
    let out = orthoedit(&["run", "--trace", trace.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn run_rejects_unknown_config_key_and_bad_trace() {
    let dir = TempDir::new().unwrap();
    let trace = planted(&dir, SPEC);
    let cfg = write(dir.path(), "cfg.toml", "kapa = 0.5\n");
    let out = orthoedit(&["run", "--trace", trace.to_str().unwrap(), "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);

    let mut bytes = fs::read(&trace).unwrap();
    bytes.pop();
    let cut = write(dir.path(), "cut.hedt", "");
    fs::write(&cut, bytes).unwrap();
    let out = orthoedit(&["run", "--trace", cut.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("truncated-file"), "{}", stderr(&out));
}

#[test]
fn verify_passes_and_reports_each_property() {
    let out = orthoedit(&["verify", "--suite", "all", "--trials", "50", "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    for name in [
        "closed-form-oracle",
        "evidence-consistency",
        "non-interference",
        "frozen-contraction",
        "energy-identity",
        "weighted-pca",
    ] {
        assert!(text.contains(name), "missing {name}");
    }
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6);
}

#[test]
fn verify_flags_injected_fault() {
    let out = orthoedit(&[
        "verify",
        "--suite",
        "props",
        "--trials",
        "20",
        "--inject-fault",
        "energy-identity",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL energy-identity"));
    assert!(stdout(&out).contains("first_failing_seed="));
}

#[test]
fn verify_zero_trials_is_invalid() {
    assert_eq!(code(&orthoedit(&["verify", "--trials", "0"])), 2);
    assert_eq!(code(&orthoedit(&["verify", "--suite", "nope"])), 2);
}

#[test]
fn bench_small_dims() {
    let out = orthoedit(&["bench", "--dims", "32,64", "--tokens", "4", "--n-v", "16", "--n-t", "8"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 3);
    assert!(stderr(&out).contains("exponents"));
}

#[test]
fn bench_rejects_empty_or_unsorted_dims() {
    assert_eq!(code(&orthoedit(&["bench", "--dims", ""])), 2);
    assert_eq!(code(&orthoedit(&["bench", "--dims", "64,32"])), 2);
}

#[test]
fn sweep_rows_and_range_errors() {
    let dir = TempDir::new().unwrap();
    let trace = planted(&dir, SPEC);
    let t = trace.to_str().unwrap();
    let out = orthoedit(&["sweep", "--param", "r", "--range", "4:8", "--trace", t]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.ends_with(",1")), "{text}");

    let out = orthoedit(&["sweep", "--param", "kappa", "--range", "0.3:0.8", "--trace", t]);
    assert!(stdout(&out).lines().any(|l| l.starts_with("kappa,0.6,")));

    let out = orthoedit(&["sweep", "--param", "q", "--range", "5", "--trace", t]);
    assert_eq!(stdout(&out).lines().count(), 2);

    assert_eq!(code(&orthoedit(&["sweep", "--param", "r", "--range", "", "--trace", t])), 2);
    assert_eq!(code(&orthoedit(&["sweep", "--param", "r", "--range", "1:3", "--trace", t])), 2);
    let out = orthoedit(&[
        "sweep",
        "--param",
        "r",
        "--range",
        "1:3",
        "--trace",
        t,
        "--allow-out-of-range",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}
