//! End-to-end runs of the `specqd` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn specqd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specqd"))
        .args(args)
        .env_remove("SPECQD_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = specqd(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn failure(args: &[&str]) -> (i32, String) {
    let out = specqd(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

fn small_model(dir: &Path, name: &str, d_model: &str, seed: &str) -> String {
    let path = p(dir, name);
    ok(&[
        "model-init", "--vocab-size", "64", "--d-model", d_model, "--n-layers", "1", "--n-heads", "2",
        "--d-ff", "64", "--max-seq-len", "64", "--seed", seed, "--out", &path,
    ]);
    path
}

fn summary(dir: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(Path::new(dir).join("summary.json")).unwrap()).unwrap()
}

#[test]
fn model_init_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_model(dir.path(), "a.sqdm", "32", "5");
    let b = small_model(dir.path(), "b.sqdm", "32", "5");
    let c = small_model(dir.path(), "c.sqdm", "32", "6");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn invalid_arguments_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "m.sqdm");
    // not a number: a usage error from argument parsing
    let (code, _) = failure(&["model-init", "--d-model", "wide", "--out", &out]);
    assert_eq!(code, 2);
    let (code, msg) = failure(&["model-init", "--d-model", "30", "--n-heads", "4", "--out", &out]);
    assert_eq!(code, 1);
    assert!(msg.contains("not divisible"), "{msg}");
    assert!(!Path::new(&out).exists());
    let (_, msg) = failure(&["quantize", "--input", &p(dir.path(), "missing"), "--out", &out]);
    assert!(msg.contains("missing"), "{msg}");
}

#[test]
fn quantize_reports_ratio_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let model = small_model(dir.path(), "t.sqdm", "64", "1");
    let cast = p(dir.path(), "c.sqdm");
    let again = p(dir.path(), "c2.sqdm");
    let stdout = ok(&["quantize", "--input", &model, "--out", &cast]);
    assert!(stdout.contains("(7.53x smaller than f32)"), "{stdout}");
    ok(&["quantize", "--input", &cast, "--out", &again]);
    assert_eq!(std::fs::read(&cast).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn generate_infers_mode_and_stays_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let target = small_model(dir.path(), "t.sqdm", "64", "11");
    let cast = p(dir.path(), "c.sqdm");
    ok(&["quantize", "--input", &target, "--out", &cast]);
    let tiny = small_model(dir.path(), "s.sqdm", "16", "12");
    let prompts = p(dir.path(), "prompts.txt");
    std::fs::write(&prompts, "1 2 3\n9 8\n40 41 42 43\n").unwrap();

    let greedy_dir = p(dir.path(), "greedy");
    let greedy = ok(&[
        "generate", "--target", &target, "--prompts", &prompts, "--max-new", "12", "--out", &greedy_dir,
    ]);
    let s = summary(&greedy_dir);
    assert_eq!(s["mode"], "greedy");
    assert_eq!(s["geomean_speedup"], 1.0);
    assert_eq!(greedy.lines().count(), 3);

    let ml_dir = p(dir.path(), "ml");
    let ml = ok(&[
        "generate", "--target", &target, "--draft", &cast, "--draft", &tiny, "--spec-len", "4",
        "--spec-len", "2", "--threshold", "0", "--prompts", &prompts, "--max-new", "12",
        "--check-lossless", "--out", &ml_dir,
    ]);
    assert_eq!(ml, greedy);
    let s = summary(&ml_dir);
    assert_eq!(s["mode"], "multi_level");
    assert_eq!(s["depth"], 2);
    assert_eq!(s["lossless"], true);
    assert_eq!(s["alpha"].as_array().unwrap().len(), 3);
    let rounds = std::fs::read_to_string(Path::new(&ml_dir).join("rounds.csv")).unwrap();
    assert!(rounds.starts_with("prompt,level,proposed,accepted,draft_ms,verify_ms\n"));
    let acceptance = std::fs::read_to_string(Path::new(&ml_dir).join("acceptance.csv")).unwrap();
    assert!(acceptance.starts_with("prompt,level,alpha\n"));

    let (_, msg) = failure(&[
        "generate", "--target", &target, "--draft", &cast, "--draft", &tiny, "--spec-len", "1",
        "--spec-len", "2", "--spec-len", "3", "--prompts", &prompts, "--out", &ml_dir,
    ]);
    assert!(msg.contains("--spec-len"), "{msg}");
}

#[test]
fn generate_rejects_vocab_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let target = small_model(dir.path(), "t.sqdm", "32", "1");
    let other = p(dir.path(), "o.sqdm");
    ok(&["model-init", "--vocab-size", "80", "--d-model", "32", "--n-heads", "2", "--n-layers", "1", "--out", &other]);
    let prompts = p(dir.path(), "prompts.txt");
    std::fs::write(&prompts, "1 2\n").unwrap();
    failure(&["generate", "--target", &target, "--draft", &other, "--prompts", &prompts, "--out", &p(dir.path(), "r")]);
}

#[test]
fn surfaces_have_expected_rows() {
    let dir = tempfile::tempdir().unwrap();
    let single = p(dir.path(), "single.csv");
    ok(&["speedup-surface", "--points", "21", "--out", &single]);
    let text = std::fs::read_to_string(&single).unwrap();
    assert_eq!(text.lines().next().unwrap(), "alpha,s,speedup");
    assert_eq!(text.lines().count(), 1 + 21 * 3);
    // full acceptance with N = 4, S = 4: 5 tokens per round costing 1 + 4/4
    assert!(text.lines().any(|l| l == "1,4,2.5"), "{text}");

    let multi = p(dir.path(), "multi.csv");
    ok(&["speedup-surface", "--kind", "multi", "--points", "6", "--out", &multi]);
    let text = std::fs::read_to_string(&multi).unwrap();
    assert_eq!(text.lines().next().unwrap(), "alpha_outer,alpha_inner,speedup");
    assert_eq!(text.lines().count(), 1 + 36);
}

#[test]
fn roofline_joins_bench_rows() {
    let dir = tempfile::tempdir().unwrap();
    let bench = p(dir.path(), "bench.csv");
    let roof = p(dir.path(), "roof.csv");
    ok(&["gemm-bench", "--shapes", "64x1x64,32x2x128", "--repetitions", "1", "--out", &bench]);
    ok(&["roofline", "--bench", &bench, "--bandwidth-gbps", "10", "--f32-gflops", "20", "--out", &roof]);
    let bench = std::fs::read_to_string(&bench).unwrap();
    let roof = std::fs::read_to_string(&roof).unwrap();
    assert_eq!(bench.lines().count(), 1 + 2 * 3);
    assert_eq!(roof.lines().count(), bench.lines().count());
    assert!(roof.starts_with("path,M,N,K,intensity,"));
    for (b, r) in bench.lines().zip(roof.lines()).skip(1) {
        let key = |l: &str| l.split(',').take(4).collect::<Vec<_>>().join(",");
        assert_eq!(key(b), key(r));
    }
    let (_, msg) = failure(&["gemm-bench", "--shapes", "8x1x33", "--out", &p(dir.path(), "x.csv")]);
    assert!(msg.contains("multiple of"), "{msg}");
}

#[test]
fn thread_env_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_specqd"))
        .args(["speedup-surface", "--points", "2", "--out", "/dev/null"])
        .env("SPECQD_THREADS", "0")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("SPECQD_THREADS"));
}
