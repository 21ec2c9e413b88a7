use cdbin_jpeg::parse_dump;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cdbin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdbin"))
        .args(args)
        .current_dir(cwd)
        .env_remove("CDBIN_CONFIG")
        .output()
        .expect("spawn cdbin")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = cdbin(args, cwd);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(args: &[&str], cwd: &Path) -> i32 {
    cdbin(args, cwd).status.code().unwrap()
}

/// Synthesizes two pages and prepares a corpus with one training and one test document.
fn corpus(dir: &Path) -> PathBuf {
    ok(&["synth", "--out", "src", "--count", "2", "--width", "200", "--height", "150", "--seed", "4"], dir);
    ok(&["prepare", "--docs", "src/docs", "--gt", "src/gt", "--out", "corpus", "--test-fraction", "0.5"], dir);
    dir.join("corpus/manifest.json")
}

#[test]
fn help_and_usage_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["--help"], dir.path());
    let help = String::from_utf8(out.stdout).unwrap();
    for sub in ["encode", "decode", "coeffs", "prepare", "train", "binarize", "eval", "bench", "synth"] {
        assert!(help.contains(sub), "{sub} missing from help");
    }
    let out = cdbin(&[], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(code(&["train", "--no-such-flag"], dir.path()), 1);
    assert_eq!(code(&["frobnicate"], dir.path()), 1);
    assert_eq!(code(&["encode", "x.pgm", "--out", "y.jpg", "--quality", "0"], dir.path()), 1);
    assert_eq!(code(&["synth", "--out", "s", "--threads", "0"], dir.path()), 1);
    assert_eq!(code(&["eval", "--manifest", "m.json", "--out", "o"], dir.path()), 1);
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["decode", "missing.jpg", "--out", "x.pgm"], dir.path()), 2);
    std::fs::write(dir.path().join("junk.jpg"), b"not a jpeg").unwrap();
    assert_eq!(code(&["coeffs", "junk.jpg", "--out", "d.txt"], dir.path()), 2);
    assert_eq!(code(&["train", "--manifest", "missing.json", "--out", "t"], dir.path()), 2);
    assert!(!dir.path().join("t").exists());
}

#[test]
fn every_documented_flag_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["encode", "decode", "coeffs", "prepare", "train", "binarize", "eval", "bench", "synth"] {
        let help = String::from_utf8(ok(&[sub, "--help"], dir.path()).stdout).unwrap();
        let flags: Vec<&str> = help
            .split_whitespace()
            .filter(|w| w.starts_with("--"))
            .map(|w| w.trim_end_matches(|c: char| !c.is_ascii_alphanumeric()))
            .collect();
        assert!(flags.contains(&"--seed") && flags.contains(&"--config") && flags.contains(&"--threads"), "{sub}");
        for f in flags {
            // an accepted flag fails on its value or missing arguments, never as unknown
            let out = cdbin(&[sub, f], dir.path());
            let err = String::from_utf8_lossy(&out.stderr);
            assert!(!err.contains("unexpected argument"), "{sub} {f}: {err}");
        }
    }
}

#[test]
fn codec_commands_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out", "s", "--count", "1", "--width", "120", "--height", "90"], d);
    ok(&["encode", "s/docs/synth_000.pgm", "--out", "a.jpg", "--quality", "75"], d);
    ok(&["decode", "a.jpg", "--out", "a.pgm"], d);
    ok(&["coeffs", "a.jpg", "--out", "dump.txt"], d);
    let back = cdbin::imageio::read_gray(&d.join("a.pgm")).unwrap();
    assert_eq!((back.width(), back.height()), (120, 90));
    let text = std::fs::read_to_string(d.join("dump.txt")).unwrap();
    let records = parse_dump(&text).unwrap();
    let ci = cdbin_jpeg::partial_decode(&std::fs::read(d.join("a.jpg")).unwrap()).unwrap();
    let t = &ci.components[0];
    assert_eq!(records.len(), t.blocks_high() * t.blocks_wide());
    for r in &records {
        assert_eq!(&r.coefficients, t.block(r.block_row, r.block_col));
    }
}

#[test]
fn config_file_fills_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.json"), r#"{"seed": 11, "synth": {"count": 1, "width": 40, "height": 30}}"#).unwrap();
    ok(&["synth", "--out", "a", "--config", "c.json", "--width", "48"], d);
    let echoed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("a/config.json")).unwrap()).unwrap();
    assert_eq!(echoed["seed"], 11);
    assert_eq!(echoed["synth"]["width"], 48);
    assert_eq!(echoed["synth"]["height"], 30);
    let img = cdbin::imageio::read_gray(&d.join("a/docs/synth_000.pgm")).unwrap();
    assert_eq!((img.width(), img.height()), (48, 30));

    // the echoed config reproduces the run
    let out = Command::new(env!("CARGO_BIN_EXE_cdbin"))
        .args(["synth", "--out", "b"])
        .current_dir(d)
        .env("CDBIN_CONFIG", d.join("a/config.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(d.join("a/docs/synth_000.pgm")).unwrap(), std::fs::read(d.join("b/docs/synth_000.pgm")).unwrap());

    std::fs::write(d.join("bad.json"), r#"{"synth": {"colour": 3}}"#).unwrap();
    assert_eq!(code(&["synth", "--out", "c", "--config", "bad.json"], d), 1);
    std::fs::write(d.join("broken.json"), "{").unwrap();
    assert_eq!(code(&["synth", "--out", "c", "--config", "broken.json"], d), 1);
    assert!(!d.join("c").exists());
}

#[test]
fn train_eval_and_binarize_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    let train = ["train", "--manifest", "corpus/manifest.json", "--preset", "desk", "--epochs", "3", "--max-steps", "2", "--seed", "7"];
    ok(&[&train[..], &["--out", "run1"]].concat(), d);
    ok(&[&train[..], &["--out", "run2"]].concat(), d);
    let m1 = std::fs::read(d.join("run1/metrics.jsonl")).unwrap();
    assert_eq!(m1, std::fs::read(d.join("run2/metrics.jsonl")).unwrap());
    assert_eq!(String::from_utf8(m1).unwrap().lines().count(), 2);
    for f in ["config.json", "train_config.json", "timing.jsonl", "model.ckpt"] {
        assert!(d.join("run1").join(f).is_file(), "{f}");
    }

    let eval = ["eval", "--manifest", "corpus/manifest.json", "--ckpt", "run1/model.ckpt"];
    ok(&[&eval[..], &["--out", "e1"]].concat(), d);
    ok(&[&eval[..], &["--out", "e2"]].concat(), d);
    assert_eq!(std::fs::read(d.join("e1/metrics.jsonl")).unwrap(), std::fs::read(d.join("e2/metrics.jsonl")).unwrap());

    let oracle = ok(&["eval", "--manifest", "corpus/manifest.json", "--binarizer", "oracle", "--out", "e3"], d);
    assert!(String::from_utf8(oracle.stdout).unwrap().contains("inf"));

    ok(&["encode", "src/docs/synth_001.pgm", "--out", "page.jpg"], d);
    ok(&["binarize", "page.jpg", "--ckpt", "run1/model.ckpt", "--out", "page.pgm", "--stream-out", "page_bin.jpg"], d);
    let out = cdbin::imageio::read_gray(&d.join("page.pgm")).unwrap();
    assert_eq!((out.width(), out.height()), (200, 150));
    assert!(out.samples().iter().all(|&v| v == 0 || v == 255));
    assert!(d.join("page_bin.jpg").is_file());
}
