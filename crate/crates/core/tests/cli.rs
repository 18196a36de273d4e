use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ecgloc::train::CONFIG_KEYS;

const TINY: &str = "\
n_in = 96
n_kp = 12
n_coarse = 24
n_dense = 96
encoder_stage1 = 8,16
encoder_stage2 = 24,24
keypoint_hidden = 24
coarse_hidden = 24
refine_hidden = 8
batch_size = 3
initial_lr = 0.002
epochs = 2
n_rr = 2
";

fn ecgloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecgloc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = ecgloc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file below `root` except run manifests, with its bytes.
fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "run_manifest.txt" {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn dataset(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let data = dir.join("data");
    ok(&["generate", "--subjects", &n.to_string(), "--seed", &seed.to_string(), "--threads", "1", "--out", s(&data)]);
    data
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.cfg");
    fs::write(&p, TINY).unwrap();
    p
}

#[test]
fn generate_reports_split_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("nested/a");
    let stdout = ok(&["generate", "--subjects", "200", "--seed", "7", "--out", s(&a)]);
    assert!(stdout.contains("train 120 / val 20 / test 60"), "{stdout}");
    let m = fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert_eq!(m.lines().filter(|l| l.contains(" test ")).count(), 60);
    let b = dir.path().join("b");
    ok(&["generate", "--subjects", "200", "--seed", "7", "--threads", "1", "--out", s(&b)]);
    assert_eq!(tree(&a), tree(&b));
    let manifest = fs::read_to_string(a.join("run_manifest.txt")).unwrap();
    assert!(manifest.contains("command = generate") && manifest.contains("seed.master = 7"));
}

#[test]
fn train_evaluate_and_infer_are_byte_identical_single_threaded() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 10, 3);
    let cfg = tiny_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&["train", "--config", s(&cfg), "--data", s(&data), "--seed", "5", "--threads", "1", "--out", s(&out)]);
        let ev = out.join("eval");
        let ck = out.join("best.ckpt");
        ok(&["evaluate", "--data", s(&data), "--checkpoint", s(&ck), "--threads", "1", "--out", s(&ev)]);
        out
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(tree(&a), tree(&b));
    let results = fs::read_to_string(a.join("eval/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 3);

    let inf = dir.path().join("infer");
    ok(&["infer", "--checkpoint", s(&a.join("best.ckpt")), "--data", s(&data), "--subject", "2", "--out", s(&inf)]);
    let el = fs::read_to_string(inf.join("electrodes.txt")).unwrap();
    let names: Vec<&str> =
        el.lines().filter(|l| !l.starts_with('#')).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["LA", "RA", "LL", "RL", "V1", "V2", "V3", "V4", "V5", "V6"]);
    assert!(el.starts_with("# manifest: run_manifest.txt"));
}

#[test]
fn oracle_predictions_score_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 10, 4);
    let out = dir.path().join("ev");
    let stdout = ok(&["evaluate", "--data", s(&data), "--predictions", s(&data.join("subjects")), "--out", s(&out)]);
    assert!(stdout.contains("ED 0.0000 ± 0.0000 cm, CD 0.0000"), "{stdout}");
    let text = fs::read_to_string(out.join("results.csv")).unwrap();
    for line in text.lines().skip(1) {
        assert_eq!(line.split(',').nth(11).unwrap(), "0");
    }
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 8, 5);
    let cfg = tiny_config(dir.path());
    let out = dir.path().join("sweep");
    ok(&[
        "sweep", "--config", s(&cfg), "--data", s(&data), "--set", "epochs=1", "--set", "n_in=100",
        "--variant", "tim-no-recon", "--axis", "N_kp", "--values", "10,16,32,64,128", "--out", s(&out),
    ]);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[..4].iter().all(|r| r.ends_with(',')), "{text}");
    assert!(rows[4].starts_with("128,,,,,"), "N_kp > n_in must fail as a row: {text}");
}

#[test]
fn ecg_simulation_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset(dir.path(), 4, 6);
    let out = dir.path().join("ecg");
    let gt = data.join("subjects/0001/electrodes.txt");
    let stdout = ok(&["simulate-ecg", "--data", s(&data), "--subject", "1", "--electrodes", s(&gt), "--out", s(&out)]);
    assert!(stdout.contains("mean DTW 0.0000, mean Pearson 1.0000"), "{stdout}");
    let reference = out.join("ecg_reference.csv");
    assert!(fs::read_to_string(&reference).unwrap().starts_with("t_ms,I,II,V1,V2,V3,V4,V5,V6\n"));

    let plots = dir.path().join("plots");
    ok(&[
        "plot", "--kind", "ecg-overlay", "--input", s(&reference), "--predicted", s(&out.join("ecg_predicted.csv")),
        "--out", s(&plots),
    ]);
    let ev = dir.path().join("ev");
    ok(&["evaluate", "--data", s(&data), "--split", "train", "--predictions", s(&data.join("subjects")), "--out", s(&ev)]);
    ok(&["plot", "--kind", "boxplot", "--input", s(&ev.join("results.csv")), "--out", s(&plots)]);
    let svg = fs::read_to_string(plots.join("boxplot.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="box""#).count(), 10);
    let overlay = fs::read_to_string(plots.join("ecg_overlay.svg")).unwrap();
    assert_eq!(overlay.matches("<polyline").count(), 16);
}

#[test]
fn usage_data_and_config_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "n_kpp = 12\n").unwrap();
    let code = |args: &[&str]| ecgloc(args).status.code().unwrap();
    assert_eq!(code(&["train", "--config", s(&bad), "--data", s(dir.path())]), 2);
    assert_eq!(code(&["train", "--data", s(dir.path()), "--set", "epochs=lots"]), 2);
    assert_eq!(code(&["plot", "--kind", "pie", "--input", s(&bad), "--out", s(dir.path())]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["evaluate", "--data", s(&dir.path().join("missing")), "--predictions", "x"]), 3);
}

#[test]
fn help_documents_every_config_key() {
    let help = ok(&["train", "--help"]);
    for (k, _) in CONFIG_KEYS {
        assert!(help.contains(k), "--help misses {k}");
    }
    let top = ok(&["--help"]);
    for flag in ["--config", "--seed", "--threads", "--out"] {
        assert!(top.contains(flag));
    }
}
