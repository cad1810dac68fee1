//! End-to-end tests of the `tornet` binary: every subcommand, the documented
//! exit codes, and output determinism.

use std::path::Path;
use std::process::{Command, Output};
use std::sync::{Mutex, MutexGuard, OnceLock};

fn lock() -> MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|p| p.into_inner())
}

fn tornet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tornet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn hash_dir(dir: &Path) -> Vec<(String, u64)> {
    let mut entries: Vec<(String, u64)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let bytes = std::fs::read(e.path()).unwrap();
            let mut h = 0xcbf29ce484222325u64;
            for b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            (e.file_name().to_string_lossy().into_owned(), h)
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn synth_data_writes_balanced_manifest_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let run = tornet(&[
        "synth-data",
        "--out",
        out_a.to_str().unwrap(),
        "--n",
        "10",
        "--seed",
        "7",
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let manifest_path = stdout(&run).trim().to_string();
    let manifest = std::fs::read_to_string(&manifest_path).unwrap();
    // header + 2 classes x 3 splits x 10
    assert_eq!(manifest.lines().count(), 61);
    assert_eq!(
        manifest.lines().filter(|l| l.ends_with(",train")).count(),
        20
    );

    let out_b = dir.path().join("b");
    let rerun = tornet(&[
        "synth-data",
        "--out",
        out_b.to_str().unwrap(),
        "--n",
        "10",
        "--seed",
        "7",
    ]);
    assert!(rerun.status.success());
    assert_eq!(hash_dir(&out_a), hash_dir(&out_b), "corpus must be byte-identical");
}

#[test]
fn synth_data_unwritable_dir_fails_with_io_exit_code() {
    let run = tornet(&[
        "synth-data",
        "--out",
        "/proc/definitely/not/writable",
        "--n",
        "1",
    ]);
    assert!(!run.status.success());
    assert_eq!(run.status.code(), Some(2), "{}", stderr(&run));
    assert!(!stderr(&run).is_empty());
}

#[test]
fn params_prints_trace_and_totals() {
    let run = tornet(&["params", "--variant", "default"]);
    assert!(run.status.success());
    let text = stdout(&run);
    assert!(text.contains("stage1.maxpool"));
    assert!(text.contains("32x20x256"), "{text}");
    assert!(text.contains("4450498"), "{text}");
    assert!(text.contains("4.45 M"), "{text}");

    let run = tornet(&["params", "--variant", "no-last-conv"]);
    assert!(stdout(&run).contains("1314178"));

    let run = tornet(&["params", "--variant", "nonsense"]);
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn gradcheck_passes_and_lists_each_op_once() {
    let run = tornet(&["gradcheck", "--seeds", "2"]);
    assert!(run.status.success(), "{}", stderr(&run));
    let text = stdout(&run);
    let mut ops: Vec<&str> = text
        .lines()
        .filter_map(|l| l.split_whitespace().nth(1))
        .collect();
    assert!(ops.contains(&"conv2d") && ops.contains(&"bc_resblock_normal"));
    let total = ops.len();
    ops.sort_unstable();
    ops.dedup();
    assert_eq!(ops.len(), total, "ops listed more than once:\n{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn gradcheck_flags_an_injected_wrong_backward() {
    let run = tornet(&["gradcheck", "--seeds", "1", "--inject-wrong-backward"]);
    assert!(!run.status.success());
    assert_eq!(run.status.code(), Some(3));
    assert!(stdout(&run).contains("FAIL injected_wrong_backward"));
}

#[test]
fn train_eval_predict_round_trip() {
    let _guard = lock();
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let run = tornet(&[
        "synth-data",
        "--out",
        corpus.to_str().unwrap(),
        "--n",
        "2",
        "--seed",
        "3",
    ]);
    assert!(run.status.success());
    let manifest = corpus.join("manifest.csv");

    let out = dir.path().join("run");
    let run = tornet(&[
        "train",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--epochs",
        "1",
        "--seed",
        "5",
        "--lr",
        "1e-4",
        "--batch-size",
        "4",
        "--single-thread",
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let text = stdout(&run);
    assert!(text.contains("config: lr = 0.0001 (flag)"), "{text}");
    assert!(out.join("best.ckpt").exists());
    assert!(out.join("final.ckpt").exists());
    assert!(out.join("history.log").exists());

    // eval prints UAR, confusion matrix, CI
    let ckpt = out.join("best.ckpt");
    let eval = tornet(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--split",
        "devel",
    ]);
    assert!(eval.status.success(), "{}", stderr(&eval));
    let report = stdout(&eval);
    assert!(report.contains("UAR:"), "{report}");
    assert!(report.contains("confusion"), "{report}");
    assert!(report.contains("bootstrap CI"), "{report}");

    // identical reports on a second run
    let eval2 = tornet(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--split",
        "devel",
    ]);
    assert_eq!(stdout(&eval), stdout(&eval2));

    // predict: two probabilities summing to 1, identical across runs
    let wav = corpus.join("test_negative_0000.wav");
    let predict = tornet(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--wav",
        wav.to_str().unwrap(),
    ]);
    assert!(predict.status.success(), "{}", stderr(&predict));
    let text = stdout(&predict);
    let probs: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("p("))
        .map(|l| l.split("= ").nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(probs.len(), 2);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let predict2 = tornet(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--wav",
        wav.to_str().unwrap(),
    ]);
    assert_eq!(stdout(&predict), stdout(&predict2));

    // a non-wav input is a data error
    let not_wav = dir.path().join("nope.wav");
    std::fs::write(&not_wav, b"not audio").unwrap();
    let bad = tornet(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--wav",
        not_wav.to_str().unwrap(),
    ]);
    assert_eq!(bad.status.code(), Some(2), "{}", stderr(&bad));

    // a truncated checkpoint names the failing section
    let bytes = std::fs::read(&ckpt).unwrap();
    let cut = dir.path().join("cut.ckpt");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    let broken = tornet(&[
        "eval",
        "--checkpoint",
        cut.to_str().unwrap(),
        "--manifest",
        manifest.to_str().unwrap(),
        "--split",
        "devel",
    ]);
    assert_eq!(broken.status.code(), Some(2));
    assert!(stderr(&broken).contains("tensor"), "{}", stderr(&broken));
}

#[test]
fn train_rejects_zero_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    assert!(tornet(&[
        "synth-data",
        "--out",
        corpus.to_str().unwrap(),
        "--n",
        "1",
        "--seed",
        "1",
    ])
    .status
    .success());
    let run = tornet(&[
        "train",
        "--manifest",
        corpus.join("manifest.csv").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--epochs",
        "0",
    ]);
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr(&run).contains("epoch"), "{}", stderr(&run));
}

#[test]
fn config_file_is_applied_and_flags_win() {
    let _guard = lock();
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c");
    assert!(tornet(&[
        "synth-data",
        "--out",
        corpus.to_str().unwrap(),
        "--n",
        "2",
        "--seed",
        "2",
    ])
    .status
    .success());

    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# tiny run\nepochs = 1\nlr = 0.5\nbatch_size = 4\n").unwrap();
    let run = tornet(&[
        "train",
        "--manifest",
        corpus.join("manifest.csv").to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--lr",
        "1e-4",
        "--single-thread",
    ]);
    assert!(run.status.success(), "{}", stderr(&run));
    let text = stdout(&run);
    assert!(text.contains("config: lr = 0.0001 (flag)"), "{text}");
    assert!(text.contains("config: epochs = 1 (config file)"), "{text}");
    assert!(text.contains("config: batch_size = 4 (config file)"), "{text}");

    let bad_cfg = dir.path().join("bad.cfg");
    std::fs::write(&bad_cfg, "epochs = 1\nmystery_knob = 3\n").unwrap();
    let run = tornet(&[
        "train",
        "--manifest",
        corpus.join("manifest.csv").to_str().unwrap(),
        "--config",
        bad_cfg.to_str().unwrap(),
        "--out",
        dir.path().join("out2").to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr(&run).contains("mystery_knob"), "{}", stderr(&run));
}

#[test]
fn usage_errors_exit_with_one() {
    let run = tornet(&["train"]); // missing required flags
    assert_eq!(run.status.code(), Some(1));
    let run = tornet(&["no-such-command"]);
    assert_eq!(run.status.code(), Some(1));
}
