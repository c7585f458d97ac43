use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msast::metrics::encode_ribbon;
use msast::training::load_checkpoint;
use tempfile::TempDir;

fn msast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msast")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let out = msast(&[
            "synth", "--out", s(&data), "--videos", "6", "--min-len", "30", "--max-len", "50",
            "--dim", "8", "--seed", "2",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::write(
            dir.path().join("run.cfg"),
            "kernels=3,5\nlayers_per_stage=3\nfeature_maps=8\nepochs=2\nlearning_rate=0.001\n",
        )
        .unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, name: &str, causal: bool) -> PathBuf {
        let ckpt = self.path(name);
        let (cfg, data) = (self.path("run.cfg"), self.path("data"));
        let mut args = vec!["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&ckpt)];
        if causal {
            args.push("--causal");
        }
        let out = msast(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        ckpt
    }

    fn features(&self, id: &str) -> PathBuf {
        self.path("data").join("features").join(format!("{id}.msfeat"))
    }
}

#[test]
fn synth_is_deterministic_and_validated() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for p in [&a, &b] {
        let out = msast(&["synth", "--out", s(p), "--videos", "4", "--min-len", "10", "--max-len", "20", "--seed", "7"]);
        assert_eq!(code(&out), 0);
    }
    for sub in ["mapping.txt", "splits/train.txt", "features/video002.msfeat", "labels/video004.txt"] {
        assert_eq!(std::fs::read(a.join(sub)).unwrap(), std::fs::read(b.join(sub)).unwrap(), "{sub}");
    }
    let mapping = std::fs::read_to_string(a.join("mapping.txt")).unwrap();
    assert_eq!(mapping.lines().count(), 7);
    assert_eq!(code(&msast(&["synth", "--out", s(&a), "--videos", "0"])), 2);
    assert_eq!(code(&msast(&["synth", "--out", s(&a), "--videos", "many"])), 2);
}

#[test]
fn train_writes_checkpoint_and_echoes_config() {
    let fx = Fixture::new();
    let (cfg, data, ckpt) = (fx.path("run.cfg"), fx.path("data"), fx.path("c.ckpt"));
    let out = msast(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&ckpt), "--causal"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let first: Vec<&str> = stdout.lines().take(16).collect();
    assert_eq!(first[0], "kernels=3,5");
    assert!(first.contains(&"num_decoders=1") && first.contains(&"causal=true"));
    assert!(first.contains(&"input_dim=8") && first.contains(&"num_classes=7"));
    assert_eq!(&std::fs::read(&ckpt).unwrap()[..8], b"MSASTCK1");
    let (model, _) = load_checkpoint(&ckpt).unwrap();
    assert_eq!(model.config().num_decoders, 1);
    assert!(model.config().causal);
    let history = std::fs::read_to_string(fx.path("c.ckpt.history")).unwrap();
    assert_eq!(history.lines().count(), 2);
}

#[test]
fn train_rejects_bad_configuration() {
    let fx = Fixture::new();
    let (data, ckpt, bad) = (fx.path("data"), fx.path("x.ckpt"), fx.path("bad.cfg"));
    std::fs::write(&bad, "batch_size=4\n").unwrap();
    assert_eq!(code(&msast(&["train", "--config", s(&bad), "--data", s(&data), "--out", s(&ckpt)])), 2);
    assert_eq!(code(&msast(&["train", "--out", s(&ckpt)])), 2);
    let out = msast(&["train", "--data", s(&data), "--out", s(&ckpt), "--set", "kernels=5"]);
    assert_eq!(code(&out), 2);
    assert!(!ckpt.exists());
}

#[test]
fn oracle_evaluation_scores_full_marks() {
    let fx = Fixture::new();
    let (data, report) = (fx.path("data"), fx.path("oracle.tsv"));
    let out = msast(&["eval", "--oracle", "--data", s(&data), "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    for line in text.lines().filter(|l| !l.starts_with("confusion/") && !l.contains("/std")) {
        let value: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        assert_eq!(value, 100.0, "{line}");
    }
}

fn report_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}\t")))
        .unwrap_or_else(|| panic!("missing {key}"))
        .parse()
        .unwrap()
}

#[test]
fn eval_report_keys_ribbons_and_errors() {
    let fx = Fixture::new();
    let ckpt = fx.train("o.ckpt", false);
    let (data, report, ribbons) = (fx.path("data"), fx.path("r.tsv"), fx.path("ribbons"));
    let out = msast(&["eval", "--ckpt", s(&ckpt), "--data", s(&data), "--report", s(&report), "--ribbon", s(&ribbons)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    let f: Vec<f64> = ["f1@10", "f1@25", "f1@50"].iter().map(|k| report_value(&text, k)).collect();
    assert!((report_value(&text, "f1_avg") - f.iter().sum::<f64>() / 3.0).abs() <= 0.01);
    assert!(text.contains("video/video006/accuracy\t"));
    assert!(text.contains("per_video/accuracy/mean\t"));

    // The ribbon's prediction band is the same labelling `predict` writes.
    let pred_path = fx.path("p.txt");
    let feats = fx.features("video006");
    assert_eq!(code(&msast(&["predict", "--ckpt", s(&ckpt), "--features", s(&feats), "--out", s(&pred_path)])), 0);
    let pred: Vec<usize> = std::fs::read_to_string(&pred_path).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    let gt: Vec<usize> = std::fs::read_to_string(fx.path("data/labels/video006.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(pred.len(), gt.len());
    let expected = encode_ribbon(&[("ground truth", &gt), ("prediction", &pred)]).unwrap();
    assert_eq!(std::fs::read(ribbons.join("video006.ppm")).unwrap(), expected);

    let missing = msast(&["eval", "--ckpt", s(&ckpt), "--data", s(&data), "--split", "val", "--report", s(&report)]);
    assert_eq!(code(&missing), 2);
    let gone = fx.path("nope.ckpt");
    assert_eq!(code(&msast(&["eval", "--ckpt", s(&gone), "--data", s(&data), "--report", s(&report)])), 3);
}

#[test]
fn dimension_mismatch_exits_5() {
    let fx = Fixture::new();
    let ckpt = fx.train("o.ckpt", false);
    let other = fx.path("other");
    let out = msast(&["synth", "--out", s(&other), "--videos", "2", "--min-len", "10", "--max-len", "12", "--dim", "5"]);
    assert_eq!(code(&out), 0);
    let report = fx.path("r.tsv");
    let out = msast(&["eval", "--ckpt", s(&ckpt), "--data", s(&other), "--split", "train", "--report", s(&report)]);
    assert_eq!(code(&out), 5);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("expected feature dimension 8, found 5"), "{err}");
    let feats = other.join("features/video001.msfeat");
    let out = msast(&["predict", "--ckpt", s(&ckpt), "--features", s(&feats), "--out", s(&fx.path("p"))]);
    assert_eq!(code(&out), 5);
}

#[test]
fn predict_is_repeatable_and_stream_matches_it() {
    let fx = Fixture::new();
    let ckpt = fx.train("c.ckpt", true);
    let feats = fx.features("video002");
    let run = |cmd: &str, out: &Path| {
        let o = msast(&[cmd, "--ckpt", s(&ckpt), "--features", s(&feats), "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let p1 = run("predict", &fx.path("p1"));
    let p2 = run("predict", &fx.path("p2"));
    let st = run("stream", &fx.path("s"));
    assert_eq!(p1, p2);
    assert_eq!(p1, st);
    let frames = msast::data::read_feature_file(&feats).unwrap().rows();
    assert_eq!(String::from_utf8(p1).unwrap().lines().count(), frames);
}

#[test]
fn stream_rejects_offline_checkpoint() {
    let fx = Fixture::new();
    let ckpt = fx.train("o.ckpt", false);
    let feats = fx.features("video001");
    let out = msast(&["stream", "--ckpt", s(&ckpt), "--features", s(&feats), "--out", s(&fx.path("s"))]);
    assert_eq!(code(&out), 6);
    assert!(String::from_utf8(out.stderr).unwrap().contains("streaming requires a causal model"));
}
