use std::path::Path;
use std::process::{Command, Output};

fn kinit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinit"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run kinit")
}

fn ok(args: &[&str]) -> String {
    let out = kinit(args);
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

fn files_with_ext(dir: &Path, ext: &str) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some(ext))
        .collect();
    v.sort();
    v
}

fn synth(dir: &Path, per_class: &str) -> String {
    ok(&["synth", "--per-class", per_class, "--out", s(dir)])
}

#[test]
fn synth_is_reproducible_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let stdout = synth(&a, "5");
    assert!(stdout.contains("clips: 20"), "{stdout}");
    synth(&b, "5");
    let wavs = files_with_ext(&a, "wav");
    assert_eq!(wavs.len(), 20);
    for w in &wavs {
        assert_eq!(
            std::fs::read(w).unwrap(),
            std::fs::read(b.join(w.file_name().unwrap())).unwrap()
        );
    }
    let manifest = std::fs::read_to_string(a.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 21);

    let bad = kinit(&[
        "synth",
        "--per-class",
        "3",
        "--out",
        s(&tmp.path().join("c")),
    ]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("at least 5"));
}

#[test]
fn unknown_flags_and_missing_inputs_are_usage_errors() {
    assert_eq!(kinit(&["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        kinit(&["experiment", "4", "--manifest", "x.csv"])
            .status
            .code(),
        Some(2)
    );
    let missing = kinit(&["kappa", "--votes", "/nonexistent/votes.csv"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn extract_train_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    synth(&corpus, "5");
    let manifest = corpus.join("manifest.csv");
    let split_out = ok(&["split", "--manifest", s(&manifest)]);
    assert!(split_out.contains("train: 12 clips"), "{split_out}");

    let feats = tmp.path().join("feats");
    let out = ok(&[
        "extract",
        "--manifest",
        s(&manifest),
        "--kind",
        "mfcc",
        "--len",
        "3",
        "--out",
        s(&feats),
    ]);
    assert!(out.contains("bins=13"), "{out}");
    assert!(out.contains("segments: 380"), "{out}");
    let files = files_with_ext(&feats, "feat");
    assert_eq!(files.len(), 20 * 19);
    assert!(feats.join("Bati1_seg0.feat").exists());
    assert!(feats.join("Tizita5_seg18.feat").exists());

    let header = |p: &Path| {
        let bytes = std::fs::read(p).unwrap();
        assert_eq!(&bytes[..4], b"FEAT");
        bytes
    };
    let first = header(&files[0]);
    // same configuration, so every file carries the same digest bytes
    let digest_of = |b: &[u8]| b[..b.len() - 94 * 13 * 4].to_vec();
    for f in &files {
        assert_eq!(digest_of(&header(f)), digest_of(&first));
    }
    let feats2 = tmp.path().join("feats2");
    ok(&["extract", "--manifest", s(&manifest), "--out", s(&feats2)]);
    for f in &files {
        assert_eq!(
            std::fs::read(f).unwrap(),
            std::fs::read(feats2.join(f.file_name().unwrap())).unwrap()
        );
    }

    let run = tmp.path().join("run");
    let out = ok(&[
        "train",
        "--manifest",
        s(&manifest),
        "--features",
        s(&feats),
        "--epochs",
        "2",
        "--out",
        s(&run),
    ]);
    assert!(out.contains("epochs=2"), "{out}");
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    let lines: Vec<&str> = history.lines().collect();
    assert_eq!(
        lines[0],
        "epoch,train_loss,train_acc,val_loss,val_acc,seconds_elapsed"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[2].starts_with("2,"));
    let ckpt = std::fs::read(run.join("model.ekmw")).unwrap();
    assert_eq!(&ckpt[..4], b"EKMW");

    // deterministic rerun: identical artifacts
    let run2 = tmp.path().join("run2");
    ok(&[
        "train",
        "--manifest",
        s(&manifest),
        "--features",
        s(&feats),
        "--epochs",
        "2",
        "--out",
        s(&run2),
    ]);
    assert_eq!(std::fs::read(run2.join("model.ekmw")).unwrap(), ckpt);
    assert_eq!(
        std::fs::read_to_string(run2.join("history.csv")).unwrap(),
        history
    );

    let eval = ok(&[
        "eval",
        "--manifest",
        s(&manifest),
        "--features",
        s(&feats),
        "--model",
        s(&run.join("model.ekmw")),
        "--out",
        s(&run),
    ]);
    assert!(eval.contains("segments=152"), "{eval}");
    assert!(eval.contains("accuracy="));
    let confusion = std::fs::read_to_string(run.join("confusion_eval.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 5);
    let total: u64 = confusion
        .lines()
        .skip(1)
        .flat_map(|l| {
            l.split(',')
                .skip(1)
                .map(|c| c.parse::<u64>().unwrap())
                .collect::<Vec<_>>()
        })
        .sum();
    assert_eq!(total, 152);
}

#[test]
fn kappa_on_unanimous_and_mixed_votes() {
    let tmp = tempfile::tempdir().unwrap();
    let votes = tmp.path().join("votes.csv");
    std::fs::write(
        &votes,
        "clip_id,judge1,judge2,judge3,judge4,judge5\n\
         Tizita1,Tizita,Tizita,Tizita,Tizita,Tizita\n\
         Bati1,Bati,Bati,Bati,Bati,Bati\n\
         Ambassel1,Ambassel,Ambassel,Ambassel,Ambassel,Ambassel\n",
    )
    .unwrap();
    let out = ok(&["kappa", "--votes", s(&votes)]);
    assert!(out.lines().any(|l| l == "kappa=1.0"), "{out}");

    std::fs::write(
        &votes,
        "clip_id,judge1,judge2,judge3,judge4,judge5\n\
         a,Tizita,Tizita,Tizita,Tizita,Tizita\n\
         b,Tizita,Tizita,Tizita,Bati,Bati\n",
    )
    .unwrap();
    let kappa_of = |out: &str| -> f64 {
        out.lines()
            .find_map(|l| l.strip_prefix("kappa="))
            .unwrap()
            .parse()
            .unwrap()
    };
    let fleiss = ok(&["kappa", "--votes", s(&votes)]);
    assert!((kappa_of(&fleiss) - 0.0625).abs() < 1e-9, "{fleiss}");
    let free = ok(&["kappa", "--votes", s(&votes), "--variant", "free-marginal"]);
    assert!((kappa_of(&free) - 0.6).abs() < 1e-9, "{free}");

    std::fs::write(&votes, "clip_id,judge1,judge2\na,Tizita,Jazz\n").unwrap();
    assert_eq!(
        kinit(&["kappa", "--votes", s(&votes)]).status.code(),
        Some(2)
    );
}

#[test]
fn segment_length_experiment_writes_a_three_row_table() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    synth(&corpus, "5");
    let out_dir = tmp.path().join("exp2");
    let stdout = ok(&[
        "experiment",
        "2",
        "--manifest",
        s(&corpus.join("manifest.csv")),
        "--runs",
        "1",
        "--epochs",
        "1",
        "--out",
        s(&out_dir),
    ]);
    assert!(
        stdout.contains("mfcc_1s") && stdout.contains("mfcc_5s"),
        "{stdout}"
    );
    let table = std::fs::read_to_string(out_dir.join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("mfcc_1s,measured,"));
    assert!(rows[1].starts_with("mfcc_3s,"));
    assert!(rows[2].starts_with("mfcc_5s,"));
    for cond in ["mfcc_1s", "mfcc_3s", "mfcc_5s"] {
        assert!(out_dir.join(format!("confusion_{cond}.csv")).exists());
        assert!(out_dir.join(format!("history_{cond}_42.csv")).exists());
    }
    let report = ok(&["report", "--dir", s(&out_dir)]);
    assert!(report.contains("mfcc_3s"), "{report}");
}
