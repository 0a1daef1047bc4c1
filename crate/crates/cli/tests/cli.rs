use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_semg-scrub"));
    c.env("RUST_LOG", "warn").env("SEMG_SCRUB_THREADS", "2");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const PLAN: &str = r#"
seed = 3
[surrogate]
segment_s = 6.0
ecg_s = 10.0
train_segments = 4
validation_segments = 2
test_segments = 4
train_ecg_subjects = 5
test_ecg_subjects = 5
"#;

fn plan(dir: &Path) -> String {
    let p = dir.join("plan.toml");
    fs::write(&p, PLAN).unwrap();
    p.display().to_string()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn unknown_flag_prints_usage() {
    let out = run(&["mix", "--bogus"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn unknown_subcommand_fails() {
    assert!(!run(&["frobnicate"]).status.success());
}

#[test]
fn missing_input_names_the_path() {
    let out = run(&["eval", "--method", "hp", "--corpus", "/nonexistent/corpus", "--out", "x.csv"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/corpus"));
}

#[test]
fn fcn_without_checkpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.f32");
    fs::write(&input, [0u8; 16]).unwrap();
    fs::write(dir.path().join("x.json"), r#"{"fs": 1000.0}"#).unwrap();
    let out = run(&["denoise", "--method", "fcn", "--input", &s(&input), "--out", &s(&dir.path().join("y.f32"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn mix_counts_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = plan(dir.path());
    let data = dir.path().join("data");
    ok(&["synth", "--config", &cfg, "--out", &s(&data)]);
    let corpus = dir.path().join("corpus");
    let out = ok(&[
        "mix",
        "--manifest",
        &s(&data.join("manifest.json")),
        "--snr",
        "-10",
        "--pairings",
        "5",
        "--out",
        &s(&corpus),
    ]);
    assert!(out.contains("wrote 50 records"), "{out}");
    let index = fs::read_to_string(corpus.join("index.json")).unwrap();
    assert_eq!(index.matches("\"id\"").count(), 50);
}

#[test]
fn pipeline_composes_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = plan(dir.path());
    let data = dir.path().join("data");
    let corpus = dir.path().join("corpus");
    ok(&["synth", "--config", &cfg, "--out", &s(&data)]);
    ok(&["mix", "--config", &cfg, "--manifest", &s(&data), "--snr", "-10", "--snr", "-4", "--out", &s(&corpus)]);

    let train_cfg = dir.path().join("train.toml");
    fs::write(
        &train_cfg,
        format!("d = 256\nmax_epochs = 2\nbatch_size = 8\ntrain_corpus = {:?}\n", s(&corpus)),
    )
    .unwrap();
    let ckpt = dir.path().join("fcn.ckpt");
    ok(&["train", "--config", &s(&train_cfg), "--checkpoint", &s(&ckpt)]);
    assert!(ckpt.exists());

    let reports = dir.path().join("reports");
    let mut csvs = Vec::new();
    for m in ["hp", "ts", "fcn"] {
        let out = reports.join(format!("{m}.csv"));
        let mut args = vec!["eval", "--method", m, "--corpus"];
        let c = s(&corpus);
        args.push(&c);
        let o = s(&out);
        args.extend(["--out", &o]);
        let k = s(&ckpt);
        if m == "fcn" {
            args.extend(["--checkpoint", &k]);
        }
        ok(&args);
        csvs.push(o);
    }
    let hp = fs::read_to_string(&csvs[0]).unwrap();
    // 4 test segments x 1 pairing x 2 SNRs
    assert_eq!(hp.lines().count(), 1 + 8);

    let tables = dir.path().join("tables");
    let mut args = vec!["report".to_string(), "--out".into(), s(&tables)];
    args.extend(csvs.iter().cloned());
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = ok(&argv);
    assert!(out.contains("24 records"), "{out}");
    let combined = fs::read_to_string(tables.join("report.csv")).unwrap();
    let rows: Vec<&str> = combined.lines().skip(1).collect();
    assert_eq!(rows.len(), 24 + 3 * 2);
    assert_eq!(rows.iter().filter(|r| r.split(',').nth(3) == Some("mean")).count(), 6);
    for t in ["snr_imp_by_channel.csv", "snr_imp_by_input_snr.csv", "criteria.csv", "snr_imp_by_input_snr.svg"] {
        assert!(tables.join(t).exists(), "{t}");
    }

    let rec = fs::read_dir(corpus.join("records")).unwrap().next().unwrap().unwrap().path();
    let noisy = rec.join("noisy.f32");
    // records carry their rate in meta.json; give the raw file a sidecar
    fs::write(rec.join("noisy.json"), r#"{"fs": 1000.0}"#).unwrap();
    let den = dir.path().join("den/fcn.f32");
    ok(&["denoise", "--method", "fcn", "--checkpoint", &s(&ckpt), "--input", &s(&noisy), "--out", &s(&den)]);
    assert_eq!(fs::metadata(&den).unwrap().len(), fs::metadata(&noisy).unwrap().len());
    let meta = fs::read_to_string(den.with_extension("json")).unwrap();
    assert!(meta.contains("\"method\": \"fcn\""), "{meta}");
}
