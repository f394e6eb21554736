use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use facedyn::corpus::{serialize_corpus, synthetic_corpus, SyntheticSpec};

fn facedyn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facedyn"))
        .args(args)
        .current_dir(dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_corpus(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let c = synthetic_corpus(SyntheticSpec {
        donors: 6,
        non_donors: 6,
        min_len: 4,
        max_len: 8,
        seed,
    });
    let p = dir.join(name);
    std::fs::write(&p, serialize_corpus(&c)).unwrap();
    p
}

#[test]
fn help_lists_every_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = facedyn(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for cmd in [
        "ingest",
        "stats",
        "kappa",
        "train",
        "evaluate",
        "cv",
        "regress",
        "trend-export",
        "serve",
    ] {
        assert!(text.contains(cmd), "help lacks {cmd}:\n{text}");
    }
    for flag in [
        "--config",
        "--corpus",
        "--out",
        "--seed",
        "--scope",
        "--variant",
        "--embedder",
    ] {
        assert!(text.contains(flag), "help lacks {flag}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = facedyn(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));

    let o = facedyn(&["cv", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("c.toml"), "{}", stderr(&o));

    let o = facedyn(&["--scope", "nobody", "stats", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn version_is_semantic() {
    let dir = tempfile::tempdir().unwrap();
    let o = facedyn(&["--version"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v = stdout(&o);
    let v = v.trim().strip_prefix("facedyn ").expect("name prefix");
    let parts: Vec<&str> = v.split('.').collect();
    assert_eq!(parts.len(), 3, "{v}");
    assert!(parts.iter().all(|p| p.parse::<u32>().is_ok()), "{v}");
}

#[test]
fn module_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.jsonl"), "{not json}\n").unwrap();
    let o = facedyn(&["stats", "bad.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = facedyn(&["stats", "absent.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn ingest_stats_and_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(d, "a.jsonl", 3);
    write_corpus(d, "b.jsonl", 4);

    let o = facedyn(&["ingest", "a.jsonl", "--out", "canon.jsonl"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(d.join("canon.jsonl")).unwrap(),
        std::fs::read(d.join("a.jsonl")).unwrap()
    );
    let sidecar: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("canon.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(sidecar["command"], "ingest");
    assert_eq!(sidecar["seed"], 13);
    assert_eq!(sidecar["started"], 1_700_000_000u64);

    let o = facedyn(&["stats", "a.jsonl", "--out", "stats.csv"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("HPos+") && text.contains("SNeg+"), "{text}");
    let csv = std::fs::read_to_string(d.join("stats.csv")).unwrap();
    assert!(csv.starts_with("# manifest: {"));
    assert!(csv.lines().nth(1).unwrap().starts_with("face_act,"));

    let o = facedyn(&["kappa", "a.jsonl", "canon.jsonl"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("kappa=1.0000"), "{}", stdout(&o));

    // Different synthetic corpora share conversation ids but not labels.
    let o = facedyn(&["kappa", "a.jsonl", "b.jsonl", "--out", "k.json"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let k: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("k.json")).unwrap()).unwrap();
    assert!(k["kappa"].as_f64().unwrap() < 1.0);
    assert_eq!(k["manifest"]["command"], "kappa");
}

#[test]
fn cv_regress_and_trend_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(d, "c.jsonl", 9);
    std::fs::write(
        d.join("c.toml"),
        "epochs = 2\nd_h1 = 8\nd_h2 = 8\nd_fc = 6\nd_embed = 8\nfolds = 3\nlearning_rate = 0.001\nvariant = \"sf\"\n",
    )
    .unwrap();

    let run = |tag: &str| {
        let report = format!("r{tag}.json");
        let o = facedyn(
            &["cv", "--config", "c.toml", "--corpus", "c.jsonl", "--out", &report],
            d,
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let reg = format!("reg{tag}.csv");
        let o = facedyn(&["regress", "--report", &report, "--out", &reg], d);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let trend = format!("t{tag}.csv");
        let o = facedyn(&["trend-export", "--report", &report, "--out", &trend], d);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        [report, reg, trend].map(|f| std::fs::read(d.join(f)).unwrap())
    };
    let first = run("1");
    let second = run("2");
    assert_eq!(first, second, "outputs differ between identical runs");

    let report: serde_json::Value = serde_json::from_slice(&first[0]).unwrap();
    assert_eq!(report["manifest"]["command"], "cv");
    assert_eq!(report["manifest"]["seed"], 13);
    assert_eq!(report["folds"].as_array().unwrap().len(), 3);
    let reg = String::from_utf8(first[1].clone()).unwrap();
    assert_eq!(reg.lines().nth(1), Some("role,term,count,frac,beta,se,p,stars"));
    let trend = String::from_utf8(first[2].clone()).unwrap();
    assert_eq!(
        trend.lines().nth(1),
        Some("step,donor_mean,donor_n,non_donor_mean,non_donor_n")
    );

    // A different seed changes the folds and hence the report.
    let o = facedyn(
        &[
            "cv", "--config", "c.toml", "--corpus", "c.jsonl", "--seed", "7", "--out", "r3.json",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let other: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("r3.json")).unwrap()).unwrap();
    assert_eq!(other["config"]["seed"], 7);
    assert_ne!(other["predictions"], report["predictions"]);

    // McNemar of a report against itself: no discordant pairs.
    let o = facedyn(&["evaluate", "--report", "r1.json", "--against", "r2.json"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(m["p"], 1.0);
}

#[test]
fn train_then_evaluate_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_corpus(d, "c.jsonl", 2);
    std::fs::write(
        d.join("c.toml"),
        "epochs = 1\nd_h1 = 6\nd_h2 = 6\nd_fc = 4\nd_embed = 8\n",
    )
    .unwrap();
    let o = facedyn(
        &[
            "train",
            "--config",
            "c.toml",
            "--corpus",
            "c.jsonl",
            "--out",
            "m.ckpt",
            "--variant",
            "base",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(d.join("m.ckpt.manifest.json").is_file());

    let o = facedyn(&["evaluate", "--checkpoint", "m.ckpt", "--corpus", "c.jsonl"], d);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["conversations"], 12);
    let acc = v["face"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let o = facedyn(&["evaluate", "--corpus", "c.jsonl"], d);
    assert_eq!(o.status.code(), Some(2));
}
