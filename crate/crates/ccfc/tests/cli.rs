use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ccfc::cli::{restore, HISTORY_FILE};
use ccfc::io;
use ccfc_core::eval::{self, HitRate, RankingMetrics};
use ccfc_core::model::Model;
use serde_json::Value;

fn ccfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccfc"))
        .args(args)
        .env_remove("CCFC_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = ccfc(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic dataset with a fast training config.
fn dataset(dir: &Path) -> PathBuf {
    ok(&[
        "synth",
        "--out",
        s(dir),
        "--n-users",
        "50",
        "--n-items",
        "70",
        "--seed",
        "1",
    ]);
    let run = dir.join("run.json");
    let mut cfg: Value = serde_json::from_str(&fs::read_to_string(&run).unwrap()).unwrap();
    cfg["d"] = 8.into();
    cfg["epochs"] = 3.into();
    cfg["lr"] = 1e-3.into();
    cfg["batch_size"] = 64.into();
    cfg["n_pos"] = 3.into();
    cfg["n_neg"] = 6.into();
    cfg["mf_epochs"] = 2.into();
    fs::write(&run, cfg.to_string()).unwrap();
    run
}

fn train(run: &Path, out: &Path, extra: &[&str]) -> Value {
    let mut args = vec!["train", "--config", s(run), "--output", s(out)];
    args.extend_from_slice(extra);
    serde_json::from_str(&ok(&args)).unwrap()
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&[
            "synth",
            "--out",
            s(d.path()),
            "--n-users",
            "30",
            "--n-items",
            "40",
            "--seed",
            "9",
        ]);
    }
    for f in [
        "interactions.tsv",
        "attributes.jsonl",
        "schema.json",
        "truth.json",
        "run.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let stats: Value = serde_json::from_str(&ok(&[
        "ingest",
        "--interactions",
        s(&a.path().join("interactions.tsv")),
        "--schema",
        s(&a.path().join("schema.json")),
        "--attributes",
        s(&a.path().join("attributes.jsonl")),
    ]))
    .unwrap();
    assert_eq!(stats["users"], 30);
    assert_eq!(stats["items"], 40);
    assert_eq!(stats["attribute_fields"], 2);
}

#[test]
fn train_evaluate_export_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = dataset(dir.path());
    let out = dir.path().join("full");
    let summary = train(&run, &out, &["--threads", "2"]);
    assert_eq!(summary["epochs"], 3);
    for f in [
        "checkpoint.ccfc",
        "history.jsonl",
        "timings.jsonl",
        "metrics.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let ck = out.join("checkpoint.ccfc");

    let printed: RankingMetrics = serde_json::from_str(&ok(&[
        "evaluate",
        "--config",
        s(&run),
        "--checkpoint",
        s(&ck),
    ]))
    .unwrap();
    assert_eq!(printed.per_k.len(), 3);
    assert_eq!(
        printed.per_k.iter().map(|m| m.k).collect::<Vec<_>>(),
        [5, 10, 20]
    );
    let r = restore(&run, &ck).unwrap();
    let model = Model::new(&r.checkpoint.params, &r.checkpoint.meta.hyperparams);
    let lib = eval::evaluate(
        &model,
        &r.bundle.train,
        &r.bundle.test,
        &[5, 10, 20],
        HitRate::PerK,
    )
    .unwrap();
    assert_eq!(printed, lib);
    let saved: RankingMetrics = io::read_json(&out.join("metrics.json")).unwrap();
    assert_eq!(saved, lib);

    let recall: RankingMetrics = serde_json::from_str(&ok(&[
        "evaluate",
        "--config",
        s(&run),
        "--checkpoint",
        s(&ck),
        "--ks",
        "1,3",
        "--hit-rate",
        "recall",
        "--threads",
        "3",
    ]))
    .unwrap();
    let lib = eval::evaluate(
        &model,
        &r.bundle.train,
        &r.bundle.test,
        &[1, 3],
        HitRate::Recall,
    )
    .unwrap();
    assert_eq!(recall, lib);

    // the test split written out and passed back gives the same numbers
    let test_tsv = dir.path().join("test.tsv");
    let names = &r.data.interactions;
    let lines: String = r
        .bundle
        .test
        .interactions()
        .iter()
        .map(|&(u, v)| {
            format!(
                "{}\t{}\t0\n",
                names.users.name(u).unwrap(),
                names.items.name(v).unwrap()
            )
        })
        .collect();
    fs::write(&test_tsv, lines).unwrap();
    let via_file: RankingMetrics = serde_json::from_str(&ok(&[
        "evaluate",
        "--config",
        s(&run),
        "--checkpoint",
        s(&ck),
        "--test",
        s(&test_tsv),
    ]))
    .unwrap();
    assert_eq!(via_file, printed);

    let exp = dir.path().join("exp");
    ok(&[
        "export",
        "--config",
        s(&run),
        "--checkpoint",
        s(&ck),
        "--out",
        s(&exp),
    ]);
    let items = fs::read_to_string(exp.join("items_cbce.tsv")).unwrap();
    assert_eq!(items.lines().count(), 70);
    let first = items.lines().next().unwrap();
    let (id, vals) = first.split_once('\t').unwrap();
    let v = names.items.get(id).unwrap();
    let q: Vec<f64> = vals.split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(q, eval::item_embedding(&model, &r.data.dataset, v).unwrap());
    assert_eq!(
        fs::read_to_string(exp.join("users_uce.tsv"))
            .unwrap()
            .lines()
            .count(),
        50
    );

    let user = names
        .users
        .name(r.bundle.test.interactions()[0].0)
        .unwrap()
        .to_owned();
    let csv = dir.path().join("rep.csv");
    ok(&[
        "report",
        "--config",
        s(&run),
        "--checkpoint",
        s(&ck),
        "--user",
        &user,
        "--out",
        s(&csv),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut rows = text.lines();
    assert_eq!(
        rows.next().unwrap(),
        "pair,positive,negative,d_pos,d_neg,diff"
    );
    let rows: Vec<Vec<&str>> = rows.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    let u = names.users.get(&user).unwrap();
    let pairs: Vec<(usize, usize)> = rows
        .iter()
        .map(|c| {
            (
                names.items.get(c[1]).unwrap(),
                names.items.get(c[2]).unwrap(),
            )
        })
        .collect();
    let lib = eval::distance_report(&model, &r.bundle.train, &r.data.dataset, u, &pairs).unwrap();
    for (c, l) in rows.iter().zip(&lib) {
        assert!(r.bundle.test.contains(u, l.positive));
        assert!(!r.data.dataset.contains(u, l.negative));
        assert_eq!(c[3].parse::<f64>().unwrap(), l.d_pos);
        assert_eq!(c[4].parse::<f64>().unwrap(), l.d_neg);
        assert_eq!(c[5].parse::<f64>().unwrap(), l.diff);
    }
}

#[test]
fn no_contrastive_history_has_only_the_content_term() {
    let dir = tempfile::tempdir().unwrap();
    let run = dataset(dir.path());
    let out = dir.path().join("co");
    train(&run, &out, &["--variant", "no-contrastive"]);
    let history = fs::read_to_string(out.join(HISTORY_FILE)).unwrap();
    assert_eq!(history.lines().count(), 3);
    for line in history.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["loss"]["behaviour_bpr"], 0.0);
        assert_eq!(rec["loss"]["contrastive"], 0.0);
        assert!(rec["loss"]["content_bpr"].as_f64().unwrap() > 0.0);
        assert!(rec.get("wall_secs").is_none());
    }
}

#[test]
fn pretrain_history_starts_with_mf_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let run = dataset(dir.path());
    let out = dir.path().join("pre");
    train(&run, &out, &["--variant", "pretrain", "--epochs", "1"]);
    let history = fs::read_to_string(out.join(HISTORY_FILE)).unwrap();
    let keys: Vec<bool> = history
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l)
                .unwrap()
                .get("pretrain_epoch")
                .is_some()
        })
        .collect();
    assert_eq!(keys, [true, true, false]);
}

#[test]
fn single_threaded_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = dataset(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train(&run, &a, &[]);
    train(&run, &b, &[]);
    for f in ["checkpoint.ccfc", "history.jsonl", "metrics.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let c = dir.path().join("c");
    train(&run, &c, &["--seed", "99"]);
    assert_ne!(
        fs::read(a.join("checkpoint.ccfc")).unwrap(),
        fs::read(c.join("checkpoint.ccfc")).unwrap()
    );
}

#[test]
fn seed_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = dataset(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    train(&run, &a, &["--seed", "42"]);
    let out = Command::new(env!("CARGO_BIN_EXE_ccfc"))
        .args(["train", "--config", s(&run), "--output", s(&b)])
        .env("CCFC_SEED", "42")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        fs::read(a.join("checkpoint.ccfc")).unwrap(),
        fs::read(b.join("checkpoint.ccfc")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let run = dataset(dir.path());
    let out = dir.path().join("m");
    train(&run, &out, &["--epochs", "1"]);
    let ck = out.join("checkpoint.ccfc");

    assert_eq!(
        ccfc(&["train", "--config", s(&dir.path().join("none.json"))])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ccfc(&["train", "--config", s(&run), "--lr", "-1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ccfc(&["evaluate", "--config", s(&run), "--checkpoint", s(&run)])
            .status
            .code(),
        Some(2)
    );

    let other = tempfile::tempdir().unwrap();
    fs::copy(&run, other.path().join("run.json")).unwrap();
    for f in ["interactions.tsv", "attributes.jsonl"] {
        fs::copy(dir.path().join(f), other.path().join(f)).unwrap();
    }
    let mut schema: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("schema.json")).unwrap()).unwrap();
    schema["fields"][0]["vocab"]
        .as_array_mut()
        .unwrap()
        .push("extra".into());
    fs::write(other.path().join("schema.json"), schema.to_string()).unwrap();
    let res = ccfc(&[
        "evaluate",
        "--config",
        s(&other.path().join("run.json")),
        "--checkpoint",
        s(&ck),
    ]);
    assert_eq!(
        res.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );

    let div = dir.path().join("div");
    let res = ccfc(&[
        "train",
        "--config",
        s(&run),
        "--output",
        s(&div),
        "--lr",
        "1e300",
    ]);
    assert_eq!(
        res.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert!(div.join("checkpoint.ccfc").exists());
}

#[test]
fn missing_interactions_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let run = dataset(dir.path());
    fs::remove_file(dir.path().join("interactions.tsv")).unwrap();
    let res = ccfc(&["train", "--config", s(&run)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("interactions.tsv"));
}

#[test]
fn evaluate_a_single_test_item() {
    let dir = tempfile::tempdir().unwrap();
    let run = dataset(dir.path());
    let out = dir.path().join("m");
    train(&run, &out, &["--epochs", "1"]);
    let ck = out.join("checkpoint.ccfc");
    let r = restore(&run, &ck).unwrap();
    let (u, v) = r.bundle.test.interactions()[0];
    let names = &r.data.interactions;
    let one = dir.path().join("one.tsv");
    fs::write(&one, format!("{}\t{}\t0\n", names.users.name(u).unwrap(), names.items.name(v).unwrap())).unwrap();
    let m: Value = serde_json::from_str(&ok(&[
        "evaluate", "--config", s(&run), "--checkpoint", s(&ck), "--test", s(&one),
    ]))
    .unwrap();
    assert_eq!(m["per_k"].as_array().unwrap().len(), 3);
    assert_eq!(m["n_items"], 1);
}
