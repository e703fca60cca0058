use std::path::Path;
use std::process::{Command, Output};

fn kge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kge"))
        .args(args)
        .env_remove("KGE_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.split_whitespace().find_map(|w| w.strip_prefix(key)))
        .unwrap_or_else(|| panic!("no {key} in output:\n{text}"))
}

fn write_dataset(dir: &Path) {
    let mut lines = Vec::new();
    for i in 0..10 {
        lines.push(format!("e{i}\tnext\te{}", (i + 1) % 10));
        lines.push(format!("e{i}\tskip\te{}", (i + 3) % 10));
    }
    std::fs::write(dir.join("train.txt"), lines[..16].join("\n")).unwrap();
    std::fs::write(dir.join("valid.txt"), lines[16..18].join("\n")).unwrap();
    std::fs::write(dir.join("test.txt"), lines[18..].join("\n")).unwrap();
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--dim",
        "8",
        "--batch",
        "8",
        "--epochs",
        "6",
        "--valid-every",
        "2",
        "--init-scale",
        "0.1",
    ];
    args.extend_from_slice(extra);
    kge(&args)
}

#[test]
fn stats_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let o = kge(&["stats", "--data", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("10"), "{text}");
}

#[test]
fn train_then_eval_reproduces_logged_valid_mrr() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let run = dir.path().join("run");
    let o = train(dir.path(), &run, &["--model", "complex", "--reg", "dura", "--lambda", "0.01"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let logged = value(&stdout(&o), "valid_mrr=").to_string();
    for f in ["model.kgec", "model.kgec.vocab", "train.log", "config.txt", "test_report.txt"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let ckpt = run.join("model.kgec");
    let e = kge(&[
        "eval",
        "--data",
        dir.path().to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--split",
        "valid",
    ]);
    assert!(e.status.success());
    let text = stdout(&e);
    let evaluated = text.lines().find_map(|l| l.strip_prefix("mrr=")).unwrap();
    assert_eq!(evaluated, logged);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# toy\nmodel=cp\ndim=4\nseed=3\n").unwrap();
    let run = dir.path().join("run");
    let o = train(dir.path(), &run, &["--config", cfg.to_str().unwrap(), "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let saved = std::fs::read_to_string(run.join("config.txt")).unwrap();
    assert!(saved.contains("seed=5"), "{saved}");
    assert!(saved.contains("dim=8"), "{saved}");
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let run = dir.path().join("run");
    let o = train(dir.path(), &run, &["--model", "rescal", "--reg", "n3"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(kge(&["train", "--no-such-flag"]).status.code(), Some(2));
    let missing = dir.path().join("absent");
    assert_eq!(kge(&["stats", "--data", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn verify_passes() {
    let o = kge(&["verify", "--seeds", "20"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().all(|l| l.ends_with("PASS")));
}

#[test]
fn sparsify_and_export_write_files() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let run = dir.path().join("run");
    assert!(train(dir.path(), &run, &[]).status.success());
    let ckpt = run.join("model.kgec");
    let data = dir.path().to_str().unwrap();

    let sparse = dir.path().join("sparse");
    let o = kge(&[
        "sparsify",
        "--data",
        data,
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--target",
        "0.5",
        "--out",
        sparse.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(sparse.join("sparsity.txt").is_file());
    for ext in ["indptr", "indices", "data"] {
        assert!(sparse.join(format!("entity.{ext}")).is_file(), "missing entity.{ext}");
    }

    let export = dir.path().join("export");
    let o = kge(&[
        "export",
        "--data",
        data,
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        export.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    for f in ["entity.f32", "tables.tsv", "entities.tsv", "relations.tsv"] {
        assert!(export.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn help_lists_training_flags() {
    let o = kge(&["train", "--help"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for flag in ["--model", "--reg", "--lambda1", "--smoother", "--precision", "--seed"] {
        assert!(text.contains(flag), "missing {flag}");
    }
}
