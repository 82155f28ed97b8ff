use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn oniontext(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oniontext"))
        .args(args)
        .current_dir(dir)
        .env_remove("ONIONTEXT_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = oniontext(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_run(dir: &Path) {
    ok(dir, &["gen-fixtures", "--classes", "main", "--per-class", "20", "--seed", "7", "-o", "corpus.jsonl"]);
    ok(dir, &["train", "--task", "main", "-i", "corpus.jsonl", "-o", "main.model", "--seed", "7"]);
}

#[test]
fn generate_train_evaluate() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_run(dir);
    ok(dir, &["evaluate", "--model", "main.model", "-i", "corpus.jsonl", "--seed", "7", "-o", "report.json"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let table = ok(dir, &["report", "-i", "report.json", "--format", "table"]);
    assert!(table.contains("Accuracy") && table.contains("F1 score"));
}

#[test]
fn seeded_commands_are_reproducible_and_inputs_untouched() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_run(dir);
    let corpus = fs::read(dir.join("corpus.jsonl")).unwrap();
    let model = fs::read(dir.join("main.model")).unwrap();
    ok(dir, &["gen-fixtures", "--classes", "main", "--per-class", "20", "--seed", "7", "-o", "again.jsonl"]);
    ok(dir, &["train", "--task", "main", "-i", "again.jsonl", "-o", "again.model", "--seed", "7"]);
    assert_eq!(corpus, fs::read(dir.join("again.jsonl")).unwrap());
    assert_eq!(model, fs::read(dir.join("again.model")).unwrap());
    assert_eq!(corpus, fs::read(dir.join("corpus.jsonl")).unwrap());

    let out = oniontext(dir, &["extract", "-i", "corpus.jsonl", "-o", "corpus.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(corpus, fs::read(dir.join("corpus.jsonl")).unwrap());
}

#[test]
fn staged_pipeline_matches_direct_training() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_run(dir);
    ok(dir, &["extract", "-i", "corpus.jsonl", "-o", "extracted.jsonl"]);
    ok(dir, &["preprocess", "-i", "extracted.jsonl", "-o", "tokens.jsonl"]);
    ok(dir, &["train", "--task", "main", "-i", "tokens.jsonl", "-o", "staged.model", "--seed", "7"]);
    assert_eq!(
        fs::read(dir.join("main.model")).unwrap(),
        fs::read(dir.join("staged.model")).unwrap()
    );
}

#[test]
fn predict_prints_label_and_confidence() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_run(dir);
    let first: serde_json::Value =
        serde_json::from_str(fs::read_to_string(dir.join("corpus.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    fs::write(dir.join("page.html"), first["raw_html"].as_str().unwrap()).unwrap();
    let line = ok(dir, &["predict", "--model", "main.model", "--input", "page.html", "--mode", "general"]);
    let fields: Vec<&str> = line.trim_end().split('\t').collect();
    assert_eq!(fields.len(), 2, "{line:?}");
    assert_eq!(fields[0], first["main_label"].as_str().unwrap());
    let conf: f64 = fields[1].parse().unwrap();
    assert!(conf > 0.0 && conf <= 1.0);
}

#[test]
fn two_level_predict_adds_drug_columns() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen-fixtures", "--classes", "main", "--per-class", "20", "-o", "main.jsonl"]);
    ok(dir, &["gen-fixtures", "--classes", "drugs", "--per-class", "10", "-o", "drugs.jsonl"]);
    let mut both = fs::read_to_string(dir.join("main.jsonl")).unwrap();
    both.push_str(&fs::read_to_string(dir.join("drugs.jsonl")).unwrap());
    fs::write(dir.join("both.jsonl"), both).unwrap();
    ok(dir, &["train", "--task", "main", "-i", "both.jsonl", "-o", "m.model"]);
    ok(dir, &["train", "--task", "drugs", "-i", "both.jsonl", "-o", "d.model"]);
    let out = ok(dir, &["predict", "--model", "m.model", "--drugs-model", "d.model", "-i", "drugs.jsonl"]);
    let mut routed = 0;
    for line in out.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        match fields[1] {
            "Drugs" => {
                assert_eq!(fields.len(), 5, "{line}");
                routed += 1;
            }
            _ => assert_eq!(fields.len(), 3, "{line}"),
        }
    }
    assert!(routed > 0);
}

#[test]
fn taxonomy_mismatch_fails_evaluation() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    small_run(dir);
    ok(dir, &["validate-taxonomy", "--export", "data"]);
    let main = fs::read_to_string(dir.join("data/main_classes.csv")).unwrap();
    fs::write(dir.join("data/main_classes.csv"), main.replace("Porno", "Adult")).unwrap();
    let out = oniontext(
        dir,
        &["--data-dir", "data", "evaluate", "--model", "main.model", "-i", "corpus.jsonl"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("version mismatch"));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    for args in [&["frobnicate"][..], &["train", "--bogus"], &["train", "--task", "both", "-i", "x", "-o", "y"]] {
        assert_eq!(oniontext(tmp.path(), args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn validate_taxonomy_reports_checks() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["validate-taxonomy"]);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 6);
}

#[test]
fn ingest_maps_source_labels() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let page = |rel: &str, body: &str| {
        let p = dir.join(rel);
        fs::create_dir_all(p.parent().unwrap()).unwrap();
        fs::write(p, format!("<html><body><p>{body}</p></body></html>")).unwrap();
    };
    page("duta/Hacking/a.html", "hire hacker");
    page("duta/Casino/Gambling/b.html", "roulette");
    page("duta/Violence/Weapons/c.html", "rifles");
    page("agora/Drugs/Opioids/Heroin/d.html", "brown");
    page("agora/Chemicals/e.html", "reagents");
    fs::write(
        dir.join("manifest.json"),
        r#"[{"source": "Duta10k", "mode": "general", "path": "duta", "label_scheme": "duta"},
            {"source": "Agora", "mode": "general", "path": "agora", "label_scheme": "agora"}]"#,
    )
    .unwrap();
    ok(dir, &["ingest", "--manifest", "manifest.json", "-o", "fused.jsonl"]);
    let labels: Vec<(String, Option<String>)> = fs::read_to_string(dir.join("fused.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            (
                v["main_label"].as_str().unwrap().to_owned(),
                v["drug_sublabel"].as_str().map(str::to_owned),
            )
        })
        .collect();
    assert_eq!(
        labels,
        [
            ("Services".to_string(), None),
            ("Violence".to_string(), None),
            ("Substances for Drugs".to_string(), None),
            ("Drugs".to_string(), Some("Opioids Heroin".to_string())),
        ]
    );

    fs::write(
        dir.join("bad.json"),
        r#"[{"source": "Agora", "mode": "general", "path": "duta", "label_scheme": "agora"}]"#,
    )
    .unwrap();
    let out = oniontext(dir, &["ingest", "--manifest", "bad.json", "-o", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Agora:Casino/Gambling/b.html"));
}
