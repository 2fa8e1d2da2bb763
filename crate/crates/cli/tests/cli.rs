use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pmi_curation::{emb, CategoryTag, EmbeddedDataset};

const BIN: &str = env!("CARGO_BIN_EXE_pmi-curation");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMOKE: &str = r#"{
  "seed": 7,
  "benchmark": {
    "levels": [1.0, 0.0],
    "k": 10, "size_min": 20, "size_max": 30,
    "corpus": {"synthetic": {"dim": 4, "per_class": 100, "separation": 2.0}},
    "convergence": {"k_grid": [2, 4], "replications": 3}
  },
  "curate": {
    "k_inner": 4, "n_outer": 2,
    "train_counts": [6, 6, 6, 6], "test_counts": [4, 8, 8, 4],
    "corpus": {"synthetic": {"dim": 4, "per_category": 50, "essential_separation": 3.0, "nonessential_separation": 3.0}}
  }
}"#;

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p).into_iter().map(|(n, b)| (format!("{}/{n}", p.file_name().unwrap().to_string_lossy()), b)));
        } else {
            out.push((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn benchmark_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMOKE);
    let out = dir.path().join("out");
    let o = run(&["benchmark", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = files(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["convergence.csv", "manifest.json", "pmi_values.csv", "rank_report.json"]);
    let r = json(&out.join("rank_report.json"));
    assert_eq!(r["tool"]["name"], "pmi-curation");
    assert!(r["tool"]["build"].is_string() && r["tool"]["version"].is_string());
    assert_eq!(r["seed"], 7);
    assert_eq!(r["config"]["seed"], 7);
    let run0 = &r["result"][0];
    let rho = run0["spearman_rho"].as_f64().unwrap();
    assert!(rho == 1.0 || rho == -1.0);
    let levels = run0["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 2);
    assert!(levels[0]["truth_bits"].as_f64().unwrap() < levels[1]["truth_bits"].as_f64().unwrap());
    let m = json(&out.join("manifest.json"));
    for key in ["target_bits", "rho", "a_d", "b_d", "a_t", "b_t", "k", "size_min", "size_max", "seed"] {
        assert!(m["result"][0].get(key).is_some(), "manifest lacks {key}");
    }
    assert!(fs::read_to_string(out.join("convergence.csv")).unwrap().starts_with("k,mse,ci_lo,ci_hi\n"));
    assert_eq!(fs::read_to_string(out.join("pmi_values.csv")).unwrap().lines().count(), 1 + 2 * 10);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMOKE);
    for cmd in ["benchmark", "curate"] {
        let a = dir.path().join(format!("{cmd}_a"));
        let b = dir.path().join(format!("{cmd}_b"));
        assert!(run(&[cmd, "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]).status.success());
        assert!(run(&[cmd, "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--workers", "3"]).status.success());
        assert_eq!(files(&a), files(&b), "{cmd} outputs differ");
    }
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", SMOKE);
    let out = dir.path().join("o");
    let o = run(&[
        "benchmark",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "99",
        "--c-values",
        "0.5,2",
        "--path",
        "eta",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&out.join("rank_report.json"));
    assert_eq!(r["seed"], 99);
    assert_eq!(r["config"]["c_values"], serde_json::json!([0.5, 2.0]));
    assert_eq!(r["config"]["pmi"]["path"], "eta-point");
    assert_eq!(r["result"].as_array().unwrap().len(), 2);
    assert_eq!(r["result"][1]["levels"][0]["estimate"]["path"], "eta-point");
}

#[test]
fn missing_pool_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"benchmark": {"corpus": {"emb": {"path": "nowhere/pool.emb"}}}}"#);
    let o = run(&["benchmark", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere/pool.emb"), "{}", stderr(&o));
    assert!(!dir.path().join("o").exists(), "no output before validation passes");
}

#[test]
fn corrupt_magic_mentions_format() {
    let dir = tempfile::tempdir().unwrap();
    let x = EmbeddedDataset::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]], vec![0, 1], None).unwrap();
    let mut bytes = emb::encode(&x);
    fs::write(dir.path().join("good.emb"), &bytes).unwrap();
    bytes[0] = b'X';
    fs::write(dir.path().join("bad.emb"), &bytes).unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"estimate": {"pairs": [{"d": "bad.emb", "t": "good.emb"}]}}"#);
    let o = run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("EMB1") && e.contains("byte 0"), "{e}");
}

#[test]
fn invalid_method_and_flag_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"curate": {"methods": ["shuffle"], "corpus": {"synthetic": {"dim": 3, "per_category": 5, "essential_separation": 1.0, "nonessential_separation": 1.0}}}}"#,
    );
    let o = run(&["curate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("shuffle"));
    let o = run(&["curate", "--config", cfg.to_str().unwrap(), "--path", "exact"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(run(&["--help"]).status.success());
}

#[test]
fn missing_section_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", "{}");
    let o = run(&["curate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("curate"));
}

#[test]
fn untagged_corpus_with_matching_fails() {
    let dir = tempfile::tempdir().unwrap();
    let x = EmbeddedDataset::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0]], vec![0, 1], None).unwrap();
    emb::write_file(&x, dir.path().join("pool.emb")).unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"curate": {"methods": ["remove-to-match"], "corpus": {"emb": {"path": "pool.emb"}}}}"#);
    let o = run(&["curate", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tags"), "{}", stderr(&o));
}

#[test]
fn identity_curation_has_zero_deltas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"curate": {"methods": ["identity"], "k_inner": 3, "n_outer": 2, "train_counts": [5,5,5,5], "test_counts": [2,4,4,2],
            "corpus": {"synthetic": {"dim": 3, "per_category": 20, "essential_separation": 2.0, "nonessential_separation": 2.0}}}}"#,
    );
    let out = dir.path().join("o");
    let o = run(&["curate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&out.join("curation_outcomes.json"));
    assert_eq!(r["result"][0]["delta_pmi"]["mean"], 0.0);
    assert_eq!(r["result"][0]["delta_accuracy_pct"]["mean"], 0.0);
}

#[test]
fn tagged_emb_corpus_drives_curation() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 4) as f64 - 1.5 + 0.01 * i as f64, (i % 7) as f64 * 0.1]).collect();
    let tags: Vec<CategoryTag> = (0..40).map(|i| CategoryTag::from_index(i % 4)).collect();
    let labels = tags.iter().map(|t| t.essential_class).collect();
    emb::write_file(&EmbeddedDataset::from_rows(&rows, labels, Some(tags)).unwrap(), dir.path().join("pool.emb")).unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"curate": {"k_inner": 3, "n_outer": 2, "train_counts": [4,4,4,4], "test_counts": [2,4,4,2], "corpus": {"emb": {"path": "pool.emb"}}}}"#,
    );
    let out = dir.path().join("o");
    let o = run(&["curate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&out.join("curation_outcomes.json"))["result"].as_array().unwrap().len(), 3);
}

#[test]
fn uninformative_pair_has_zero_pmi() {
    let dir = tempfile::tempdir().unwrap();
    // all-zero features leave the likelihood flat in the weights
    let x = EmbeddedDataset::from_rows(&vec![vec![0.0; 3]; 8], vec![0, 1, 1, 0, 1, 0, 0, 1], None).unwrap();
    emb::write_file(&x, dir.path().join("d.emb")).unwrap();
    emb::write_file(&x, dir.path().join("t.emb")).unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"append_bias": false, "estimate": {"pairs": [{"d": "d.emb", "t": "t.emb"}], "cross_check": true}}"#);
    let out = dir.path().join("o");
    let o = run(&["estimate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = json(&out.join("mi_estimate.json"));
    assert!(r["result"][0]["estimate"]["mean_nats"].as_f64().unwrap().abs() < 1e-12);
    let cc = &r["result"][0]["cross_check"];
    assert!((cc["gaussian_closed_form_nats"].as_f64().unwrap() - cc["eta_point_nats"].as_f64().unwrap()).abs() < 1e-9);
    assert_eq!(fs::read_to_string(out.join("pmi_values.csv")).unwrap().lines().count(), 2);
}

#[test]
fn write_pairs_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"benchmark": {"levels": [0.0, 0.5], "k": 2, "size_min": 10, "size_max": 12, "write_pairs": true,
            "corpus": {"synthetic": {"dim": 3, "per_class": 20, "separation": 2.0}}}}"#,
    );
    let out = dir.path().join("o");
    assert!(run(&["benchmark", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let d = emb::read_file(out.join("pairs/level_1/pair_1_d.emb")).unwrap();
    assert_eq!(d.dim(), 3);
    assert!((10..=12).contains(&d.len()));
    // the written pair files feed straight into estimate
    let est = write(
        dir.path(),
        "e.json",
        &format!(r#"{{"estimate": {{"pairs": [{{"d": "{0}/pairs/level_0/pair_0_d.emb", "t": "{0}/pairs/level_0/pair_0_t.emb"}}]}}}}"#, out.display()),
    );
    let o = run(&["estimate", "--config", est.to_str().unwrap(), "--out", dir.path().join("e").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}
