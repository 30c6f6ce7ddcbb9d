mod common;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use common::http::post;
use common::*;
use exlens::api::SearchResponse;
use serde_json::json;
use tempfile::TempDir;

fn exlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exlens"))
        .args(args)
        .env_remove("EXLENS_INDEX_DIR")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = exlens(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    /// Corpus file, a seeded toy model and an index built from both.
    fn new(seed: u64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("corpus.conllu"), SMALL_CONLLU).unwrap();
        let ws = Self { dir };
        ok(&[
            "toy-model",
            "--corpus",
            p(&ws.corpus()),
            "--out",
            p(&ws.model()),
            "--seed",
            &seed.to_string(),
            "--max-positions",
            "64",
        ]);
        ok(&[
            "build-index",
            "--model",
            p(&ws.model()),
            "--corpus",
            p(&ws.corpus()),
            "--out",
            p(&ws.index()),
        ]);
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn corpus(&self) -> PathBuf {
        self.path("corpus.conllu")
    }

    fn model(&self) -> PathBuf {
        self.path("model")
    }

    fn index(&self) -> PathBuf {
        self.path("index")
    }
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = vec![];
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn build_index_reports_rows_and_is_reproducible() {
    let ws = Workspace::new(1);
    let out = ok(&[
        "build-index",
        "--model",
        p(&ws.model()),
        "--corpus",
        p(&ws.corpus()),
        "--out",
        p(&ws.path("again")),
    ]);
    let sentences = sentences(SMALL_CONLLU);
    let words: usize = sentences.iter().map(|s| s.words.len()).sum();
    assert!(out.contains(&format!("sentences={}", sentences.len())));
    let n: usize = out
        .lines()
        .find_map(|l| l.strip_prefix("N_search="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(n >= words);
    assert!(out.contains(&format!("layer 1: {n} rows")));
    assert_eq!(tree(&ws.index()), tree(&ws.path("again")));
}

#[test]
fn empty_corpus_is_a_runtime_error() {
    let ws = Workspace::new(1);
    fs::write(ws.path("empty.conllu"), "").unwrap();
    let out = exlens(&[
        "build-index",
        "--model",
        p(&ws.model()),
        "--corpus",
        p(&ws.path("empty.conllu")),
        "--out",
        p(&ws.path("x")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty corpus"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(exlens(&["search", "--layer", "0"]).status.code(), Some(2));
    assert_eq!(exlens(&["frobnicate"]).status.code(), Some(2));
    let ws = Workspace::new(1);
    let bad_heads = exlens(&[
        "search",
        "--index",
        p(&ws.index()),
        "--model",
        p(&ws.model()),
        "--sentence",
        "a",
        "--position",
        "1",
        "--layer",
        "0",
        "--heads",
        "0,x",
    ]);
    assert_eq!(bad_heads.status.code(), Some(2));
}

#[test]
fn search_flags() {
    let ws = Workspace::new(2);
    let (index, model) = (ws.index(), ws.model());
    let base = [
        "search",
        "--index",
        p(&index),
        "--model",
        p(&model),
        "--sentence",
        ESCAPE_SENTENCE,
        "--position",
        "3",
        "--layer",
        "1",
    ];
    let run = |extra: &[&str]| -> SearchResponse {
        let args: Vec<&str> = base.iter().chain(extra).copied().collect();
        serde_json::from_str(&ok(&args)).unwrap()
    };
    assert_eq!(run(&["--k", "1"]).hits.len(), 1);
    let r = run(&["--kind", "head", "--heads", "0,1", "--k", "4"]);
    assert_eq!(r.query.heads, vec![0, 1]);
    assert_eq!(r.hits.len(), 4);
    let default = run(&[]);
    assert_eq!(default.query.k, 50);
    assert_eq!(default.query.heads, vec![0, 1]);
    let masked = run(&["--mask", "3"]);
    assert_eq!(masked.query.token, "[MASK]");

    let table = ok(&base
        .iter()
        .chain(&["--format", "table", "--k", "3"])
        .copied()
        .collect::<Vec<_>>());
    assert!(table.lines().next().unwrap().starts_with("query"));
    assert!(table.contains("max attention Offset"));

    let out = exlens(
        &base
            .iter()
            .chain(&["--heads", "0,9"])
            .copied()
            .collect::<Vec<_>>(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn analyze_prints_predictions() {
    let ws = Workspace::new(3);
    let out = ok(&[
        "analyze",
        "--model",
        p(&ws.model()),
        "--sentence",
        ESCAPE_SENTENCE,
        "--mask",
        "9",
    ]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["mlm_topk"][0]["position"], 9);
    assert_eq!(
        v["mlm_topk"][0]["predictions"].as_array().unwrap().len(),
        10
    );
    let bad = exlens(&[
        "analyze",
        "--model",
        p(&ws.model()),
        "--sentence",
        ESCAPE_SENTENCE,
        "--mask",
        "0",
    ]);
    assert_eq!(bad.status.code(), Some(1));
}

struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn spawn_serve(ws: &Workspace, index: &Path) -> (Child, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_exlens"))
        .args(["serve", "--model", p(&ws.model()), "--port", "0"])
        .env("EXLENS_INDEX_DIR", index)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let base = line
        .trim()
        .strip_prefix("exlens listening on ")
        .unwrap()
        .to_string();
    (Child(child), base)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn search_json_matches_http_body() {
    let ws = Workspace::new(4);
    let (index, model) = (ws.index(), ws.model());
    let args = [
        "search",
        "--index",
        p(&index),
        "--model",
        p(&model),
        "--sentence",
        ESCAPE_SENTENCE,
        "--position",
        "4",
        "--layer",
        "0",
        "--kind",
        "head",
        "--heads",
        "1",
        "--mask",
        "4",
        "--k",
        "12",
    ];
    let cli = ok(&args);
    let (_child, base) = spawn_serve(&ws, &ws.index());
    let body = json!({"sentence": ESCAPE_SENTENCE, "mask_positions": [4], "position": 4, "layer": 0, "kind": "head", "heads": [1], "k": 12});
    let (status, http) = post(
        &reqwest::Client::new(),
        &base,
        "/api/search",
        &body.to_string(),
    )
    .await;
    assert_eq!(status, 200);
    assert_eq!(cli.trim_end().as_bytes(), &http[..]);

    let info = reqwest::get(format!("{base}/api/info")).await.unwrap();
    assert_eq!(info.status(), 200);
}

#[test]
fn serve_refuses_index_of_another_model() {
    let ws = Workspace::new(5);
    let other = Workspace::new(6);
    let out = Command::new(env!("CARGO_BIN_EXE_exlens"))
        .args([
            "serve",
            "--model",
            p(&ws.model()),
            "--index",
            p(&other.index()),
            "--port",
            "0",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("incompatible index"));
}
