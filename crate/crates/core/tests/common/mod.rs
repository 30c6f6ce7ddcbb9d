#![allow(dead_code)]

pub mod hand;

use std::sync::Arc;

use exlens::corpus::{build_corpus, parse_conllu, AnnotatedCorpus, AnnotatedSentence};
use exlens::index::{build_index, EmbeddingIndex};
use exlens::model::Vocabulary;
use exlens::summarize::Explorer;
use exlens::toy::{self, ToyShape};
use exlens::Model;

pub const ESCAPE_CONLLU: &str = include_str!("../fixtures/escape.conllu");
pub const SMALL_CONLLU: &str = include_str!("../fixtures/small_corpus.conllu");
pub const ESCAPE_SENTENCE: &str = "The girl ran to a local pub to escape the din of her city.";

/// Words the split vocabulary segments into two pieces.
pub const SPLITS: &[(&str, &str, &str)] = &[
    ("escape", "esc", "##ape"),
    ("local", "loc", "##al"),
    ("prairie", "prai", "##rie"),
    ("barked", "bark", "##ed"),
];

pub fn sentences(src: &str) -> Vec<AnnotatedSentence> {
    parse_conllu(src.as_bytes()).expect("fixture parses")
}

/// Whole-word vocabulary over the fixture corpus, except the words in
/// [`SPLITS`], which only exist as two subword pieces.
pub fn split_vocab() -> Vocabulary {
    let texts: Vec<String> = sentences(SMALL_CONLLU)
        .into_iter()
        .map(|s| s.raw_text)
        .collect();
    let base = toy::vocab_from_texts(texts.iter().map(String::as_str), false).unwrap();
    let mut tokens: Vec<String> = base
        .tokens()
        .iter()
        .filter(|t| !SPLITS.iter().any(|(w, _, _)| w == t))
        .cloned()
        .collect();
    for (_, a, b) in SPLITS {
        for piece in [a, b] {
            if !tokens.iter().any(|t| t == piece) {
                tokens.push(piece.to_string());
            }
        }
    }
    Vocabulary::from_tokens(tokens).unwrap()
}

pub struct Setup {
    pub model: Arc<Model>,
    pub corpus: Arc<AnnotatedCorpus>,
    pub index: Arc<EmbeddingIndex>,
}

impl Setup {
    pub fn explorer(&self) -> Explorer {
        Explorer::new(self.model.clone(), self.corpus.clone(), self.index.clone()).unwrap()
    }
}

pub fn setup_with(
    vocab: Vocabulary,
    model_of: impl FnOnce(&Vocabulary) -> (exlens::model::ModelConfig, exlens::model::WeightSet),
    conllu: &str,
) -> Setup {
    let (config, weights) = model_of(&vocab);
    let model = Model::new(config, &weights, vocab).unwrap();
    let corpus = build_corpus(
        sentences(conllu),
        model.vocab(),
        model.config().max_positions,
    );
    let index = build_index(&corpus, &model).unwrap();
    Setup {
        model: Arc::new(model),
        corpus: Arc::new(corpus),
        index: Arc::new(index),
    }
}

/// Random two-layer model over the split vocabulary, indexed on the small
/// fixture corpus.
pub fn small_setup(seed: u64) -> Setup {
    setup_with(
        split_vocab(),
        |v| toy::random_model(v, ToyShape::default(), seed),
        SMALL_CONLLU,
    )
}

pub mod oracle {
    use std::collections::BTreeSet;

    use exlens::index::{EmbeddingIndex, IndexManifest, LayerMatrices, Matrix};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Cosine top-k by full scan: normalize both sides, dot, sort by
    /// similarity then global id. All-zero rows never match.
    pub fn brute_force(
        rows: &[Vec<f32>],
        ids: &[usize],
        query: &[f64],
        k: usize,
    ) -> Vec<(usize, f64)> {
        let qn = query.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut all: Vec<(usize, f64)> = rows
            .iter()
            .zip(ids)
            .filter_map(|(r, &id)| {
                let rn = r
                    .iter()
                    .map(|&v| (v as f64) * (v as f64))
                    .sum::<f64>()
                    .sqrt();
                if rn == 0.0 {
                    return None;
                }
                let s: f64 = r
                    .iter()
                    .zip(query)
                    .map(|(&a, &b)| (a as f64 / rn) * (b / qn))
                    .sum();
                Some((id, s.clamp(-1.0, 1.0)))
            })
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    /// Cosine over only the segments of `heads`.
    pub fn restricted_ranking(
        rows: &[Vec<f32>],
        ids: &[usize],
        query: &[f64],
        heads: &BTreeSet<usize>,
        d_head: usize,
    ) -> Vec<usize> {
        let pick = |v: Vec<f64>| -> Vec<f64> {
            v.chunks(d_head)
                .enumerate()
                .filter(|(h, _)| heads.contains(h))
                .flat_map(|(_, s)| s.to_vec())
                .collect()
        };
        let q = pick(query.to_vec());
        let restricted: Vec<Vec<f32>> = rows
            .iter()
            .map(|r| {
                pick(r.iter().map(|&v| v as f64).collect())
                    .into_iter()
                    .map(|v| v as f32)
                    .collect()
            })
            .collect();
        brute_force(&restricted, ids, &q, rows.len())
            .into_iter()
            .map(|(id, _)| id)
            .collect()
    }

    pub struct RandomIndex {
        pub index: EmbeddingIndex,
        pub token_rows: Vec<Vec<f32>>,
        pub head_rows: Vec<Vec<f32>>,
        pub ids: Vec<usize>,
        pub num_heads: usize,
        pub d_head: usize,
    }

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    pub fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Unit-norm segments that are exact in f32.
    fn exact_unit_segment(rng: &mut ChaCha8Rng) -> [f32; 4] {
        let sign = |rng: &mut ChaCha8Rng| if rng.gen::<bool>() { 1.0 } else { -1.0 };
        if rng.gen_range(0..3) == 0 {
            let mut s = [0.0; 4];
            s[rng.gen_range(0..4)] = sign(rng);
            s
        } else {
            [
                0.5 * sign(rng),
                0.5 * sign(rng),
                0.5 * sign(rng),
                0.5 * sign(rng),
            ]
        }
    }

    /// Single-layer index: Gaussian token rows (with some duplicates and
    /// zero rows), head rows of exact unit segments of width 4, shuffled
    /// global ids.
    pub fn random_index(seed: u64, rows: usize, d_model: usize, num_heads: usize) -> RandomIndex {
        let mut rng = rng(seed);
        let mut token_rows: Vec<Vec<f32>> = (0..rows)
            .map(|_| {
                gaussian(&mut rng, d_model)
                    .into_iter()
                    .map(|v| v as f32)
                    .collect()
            })
            .collect();
        for _ in 0..rows / 20 {
            let (a, b) = (rng.gen_range(0..rows), rng.gen_range(0..rows));
            token_rows[a] = token_rows[b].clone();
        }
        if rows > 10 {
            token_rows[rng.gen_range(0..rows)] = vec![0.0; d_model];
        }
        let head_rows: Vec<Vec<f32>> = (0..rows)
            .map(|_| {
                (0..num_heads)
                    .flat_map(|_| exact_unit_segment(&mut rng))
                    .collect()
            })
            .collect();
        let mut ids: Vec<usize> = (0..rows).map(|i| i * 3 + 7).collect();
        ids.shuffle(&mut rng);
        let index = build(&token_rows, &head_rows, &ids, num_heads, 4);
        RandomIndex {
            index,
            token_rows,
            head_rows,
            ids,
            num_heads,
            d_head: 4,
        }
    }

    pub fn build(
        token_rows: &[Vec<f32>],
        head_rows: &[Vec<f32>],
        ids: &[usize],
        num_heads: usize,
        d_head: usize,
    ) -> EmbeddingIndex {
        let n = token_rows.len();
        let matrix = |rows: &[Vec<f32>]| {
            Matrix::new(n, rows[0].len(), rows.iter().flatten().copied().collect()).unwrap()
        };
        EmbeddingIndex::new(
            IndexManifest::new(
                "random".into(),
                1,
                num_heads,
                token_rows[0].len(),
                d_head,
                ids.to_vec(),
            ),
            vec![LayerMatrices::new(matrix(token_rows), matrix(head_rows)).unwrap()],
        )
        .unwrap()
    }
}

/// CoNLL-U text for whitespace-split sentences, with tags cycling through a
/// small fixed set.
pub fn conllu_from(texts: &[&str]) -> String {
    const TAGS: &[(&str, &str)] = &[
        ("DET", "det"),
        ("NOUN", "nsubj"),
        ("VERB", "root"),
        ("ADP", "case"),
        ("NOUN", "obl"),
    ];
    let mut out = String::new();
    for text in texts {
        out.push_str(&format!("# text = {text}\n"));
        for (i, w) in text.split_whitespace().enumerate() {
            let (upos, deprel) = TAGS[i % TAGS.len()];
            out.push_str(&format!(
                "{}\t{w}\t{w}\t{upos}\t_\t_\t0\t{deprel}\t_\t_\n",
                i + 1
            ));
        }
        out.push('\n');
    }
    out
}

/// Positional-head model indexed over `texts`.
pub fn positional_setup(texts: &[&str], max_positions: usize) -> Setup {
    let vocab = toy::vocab_from_texts(texts.iter().copied(), false).unwrap();
    setup_with(
        vocab,
        |v| toy::positional_model(v, max_positions, 5),
        &conllu_from(texts),
    )
}

pub mod http {
    use std::sync::Arc;

    use exlens::api::{AnalyzeRequest, SearchRequest};
    use exlens::index::SearchKind;
    use exlens::service;
    use exlens::summarize::Explorer;
    use tokio::sync::oneshot;

    pub struct Server {
        pub base: String,
        stop: Option<oneshot::Sender<()>>,
    }

    impl Drop for Server {
        fn drop(&mut self) {
            if let Some(stop) = self.stop.take() {
                let _ = stop.send(());
            }
        }
    }

    pub async fn spawn(explorer: Explorer) -> Server {
        let (listener, addr) = service::bind("127.0.0.1", 0).await.unwrap();
        let (tx, rx) = oneshot::channel();
        let router = service::router(Arc::new(explorer), None);
        tokio::spawn(service::serve(listener, router, async {
            let _ = rx.await;
        }));
        Server {
            base: format!("http://{addr}"),
            stop: Some(tx),
        }
    }

    /// `(path, body)` pairs covering analyze and both search kinds.
    pub fn request_mix(sentences: &[String]) -> Vec<(&'static str, String)> {
        let mut out = vec![];
        for (i, s) in sentences.iter().enumerate() {
            let analyze = AnalyzeRequest {
                sentence: s.clone(),
                mask_positions: vec![1 + i % 3],
            };
            out.push(("/api/analyze", serde_json::to_string(&analyze).unwrap()));
            for (kind, heads) in [
                (SearchKind::Token, None),
                (SearchKind::Head, Some(vec![0])),
                (SearchKind::Head, None),
            ] {
                let search = SearchRequest {
                    sentence: s.clone(),
                    mask_positions: if i % 2 == 0 { vec![2] } else { vec![] },
                    position: 2,
                    layer: i % 2,
                    kind,
                    heads,
                    k: Some(5 + i),
                    exclude_specials: i % 2 == 0,
                };
                out.push(("/api/search", serde_json::to_string(&search).unwrap()));
            }
        }
        out
    }

    pub async fn post(
        client: &reqwest::Client,
        base: &str,
        path: &str,
        body: &str,
    ) -> (u16, Vec<u8>) {
        let r = client
            .post(format!("{base}{path}"))
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .await
            .unwrap();
        (r.status().as_u16(), r.bytes().await.unwrap().to_vec())
    }

    /// Serial responses, then 16 clients replaying the mix in rotated
    /// orders. Returns the number of responses that differ from serial.
    pub async fn concurrent_mismatches(base: &str, mix: &[(&'static str, String)]) -> usize {
        let client = reqwest::Client::new();
        let mut serial = vec![];
        for (path, body) in mix {
            serial.push(post(&client, base, path, body).await);
        }
        let serial = Arc::new(serial);
        let mix = Arc::new(mix.to_vec());
        let mut tasks = vec![];
        for c in 0..16 {
            let (serial, mix, base) = (serial.clone(), mix.clone(), base.to_string());
            tasks.push(tokio::spawn(async move {
                let client = reqwest::Client::new();
                let mut bad = 0;
                for j in 0..mix.len() {
                    let i = (j * 7 + c * 5) % mix.len();
                    let got = post(&client, &base, mix[i].0, &mix[i].1).await;
                    if got != serial[i] || got.0 != 200 {
                        bad += 1;
                    }
                }
                bad
            }));
        }
        let mut bad = 0;
        for t in tasks {
            bad += t.await.unwrap();
        }
        bad
    }
}
