mod common;

use std::collections::BTreeSet;

use common::*;
use exlens::api::{search_request, SearchRequest};
use exlens::index::{search, SearchHit, SearchKind, SearchQuery};
use exlens::model::token_embedding;
use exlens::summarize::{
    summarize_matches, summarize_max_attention, Explorer, MatchDetail, SummaryField, TraceCache,
};
use exlens::Error;
use proptest::prelude::*;

const TWENTY: &[&str] = &[
    "the girl ran to a local pub",
    "a dog barked at the moon over the prairie",
    "she sang loudly .",
];

fn all_rows_request(sentence: &str, k: usize) -> SearchRequest {
    SearchRequest {
        sentence: sentence.into(),
        mask_positions: vec![],
        position: 1,
        layer: 0,
        kind: SearchKind::Head,
        heads: Some(vec![0]),
        k: Some(k),
        exclude_specials: false,
    }
}

#[test]
fn positional_head_offsets_are_all_plus_one() {
    let s = positional_setup(TWENTY, 32);
    assert_eq!(s.corpus.num_searchable(), 20);
    let response = search_request(&s.explorer(), &all_rows_request(TWENTY[0], 20)).unwrap();
    assert_eq!(response.hits.len(), 20);
    let offset = &response.summaries.max_attention[3];
    assert_eq!(offset.field, SummaryField::Offset);
    assert_eq!(offset.total, 20);
    assert_eq!(offset.bars.len(), 1);
    assert_eq!(
        (offset.bars[0].label.as_str(), offset.bars[0].count),
        ("1", 20)
    );
}

#[test]
fn excluding_specials_moves_last_word_target_backwards() {
    let s = positional_setup(TWENTY, 32);
    let mut req = all_rows_request(TWENTY[0], 20);
    req.exclude_specials = true;
    let response = search_request(&s.explorer(), &req).unwrap();
    for hit in &response.hits {
        let last_word = hit.position == hit.context.len() - 2;
        assert_eq!(hit.max_attention.offset == 1, !last_word, "{hit:?}");
        assert!(!hit.context[hit.max_attention.position].is_special);
        assert_eq!(
            hit.max_attention.offset,
            hit.max_attention.position as i64 - hit.position as i64
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn positional_offsets_hold_for_any_corpus(words in prop::collection::vec(prop::sample::select(vec!["ox", "cat", "elk", "yak", "emu", "gnu"]), 20)) {
        let first = words[..9].join(" ");
        let second = words[9..].join(" ");
        let s = positional_setup(&[first.as_str(), second.as_str()], 32);
        let response = search_request(&s.explorer(), &all_rows_request(&first, 20)).unwrap();
        let offset = &response.summaries.max_attention[3];
        prop_assert_eq!(offset.total, 20);
        prop_assert_eq!(offset.count("1"), 20);
    }
}

#[test]
fn histograms_conserve_counts() {
    let s = small_setup(1);
    let ex = s.explorer();
    let q = token_embedding(&ex.sentence_trace(0).unwrap(), 1, 3)
        .unwrap()
        .to_vec();
    let hits = search(&s.index, &SearchQuery::token(q, 1).with_k(30)).unwrap();
    let details = ex
        .match_details(&hits, 1, &s.model.all_heads(), true)
        .unwrap();
    for field in [SummaryField::Pos, SummaryField::Dep, SummaryField::Ner] {
        let m = summarize_matches(&details, field).unwrap();
        assert_eq!(m.total, 30);
        assert_eq!(m.bars.iter().map(|b| b.count).sum::<usize>(), 30);
        assert!(m
            .bars
            .windows(2)
            .all(|w| w[0].count > w[1].count
                || (w[0].count == w[1].count && w[0].label < w[1].label)));
    }
    let o = summarize_max_attention(&details, SummaryField::Offset).unwrap();
    assert_eq!(o.bars.iter().map(|b| b.count).sum::<usize>(), 30);
    assert!(matches!(
        summarize_matches(&details, SummaryField::Offset),
        Err(Error::Query(_))
    ));
    assert!(matches!(
        summarize_matches(&[], SummaryField::Pos),
        Err(Error::EmptyInput(_))
    ));
    assert!(matches!(
        summarize_max_attention(&[], SummaryField::Pos),
        Err(Error::EmptyInput(_))
    ));
}

#[test]
fn eighteen_of_fifty_objects() {
    let s = small_setup(1);
    let ex = s.explorer();
    let q = token_embedding(&ex.sentence_trace(0).unwrap(), 0, 2)
        .unwrap()
        .to_vec();
    let hits = search(&s.index, &SearchQuery::token(q, 0).with_k(50)).unwrap();
    let mut details: Vec<MatchDetail> = ex
        .match_details(&hits, 0, &s.model.all_heads(), true)
        .unwrap();
    assert_eq!(details.len(), 50);
    for (i, d) in details.iter_mut().enumerate() {
        d.max_attention.metadata.as_mut().unwrap().deprel =
            if i % 3 == 0 { "dobj" } else { "nsubj" }.into();
    }
    let dep = summarize_max_attention(&details, SummaryField::Dep).unwrap();
    assert_eq!(dep.total, 50);
    assert_eq!((dep.count("dobj"), dep.count("nsubj")), (17, 33));
    details[49].max_attention.metadata.as_mut().unwrap().deprel = "dobj".into();
    let dep = summarize_max_attention(&details, SummaryField::Dep).unwrap();
    assert_eq!((dep.count("dobj"), dep.count("nsubj")), (18, 32));
    assert_eq!(dep.bars[0].label, "nsubj");
}

#[test]
fn one_forward_per_matched_sentence() {
    let s = small_setup(2);
    let ex = s.explorer();
    let toks = s.corpus.sentence_tokens(1).unwrap();
    let row = |gid: usize| s.index.row_ids().iter().position(|&r| r == gid).unwrap();
    let hits: Vec<SearchHit> = [toks[1].global_id, toks[3].global_id]
        .iter()
        .enumerate()
        .map(|(i, &g)| SearchHit {
            global_id: g,
            row: row(g),
            similarity: 0.5,
            rank: i + 1,
        })
        .collect();
    let details = ex
        .match_details(&hits, 1, &BTreeSet::from([0]), true)
        .unwrap();
    assert_eq!(details.len(), 2);
    assert_eq!(ex.cache().computed(), 1);
    ex.match_details(&hits, 0, &BTreeSet::from([1]), false)
        .unwrap();
    assert_eq!(ex.cache().computed(), 1);
}

#[test]
fn cache_is_transparent() {
    let s = small_setup(3);
    let cached = s.explorer();
    let uncached = Explorer::with_cache(
        s.model.clone(),
        s.corpus.clone(),
        s.index.clone(),
        TraceCache::new(0),
    )
    .unwrap();
    let tiny = Explorer::with_cache(
        s.model.clone(),
        s.corpus.clone(),
        s.index.clone(),
        TraceCache::new(1),
    )
    .unwrap();
    for layer in 0..2 {
        let q = token_embedding(&cached.sentence_trace(2).unwrap(), layer, 2)
            .unwrap()
            .to_vec();
        let hits = search(&s.index, &SearchQuery::token(q, layer).with_k(40)).unwrap();
        let heads = BTreeSet::from([1]);
        let a = cached.match_details(&hits, layer, &heads, true).unwrap();
        let b = uncached.match_details(&hits, layer, &heads, true).unwrap();
        let c = tiny.match_details(&hits, layer, &heads, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
    assert!(uncached.cache().computed() > cached.cache().computed());
}

#[test]
fn stale_hits_rejected() {
    let s = small_setup(3);
    let ex = s.explorer();
    let frame = s.corpus.sentence_tokens(0).unwrap()[0].global_id;
    let bad = [
        SearchHit {
            global_id: frame,
            row: 0,
            similarity: 1.0,
            rank: 1,
        },
        SearchHit {
            global_id: 10_000,
            row: 0,
            similarity: 1.0,
            rank: 1,
        },
        SearchHit {
            global_id: s.index.row_ids()[1],
            row: 0,
            similarity: 1.0,
            rank: 1,
        },
    ];
    for hit in bad {
        assert!(matches!(
            ex.match_details(&[hit], 0, &BTreeSet::from([0]), true),
            Err(Error::Consistency(_))
        ));
    }
}

#[test]
fn layer_sweep_self_matches() {
    let s = small_setup(4);
    let ex = s.explorer();
    let text = &s.corpus.sentences[3].raw_text;
    let toks = s.corpus.sentence_tokens(3).unwrap();
    for tok in &toks[1..toks.len() - 1] {
        let p = tok.position;
        let sweep = ex.layer_sweep(text, &BTreeSet::new(), p, 10).unwrap();
        assert_eq!(sweep.len(), 2);
        for h in &sweep {
            assert_eq!(h.field, SummaryField::Pos);
            assert_eq!(h.total, 10);
            assert!(h.count(&tok.meta.as_ref().unwrap().upos) >= 1);
        }
        for layer in 0..2 {
            let trace = s.model.forward(&s.model.tokenize(text).unwrap()).unwrap();
            let q = token_embedding(&trace, layer, p).unwrap().to_vec();
            let hits = search(&s.index, &SearchQuery::token(q, layer)).unwrap();
            assert_eq!(hits[0].global_id, tok.global_id);
            assert!((hits[0].similarity - 1.0).abs() < 1e-6);
        }
    }
}
