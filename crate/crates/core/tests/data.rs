use std::collections::BTreeMap;

use dpmeet_core::data::{
    corpus_bytes, flatten, load_corpus, synth_corpus, tokenize, write_corpus, Domain, SynthConfig,
    Tokenizer,
};
use dpmeet_core::Error;

#[test]
fn synthetic_corpus_is_deterministic() {
    let cfg = SynthConfig::default();
    let a = corpus_bytes(&synth_corpus(&cfg)).unwrap();
    let b = corpus_bytes(&synth_corpus(&cfg)).unwrap();
    assert_eq!(a, b);
    let other = SynthConfig { seed: 8, ..cfg };
    assert_ne!(a, corpus_bytes(&synth_corpus(&other)).unwrap());
}

#[test]
fn synthetic_lengths_follow_the_profile() {
    let cfg = SynthConfig::default();
    let recs = synth_corpus(&cfg);
    let mut per_domain: BTreeMap<Domain, (f64, f64, usize, usize)> = BTreeMap::new();
    for r in &recs {
        let e = per_domain.entry(r.domain).or_default();
        e.0 += tokenize(&r.transcript()).len() as f64;
        e.2 += 1;
        for (_, s) in &r.query_pairs {
            e.1 += tokenize(s).len() as f64;
            e.3 += 1;
        }
    }
    for d in Domain::ALL {
        let (t, s, m, q) = per_domain[&d];
        let want = cfg.profile.transcript[d as usize];
        let mean = t / m as f64;
        assert!((mean / want - 1.0).abs() < 0.10, "{d}: transcript mean {mean} vs {want}");
        let want_s = cfg.profile.summary[d as usize];
        let mean_s = s / q as f64;
        assert!((mean_s / want_s - 1.0).abs() < 0.25, "{d}: summary mean {mean_s} vs {want_s}");
    }
    let ratio = |d: Domain| per_domain[&d].0 / per_domain[&d].2 as f64;
    let r = ratio(Domain::Academic) / ratio(Domain::Product);
    assert!((r / (13317.3 / 6007.7) - 1.0).abs() < 0.15, "academic/product ratio {r}");
}

#[test]
fn planted_decisions_appear_verbatim_in_transcript_and_summary() {
    for r in synth_corpus(&SynthConfig::default()) {
        let transcript = r.transcript();
        for (_, summary) in &r.query_pairs {
            let rest = ["the team agreed that ", "they decided ", "the committee concluded "]
                .iter()
                .find_map(|lead| summary.strip_prefix(lead))
                .unwrap_or_else(|| panic!("no lead in {summary:?}"));
            let decision = rest.trim_end_matches(" .");
            assert!(transcript.contains(&format!("so {decision} .")), "{decision:?} missing from {}", r.id);
        }
    }
}

#[test]
fn splits_are_disjoint_and_lossless() {
    let recs = synth_corpus(&SynthConfig::default());
    let total: usize = recs.iter().map(|r| r.query_pairs.len()).sum();
    let all = flatten(&recs, None);
    all.check_disjoint().unwrap();
    assert_eq!(all.len(), total);
    let mut sum = 0;
    for d in Domain::ALL {
        let s = flatten(&recs, Some(d));
        s.check_disjoint().unwrap();
        assert!((190..=220).contains(&s.train.len()), "{d}: {} train pairs", s.train.len());
        assert!(!s.valid.is_empty() && !s.test.is_empty());
        sum += s.len();
    }
    assert_eq!(sum, total);
}

#[test]
fn corpus_round_trips_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let cfg = SynthConfig {
        meetings_per_domain: 4,
        ..SynthConfig::default()
    };
    let recs = synth_corpus(&cfg);
    write_corpus(&path, &recs).unwrap();
    assert_eq!(load_corpus(&path).unwrap(), recs);
    std::fs::write(&path, "").unwrap();
    assert!(matches!(load_corpus(&path), Err(Error::NoRecords(_))));
}

#[test]
fn vocabulary_is_deterministic_and_train_only() {
    let recs = synth_corpus(&SynthConfig::default());
    let split = flatten(&recs, None);
    let a = Tokenizer::build(&split.train, 400).unwrap();
    let b = Tokenizer::build(&split.train, 400).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert!(a.len() <= 400);
    // every in-vocabulary type round-trips
    for id in 0..a.len() {
        assert_eq!(a.id(a.token(id).unwrap()), Some(id));
    }
    // a word that only occurs outside train is unknown
    let mut leaked = recs.clone();
    for r in leaked.iter_mut().filter(|r| r.split != Some(dpmeet_core::data::Split::Train)) {
        r.turns.push(("X".into(), "zyzzyva".into()));
    }
    let t = Tokenizer::build(&flatten(&leaked, None).train, 10_000).unwrap();
    assert_eq!(t.id("zyzzyva"), None);
}
