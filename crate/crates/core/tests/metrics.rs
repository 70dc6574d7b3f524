use dpmeet_core::metrics::{
    faithfulness, hallucination_rate, lcs_len, rouge_l, rouge_n, tokenize, RougeScore,
};
use dpmeet_core::testkit::lcs::{brute_force_lcs, SubsequenceTable};
use proptest::prelude::*;

fn t(s: &str) -> Vec<String> {
    tokenize(s)
}

fn close(s: RougeScore, p: f64, r: f64, f: f64) {
    assert!((s.precision - p).abs() < 1e-12, "{s:?}");
    assert!((s.recall - r).abs() < 1e-12, "{s:?}");
    assert!((s.f1 - f).abs() < 1e-12, "{s:?}");
}

#[test]
fn rouge_hand_examples() {
    for n in [1, 2] {
        close(rouge_n(&t("the cat sat"), &t("the cat sat"), n).unwrap(), 1.0, 1.0, 1.0);
        close(rouge_n(&t("a b"), &t("c d"), n).unwrap(), 0.0, 0.0, 0.0);
    }
    close(rouge_n(&t("the cat"), &t("the cat sat"), 1).unwrap(), 1.0, 2.0 / 3.0, 0.8);
    close(rouge_l(&t("the cat sat"), &t("the cat sat")), 1.0, 1.0, 1.0);
    close(rouge_l(&t("a x b"), &t("a b")), 2.0 / 3.0, 1.0, 0.8);
    let inc: Vec<usize> = (0..9).collect();
    let rev: Vec<usize> = inc.iter().rev().copied().collect();
    assert_eq!(lcs_len(&inc, &rev), 1);
    // empty sides score zero
    close(rouge_n(&t(""), &t("a"), 1).unwrap(), 0.0, 0.0, 0.0);
    close(rouge_l(&t("a"), &t("")), 0.0, 0.0, 0.0);
}

#[test]
fn faithfulness_and_hallucination_examples() {
    let src = t("PM: the remote should be yellow and the buttons rubber");
    let extractive = t("remote yellow buttons");
    assert_eq!(faithfulness(&src, &extractive).unwrap().precision, 1.0);
    assert_eq!(hallucination_rate(&src, &extractive).unwrap(), 0.0);
    let novel = t("kiwi mango");
    assert_eq!(faithfulness(&src, &novel).unwrap().f1, 0.0);
    assert_eq!(hallucination_rate(&src, &novel).unwrap(), 1.0);
    let r = hallucination_rate(&t("the pen"), &t("the red pen")).unwrap();
    assert!((r - 1.0 / 3.0).abs() < 1e-15);
    assert!(faithfulness(&t(""), &novel).is_err());
    assert!(hallucination_rate::<String>(&[], &novel).is_err());
}

/// Every pair of sequences of length ≤ 8 over three symbols. LCS is unchanged
/// by relabeling the alphabet in both sequences, so the first sequence only
/// needs to range over those whose symbols first appear in the order 0, 1, 2.
#[test]
fn lcs_matches_exhaustive_enumeration() {
    let table = SubsequenceTable::new(3, 8);
    let canonical = |s: &[usize]| {
        let mut next = 0;
        for &x in s {
            if x > next {
                return false;
            }
            if x == next {
                next += 1;
            }
        }
        true
    };
    let mut pairs = 0u64;
    for (i, a) in table.sequences.iter().enumerate() {
        if !canonical(a) {
            continue;
        }
        for (j, b) in table.sequences.iter().enumerate() {
            let want = table.lcs(i, j);
            assert_eq!(lcs_len(a, b), want, "{a:?} {b:?}");
            pairs += 1;
        }
    }
    assert!(pairs > 10_000_000, "{pairs}");
    // the table oracle itself against direct enumeration on a sample
    for i in (0..table.sequences.len()).step_by(97) {
        for j in (0..table.sequences.len()).step_by(89) {
            assert_eq!(table.lcs(i, j), brute_force_lcs(&table.sequences[i], &table.sequences[j]));
        }
    }
}

fn words() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..6, 0..12)
}

proptest! {
    #[test]
    fn scores_are_bounded_and_symmetric(a in words(), b in words()) {
        for s in [rouge_n(&a, &b, 1).unwrap(), rouge_n(&a, &b, 2).unwrap(), rouge_l(&a, &b)] {
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        let (ab, ba) = (rouge_l(&a, &b), rouge_l(&b, &a));
        prop_assert_eq!(ab.recall, ba.precision);
        prop_assert!((ab.f1 - ba.f1).abs() < 1e-15);
        let r1 = (rouge_n(&a, &b, 1).unwrap(), rouge_n(&b, &a, 1).unwrap());
        prop_assert!((r1.0.f1 - r1.1.f1).abs() < 1e-15);
    }

    #[test]
    fn identical_and_disjoint_inputs(a in prop::collection::vec(0u8..6, 2..12)) {
        prop_assert_eq!(rouge_n(&a, &a, 1).unwrap().f1, 1.0);
        prop_assert_eq!(rouge_n(&a, &a, 2).unwrap().f1, 1.0);
        prop_assert_eq!(rouge_l(&a, &a).f1, 1.0);
        let shifted: Vec<u8> = a.iter().map(|x| x + 10).collect();
        prop_assert_eq!(rouge_n(&a, &shifted, 1).unwrap().f1, 0.0);
        prop_assert_eq!(rouge_n(&a, &shifted, 2).unwrap().f1, 0.0);
        prop_assert_eq!(rouge_l(&a, &shifted).f1, 0.0);
    }

    #[test]
    fn no_hallucination_when_all_types_are_seen(src in prop::collection::vec(0u8..6, 1..12), picks in prop::collection::vec(any::<prop::sample::Index>(), 0..8)) {
        let pred: Vec<u8> = picks.iter().map(|i| src[i.index(src.len())]).collect();
        prop_assert_eq!(hallucination_rate(&src, &pred).unwrap(), 0.0);
    }
}
