use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use bioaug::attribution::{
    escape_token, normalize_rank, unescape_token, Anchors, AttributionMap, MapKind, MapStatus,
    MaskedTemplate,
};
use bioaug::backend::derive_seed;
use bioaug::corpus::{
    read_dataset, write_dataset_to, DatasetFormat, EntityMention, Span, Task, TaskInstance,
};
use bioaug::generation::similarity;
use bioaug::pipeline::select_subset;

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "a",
        "b",
        "c",
        "dose",
        "fever",
        "[M]",
        "|",
        "<x>",
        "back\\slash",
    ])
    .prop_map(String::from)
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(word(), 0..12)
}

proptest! {
    #[test]
    fn similarity_is_a_bounded_symmetric_score(a in sentence(), b in sentence()) {
        let (a, b) = (a.join(" "), b.join(" "));
        let s = similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, similarity(&b, &a));
        prop_assert_eq!(similarity(&a, &a), 1.0);
    }

    #[test]
    fn subsets_are_sorted_nested_and_sized(n in 0usize..200, p in 0.0f64..=1.0, q in 0.0f64..=1.0, seed: u64) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let small = select_subset(n, lo, seed);
        let large = select_subset(n, hi, seed);
        prop_assert_eq!(small.len(), (lo * n as f64).round() as usize);
        prop_assert!(small.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(large.iter().all(|&i| i < n));
        prop_assert!(small.iter().all(|i| large.contains(i)));
    }

    #[test]
    fn escaping_round_trips(t in "[a-z<>|\\\\\\[\\]M ]{0,8}") {
        prop_assert_eq!(unescape_token(&escape_token(&t)), t);
    }

    #[test]
    fn templates_invert(tokens in prop::collection::vec(word(), 1..14), keep in prop::collection::vec(any::<bool>(), 14), at in 0usize..14) {
        let entity = (at < tokens.len()).then(|| EntityMention::from_tokens(&tokens, Span::single(at), "CHEM"));
        let keywords: BTreeSet<usize> = (0..tokens.len())
            .filter(|&i| keep[i] && Some(i) != entity.as_ref().map(|e| e.start))
            .collect();
        let entities: Vec<EntityMention> = entity.into_iter().collect();
        let t = MaskedTemplate::build(&tokens, &keywords, &entities).unwrap();
        let (k, spans) = t.invert(&tokens).unwrap();
        prop_assert_eq!(k, keywords);
        prop_assert_eq!(spans, entities.iter().map(|e| e.span()).collect::<Vec<_>>());
    }

    #[test]
    fn rank_fallback_spans_the_unit_interval(values in prop::collection::vec(-10.0f64..10.0, 2..20)) {
        let map = AttributionMap {
            kind: MapKind::Lexicon,
            entries: values.iter().copied().enumerate().collect::<BTreeMap<_, _>>(),
            target: vec![],
            status: MapStatus::Raw,
            anchors: Anchors { full_sentence: 0.0, without_target: 0.0, reference: None },
        };
        let r = normalize_rank(&map);
        prop_assert_eq!(r.status, MapStatus::RankFallback);
        prop_assert_eq!(r.ranked(), map.ranked());
        prop_assert_eq!(r.entries[&map.ranked()[0]], 1.0);
        prop_assert!(r.entries.values().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn derived_seeds_depend_on_both_inputs(seed: u64, a in "[a-z]{1,6}", b in "[a-z]{1,6}") {
        prop_assert_eq!(derive_seed(seed, &a), derive_seed(seed, &a));
        if a != b {
            prop_assert_ne!(derive_seed(seed, &a), derive_seed(seed, &b));
        }
    }

    #[test]
    fn canonical_jsonl_round_trips(words in prop::collection::vec("[a-z]{1,8}", 2..10), rel in "[a-z]{3,8}") {
        let inst = TaskInstance::new("p-1", Task::Re, words.clone())
            .with_entity(Span::single(0), "CHEM")
            .with_entity(Span::single(words.len() - 1), "DIS")
            .with_relation(0, 1, &rel);
        let mut buf = Vec::new();
        write_dataset_to(&vec![inst.clone()], &mut buf).unwrap();
        let back = read_dataset(std::str::from_utf8(&buf).unwrap(), DatasetFormat::CanonicalJsonl).unwrap();
        prop_assert_eq!(back, vec![inst]);
    }
}
