use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{AttributionError, AttributionMap, Result};

/// Tokens kept unmasked in the template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordSet {
    pub kept: BTreeSet<usize>,
    pub n: usize,
    /// Combined score of every candidate present in both maps.
    pub combined: BTreeMap<usize, f64>,
}

/// `max(3, ceil(candidates / 4))`.
pub fn default_keyword_count(candidates: usize) -> usize {
    3.max(candidates.div_ceil(4))
}

fn desc_then_index(scores: &BTreeMap<usize, f64>) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |a, b| scores[b].total_cmp(&scores[a]).then_with(|| a.cmp(b))
}

fn top(scores: &BTreeMap<usize, f64>, k: usize) -> BTreeSet<usize> {
    let mut idx: Vec<usize> = scores.keys().copied().collect();
    idx.sort_by(desc_then_index(scores));
    idx.into_iter().take(k).collect()
}

/// Picks `n` keywords common to both maps.
///
/// The combined score is the mean of the two normalized values. Keywords are
/// drawn first from the intersection of each map's top-`2n`, ranked by the
/// combined score; if that yields fewer than `n`, the rest come from the
/// global combined ranking. Ties go to the lower token index.
pub fn select_keywords(
    lexicon: &AttributionMap,
    relation: &AttributionMap,
    n: usize,
) -> Result<KeywordSet> {
    if n < 1 {
        return Err(AttributionError::InvalidKeywordCount);
    }
    for m in [lexicon, relation] {
        if !m.is_normalized() {
            return Err(AttributionError::NotNormalized(m.kind));
        }
    }

    let lex: BTreeMap<usize, f64> = lexicon
        .entries
        .iter()
        .filter(|(k, _)| relation.entries.contains_key(k))
        .map(|(&k, &v)| (k, v))
        .collect();
    if lex.is_empty() && !(lexicon.entries.is_empty() && relation.entries.is_empty()) {
        return Err(AttributionError::MismatchedMaps);
    }
    let rel: BTreeMap<usize, f64> = lex.keys().map(|&k| (k, relation.entries[&k])).collect();
    let combined: BTreeMap<usize, f64> = lex
        .iter()
        .map(|(&k, &v)| (k, (v + rel[&k]) / 2.0))
        .collect();

    let pool_size = n.saturating_mul(2);
    let lex_top = top(&lex, pool_size);
    let rel_top = top(&rel, pool_size);
    let mut pool: Vec<usize> = lex_top.intersection(&rel_top).copied().collect();
    pool.sort_by(desc_then_index(&combined));

    let mut kept: Vec<usize> = pool.into_iter().take(n).collect();
    if kept.len() < n {
        let mut rest: Vec<usize> = combined
            .keys()
            .copied()
            .filter(|k| !kept.contains(k))
            .collect();
        rest.sort_by(desc_then_index(&combined));
        let missing = n - kept.len();
        kept.extend(rest.into_iter().take(missing));
    }

    Ok(KeywordSet {
        kept: kept.into_iter().collect(),
        n,
        combined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{Anchors, MapKind, MapStatus};

    fn map(kind: MapKind, entries: &[(usize, f64)]) -> AttributionMap {
        AttributionMap {
            kind,
            entries: entries.iter().copied().collect(),
            target: vec![],
            status: MapStatus::Normalized,
            anchors: Anchors {
                full_sentence: 1.0,
                without_target: 0.0,
                reference: Some(1.0),
            },
        }
    }

    #[test]
    fn hand_enumerated_fixture() {
        // c(a)=0.55, c(b)=0.65, c(c)=0.50; top-2 {a,b} and {c,b}; intersection {b}
        let lex = map(MapKind::Lexicon, &[(0, 0.9), (1, 0.5), (2, 0.1)]);
        let rel = map(MapKind::Relation, &[(0, 0.2), (1, 0.8), (2, 0.9)]);
        let k = select_keywords(&lex, &rel, 1).unwrap();
        assert_eq!(k.kept, BTreeSet::from([1]));
        assert!((k.combined[&0] - 0.55).abs() < 1e-12);
        assert!((k.combined[&1] - 0.65).abs() < 1e-12);
        assert!((k.combined[&2] - 0.50).abs() < 1e-12);
    }

    #[test]
    fn saturation_keeps_everything() {
        let lex = map(MapKind::Lexicon, &[(0, 0.9), (1, 0.5), (4, 0.1)]);
        let rel = map(MapKind::Relation, &[(0, 0.2), (1, 0.8), (4, 0.9)]);
        let k = select_keywords(&lex, &rel, 7).unwrap();
        assert_eq!(k.kept, BTreeSet::from([0, 1, 4]));
    }

    #[test]
    fn ties_keep_lower_index() {
        let lex = map(MapKind::Lexicon, &[(0, 0.5), (1, 0.5), (2, 0.5)]);
        let rel = map(MapKind::Relation, &[(0, 0.5), (1, 0.5), (2, 0.5)]);
        let k = select_keywords(&lex, &rel, 1).unwrap();
        assert_eq!(k.kept, BTreeSet::from([0]));
    }

    #[test]
    fn fill_from_global_rank_when_pools_disagree() {
        // top-2 pools {0,1} and {2,3} are disjoint
        let lex = map(MapKind::Lexicon, &[(0, 1.0), (1, 0.9), (2, 0.0), (3, 0.1)]);
        let rel = map(MapKind::Relation, &[(0, 0.0), (1, 0.2), (2, 1.0), (3, 0.9)]);
        let k = select_keywords(&lex, &rel, 1).unwrap();
        // combined: 0.5, 0.55, 0.5, 0.5
        assert_eq!(k.kept, BTreeSet::from([1]));
    }

    #[test]
    fn rejects_zero_and_raw() {
        let lex = map(MapKind::Lexicon, &[(0, 1.0)]);
        let mut rel = map(MapKind::Relation, &[(0, 1.0)]);
        assert!(matches!(
            select_keywords(&lex, &rel, 0),
            Err(AttributionError::InvalidKeywordCount)
        ));
        rel.status = MapStatus::Raw;
        assert!(matches!(
            select_keywords(&lex, &rel, 1),
            Err(AttributionError::NotNormalized(MapKind::Relation))
        ));
    }

    #[test]
    fn default_count() {
        assert_eq!(default_keyword_count(4), 3);
        assert_eq!(default_keyword_count(13), 4);
        assert_eq!(default_keyword_count(40), 10);
    }
}
