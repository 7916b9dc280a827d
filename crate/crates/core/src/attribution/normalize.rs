use super::{AttributionError, AttributionMap, MapKind, MapStatus, Result};

/// Scales a raw lexicon map so the reference contribution is exactly 1.
///
/// Every entry is divided by `reference`; negative entries stay negative.
/// A non-positive reference is a degenerate instance; callers may fall back
/// to [`normalize_rank`].
pub fn normalize_lexicon(map: &AttributionMap, reference: f64) -> Result<AttributionMap> {
    if map.status != MapStatus::Raw {
        return Err(AttributionError::Degenerate(
            "lexicon map is already normalized".into(),
        ));
    }
    if reference.is_nan() || reference <= 0.0 || reference.is_infinite() {
        return Err(AttributionError::Degenerate(format!(
            "reference contribution {reference} is not positive"
        )));
    }
    let mut out = map.clone();
    for v in out.entries.values_mut() {
        *v /= reference;
    }
    out.anchors.reference = Some(1.0);
    out.status = MapStatus::Normalized;
    Ok(out)
}

/// Affine normalization of a raw relation map: `v -> (v - a0) / (a1 - a0)`
/// where `a1` is the full-sentence anchor and `a0` the without-target
/// anchor. Afterwards the anchors are exactly 1 and 0.
///
/// `a1 <= a0` means removing the target does not lower relativity; such
/// instances are degenerate.
pub fn normalize_bio(map: &AttributionMap) -> Result<AttributionMap> {
    if map.status != MapStatus::Raw {
        return Err(AttributionError::Degenerate(
            "relation map is already normalized".into(),
        ));
    }
    let a1 = map.anchors.full_sentence;
    let a0 = map.anchors.without_target;
    if a1 == a0 {
        return Err(AttributionError::Degenerate(format!(
            "relation indistinguishable: both anchors are {a1}"
        )));
    }
    if a1 < a0 {
        return Err(AttributionError::Degenerate(format!(
            "relation inverted: full-sentence anchor {a1} below without-target anchor {a0}"
        )));
    }
    let width = a1 - a0;
    let mut out = map.clone();
    for v in out.entries.values_mut() {
        *v = (*v - a0) / width;
    }
    out.anchors.full_sentence = 1.0;
    out.anchors.without_target = 0.0;
    out.status = MapStatus::Normalized;
    Ok(out)
}

/// Rank-based fallback: the best entry maps to 1, the worst to 0, linear in
/// rank (ties by lower index). Marks the map as [`MapStatus::RankFallback`].
pub fn normalize_rank(map: &AttributionMap) -> AttributionMap {
    let ranked = map.ranked();
    let m = ranked.len();
    let mut out = map.clone();
    for (r, idx) in ranked.into_iter().enumerate() {
        let v = if m <= 1 {
            1.0
        } else {
            1.0 - r as f64 / (m - 1) as f64
        };
        out.entries.insert(idx, v);
    }
    if map.kind == MapKind::Lexicon {
        out.anchors.reference = Some(1.0);
    } else {
        out.anchors.full_sentence = 1.0;
        out.anchors.without_target = 0.0;
    }
    out.status = MapStatus::RankFallback;
    out
}
