use crate::corpus::tokenize;

/// A symmetric similarity in `[0, 1]`, 1 on identical inputs.
pub trait SimilarityMeasure: Send + Sync {
    fn similarity(&self, a: &str, b: &str) -> f64;
}

/// Longest common token subsequence divided by the longer token count.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenLcs;

impl SimilarityMeasure for TokenLcs {
    fn similarity(&self, a: &str, b: &str) -> f64 {
        similarity(a, b)
    }
}

fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Token-level normalized LCS.
pub fn similarity(a: &str, b: &str) -> f64 {
    let ta: Vec<String> = tokenize(a).into_iter().map(|t| t.text).collect();
    let tb: Vec<String> = tokenize(b).into_iter().map(|t| t.text).collect();
    let longest = ta.len().max(tb.len());
    if longest == 0 {
        return 1.0;
    }
    lcs_len(&ta, &tb) as f64 / longest as f64
}
