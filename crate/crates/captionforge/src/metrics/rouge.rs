//! ROUGE-L: longest-common-subsequence F-measure, max over references.

const BETA: f64 = 1.2;

/// LCS length by the standard dynamic program.
pub(crate) fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with beta = 1.2, maximized over the reference set.
/// Empty candidate or reference contributes 0.
pub fn rouge_l(cand: &[String], refs: &[Vec<String>]) -> f64 {
    assert!(!refs.is_empty(), "reference set must be non-empty");
    let mut best = 0.0f64;
    for reference in refs {
        if cand.is_empty() || reference.is_empty() {
            continue;
        }
        let lcs = lcs_len(cand, reference) as f64;
        if lcs == 0.0 {
            continue;
        }
        let p = lcs / cand.len() as f64;
        let r = lcs / reference.len() as f64;
        let f = (1.0 + BETA * BETA) * p * r / (r + BETA * BETA * p);
        best = best.max(f);
    }
    best
}
