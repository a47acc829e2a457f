//! METEOR-lite: staged unigram alignment (exact, then suffix-stem for
//! English) with the standard fragmentation penalty. No synonym or
//! paraphrase resources.
//!
//! Alignment semantics, frozen for reproducibility:
//!   1. Exact matches are maximized first: each exact word form contributes
//!      min(candidate count, reference count) matches.
//!   2. Stem matches are maximized over the leftovers (English only).
//!   3. Among all position assignments realizing those match counts, the one
//!      with the fewest chunks is chosen (branch-and-bound search; ties are
//!      irrelevant since only the chunk count enters the score).

use std::collections::HashMap;

use crate::text_preprocess::Language;

const ALPHA: f64 = 0.9;
const BETA: f64 = 3.0;
const GAMMA: f64 = 0.5;

// Search budget for the chunk-minimizing assignment. Realistic captions
// stay far below this; pathological inputs keep the best alignment found.
const NODE_BUDGET: usize = 1_000_000;

/// Suffix-stripping stemmer used by the stem-match stage: removes the first
/// matching suffix of "ing", "es", "ed", "s" that leaves at least two
/// characters.
pub fn stem(token: &str) -> &str {
    for suffix in ["ing", "es", "ed", "s"] {
        if let Some(rest) = token.strip_suffix(suffix) {
            if rest.chars().count() >= 2 {
                return rest;
            }
        }
    }
    token
}

struct AlignProblem<'a> {
    cand: &'a [String],
    refs: &'a [String],
    use_stem: bool,
    /// exact matches still required per word form
    exact_quota: HashMap<&'a str, usize>,
    /// stem matches still required per stem class
    stem_quota: HashMap<&'a str, usize>,
    /// candidate positions usable for a stem match, per word form
    cand_stem_cap: HashMap<&'a str, usize>,
    /// reference positions usable for a stem match, per word form
    ref_stem_cap: HashMap<&'a str, usize>,
    total_matches: usize,
}

fn counts<'a>(tokens: &'a [String]) -> HashMap<&'a str, usize> {
    let mut map = HashMap::new();
    for t in tokens {
        *map.entry(t.as_str()).or_insert(0) += 1;
    }
    map
}

impl<'a> AlignProblem<'a> {
    fn new(cand: &'a [String], refs: &'a [String], use_stem: bool) -> Self {
        let cand_counts = counts(cand);
        let ref_counts = counts(refs);

        let mut exact_quota = HashMap::new();
        let mut cand_left: HashMap<&str, usize> = HashMap::new();
        let mut ref_left: HashMap<&str, usize> = HashMap::new();
        for (&form, &c) in &cand_counts {
            let r = ref_counts.get(form).copied().unwrap_or(0);
            let m = c.min(r);
            if m > 0 {
                exact_quota.insert(form, m);
            }
            if c > m {
                cand_left.insert(form, c - m);
            }
        }
        for (&form, &r) in &ref_counts {
            let c = cand_counts.get(form).copied().unwrap_or(0);
            if r > c.min(r) {
                ref_left.insert(form, r - c.min(r));
            }
        }

        let mut stem_quota = HashMap::new();
        if use_stem {
            let mut cand_by_stem: HashMap<&str, usize> = HashMap::new();
            let mut ref_by_stem: HashMap<&str, usize> = HashMap::new();
            for (&form, &n) in &cand_left {
                *cand_by_stem.entry(stem(form)).or_insert(0) += n;
            }
            for (&form, &n) in &ref_left {
                *ref_by_stem.entry(stem(form)).or_insert(0) += n;
            }
            for (&s, &c) in &cand_by_stem {
                let r = ref_by_stem.get(s).copied().unwrap_or(0);
                let q = c.min(r);
                if q > 0 {
                    stem_quota.insert(s, q);
                }
            }
        }

        let total_matches =
            exact_quota.values().sum::<usize>() + stem_quota.values().sum::<usize>();
        AlignProblem {
            cand,
            refs,
            use_stem,
            exact_quota,
            stem_quota,
            cand_stem_cap: cand_left,
            ref_stem_cap: ref_left,
            total_matches,
        }
    }
}

struct Search<'a> {
    problem: AlignProblem<'a>,
    ref_used: Vec<bool>,
    nodes: usize,
    best_chunks: usize,
}

impl<'a> Search<'a> {
    /// Depth-first over candidate positions. `prev` is the (cand, ref) pair
    /// of the last match, used both for chunk counting and for preferring
    /// chunk-continuing assignments.
    fn run(
        &mut self,
        pos: usize,
        matched: usize,
        chunks: usize,
        prev: Option<(usize, usize)>,
    ) {
        if chunks >= self.best_chunks || self.nodes >= NODE_BUDGET {
            return;
        }
        self.nodes += 1;
        let need = self.problem.total_matches - matched;
        if need == 0 {
            self.best_chunks = chunks;
            return;
        }
        if pos >= self.problem.cand.len() || self.problem.cand.len() - pos < need {
            return;
        }

        let form = self.problem.cand[pos].as_str();
        let stem_class = stem(form);
        let continues = |q: usize| match prev {
            Some((pc, pr)) => pos == pc + 1 && q == pr + 1,
            None => false,
        };

        // Collect legal ref positions, chunk-continuing ones first.
        let mut options: Vec<(bool, usize)> = Vec::new();
        let exact_ok = self.problem.exact_quota.get(form).copied().unwrap_or(0) > 0;
        let stem_ok = self.problem.use_stem
            && self.problem.cand_stem_cap.get(form).copied().unwrap_or(0) > 0
            && self.problem.stem_quota.get(stem_class).copied().unwrap_or(0) > 0;
        for (q, ref_tok) in self.problem.refs.iter().enumerate() {
            if self.ref_used[q] {
                continue;
            }
            if exact_ok && ref_tok == form {
                options.push((true, q));
            } else if stem_ok
                && stem(ref_tok) == stem_class
                && self.problem.ref_stem_cap.get(ref_tok.as_str()).copied().unwrap_or(0) > 0
            {
                options.push((false, q));
            }
        }
        options.sort_by_key(|&(_, q)| (!continues(q), q));

        for (is_exact, q) in options {
            let new_chunks = if continues(q) { chunks } else { chunks + 1 };
            self.ref_used[q] = true;
            if is_exact {
                *self.problem.exact_quota.get_mut(form).unwrap() -= 1;
            } else {
                *self.problem.stem_quota.get_mut(stem_class).unwrap() -= 1;
                *self.problem.cand_stem_cap.get_mut(form).unwrap() -= 1;
                let ref_form = self.problem.refs[q].as_str();
                *self.problem.ref_stem_cap.get_mut(ref_form).unwrap() -= 1;
            }
            self.run(pos + 1, matched + 1, new_chunks, Some((pos, q)));
            if is_exact {
                *self.problem.exact_quota.get_mut(form).unwrap() += 1;
            } else {
                *self.problem.stem_quota.get_mut(stem_class).unwrap() += 1;
                *self.problem.cand_stem_cap.get_mut(form).unwrap() += 1;
                let ref_form = self.problem.refs[q].as_str();
                *self.problem.ref_stem_cap.get_mut(ref_form).unwrap() += 1;
            }
            self.ref_used[q] = false;
        }

        // Leave this candidate position unmatched.
        self.run(pos + 1, matched, chunks, prev);
    }
}

/// Match count and minimum chunk count of the frozen alignment between one
/// candidate and one reference.
pub(crate) fn align(cand: &[String], reference: &[String], use_stem: bool) -> (usize, usize) {
    let problem = AlignProblem::new(cand, reference, use_stem);
    let total = problem.total_matches;
    if total == 0 {
        return (0, 0);
    }
    let ref_len = reference.len();
    let mut search = Search {
        problem,
        ref_used: vec![false; ref_len],
        nodes: 0,
        best_chunks: total + 1,
    };
    search.run(0, 0, 0, None);
    (total, search.best_chunks)
}

fn score_pair(cand: &[String], reference: &[String], use_stem: bool) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let (matches, chunks) = align(cand, reference, use_stem);
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / cand.len() as f64;
    let r = m / reference.len() as f64;
    let f_mean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let penalty = GAMMA * (chunks as f64 / m).powf(BETA);
    f_mean * (1.0 - penalty)
}

/// METEOR-lite score, maximized over the reference set. English candidates
/// get the stem-match stage; Chinese matching is exact only.
pub fn meteor_lite(cand: &[String], refs: &[Vec<String>], language: Language) -> f64 {
    assert!(!refs.is_empty(), "reference set must be non-empty");
    let use_stem = language == Language::English;
    refs.iter()
        .map(|r| score_pair(cand, r, use_stem))
        .fold(0.0, f64::max)
}
