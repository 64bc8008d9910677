//! Corpus- and sentence-level summary quality metrics: smoothed
//! sentence BLEU (add-one on the n >= 2 precisions), ROUGE-L, the
//! exact-match METEOR stage, and CIDEr over 1..4-gram TF-IDF vectors.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One hypothesis/reference pair (single-reference corpora only).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoredPair {
    pub hypothesis: Vec<String>,
    pub reference: Vec<String>,
}

impl ScoredPair {
    pub fn new(hypothesis: &[&str], reference: &[&str]) -> ScoredPair {
        ScoredPair {
            hypothesis: hypothesis.iter().map(|s| s.to_string()).collect(),
            reference: reference.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("cider needs at least two pairs, got {0}")]
    CorpusTooSmall(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScores {
    pub id: String,
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
}

/// Corpus scores in [0, 1] (CIDEr in [0, 10]) plus the per-example
/// breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider: f64,
    pub examples: Vec<ExampleScores>,
}

const MAX_NGRAM: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

/// Sentence-level smoothed BLEU-4 for one pair.
pub fn bleu_sentence(pair: &ScoredPair) -> f64 {
    let hyp = &pair.hypothesis;
    let reference = &pair.reference;
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_NGRAM {
        let hyp_counts = ngram_counts(hyp, n);
        let ref_counts = ngram_counts(reference, n);
        let total: usize = hyp_counts.values().sum();
        let matched: usize = hyp_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if n == 1 {
            if total == 0 {
                return 0.0;
            }
            matched as f64 / total as f64
        } else {
            // Add-one smoothing on the modified precisions for n >= 2.
            (matched + 1) as f64 / (total + 1) as f64
        };
        if precision == 0.0 {
            return 0.0;
        }
        log_sum += precision.ln();
    }
    let geo_mean = (log_sum / MAX_NGRAM as f64).exp();
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * geo_mean
}

/// Corpus BLEU-CN: arithmetic mean of sentence scores.
pub fn bleu_cn(pairs: &[ScoredPair]) -> f64 {
    assert!(!pairs.is_empty(), "bleu_cn needs at least one pair");
    pairs.iter().map(bleu_sentence).sum::<f64>() / pairs.len() as f64
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
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

pub fn rouge_l_sentence(pair: &ScoredPair) -> f64 {
    const BETA: f64 = 1.2;
    let ell = lcs_len(&pair.hypothesis, &pair.reference) as f64;
    if ell == 0.0 || pair.hypothesis.is_empty() || pair.reference.is_empty() {
        return 0.0;
    }
    let p = ell / pair.hypothesis.len() as f64;
    let r = ell / pair.reference.len() as f64;
    (1.0 + BETA * BETA) * p * r / (r + BETA * BETA * p)
}

pub fn rouge_l(pairs: &[ScoredPair]) -> f64 {
    assert!(!pairs.is_empty(), "rouge_l needs at least one pair");
    pairs.iter().map(rouge_l_sentence).sum::<f64>() / pairs.len() as f64
}

/// Exact-match unigram alignment: maximizes match count, breaking ties
/// toward the fewest chunks. Exhaustive search with pruning; inputs are
/// short summaries, and a deterministic node budget guards degenerate
/// duplicate-heavy cases.
fn align_matches_min_chunks(hyp: &[String], reference: &[String]) -> (usize, usize) {
    let mut ref_budget: HashMap<&String, usize> = HashMap::new();
    for tok in reference {
        *ref_budget.entry(tok).or_default() += 1;
    }
    let mut hyp_budget: HashMap<&String, usize> = HashMap::new();
    for tok in hyp {
        *hyp_budget.entry(tok).or_default() += 1;
    }
    let max_matches: usize = hyp_budget
        .iter()
        .map(|(tok, &c)| c.min(ref_budget.get(tok).copied().unwrap_or(0)))
        .sum();
    if max_matches == 0 {
        return (0, 0);
    }

    // Suffix-feasibility bound: the most matches positions i.. can add.
    let mut suffix_best = vec![0usize; hyp.len() + 1];
    {
        let mut budget = ref_budget.clone();
        let mut taken = Vec::new();
        for (i, tok) in hyp.iter().enumerate() {
            let b = budget.entry(tok).or_default();
            if *b > 0 {
                *b -= 1;
                taken.push(i);
            }
        }
        // suffix_best[i] counts matchable tokens at positions >= i under
        // the global budget; a valid upper bound for the DFS prune.
        let mut count = 0;
        let mut iter = taken.iter().rev().peekable();
        for i in (0..hyp.len()).rev() {
            if iter.peek() == Some(&&i) {
                count += 1;
                iter.next();
            }
            suffix_best[i] = count;
        }
    }

    struct Search<'a> {
        hyp: &'a [String],
        reference: &'a [String],
        suffix_best: &'a [usize],
        max_matches: usize,
        best_chunks: usize,
        nodes: usize,
    }

    const NODE_BUDGET: usize = 200_000;

    impl Search<'_> {
        fn go(
            &mut self,
            i: usize,
            used: u64,
            matches: usize,
            chunks: usize,
            last_hyp: Option<usize>,
            last_ref: Option<usize>,
        ) {
            if chunks >= self.best_chunks || self.nodes >= NODE_BUDGET {
                return;
            }
            self.nodes += 1;
            if matches + self.suffix_best[i.min(self.hyp.len())] < self.max_matches {
                return;
            }
            if i == self.hyp.len() {
                if matches == self.max_matches {
                    self.best_chunks = chunks;
                }
                return;
            }
            // Continuation first so low-chunk alignments surface early.
            let continuation = match (last_hyp, last_ref) {
                (Some(lh), Some(lr)) if lh + 1 == i => Some(lr + 1),
                _ => None,
            };
            let candidates = continuation
                .into_iter()
                .chain(0..self.reference.len())
                .filter(|&j| j < self.reference.len());
            let mut tried = Vec::new();
            for j in candidates {
                if tried.contains(&j) {
                    continue;
                }
                tried.push(j);
                if used & (1 << j) != 0 || self.reference[j] != self.hyp[i] {
                    continue;
                }
                let new_chunk = match (last_hyp, last_ref) {
                    (Some(lh), Some(lr)) if lh + 1 == i && lr + 1 == j => 0,
                    _ => 1,
                };
                self.go(
                    i + 1,
                    used | (1 << j),
                    matches + 1,
                    chunks + new_chunk,
                    Some(i),
                    Some(j),
                );
            }
            // Leave hyp[i] unmatched.
            self.go(i + 1, used, matches, chunks, last_hyp, last_ref);
        }
    }

    let mut search = Search {
        hyp,
        reference,
        suffix_best: &suffix_best,
        max_matches,
        best_chunks: usize::MAX,
        nodes: 0,
    };
    search.go(0, 0, 0, 0, None, None);
    (max_matches, search.best_chunks)
}

pub fn meteor_sentence(pair: &ScoredPair) -> f64 {
    const ALPHA: f64 = 0.9;
    const BETA: f64 = 3.0;
    const GAMMA: f64 = 0.5;
    if pair.hypothesis.is_empty() || pair.reference.is_empty() {
        return 0.0;
    }
    if pair.reference.len() > 64 {
        // Bitmask alignment supports references up to 64 tokens, which
        // covers first-sentence summaries by a wide margin.
        log::warn!("meteor reference longer than 64 tokens; truncating");
    }
    let reference: Vec<String> = pair.reference.iter().take(64).cloned().collect();
    let (m, chunks) = align_matches_min_chunks(&pair.hypothesis, &reference);
    if m == 0 {
        return 0.0;
    }
    let m_f = m as f64;
    let p = m_f / pair.hypothesis.len() as f64;
    let r = m_f / reference.len() as f64;
    let f_mean = p * r / (ALPHA * p + (1.0 - ALPHA) * r);
    let penalty = GAMMA * (chunks as f64 / m_f).powf(BETA);
    f_mean * (1.0 - penalty)
}

pub fn meteor_exact(pairs: &[ScoredPair]) -> f64 {
    assert!(!pairs.is_empty(), "meteor needs at least one pair");
    pairs.iter().map(meteor_sentence).sum::<f64>() / pairs.len() as f64
}

type NgramKey = Vec<String>;

/// TF-IDF vectors and cosine machinery shared by the corpus score and
/// the per-example breakdown.
struct CiderIdf {
    df: BTreeMap<NgramKey, usize>,
    n_refs: usize,
}

impl CiderIdf {
    fn build(pairs: &[ScoredPair]) -> CiderIdf {
        let mut df: BTreeMap<NgramKey, usize> = BTreeMap::new();
        for pair in pairs {
            let mut seen: BTreeMap<NgramKey, ()> = BTreeMap::new();
            for n in 1..=MAX_NGRAM {
                if pair.reference.len() >= n {
                    for w in pair.reference.windows(n) {
                        seen.entry(w.to_vec()).or_insert(());
                    }
                }
            }
            for (gram, ()) in seen {
                *df.entry(gram).or_default() += 1;
            }
        }
        CiderIdf {
            df,
            n_refs: pairs.len(),
        }
    }

    // N-grams absent from every reference get zero weight; this keeps
    // the score invariant under duplicating the whole pair corpus.
    fn idf(&self, gram: &[String]) -> f64 {
        match self.df.get(gram) {
            Some(&df) => (self.n_refs as f64 / df as f64).ln(),
            None => 0.0,
        }
    }

    fn vector(&self, tokens: &[String], n: usize) -> BTreeMap<NgramKey, f64> {
        let mut counts: BTreeMap<NgramKey, f64> = BTreeMap::new();
        if tokens.len() >= n {
            for w in tokens.windows(n) {
                *counts.entry(w.to_vec()).or_default() += 1.0;
            }
        }
        for (gram, value) in counts.iter_mut() {
            *value *= self.idf(gram);
        }
        counts
    }

    fn pair_score(&self, pair: &ScoredPair) -> f64 {
        let mut sum = 0.0;
        for n in 1..=MAX_NGRAM {
            let hv = self.vector(&pair.hypothesis, n);
            let rv = self.vector(&pair.reference, n);
            let dot: f64 = hv
                .iter()
                .filter_map(|(gram, &v)| rv.get(gram).map(|&r| v * r))
                .sum();
            let hn: f64 = hv.values().map(|v| v * v).sum::<f64>().sqrt();
            let rn: f64 = rv.values().map(|v| v * v).sum::<f64>().sqrt();
            if hn > 0.0 && rn > 0.0 {
                sum += dot / (hn * rn);
            }
        }
        10.0 * sum / MAX_NGRAM as f64
    }
}

/// CIDEr over the pair corpus; IDF comes from the reference side.
pub fn cider(pairs: &[ScoredPair]) -> Result<f64, MetricError> {
    if pairs.len() < 2 {
        return Err(MetricError::CorpusTooSmall(pairs.len()));
    }
    let idf = CiderIdf::build(pairs);
    Ok(pairs.iter().map(|p| idf.pair_score(p)).sum::<f64>() / pairs.len() as f64)
}

/// All four metrics plus the per-example breakdown.
pub fn eval_report(ids: &[String], pairs: &[ScoredPair]) -> Result<EvalReport, MetricError> {
    assert_eq!(ids.len(), pairs.len());
    if pairs.len() < 2 {
        return Err(MetricError::CorpusTooSmall(pairs.len()));
    }
    let idf = CiderIdf::build(pairs);
    let examples: Vec<ExampleScores> = ids
        .iter()
        .zip(pairs)
        .map(|(id, pair)| ExampleScores {
            id: id.clone(),
            bleu: bleu_sentence(pair),
            rouge_l: rouge_l_sentence(pair),
            meteor: meteor_sentence(pair),
            cider: idf.pair_score(pair),
        })
        .collect();
    let n = examples.len() as f64;
    Ok(EvalReport {
        bleu: examples.iter().map(|e| e.bleu).sum::<f64>() / n,
        rouge_l: examples.iter().map(|e| e.rouge_l).sum::<f64>() / n,
        meteor: examples.iter().map(|e| e.meteor).sum::<f64>() / n,
        cider: examples.iter().map(|e| e.cider).sum::<f64>() / n,
        examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn pair(h: &str, r: &str) -> ScoredPair {
        ScoredPair::new(&toks(h), &toks(r))
    }

    #[test]
    fn bleu_identity_is_one() {
        let pairs = vec![pair("the cat sat down", "the cat sat down")];
        assert_eq!(bleu_cn(&pairs), 1.0);
    }

    #[test]
    fn bleu_smoothing_hand_value() {
        // p1 = 1, p2..p4 smoothed to 1, BP = exp(1 - 4/3)
        let pairs = vec![pair("the cat sat", "the cat sat down")];
        let expected = (1.0f64 - 4.0 / 3.0).exp();
        assert_abs_diff_eq!(bleu_cn(&pairs), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(bleu_cn(&pairs), 0.71653, epsilon = 1e-4);
    }

    #[test]
    fn bleu_disjoint_is_zero() {
        assert_eq!(bleu_cn(&[pair("alpha beta", "gamma delta")]), 0.0);
        assert_eq!(bleu_sentence(&pair("", "gamma delta")), 0.0);
    }

    #[test]
    fn rouge_identity_and_zero() {
        assert_eq!(rouge_l(&[pair("a b c", "a b c")]), 1.0);
        assert_eq!(rouge_l(&[pair("a b", "c d")]), 0.0);
    }

    #[test]
    fn rouge_hand_value() {
        // LCS("a b c", "a c d") = "a c": P = R = 2/3 so F = 2/3.
        assert_abs_diff_eq!(rouge_l(&[pair("a b c", "a c d")]), 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rouge_l(&[pair("a b c", "a c d")]), 0.66667, epsilon = 1e-4);
    }

    #[test]
    fn meteor_identical_two_tokens() {
        // m = 2, one chunk: Fmean = 1, penalty = 0.5 * (1/2)^3
        assert_abs_diff_eq!(
            meteor_exact(&[pair("good work", "good work")]),
            0.9375,
            epsilon = 1e-6
        );
    }

    #[test]
    fn meteor_swapped_tokens_two_chunks() {
        // m = 2, two chunks: penalty = 0.5, Fmean = 1.
        assert_abs_diff_eq!(meteor_exact(&[pair("b a", "a b")]), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn meteor_disjoint_zero() {
        assert_eq!(meteor_exact(&[pair("x y", "p q")]), 0.0);
    }

    #[test]
    fn meteor_prefers_fewer_chunks_at_equal_matches() {
        // "a b a" / "a b": best alignment keeps "a b" contiguous
        // (1 chunk spanning both) rather than matching the trailing a.
        let (m, chunks) = align_matches_min_chunks(
            &["a".into(), "b".into(), "a".into()],
            &["a".to_string(), "b".to_string()],
        );
        assert_eq!(m, 2);
        assert_eq!(chunks, 1);
    }

    #[test]
    fn cider_identity_on_disjoint_references() {
        let pairs = vec![
            pair("red fox jumps very high", "red fox jumps very high"),
            pair("blue bird sings quite loud", "blue bird sings quite loud"),
        ];
        assert_abs_diff_eq!(cider(&pairs).unwrap(), 10.0, epsilon = 1e-6);
    }

    #[test]
    fn cider_zero_overlap_contribution() {
        let pairs = vec![
            pair("aa bb gg hh", "cc dd ii jj"),
            pair("ee ff kk ll", "ee ff kk ll"),
        ];
        // First pair contributes 0, second cosine 1 per n.
        assert_abs_diff_eq!(cider(&pairs).unwrap(), 5.0, epsilon = 1e-6);
    }

    #[test]
    fn cider_small_corpus_error() {
        assert_eq!(
            cider(&[pair("a", "a")]),
            Err(MetricError::CorpusTooSmall(1))
        );
    }

    #[test]
    fn cider_duplicating_pairs_is_invariant() {
        let pairs = vec![
            pair("count the rows", "count the rows fast"),
            pair("find the item", "find the missing item"),
            pair("the cache wins", "the cache always wins"),
        ];
        let doubled: Vec<ScoredPair> = pairs.iter().chain(pairs.iter()).cloned().collect();
        assert_abs_diff_eq!(
            cider(&pairs).unwrap(),
            cider(&doubled).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cider_three_pair_oracle() {
        // Independent step-by-step evaluation of the TF-IDF cosine
        // route, kept separate from the implementation above.
        let pairs = vec![
            pair("the cat", "the cat"),
            pair("the dog", "the dog"),
            pair("the bird flies", "the bird"),
        ];
        let oracle = {
            let n_refs = 3.0f64;
            // Document frequencies over references.
            let mut df: HashMap<(usize, Vec<&'static str>), f64> = HashMap::new();
            let refs = [vec!["the", "cat"], vec!["the", "dog"], vec!["the", "bird"]];
            for r in &refs {
                for n in 1..=4usize {
                    if r.len() >= n {
                        let mut seen: Vec<Vec<&'static str>> = Vec::new();
                        for w in r.windows(n) {
                            if !seen.contains(&w.to_vec()) {
                                seen.push(w.to_vec());
                            }
                        }
                        for g in seen {
                            *df.entry((n, g)).or_default() += 1.0;
                        }
                    }
                }
            }
            let idf = |n: usize, g: Vec<&'static str>| match df.get(&(n, g)) {
                Some(&d) => (n_refs / d).ln(),
                None => 0.0,
            };
            let vector = |n: usize, toks: &[&'static str]| -> HashMap<Vec<&'static str>, f64> {
                let mut v: HashMap<Vec<&'static str>, f64> = HashMap::new();
                if toks.len() >= n {
                    for w in toks.windows(n) {
                        *v.entry(w.to_vec()).or_default() += 1.0;
                    }
                }
                for (g, val) in v.iter_mut() {
                    *val *= idf(n, g.clone());
                }
                v
            };
            let cos = |a: &HashMap<Vec<&'static str>, f64>, b: &HashMap<Vec<&'static str>, f64>| {
                let dot: f64 = a
                    .iter()
                    .filter_map(|(g, &x)| b.get(g).map(|&y| x * y))
                    .sum();
                let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
                let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
                if na > 0.0 && nb > 0.0 {
                    dot / (na * nb)
                } else {
                    0.0
                }
            };
            let hyps = [
                vec!["the", "cat"],
                vec!["the", "dog"],
                vec!["the", "bird", "flies"],
            ];
            let mut total = 0.0;
            for (h, r) in hyps.iter().zip(&refs) {
                let mut s = 0.0;
                for n in 1..=4usize {
                    s += cos(&vector(n, h), &vector(n, r));
                }
                total += 10.0 * s / 4.0;
            }
            total / 3.0
        };
        assert_abs_diff_eq!(cider(&pairs).unwrap(), oracle, epsilon = 1e-6);
    }

    #[test]
    fn empty_hypothesis_zeroes_all_metrics() {
        let p = pair("", "some reference here");
        assert_eq!(bleu_sentence(&p), 0.0);
        assert_eq!(rouge_l_sentence(&p), 0.0);
        assert_eq!(meteor_sentence(&p), 0.0);
        let pairs = vec![p, pair("x", "x")];
        let report = eval_report(&["a".into(), "b".into()], &pairs).unwrap();
        assert_eq!(report.examples[0].cider, 0.0);
    }

    #[test]
    fn metrics_ignore_pair_addition_then_removal() {
        let base = vec![pair("count the rows", "count the rows"), pair("b c", "b d")];
        let bleu_before = bleu_cn(&base);
        let rouge_before = rouge_l(&base);
        let meteor_before = meteor_exact(&base);
        let mut extended = base.clone();
        extended.push(pair("extra words", "extra words"));
        extended.truncate(2);
        assert_eq!(bleu_cn(&extended), bleu_before);
        assert_eq!(rouge_l(&extended), rouge_before);
        assert_eq!(meteor_exact(&extended), meteor_before);
    }

    #[test]
    fn report_aggregates_match_means() {
        let pairs = vec![pair("a b", "a b"), pair("c d", "c e")];
        let ids = vec!["x".to_string(), "y".to_string()];
        let report = eval_report(&ids, &pairs).unwrap();
        let mean_bleu: f64 =
            report.examples.iter().map(|e| e.bleu).sum::<f64>() / report.examples.len() as f64;
        assert_abs_diff_eq!(report.bleu, mean_bleu, epsilon = 1e-15);
        assert_eq!(report.examples[0].id, "x");
    }
}
