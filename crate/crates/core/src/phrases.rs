//! Two-step phrase mining: threshold-based candidate search over per-word importance, then
//! scoring each candidate by its average contribution to one class relative to the other.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;

use crate::corpus::{Corpus, Vocab, ENT_TOKEN};
use crate::error::{Error, Result};
use crate::importance::{importance, ImportanceMatrix, Method};
use crate::linalg::log_sum_exp;
use crate::lstm::LstmParams;

pub const DEFAULT_THRESHOLD: f64 = 1.1;
pub const DEFAULT_MAX_LEN: usize = 5;
pub const DEFAULT_MIN_SUPPORT: usize = 3;
/// Floor for the class means of summed gradient contributions.
pub const GRADIENT_MEAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub tokens: Vec<u32>,
    pub score: f64,
    pub class: usize,
    pub support: usize,
    /// Only matches at the first position of a document.
    pub anchored_start: bool,
    pub ends_at_entity: bool,
}

impl Pattern {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn render(&self, vocab: &Vocab) -> String {
        let words = vocab.decode(&self.tokens).join(" ");
        if self.anchored_start {
            format!("^ {words}")
        } else {
            words
        }
    }
}

/// Rank order: score descending, then longer first, then token ids ascending, then
/// unanchored before anchored.
pub fn rank_order(a: &Pattern, b: &Pattern) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.tokens.len().cmp(&a.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
        .then_with(|| a.anchored_start.cmp(&b.anchored_start))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningMeta {
    pub method: Method,
    pub threshold: f64,
    pub min_support: usize,
    pub max_len: usize,
    /// Order-independent hash of the mining corpus.
    pub fingerprint: u64,
    /// Question category for patterns mined from a question-answering corpus.
    pub relation: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternList {
    pub patterns: Vec<Pattern>,
    pub meta: MiningMeta,
}

impl PatternList {
    pub fn sort(&mut self) {
        self.patterns.sort_by(rank_order);
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningConfig {
    pub threshold: f64,
    pub max_len: usize,
    pub min_support: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            max_len: DEFAULT_MAX_LEN,
            min_support: DEFAULT_MIN_SUPPORT,
        }
    }
}

/// Whether a word's importance row clears the candidate threshold `c`.
///
/// Log-domain scores are compared with `ln c`; normalized gradient scores live in `[0, 1]`
/// and are compared with `c - 1`.
pub fn exceeds_threshold(method: Method, row: &[f64], c: f64) -> bool {
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if method.is_log_domain() {
        best > c.ln()
    } else {
        best > c - 1.0
    }
}

/// Maximal runs `[start, end)` of consecutive positions above the threshold.
pub fn important_runs(imp: &ImportanceMatrix, c: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (j, row) in imp.scores.iter().enumerate() {
        match (exceeds_threshold(imp.method, row, c), start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                runs.push((s, j));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, imp.scores.len()));
    }
    runs
}

/// Every sub-phrase of length `1..=max_len` inside a maximal above-threshold run.
pub fn candidate_search(
    docs: &[(&[u32], &ImportanceMatrix)],
    c: f64,
    max_len: usize,
) -> Result<BTreeSet<Vec<u32>>> {
    if c <= 0.0 || c.is_nan() {
        return Err(Error::InvalidArgument("threshold must be positive".into()));
    }
    let mut out = BTreeSet::new();
    for (tokens, imp) in docs {
        for (s, e) in important_runs(imp, c) {
            for a in s..e {
                for b in a + 1..=e.min(a + max_len) {
                    out.insert(tokens[a..b].to_vec());
                }
            }
        }
    }
    Ok(out)
}

/// `S_1`, `S_2` are the relative scores of class 0 and class 1; `score = max(S_1, S_2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhraseScore {
    pub s1: f64,
    pub s2: f64,
    pub score: f64,
    pub class: usize,
}

impl PhraseScore {
    fn from_ratio_log(log_s1: f64) -> Self {
        let s1 = log_s1.exp();
        let s2 = (-log_s1).exp();
        Self::pick(s1, s2)
    }

    fn pick(s1: f64, s2: f64) -> Self {
        if s1 >= s2 {
            Self { s1, s2, score: s1, class: 0 }
        } else {
            Self { s1, s2, score: s2, class: 1 }
        }
    }
}

fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum()
}

/// Scores a phrase from its per-occurrence class contributions.
///
/// Each entry holds, for one occurrence, the per-class scores summed over the phrase's
/// words. Log-domain methods average `exp` of those sums (via log-sum-exp); the gradient
/// method averages the sums directly. Values are sorted before reduction so the result
/// does not depend on occurrence order.
pub fn score_occurrences(method: Method, contributions: &[[f64; 2]]) -> Result<PhraseScore> {
    if contributions.is_empty() {
        return Err(Error::NoOccurrences);
    }
    let column = |i: usize| -> Vec<f64> {
        let mut v: Vec<f64> = contributions.iter().map(|c| c[i]).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    if method.is_log_domain() {
        // The 1/n of both averages cancels in the ratio.
        Ok(PhraseScore::from_ratio_log(
            log_sum_exp(&column(0)) - log_sum_exp(&column(1)),
        ))
    } else {
        let n = contributions.len() as f64;
        let m0 = (sorted_sum(column(0)) / n).max(GRADIENT_MEAN_FLOOR);
        let m1 = (sorted_sum(column(1)) / n).max(GRADIENT_MEAN_FLOOR);
        let s1 = m0 / m1;
        Ok(PhraseScore::pick(s1, 1.0 / s1))
    }
}

fn occurrence_contribution(imp: &ImportanceMatrix, start: usize, len: usize) -> [f64; 2] {
    let mut acc = [0.0; 2];
    for row in &imp.scores[start..start + len] {
        acc[0] += row[0];
        acc[1] += row[1];
    }
    acc
}

/// Exact-match occurrences `(doc, start)` in document then position order.
pub fn find_occurrences(phrase: &[u32], docs: &[&[u32]]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if phrase.is_empty() {
        return out;
    }
    for (d, tokens) in docs.iter().enumerate() {
        for (b, window) in tokens.windows(phrase.len()).enumerate() {
            if window == phrase {
                out.push((d, b));
            }
        }
    }
    out
}

/// Scores one phrase over every occurrence in `docs` (binary classification only).
pub fn score_phrase(
    phrase: &[u32],
    docs: &[&[u32]],
    importances: &[ImportanceMatrix],
    method: Method,
) -> Result<PhraseScore> {
    check_binary(importances)?;
    let contributions: Vec<[f64; 2]> = find_occurrences(phrase, docs)
        .into_iter()
        .map(|(d, b)| occurrence_contribution(&importances[d], b, phrase.len()))
        .collect();
    score_occurrences(method, &contributions)
}

fn check_binary(importances: &[ImportanceMatrix]) -> Result<()> {
    match importances.iter().find(|m| m.num_classes() != 2) {
        Some(m) => Err(Error::InvalidArgument(format!(
            "phrase scoring is binary-only, got {} classes",
            m.num_classes()
        ))),
        None => Ok(()),
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0100_0000_01b3;

fn fnv1a(bytes: impl IntoIterator<Item = u8>, mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Sum of per-document hashes, so permuting documents leaves it unchanged.
pub fn corpus_fingerprint<'a>(docs: impl IntoIterator<Item = (&'a [u32], usize)>) -> u64 {
    docs.into_iter().fold(0u64, |acc, (tokens, label)| {
        let h = fnv1a(
            tokens
                .iter()
                .flat_map(|t| t.to_le_bytes())
                .chain((label as u64).to_le_bytes()),
            FNV_OFFSET,
        );
        acc.wrapping_add(h)
    })
}

/// Mines patterns from precomputed importance matrices (one per document).
pub fn mine_patterns(
    docs: &[&[u32]],
    importances: &[ImportanceMatrix],
    method: Method,
    config: &MiningConfig,
    fingerprint: u64,
) -> Result<PatternList> {
    check_binary(importances)?;
    if docs.len() != importances.len() {
        return Err(Error::Dimension(
            "one importance matrix per document required".into(),
        ));
    }
    let pairs: Vec<(&[u32], &ImportanceMatrix)> =
        docs.iter().copied().zip(importances.iter()).collect();
    let candidates = candidate_search(&pairs, config.threshold, config.max_len)?;

    let mut occurrences: HashMap<&[u32], Vec<[f64; 2]>> =
        candidates.iter().map(|c| (c.as_slice(), Vec::new())).collect();
    for (tokens, imp) in &pairs {
        for start in 0..tokens.len() {
            for len in 1..=config.max_len.min(tokens.len() - start) {
                if let Some(list) = occurrences.get_mut(&tokens[start..start + len]) {
                    list.push(occurrence_contribution(imp, start, len));
                }
            }
        }
    }

    let mut patterns = Vec::new();
    for cand in &candidates {
        let contributions = &occurrences[cand.as_slice()];
        if contributions.len() < config.min_support.max(1) {
            continue;
        }
        let s = score_occurrences(method, contributions)?;
        patterns.push(Pattern {
            tokens: cand.clone(),
            score: s.score,
            class: s.class,
            support: contributions.len(),
            anchored_start: false,
            ends_at_entity: false,
        });
    }
    let mut list = PatternList {
        patterns,
        meta: MiningMeta {
            method,
            threshold: config.threshold,
            min_support: config.min_support,
            max_len: config.max_len,
            fingerprint,
            relation: None,
        },
    };
    list.sort();
    Ok(list)
}

/// Computes importances for every document, then mines and ranks patterns.
pub fn extract_patterns(
    corpus: &Corpus,
    params: &LstmParams,
    method: Method,
    config: &MiningConfig,
) -> Result<PatternList> {
    if corpus.num_classes != 2 || params.dims.classes != 2 {
        return Err(Error::InvalidArgument(
            "phrase extraction supports binary classification only".into(),
        ));
    }
    let importances: Vec<ImportanceMatrix> = corpus
        .docs
        .par_iter()
        .map(|d| importance(params, d, method))
        .collect::<Result<_>>()?;
    let docs: Vec<&[u32]> = corpus.docs.iter().map(|d| d.tokens.as_slice()).collect();
    let fingerprint = corpus_fingerprint(corpus.docs.iter().map(|d| (d.tokens.as_slice(), d.label)));
    mine_patterns(&docs, &importances, method, config, fingerprint)
}

/// Pattern TSV: a `#` header with the mining metadata, then
/// `rank<TAB>score<TAB>class<TAB>support<TAB>tokens`. Anchored patterns start with `^`.
pub fn patterns_to_tsv(list: &PatternList, vocab: &Vocab) -> String {
    let m = &list.meta;
    let mut out = format!(
        "# method={}\tc={}\tmin_support={}\tmax_len={}\tcorpus={:016x}",
        m.method, m.threshold, m.min_support, m.max_len, m.fingerprint
    );
    if let Some(rel) = &m.relation {
        out.push_str(&format!("\trelation={rel}"));
    }
    out.push('\n');
    for (rank, p) in list.patterns.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            rank + 1,
            p.score,
            p.class,
            p.support,
            p.render(vocab)
        ));
    }
    out
}

/// Parses a pattern TSV against `vocab`; tokens outside the vocabulary are an error.
pub fn parse_patterns_tsv(input: &str, vocab: &Vocab) -> Result<PatternList> {
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::EmptyCorpus)?;
    let meta = parse_header(header)?;
    let mut patterns = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let score: f64 = fields[1]
            .parse()
            .map_err(|_| err(format!("bad score {:?}", fields[1])))?;
        if !(score >= 1.0) {
            return Err(err(format!("score {score} below 1")));
        }
        let class: usize = fields[2]
            .parse()
            .map_err(|_| err(format!("bad class {:?}", fields[2])))?;
        let support: usize = fields[3]
            .parse()
            .map_err(|_| err(format!("bad support {:?}", fields[3])))?;
        let mut words: Vec<&str> = fields[4].split(' ').filter(|w| !w.is_empty()).collect();
        let anchored_start = words.first() == Some(&"^");
        if anchored_start {
            words.remove(0);
        }
        if words.is_empty() || words.len() > meta.max_len.max(DEFAULT_MAX_LEN) {
            return Err(err(format!("pattern length {} out of range", words.len())));
        }
        let tokens = words
            .iter()
            .map(|w| {
                vocab
                    .id(w)
                    .ok_or_else(|| err(format!("token {w:?} not in vocabulary")))
            })
            .collect::<Result<Vec<u32>>>()?;
        patterns.push(Pattern {
            ends_at_entity: words.last() == Some(&ENT_TOKEN),
            tokens,
            score,
            class,
            support,
            anchored_start,
        });
    }
    Ok(PatternList { patterns, meta })
}

fn parse_header(header: &str) -> Result<MiningMeta> {
    let err = |msg: String| Error::Parse { line: 1, msg };
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| err("missing `#` header".into()))?;
    let mut meta = MiningMeta {
        method: Method::Gamma,
        threshold: DEFAULT_THRESHOLD,
        min_support: DEFAULT_MIN_SUPPORT,
        max_len: DEFAULT_MAX_LEN,
        fingerprint: 0,
        relation: None,
    };
    for field in body.split(['\t', ' ']).filter(|f| !f.is_empty()) {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| err(format!("bad header field {field:?}")))?;
        let bad = || err(format!("bad value for {key}: {value:?}"));
        match key {
            "method" => meta.method = value.parse().map_err(|_| bad())?,
            "c" => meta.threshold = value.parse().map_err(|_| bad())?,
            "min_support" => meta.min_support = value.parse().map_err(|_| bad())?,
            "max_len" => meta.max_len = value.parse().map_err(|_| bad())?,
            "corpus" => meta.fingerprint = u64::from_str_radix(value, 16).map_err(|_| bad())?,
            "relation" => meta.relation = Some(value.to_owned()),
            _ => return Err(err(format!("unknown header field {key:?}"))),
        }
    }
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matrix(method: Method, rows: &[[f64; 2]]) -> ImportanceMatrix {
        ImportanceMatrix {
            method,
            scores: rows.iter().map(|r| r.to_vec()).collect(),
        }
    }

    #[test]
    fn all_zero_importance_has_no_candidates() {
        let imp = matrix(Method::Gamma, &[[0.0, 0.0]; 4]);
        let tokens = [5, 6, 7, 8];
        let set = candidate_search(&[(&tokens[..], &imp)], 1.1, 5).unwrap();
        assert!(set.is_empty());
        assert!(candidate_search(&[(&tokens[..], &imp)], 0.0, 5).is_err());
    }

    #[test]
    fn run_enumerates_all_sub_spans() {
        let mut rows = [[0.0, 0.0]; 7];
        for r in &mut rows[3..=5] {
            *r = [0.5, -0.5];
        }
        let imp = matrix(Method::Beta, &rows);
        let tokens = [10, 11, 12, 13, 14, 15, 16];
        let set = candidate_search(&[(&tokens[..], &imp)], 1.1, 5).unwrap();
        let expected: BTreeSet<Vec<u32>> = [
            vec![13],
            vec![14],
            vec![15],
            vec![13, 14],
            vec![14, 15],
            vec![13, 14, 15],
        ]
        .into_iter()
        .collect();
        assert_eq!(set, expected);
    }

    #[test]
    fn gradient_threshold_is_shifted() {
        assert!(exceeds_threshold(Method::Gradient, &[0.11, 0.0], 1.1));
        assert!(!exceeds_threshold(Method::Gradient, &[0.09, 0.05], 1.1));
        assert!(exceeds_threshold(Method::Gamma, &[0.0, 0.1], 1.1));
        assert!(!exceeds_threshold(Method::Gamma, &[0.09, 0.0], 1.1));
    }

    #[test]
    fn symmetric_contributions_score_one() {
        let s = score_occurrences(Method::Gamma, &[[0.3, 0.3], [-1.0, -1.0]]).unwrap();
        assert_eq!((s.s1, s.s2, s.score), (1.0, 1.0, 1.0));
        assert!(matches!(
            score_occurrences(Method::Gamma, &[]),
            Err(Error::NoOccurrences)
        ));
    }

    #[test]
    fn single_occurrence_closed_form() {
        let s = score_occurrences(Method::Beta, &[[2.0, 0.0]]).unwrap();
        assert!((s.s1 - 2f64.exp()).abs() < 1e-15);
        assert_eq!(s.class, 0);
    }

    /// Three documents with hand-fixed matrices. The oracle evaluates the averages of
    /// products literally, without logs.
    #[test]
    fn brute_force_oracle_on_hand_corpus() {
        let docs: Vec<Vec<u32>> = vec![vec![1, 2, 3, 2, 3], vec![4, 2, 3], vec![2, 5, 2, 3]];
        let imps = vec![
            matrix(Method::Gamma, &[[0.1, -0.1], [0.7, -0.2], [0.4, 0.1], [-0.3, 0.2], [0.9, -0.5]]),
            matrix(Method::Gamma, &[[0.0, 0.0], [0.2, 0.6], [-0.1, 0.3]]),
            matrix(Method::Gamma, &[[1.2, -1.0], [0.5, 0.5], [0.05, 0.0], [0.3, -0.4]]),
        ];
        let doc_refs: Vec<&[u32]> = docs.iter().map(Vec::as_slice).collect();
        let phrase = [2u32, 3];

        let mut num = Vec::new();
        let mut den = Vec::new();
        for (d, tokens) in docs.iter().enumerate() {
            for b in 0..tokens.len() - 1 {
                if tokens[b..b + 2] == phrase {
                    let rows = &imps[d].scores[b..b + 2];
                    num.push(rows[0][0].exp() * rows[1][0].exp());
                    den.push(rows[0][1].exp() * rows[1][1].exp());
                }
            }
        }
        assert_eq!(num.len(), 4);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let s1 = mean(&num) / mean(&den);

        let got = score_phrase(&phrase, &doc_refs, &imps, Method::Gamma).unwrap();
        assert!((got.s1 - s1).abs() <= 1e-12 * s1, "{} vs {s1}", got.s1);
        assert!((got.s2 - 1.0 / s1).abs() <= 1e-12 / s1);
        assert_eq!(got.class, if s1 >= 1.0 { 0 } else { 1 });

        // The gradient variant replaces products by sums.
        let grad: Vec<ImportanceMatrix> = imps
            .iter()
            .map(|m| ImportanceMatrix {
                method: Method::Gradient,
                scores: m.scores.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect(),
            })
            .collect();
        let mut sums = [0.0, 0.0];
        let mut n = 0.0;
        for (d, tokens) in docs.iter().enumerate() {
            for b in 0..tokens.len() - 1 {
                if tokens[b..b + 2] == phrase {
                    for c in 0..2 {
                        sums[c] += grad[d].scores[b][c] + grad[d].scores[b + 1][c];
                    }
                    n += 1.0;
                }
            }
        }
        let s1 = (sums[0] / n) / (sums[1] / n);
        let got = score_phrase(&phrase, &doc_refs, &grad, Method::Gradient).unwrap();
        assert!((got.s1 - s1).abs() <= 1e-12 * s1);
    }

    #[test]
    fn missing_phrase_is_an_error() {
        let docs: Vec<&[u32]> = vec![&[1, 2, 3]];
        let imps = vec![matrix(Method::Beta, &[[0.0, 0.0]; 3])];
        assert!(score_phrase(&[9], &docs, &imps, Method::Beta).is_err());
    }

    fn toy_mining_input() -> (Vec<Vec<u32>>, Vec<ImportanceMatrix>) {
        let docs = vec![vec![2, 3, 4], vec![5, 2, 3], vec![2, 3, 6], vec![7, 8, 9]];
        let imps = docs
            .iter()
            .map(|d| {
                matrix(
                    Method::Gamma,
                    &d.iter()
                        .map(|&t| if t == 2 || t == 3 { [-0.1, 1.0] } else { [0.0, 0.0] })
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        (docs, imps)
    }

    #[test]
    fn mining_ranks_and_filters() {
        let (docs, imps) = toy_mining_input();
        let refs: Vec<&[u32]> = docs.iter().map(Vec::as_slice).collect();
        let list = mine_patterns(&refs, &imps, Method::Gamma, &MiningConfig::default(), 0).unwrap();
        let top = &list.patterns[0];
        assert_eq!(top.tokens, vec![2, 3]);
        assert_eq!(top.class, 1);
        assert_eq!(top.support, 3);
        assert!(list.patterns.windows(2).all(|w| rank_order(&w[0], &w[1]) == Ordering::Less));

        let strict = MiningConfig { min_support: 10, ..MiningConfig::default() };
        assert!(mine_patterns(&refs, &imps, Method::Gamma, &strict, 0).unwrap().is_empty());
    }

    #[test]
    fn tsv_round_trip() {
        let vocab = crate::corpus::build_vocab(["a b c d e f g h i"], 1);
        let (docs, imps) = toy_mining_input();
        let refs: Vec<&[u32]> = docs.iter().map(Vec::as_slice).collect();
        let mut list =
            mine_patterns(&refs, &imps, Method::Gamma, &MiningConfig::default(), 0xabc).unwrap();
        list.patterns[0].anchored_start = true;
        list.meta.relation = Some("written_by".into());
        let text = patterns_to_tsv(&list, &vocab);
        assert!(text.starts_with("# method=gamma\tc=1.1\tmin_support=3"));
        let back = parse_patterns_tsv(&text, &vocab).unwrap();
        assert_eq!(back, list);
    }

    #[test]
    fn tsv_rejects_garbage() {
        let vocab = crate::corpus::build_vocab(["a"], 1);
        assert!(parse_patterns_tsv("", &vocab).is_err());
        assert!(parse_patterns_tsv("no header\n", &vocab).is_err());
        assert!(parse_patterns_tsv("# method=gamma\n1\t2.0\t0\t3\tzzz\n", &vocab).is_err());
        assert!(parse_patterns_tsv("# method=gamma\n1\t0.5\t0\t3\ta\n", &vocab).is_err());
        assert!(parse_patterns_tsv("# method=nope\n", &vocab).is_err());
    }

    proptest! {
        #[test]
        fn score_algebra(
            method_idx in 0usize..3,
            rows in proptest::collection::vec((-8.0f64..8.0, -8.0f64..8.0), 1..20),
        ) {
            let method = Method::ALL[method_idx];
            let contributions: Vec<[f64; 2]> = rows
                .iter()
                .map(|&(a, b)| if method.is_log_domain() { [a, b] } else { [a.abs(), b.abs()] })
                .collect();
            let s = score_occurrences(method, &contributions).unwrap();
            prop_assert!((s.s1 * s.s2 - 1.0).abs() < 1e-12);
            prop_assert!(s.score >= 1.0);
            prop_assert_eq!(s.score, s.s1.max(s.s2));
            prop_assert_eq!(s.class, if s.s1 >= s.s2 { 0 } else { 1 });

            let mut reversed = contributions.clone();
            reversed.reverse();
            prop_assert_eq!(score_occurrences(method, &reversed).unwrap(), s);
        }

        #[test]
        fn candidates_lie_in_runs(
            rows in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..30),
        ) {
            let scores: Vec<[f64; 2]> = rows.iter().map(|&(a, b)| [a, b]).collect();
            let imp = matrix(Method::Gamma, &scores);
            let tokens: Vec<u32> = (0..scores.len() as u32).collect();
            let set = candidate_search(&[(&tokens[..], &imp)], 1.1, 5).unwrap();
            for cand in set {
                prop_assert!((1..=5).contains(&cand.len()));
                for &pos in &cand {
                    prop_assert!(exceeds_threshold(Method::Gamma, &imp.scores[pos as usize], 1.1));
                }
                prop_assert!(cand.windows(2).all(|w| w[1] == w[0] + 1));
            }
        }
    }
}
