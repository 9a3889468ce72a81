//! First-match classifier over a ranked pattern list.

use crate::corpus::{Corpus, Document, Vocab};
use crate::error::{Error, Result};
use crate::lstm::{predict, LstmParams};
use crate::phrases::{Pattern, PatternList};

#[derive(Debug, Clone, PartialEq)]
pub struct RulesModel {
    pub patterns: PatternList,
    /// Returned when no pattern matches; the majority class of the mining corpus.
    pub fallback_class: usize,
}

impl RulesModel {
    pub fn new(mut patterns: PatternList, fallback_class: usize) -> Self {
        patterns.sort();
        Self {
            patterns,
            fallback_class,
        }
    }
}

/// Whether `pattern` occurs contiguously in `tokens` (exact ids).
pub fn matches(pattern: &Pattern, tokens: &[u32]) -> bool {
    let len = pattern.tokens.len();
    if len == 0 || len > tokens.len() {
        return false;
    }
    if pattern.anchored_start {
        return tokens[..len] == pattern.tokens[..];
    }
    tokens.windows(len).any(|w| w == pattern.tokens.as_slice())
}

/// Class of the highest-ranked matching pattern and its rank (0-based), or the fallback.
pub fn classify(model: &RulesModel, doc: &Document) -> (usize, Option<usize>) {
    model
        .patterns
        .patterns
        .iter()
        .position(|p| matches(p, &doc.tokens))
        .map_or((model.fallback_class, None), |rank| {
            (model.patterns.patterns[rank].class, Some(rank))
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Fraction of documents matched by some pattern.
    pub coverage: f64,
    /// Fraction of documents matched by some pattern and classified correctly.
    pub matched_accuracy: f64,
    /// Fraction where the rules agree with the network's prediction.
    pub agreement: Option<f64>,
    pub predictions: Vec<(usize, Option<usize>)>,
}

pub fn evaluate(model: &RulesModel, corpus: &Corpus, params: Option<&LstmParams>) -> Result<Evaluation> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = corpus.len() as f64;
    let predictions: Vec<(usize, Option<usize>)> =
        corpus.docs.iter().map(|d| classify(model, d)).collect();
    let correct = corpus
        .docs
        .iter()
        .zip(&predictions)
        .filter(|(d, (c, _))| *c == d.label)
        .count();
    let matched = predictions.iter().filter(|(_, r)| r.is_some()).count();
    let matched_correct = corpus
        .docs
        .iter()
        .zip(&predictions)
        .filter(|(d, (c, r))| r.is_some() && *c == d.label)
        .count();
    let agreement = match params {
        Some(p) => {
            let mut agree = 0;
            for (d, (c, _)) in corpus.docs.iter().zip(&predictions) {
                if predict(p, d)?.0 == *c {
                    agree += 1;
                }
            }
            Some(agree as f64 / n)
        }
        None => None,
    };
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        coverage: matched as f64 / n,
        matched_accuracy: matched_correct as f64 / n,
        agreement,
        predictions,
    })
}

/// `doc_index<TAB>true_label<TAB>rules_label<TAB>matched_rank<TAB>matched_pattern`, with a
/// header row; unmatched documents carry `-` in the last two columns. Ranks are 1-based.
pub fn report_tsv(model: &RulesModel, corpus: &Corpus, eval: &Evaluation, vocab: &Vocab) -> String {
    let mut out = String::from("doc_index\ttrue_label\trules_label\tmatched_rank\tmatched_pattern\n");
    for (i, (doc, (class, rank))) in corpus.docs.iter().zip(&eval.predictions).enumerate() {
        let (rank, pattern) = match rank {
            Some(r) => (
                (r + 1).to_string(),
                model.patterns.patterns[*r].render(vocab),
            ),
            None => ("-".into(), "-".into()),
        };
        out.push_str(&format!("{i}\t{}\t{class}\t{rank}\t{pattern}\n", doc.label));
    }
    out
}
