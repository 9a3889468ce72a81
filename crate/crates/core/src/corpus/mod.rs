//! Tokenization, vocabularies, labeled corpora and their TSV encodings.

mod kb;
mod sentiment;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

pub use kb::{gen_qa, parse_qa_tsv, write_qa_tsv, QaCorpus, QaExample, Relation};
pub use sentiment::{gen_sentiment, parse_planted_tsv, write_planted_tsv, PlantedPhrase};

use crate::error::{Error, Result};

pub const UNK_TOKEN: &str = "<unk>";
pub const ENT_TOKEN: &str = "@ENT@";

const PUNCTUATION: [char; 8] = ['.', ',', '!', '?', '"', '\'', '(', ')'];

fn is_split_char(c: char) -> bool {
    PUNCTUATION.contains(&c)
}

/// Lowercases, splits on whitespace and breaks `. , ! ? " ' ( )` into their own tokens.
///
/// The entity placeholder `@ENT@` survives verbatim so patterns can be written back
/// through the tokenizer.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut start = 0;
        for (idx, c) in chunk.char_indices() {
            if is_split_char(c) {
                push_word(&chunk[start..idx], &mut out);
                out.push(c.to_string());
                start = idx + c.len_utf8();
            }
        }
        push_word(&chunk[start..], &mut out);
    }
    out
}

fn push_word(word: &str, out: &mut Vec<String>) {
    if word.is_empty() {
        return;
    }
    if word == ENT_TOKEN {
        out.push(word.to_owned());
        return;
    }
    // Lowercasing a few exotic code points yields whitespace-free but multi-char output;
    // split again so the result never holds whitespace.
    let lower = word.to_lowercase();
    for piece in lower.split_whitespace() {
        out.push(piece.to_owned());
    }
}

/// Token universe with fixed ids for the unknown-word and entity placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocab {
    pub const UNK: u32 = 0;
    pub const ENT: u32 = 1;

    /// Builds a vocabulary from an ordered token list whose first two entries must be the
    /// placeholders.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[0] != UNK_TOKEN || tokens[1] != ENT_TOKEN {
            return Err(Error::Format(format!(
                "vocabulary must start with {UNK_TOKEN} and {ENT_TOKEN}"
            )));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Format(format!("invalid vocabulary token {tok:?}")));
            }
            if token_to_id.insert(tok.clone(), id as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Self {
            id_to_token: tokens,
            token_to_id,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Maps tokens to ids; out-of-vocabulary tokens become [`Vocab::UNK`].
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(Self::UNK))
            .collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN))
            .collect()
    }
}

/// Counts tokens over `docs` and keeps those seen at least `min_count` times.
///
/// Ids after the two placeholders go by descending frequency, ties broken lexicographically.
pub fn build_vocab<I, S>(docs: I, min_count: usize) -> Vocab
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let min_count = min_count.max(1);
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in docs {
        for tok in tokenize(doc.as_ref()) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(tok, n)| *n >= min_count && tok != UNK_TOKEN && tok != ENT_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens = vec![UNK_TOKEN.to_owned(), ENT_TOKEN.to_owned()];
    tokens.extend(kept.into_iter().map(|(t, _)| t));
    Vocab::from_tokens(tokens).expect("placeholders are in place")
}

/// Token span `[start, end)` of an entity mention, with its knowledge-base id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub entity: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub tokens: Vec<u32>,
    pub label: usize,
    pub raw: String,
    pub entity_spans: Vec<EntitySpan>,
}

impl Document {
    pub fn new(tokens: Vec<u32>, label: usize) -> Self {
        Self {
            tokens,
            label,
            raw: String::new(),
            entity_spans: Vec::new(),
        }
    }

    pub fn from_text(text: &str, label: usize, vocab: &Vocab) -> Self {
        Self {
            tokens: vocab.encode(&tokenize(text)),
            label,
            raw: text.to_owned(),
            entity_spans: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks id bounds and entity span ordering.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if let Some(&id) = self.tokens.iter().find(|&&id| id as usize >= vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                size: vocab_size,
            });
        }
        let mut prev_end = 0;
        for span in &self.entity_spans {
            if span.start >= span.end || span.end > self.tokens.len() || span.start < prev_end {
                return Err(Error::Format(format!(
                    "entity span {}:{} is empty, out of bounds, overlapping or unsorted",
                    span.start, span.end
                )));
            }
            prev_end = span.end;
        }
        Ok(())
    }

    /// Last-token position of every entity span, in document order.
    pub fn entity_positions(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.entity_spans.iter().map(|s| (s.end - 1, s.entity))
    }

    pub fn is_entity_position(&self, pos: usize) -> bool {
        self.entity_spans
            .iter()
            .any(|s| s.start <= pos && pos < s.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub docs: Vec<Document>,
    pub vocab: Vocab,
    pub num_classes: usize,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Encodes `(label, text)` records against an existing vocabulary.
    pub fn from_records(
        records: &[(usize, String)],
        vocab: Vocab,
        num_classes: usize,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut docs = Vec::with_capacity(records.len());
        for (line, (label, text)) in records.iter().enumerate() {
            if *label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: *label,
                    classes: num_classes,
                });
            }
            let doc = Document::from_text(text, *label, &vocab);
            if doc.is_empty() {
                return Err(Error::Parse {
                    line: line + 1,
                    msg: "document has no tokens".into(),
                });
            }
            docs.push(doc);
        }
        Ok(Self {
            docs,
            vocab,
            num_classes,
        })
    }

    /// Splits off the trailing documents; both halves share the vocabulary.
    pub fn split_at(&self, n: usize) -> (Corpus, Corpus) {
        let n = n.min(self.docs.len());
        let head = Corpus {
            docs: self.docs[..n].to_vec(),
            vocab: self.vocab.clone(),
            num_classes: self.num_classes,
        };
        let tail = Corpus {
            docs: self.docs[n..].to_vec(),
            vocab: self.vocab.clone(),
            num_classes: self.num_classes,
        };
        (head, tail)
    }

    /// Index of the most frequent label; ties go to the smaller label.
    pub fn majority_class(&self) -> usize {
        let mut counts = vec![0usize; self.num_classes.max(1)];
        for d in &self.docs {
            counts[d.label] += 1;
        }
        let mut best = 0;
        for (i, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = i;
            }
        }
        best
    }
}

/// Parses `label<TAB>text` lines.
pub fn parse_labeled_tsv(input: &str) -> Result<Vec<(usize, String)>> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let (label, text) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "expected `label<TAB>text`".into(),
        })?;
        let label: usize = label.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("invalid label {label:?}"),
        })?;
        if tokenize(text).is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "document has no tokens".into(),
            });
        }
        records.push((label, text.to_owned()));
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(records)
}

fn classes_for(records: &[(usize, String)]) -> usize {
    records.iter().map(|(l, _)| l + 1).max().unwrap_or(0).max(2)
}

/// Parses a corpus and builds its vocabulary from the same text.
pub fn parse_tsv(input: &str, min_count: usize) -> Result<Corpus> {
    let records = parse_labeled_tsv(input)?;
    let vocab = build_vocab(records.iter().map(|(_, t)| t.as_str()), min_count);
    let classes = classes_for(&records);
    Corpus::from_records(&records, vocab, classes)
}

pub fn load_tsv(path: impl AsRef<Path>, min_count: usize) -> Result<Corpus> {
    parse_tsv(&fs::read_to_string(path)?, min_count)
}

/// Loads a corpus against an existing vocabulary, e.g. a dev set for a trained model.
pub fn load_tsv_with_vocab(
    path: impl AsRef<Path>,
    vocab: &Vocab,
    num_classes: usize,
) -> Result<Corpus> {
    let records = parse_labeled_tsv(&fs::read_to_string(path)?)?;
    Corpus::from_records(&records, vocab.clone(), num_classes)
}

fn sanitize_field(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

/// Serializes documents as `label<TAB>text`, falling back to the decoded tokens when a
/// document carries no raw text.
pub fn to_tsv(corpus: &Corpus) -> String {
    let mut out = String::new();
    for doc in &corpus.docs {
        let text = if doc.raw.is_empty() {
            corpus.vocab.decode(&doc.tokens).join(" ")
        } else {
            sanitize_field(&doc.raw)
        };
        out.push_str(&format!("{}\t{}\n", doc.label, text));
    }
    out
}

pub fn write_tsv(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_tsv(corpus))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(text: &str) -> Vec<String> {
        tokenize(text)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(toks("Great food!"), ["great", "food", "!"]);
        assert!(toks("").is_empty());
        assert_eq!(toks("won't be back"), ["won", "'", "t", "be", "back"]);
        assert_eq!(toks("(a,b)  \"C\"?"), ["(", "a", ",", "b", ")", "\"", "c", "\"", "?"]);
        assert_eq!(toks("written by @ENT@."), ["written", "by", "@ENT@", "."]);
    }

    #[test]
    fn vocab_threshold_and_order() {
        let v = build_vocab(["a a b"], 2);
        assert_eq!(v.tokens(), ["<unk>", "@ENT@", "a"]);
        let v = build_vocab(["a b", "b c"], 1);
        assert_eq!(v.id("b"), Some(2));
        assert_eq!(v.id("a"), Some(3));
        assert_eq!(v.id("c"), Some(4));
        assert_eq!(v.encode(&["zzz"]), vec![Vocab::UNK]);
    }

    #[test]
    fn vocab_rejects_missing_placeholders() {
        assert!(Vocab::from_tokens(vec!["a".into(), "b".into()]).is_err());
        let dup = vec![UNK_TOKEN.into(), ENT_TOKEN.into(), "x".into(), "x".into()];
        assert!(Vocab::from_tokens(dup).is_err());
    }

    #[test]
    fn tsv_single_line() {
        let c = parse_tsv("1\tgreat movie\n", 1).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.docs[0].label, 1);
        assert_eq!(c.vocab.decode(&c.docs[0].tokens), ["great", "movie"]);
    }

    #[test]
    fn tsv_errors_name_the_line() {
        match parse_tsv("x\thello", 1) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_tsv("0\tfine\nno tab here\n", 1) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_tsv("", 1), Err(Error::EmptyCorpus)));
        assert!(matches!(parse_tsv("0\t  ", 1), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn tsv_round_trip_through_file() {
        let c = parse_tsv("0\tthe soup was cold .\n1\tHighly recommended!\n", 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        write_tsv(&c, &path).unwrap();
        let back = load_tsv_with_vocab(&path, &c.vocab, c.num_classes).unwrap();
        assert_eq!(back.docs.len(), c.docs.len());
        for (a, b) in back.docs.iter().zip(&c.docs) {
            assert_eq!(a.tokens, b.tokens);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn entity_span_validation() {
        let mut d = Document::new(vec![2, 3, 4], 0);
        d.entity_spans = vec![
            EntitySpan { start: 0, end: 1, entity: 0 },
            EntitySpan { start: 2, end: 3, entity: 1 },
        ];
        assert!(d.validate(5).is_ok());
        assert!(d.validate(4).is_err());
        d.entity_spans.swap(0, 1);
        assert!(d.validate(5).is_err());
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(text in "\\PC{0,60}") {
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.iter().all(|t| !t.is_empty()));
        }

        #[test]
        fn tsv_round_trip(records in proptest::collection::vec((0usize..3, "[a-zA-Z!?.,' ]{0,30}[a-z]"), 1..8)) {
            let text: String = records.iter().map(|(l, t)| format!("{l}\t{t}\n")).collect();
            let corpus = parse_tsv(&text, 1).unwrap();
            let again = parse_tsv(&to_tsv(&corpus), 1).unwrap();
            prop_assert_eq!(corpus.docs.len(), again.docs.len());
            for (a, b) in corpus.docs.iter().zip(&again.docs) {
                prop_assert_eq!(&a.tokens, &b.tokens);
                prop_assert_eq!(a.label, b.label);
            }
        }
    }
}
