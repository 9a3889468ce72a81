//! Templated movie knowledge base for question answering: each question is paired with a
//! short article that mentions the answer entity.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_vocab, tokenize, Document, EntitySpan, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    DirectedBy,
    StarredActors,
    ReleaseYear,
    WrittenBy,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::DirectedBy,
        Relation::StarredActors,
        Relation::ReleaseYear,
        Relation::WrittenBy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::DirectedBy => "directed_by",
            Relation::StarredActors => "starred_actors",
            Relation::ReleaseYear => "release_year",
            Relation::WrittenBy => "written_by",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown relation {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaExample {
    pub question: Vec<u32>,
    pub question_raw: String,
    /// Document tokens with entity spans; `label` is unused.
    pub doc: Document,
    pub answer: u32,
    pub relation: Option<Relation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaCorpus {
    pub examples: Vec<QaExample>,
    pub vocab: Vocab,
}

impl QaCorpus {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn split_at(&self, n: usize) -> (QaCorpus, QaCorpus) {
        let n = n.min(self.examples.len());
        (
            QaCorpus {
                examples: self.examples[..n].to_vec(),
                vocab: self.vocab.clone(),
            },
            QaCorpus {
                examples: self.examples[n..].to_vec(),
                vocab: self.vocab.clone(),
            },
        )
    }

    pub fn filter_relation(&self, relation: Relation) -> QaCorpus {
        QaCorpus {
            examples: self
                .examples
                .iter()
                .filter(|e| e.relation == Some(relation))
                .cloned()
                .collect(),
            vocab: self.vocab.clone(),
        }
    }
}

const FIRST_NAMES: &[&str] = &[
    "john", "mary", "james", "linda", "robert", "susan", "michael", "karen", "david", "nancy",
    "richard", "lisa", "joseph", "betty", "thomas", "sandra", "charles", "ashley", "daniel",
    "emily", "paul", "donna", "mark", "carol", "steven", "ruth", "kevin", "sharon", "brian",
    "laura",
];

const LAST_NAMES: &[&str] = &[
    "smith", "johnson", "williams", "brown", "jones", "garcia", "miller", "davis", "martinez",
    "lopez", "wilson", "anderson", "taylor", "moore", "jackson", "martin", "lee", "thompson",
    "white", "harris", "clark", "lewis", "walker", "hall", "young", "allen", "king", "wright",
    "scott", "green",
];

const TITLE_ADJECTIVES: &[&str] = &[
    "silent", "dark", "golden", "lost", "broken", "hidden", "last", "final", "red", "cold",
    "wild", "secret", "burning", "frozen", "distant", "empty", "forgotten", "crimson", "electric",
    "midnight", "quiet", "savage", "shining", "endless", "hollow",
];

const TITLE_NOUNS: &[&str] = &[
    "river", "city", "road", "garden", "mountain", "island", "kingdom", "harbor", "forest",
    "station", "bridge", "empire", "horizon", "valley", "tower", "desert", "ocean", "summer",
    "winter", "storm", "mirror", "shadow", "promise", "frontier", "signal",
];

const FILLER_SENTENCES: &[&str] = &[
    "the film received mixed reviews .",
    "it was a box office success .",
    "the movie was shot on location .",
    "critics praised the soundtrack .",
];

fn question_templates(rel: Relation) -> &'static [&'static str] {
    match rel {
        Relation::DirectedBy => &["who directed {t} ?", "who is the director of {t} ?"],
        Relation::StarredActors => &["who starred in {t} ?", "which actor appears in {t} ?"],
        Relation::ReleaseYear => &["when was {t} released ?", "what year did {t} come out ?"],
        Relation::WrittenBy => &["who wrote {t} ?", "who was the writer of {t} ?"],
    }
}

struct Movie {
    title: String,
    year: String,
    director: String,
    actor: String,
    writer: String,
}

/// One piece of generated prose; entity slots are kept apart from plain text so spans can
/// be computed without re-scanning.
enum Piece<'a> {
    Text(&'a str),
    Entity(&'a str),
}

fn sentence_for<'a>(rel: Relation, m: &'a Movie, variant: bool) -> Vec<Piece<'a>> {
    use Piece::*;
    match (rel, variant) {
        (Relation::ReleaseYear, false) => vec![
            Entity(&m.title),
            Text("is a"),
            Entity(&m.year),
            Text("film ."),
        ],
        (Relation::ReleaseYear, true) => vec![
            Entity(&m.title),
            Text("was released in"),
            Entity(&m.year),
            Text("."),
        ],
        (Relation::DirectedBy, false) => {
            vec![Text("it was directed by"), Entity(&m.director), Text(".")]
        }
        (Relation::DirectedBy, true) => {
            vec![Text("the director is"), Entity(&m.director), Text(".")]
        }
        (Relation::StarredActors, false) => vec![Text("it stars"), Entity(&m.actor), Text(".")],
        (Relation::StarredActors, true) => vec![Text("starring"), Entity(&m.actor), Text(".")],
        (Relation::WrittenBy, false) => {
            vec![Text("it was written by"), Entity(&m.writer), Text(".")]
        }
        (Relation::WrittenBy, true) => {
            vec![Text("the screenplay is by"), Entity(&m.writer), Text(".")]
        }
    }
}

fn answer_of(rel: Relation, m: &Movie) -> &str {
    match rel {
        Relation::DirectedBy => &m.director,
        Relation::StarredActors => &m.actor,
        Relation::ReleaseYear => &m.year,
        Relation::WrittenBy => &m.writer,
    }
}

/// Entity surface forms get stable ids in order of first appearance.
struct EntityTable {
    names: Vec<String>,
}

impl EntityTable {
    fn id(&mut self, name: &str) -> u32 {
        match self.names.iter().position(|n| n == name) {
            Some(i) => i as u32,
            None => {
                self.names.push(name.to_owned());
                (self.names.len() - 1) as u32
            }
        }
    }
}

struct RawExample {
    question: String,
    document: String,
    answer: String,
    spans: Vec<(usize, usize, u32)>,
    relation: Relation,
}

fn person(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{}_{}",
        FIRST_NAMES.choose(rng).unwrap(),
        LAST_NAMES.choose(rng).unwrap()
    )
}

/// Builds `n_movies` movies, one article each and one question per relation.
/// Multi-word entities are single underscore-joined tokens. Deterministic in `seed`.
pub fn gen_qa(seed: u64, n_movies: usize) -> Result<QaCorpus> {
    if n_movies < 5 {
        return Err(Error::InvalidArgument("n_movies must be at least 5".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut titles = HashSet::new();
    let mut movies = Vec::with_capacity(n_movies);
    while movies.len() < n_movies {
        let base = format!(
            "the_{}_{}",
            TITLE_ADJECTIVES.choose(&mut rng).unwrap(),
            TITLE_NOUNS.choose(&mut rng).unwrap()
        );
        let title = if titles.contains(&base) {
            format!("{base}_{}", titles.len())
        } else {
            base
        };
        if !titles.insert(title.clone()) {
            continue;
        }
        let director = person(&mut rng);
        let mut actor = person(&mut rng);
        while actor == director {
            actor = person(&mut rng);
        }
        let mut writer = person(&mut rng);
        while writer == director || writer == actor {
            writer = person(&mut rng);
        }
        movies.push(Movie {
            title,
            year: rng.gen_range(1950..=2019).to_string(),
            director,
            actor,
            writer,
        });
    }

    let mut entities = EntityTable { names: Vec::new() };
    let mut raw = Vec::with_capacity(n_movies * 4);
    for movie in &movies {
        let mut sentences = vec![sentence_for(Relation::ReleaseYear, movie, rng.gen())];
        let mut rest: Vec<Vec<Piece>> = [
            Relation::DirectedBy,
            Relation::StarredActors,
            Relation::WrittenBy,
        ]
        .into_iter()
        .map(|rel| sentence_for(rel, movie, rng.gen()))
        .collect();
        if rng.gen_bool(0.5) {
            rest.push(vec![Piece::Text(FILLER_SENTENCES.choose(&mut rng).unwrap())]);
        }
        rest.shuffle(&mut rng);
        sentences.extend(rest);

        let mut words: Vec<String> = Vec::new();
        let mut spans = Vec::new();
        for piece in sentences.iter().flatten() {
            match piece {
                Piece::Text(t) => words.extend(tokenize(t)),
                Piece::Entity(name) => {
                    let id = entities.id(name);
                    spans.push((words.len(), words.len() + 1, id));
                    words.push((*name).to_owned());
                }
            }
        }
        let document = words.join(" ");
        for rel in Relation::ALL {
            let template = question_templates(rel).choose(&mut rng).unwrap();
            raw.push(RawExample {
                question: template.replace("{t}", &movie.title),
                document: document.clone(),
                answer: answer_of(rel, movie).to_owned(),
                spans: spans.clone(),
                relation: rel,
            });
        }
    }

    let vocab = build_vocab(
        raw.iter()
            .flat_map(|r| [r.question.as_str(), r.document.as_str()]),
        1,
    );
    let examples = raw
        .into_iter()
        .map(|r| {
            let answer = r
                .spans
                .iter()
                .find(|(_, _, id)| entities.names[*id as usize] == r.answer)
                .map(|(_, _, id)| *id)
                .expect("answer is mentioned in its article");
            let mut doc = Document::from_text(&r.document, 0, &vocab);
            doc.entity_spans = r
                .spans
                .iter()
                .map(|&(start, end, entity)| EntitySpan { start, end, entity })
                .collect();
            QaExample {
                question: vocab.encode(&tokenize(&r.question)),
                question_raw: r.question,
                doc,
                answer,
                relation: Some(r.relation),
            }
        })
        .collect();
    Ok(QaCorpus { examples, vocab })
}

fn spans_field(spans: &[EntitySpan]) -> String {
    spans
        .iter()
        .map(|s| format!("{}:{}:{}", s.start, s.end, s.entity))
        .collect::<Vec<_>>()
        .join(";")
}

/// `question<TAB>document<TAB>answer_entity<TAB>start:end:id;...[<TAB>relation]`
///
/// The answer column carries the answer's surface token.
pub fn write_qa_tsv(corpus: &QaCorpus) -> String {
    let mut out = String::new();
    for ex in &corpus.examples {
        let doc_text = if ex.doc.raw.is_empty() {
            corpus.vocab.decode(&ex.doc.tokens).join(" ")
        } else {
            ex.doc.raw.clone()
        };
        let question = if ex.question_raw.is_empty() {
            corpus.vocab.decode(&ex.question).join(" ")
        } else {
            ex.question_raw.clone()
        };
        let answer_span = ex
            .doc
            .entity_spans
            .iter()
            .find(|s| s.entity == ex.answer)
            .expect("answer span");
        let answer = corpus
            .vocab
            .decode(&ex.doc.tokens[answer_span.start..answer_span.end])
            .join(" ");
        out.push_str(&format!(
            "{}\t{}\t{}\t{}",
            question.replace('\t', " "),
            doc_text.replace('\t', " "),
            answer,
            spans_field(&ex.doc.entity_spans)
        ));
        if let Some(rel) = ex.relation {
            out.push('\t');
            out.push_str(rel.as_str());
        }
        out.push('\n');
    }
    out
}

struct ParsedLine {
    question: String,
    document: String,
    answer: String,
    spans: Vec<EntitySpan>,
    relation: Option<Relation>,
}

fn parse_qa_line(line: &str, line_no: usize) -> Result<ParsedLine> {
    let err = |msg: String| Error::Parse { line: line_no, msg };
    let fields: Vec<&str> = line.split('\t').collect();
    if !(4..=5).contains(&fields.len()) {
        return Err(err(format!("expected 4 or 5 fields, found {}", fields.len())));
    }
    let mut spans = Vec::new();
    for part in fields[3].split(';').filter(|p| !p.is_empty()) {
        let nums: Vec<&str> = part.split(':').collect();
        if nums.len() != 3 {
            return Err(err(format!("bad entity span {part:?}")));
        }
        let parse = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| err(format!("bad entity span {part:?}")))
        };
        let (start, end, entity) = (parse(nums[0])?, parse(nums[1])?, parse(nums[2])?);
        if start > usize::MAX as u64 || end > usize::MAX as u64 || entity > u32::MAX as u64 {
            return Err(err(format!("bad entity span {part:?}")));
        }
        spans.push(EntitySpan {
            start: start as usize,
            end: end as usize,
            entity: entity as u32,
        });
    }
    let relation = match fields.get(4) {
        Some(r) => Some(r.trim().parse().map_err(|e: Error| err(e.to_string()))?),
        None => None,
    };
    Ok(ParsedLine {
        question: fields[0].to_owned(),
        document: fields[1].to_owned(),
        answer: fields[2].trim().to_owned(),
        spans,
        relation,
    })
}

/// Parses a QA TSV file. With `vocab = None` a vocabulary is built from the file itself.
pub fn parse_qa_tsv(input: &str, vocab: Option<&Vocab>) -> Result<QaCorpus> {
    let parsed: Vec<ParsedLine> = input
        .lines()
        .enumerate()
        .map(|(i, l)| parse_qa_line(l, i + 1))
        .collect::<Result<_>>()?;
    if parsed.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = match vocab {
        Some(v) => v.clone(),
        None => build_vocab(
            parsed
                .iter()
                .flat_map(|p| [p.question.as_str(), p.document.as_str()]),
            1,
        ),
    };
    let mut examples = Vec::with_capacity(parsed.len());
    for (idx, p) in parsed.into_iter().enumerate() {
        let line = idx + 1;
        let err = |msg: String| Error::Parse { line, msg };
        let doc_tokens = tokenize(&p.document);
        let mut doc = Document::from_text(&p.document, 0, &vocab);
        doc.entity_spans = p.spans;
        if doc.is_empty() {
            return Err(err("empty document".into()));
        }
        doc.validate(vocab.len()).map_err(|e| err(e.to_string()))?;
        let answer = doc
            .entity_spans
            .iter()
            .find(|s| doc_tokens[s.start..s.end].join(" ") == p.answer)
            .map(|s| s.entity)
            .ok_or_else(|| err(format!("answer {:?} is not an entity of the document", p.answer)))?;
        let question = vocab.encode(&tokenize(&p.question));
        if question.is_empty() {
            return Err(err("empty question".into()));
        }
        examples.push(QaExample {
            question,
            question_raw: p.question,
            doc,
            answer,
            relation: p.relation,
        });
    }
    Ok(QaCorpus { examples, vocab })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answers_occur_in_their_documents() {
        let qa = gen_qa(1, 50).unwrap();
        assert_eq!(qa.len(), 200);
        for ex in &qa.examples {
            ex.doc.validate(qa.vocab.len()).unwrap();
            let span = ex
                .doc
                .entity_spans
                .iter()
                .find(|s| s.entity == ex.answer)
                .expect("answer mentioned");
            assert_eq!(span.end - span.start, 1);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = gen_qa(9, 20).unwrap();
        let b = gen_qa(9, 20).unwrap();
        assert_eq!(write_qa_tsv(&a), write_qa_tsv(&b));
        assert_eq!(a, b);
    }

    #[test]
    fn relations_are_uniform() {
        let qa = gen_qa(4, 250).unwrap();
        let n = qa.len() as f64;
        for rel in Relation::ALL {
            let share = qa.examples.iter().filter(|e| e.relation == Some(rel)).count() as f64 / n;
            assert!((share - 0.25).abs() <= 0.05, "{rel}: {share}");
        }
    }

    #[test]
    fn tsv_round_trip() {
        let qa = gen_qa(2, 10).unwrap();
        let text = write_qa_tsv(&qa);
        let back = parse_qa_tsv(&text, Some(&qa.vocab)).unwrap();
        assert_eq!(back.examples.len(), qa.examples.len());
        for (a, b) in back.examples.iter().zip(&qa.examples) {
            assert_eq!(a.question, b.question);
            assert_eq!(a.doc.tokens, b.doc.tokens);
            assert_eq!(a.doc.entity_spans, b.doc.entity_spans);
            assert_eq!(a.answer, b.answer);
            assert_eq!(a.relation, b.relation);
        }
    }

    #[test]
    fn rejects_answer_missing_from_document() {
        let line = "who directed x ?\tx is a 1999 film .\tbob\t0:1:0;3:4:1\n";
        assert!(matches!(
            parse_qa_tsv(line, None),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad_span = "q ?\tx y\tx\t0:9:0\n";
        assert!(parse_qa_tsv(bad_span, None).is_err());
    }
}
