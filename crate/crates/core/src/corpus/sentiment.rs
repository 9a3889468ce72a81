//! Planted-phrase sentiment corpora: every document hides exactly one phrase whose class
//! decides the label, which gives phrase extraction a ground truth to recover.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_vocab, tokenize, Corpus, Document};
use crate::error::{Error, Result};

/// Label 0 is negative, label 1 positive.
pub const NEGATIVE: usize = 0;
pub const POSITIVE: usize = 1;

const NEGATIVE_PHRASES: &[&str] = &[
    "worst customer service ever",
    "won't be back",
    "not worth the money",
    "never go back there",
    "horrible horrible horrible",
    "disappointed in this place",
    "a weak script",
    "waste of time",
    "poorly executed",
    "bad acting",
    "plain bad",
    "lackluster",
];

const POSITIVE_PHRASES: &[&str] = &[
    "highly recommended !",
    "will definitely be coming back",
    "love everything about",
    "hidden gem .",
    "overall great experience",
    "love love love this place",
    "well worth your time",
    "pleasure to watch",
    "surprisingly funny",
    "deeply satisfying",
    "emotional wallop",
    "riveting documentary",
];

const FILLER: &[&str] = &[
    "the", "a", "an", "and", "or", "we", "they", "i", "my", "our", "it", "was", "were", "is",
    "had", "has", "ordered", "went", "came", "sat", "table", "menu", "food", "dinner", "lunch",
    "breakfast", "waiter", "staff", "room", "hotel", "movie", "film", "plot", "story", "actor",
    "scene", "music", "kitchen", "chicken", "rice", "soup", "salad", "bread", "coffee", "tea",
    "water", "wine", "beer", "dessert", "cake", "pizza", "pasta", "burger", "fries", "sauce",
    "on", "in", "at", "for", "with", "from", "after", "before", "during", "then", "later",
    "friday", "saturday", "sunday", "night", "morning", "evening", "today", "yesterday",
    "friend", "friends", "family", "wife", "husband", "kids", "parents", "group", "party",
    "parking", "street", "downtown", "corner", "window", "seat", "seats", "booth", "bar",
    "counter", "line", "order", "bill", "check", "price", "prices", "portion", "portions",
    "plate", "bowl", "glass", "cup", "side", "main", "course", "special", "usual", "regular",
    "small", "large", "hot", "cold", "warm", "fresh", "spicy", "sweet", "salty", "quick",
    "slow", "busy", "quiet", "loud", "early", "late", "two", "three", "four", "five", "about",
    "around", "here", "there", "again", "also", "just", "some", "many", "each", "other",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedPhrase {
    pub tokens: Vec<String>,
    pub class: usize,
}

impl PlantedPhrase {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// The first `n` planted phrases, alternating negative and positive. Beyond the built-in
/// lists, synthetic two-word phrases are minted.
fn planted_phrases(n: usize) -> Vec<PlantedPhrase> {
    (0..n)
        .map(|k| {
            let class = if k % 2 == 0 { NEGATIVE } else { POSITIVE };
            let list = if class == NEGATIVE {
                NEGATIVE_PHRASES
            } else {
                POSITIVE_PHRASES
            };
            let text = match list.get(k / 2) {
                Some(t) => (*t).to_owned(),
                None => format!("planted{k} marker{k}"),
            };
            PlantedPhrase {
                tokens: tokenize(&text),
                class,
            }
        })
        .collect()
}

/// Generates `n_docs` binary documents of 5..=40 filler tokens with one planted phrase
/// each. Deterministic in `seed`.
pub fn gen_sentiment(
    seed: u64,
    n_docs: usize,
    n_planted_phrases: usize,
) -> Result<(Corpus, Vec<PlantedPhrase>)> {
    if n_docs < 10 {
        return Err(Error::InvalidArgument("n_docs must be at least 10".into()));
    }
    if n_planted_phrases < 2 {
        return Err(Error::InvalidArgument(
            "n_planted_phrases must be at least 2".into(),
        ));
    }
    let planted = planted_phrases(n_planted_phrases);
    let planted_words: HashSet<&str> = planted
        .iter()
        .flat_map(|p| p.tokens.iter().map(String::as_str))
        .collect();
    let filler: Vec<&str> = FILLER
        .iter()
        .copied()
        .filter(|w| !planted_words.contains(w))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let phrase = &planted[rng.gen_range(0..planted.len())];
        let len = rng.gen_range(5..=40);
        let mut words: Vec<&str> = (0..len)
            .map(|_| *filler.choose(&mut rng).expect("filler is non-empty"))
            .collect();
        let at = rng.gen_range(0..=len);
        words.splice(at..at, phrase.tokens.iter().map(String::as_str));
        records.push((phrase.class, words.join(" ")));
    }

    let vocab = build_vocab(records.iter().map(|(_, t)| t.as_str()), 1);
    let docs = records
        .iter()
        .map(|(label, text)| Document::from_text(text, *label, &vocab))
        .collect();
    Ok((
        Corpus {
            docs,
            vocab,
            num_classes: 2,
        },
        planted,
    ))
}

/// Sidecar format: `class<TAB>phrase`.
pub fn write_planted_tsv(planted: &[PlantedPhrase]) -> String {
    planted
        .iter()
        .map(|p| format!("{}\t{}\n", p.class, p.text()))
        .collect()
}

pub fn parse_planted_tsv(input: &str) -> Result<Vec<PlantedPhrase>> {
    input
        .lines()
        .enumerate()
        .map(|(idx, line)| {
            let err = |msg: &str| Error::Parse {
                line: idx + 1,
                msg: msg.to_owned(),
            };
            let (class, phrase) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `class<TAB>phrase`"))?;
            let class = class.trim().parse().map_err(|_| err("invalid class"))?;
            let tokens = tokenize(phrase);
            if tokens.is_empty() {
                return Err(err("empty phrase"));
            }
            Ok(PlantedPhrase { tokens, class })
        })
        .collect()
}
