//! Question-conditioned reader. A question LSTM is run first and its final hidden state is
//! appended to every document word embedding; each document position then gets a two-way
//! "is this entity the answer" head. Also entity-anchored pattern mining over the reader and
//! the pattern-based answerer.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Document, QaCorpus, QaExample, Relation, Vocab};
use crate::error::{Error, Result};
use crate::importance::{beta_scores_at, gamma_scores_at, gradient_raw_at, normalize_columns};
use crate::importance::{ImportanceMatrix, Method};
use crate::linalg::Matrix;
use crate::lstm::{embed, run_cell, softmax_probs, Dims, LstmParams, Step};
use crate::phrases::{
    corpus_fingerprint, exceeds_threshold, score_occurrences, MiningConfig, MiningMeta, Pattern,
    PatternList,
};
use crate::training::{
    backward_cell, clip_tensors, init_params, loss, AdamState, Grads, DEFAULT_CLIP_NORM,
};

/// Index of the "is the answer" class of the per-position head.
pub const ANSWER_CLASS: usize = 1;

/// Separate question encoder and document reader. The encoder's output head is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct QaParams {
    pub encoder: LstmParams,
    pub reader: LstmParams,
}

fn encoder_dims(vocab: usize, embed: usize, q_hidden: usize) -> Dims {
    Dims {
        vocab,
        embed,
        hidden: q_hidden,
        classes: 0,
        input: embed,
    }
}

fn reader_dims(vocab: usize, embed: usize, hidden: usize, q_hidden: usize) -> Dims {
    Dims {
        vocab,
        embed,
        hidden,
        classes: 2,
        input: embed + q_hidden,
    }
}

impl QaParams {
    pub fn zeros(vocab: usize, embed: usize, hidden: usize, q_hidden: usize) -> Self {
        Self {
            encoder: LstmParams::zeros(encoder_dims(vocab, embed, q_hidden)),
            reader: LstmParams::zeros(reader_dims(vocab, embed, hidden, q_hidden)),
        }
    }

    /// Random initialization; the two networks draw from differently seeded streams.
    pub fn init(vocab: usize, embed: usize, hidden: usize, q_hidden: usize, seed: u64) -> Self {
        Self {
            encoder: init_params(encoder_dims(vocab, embed, q_hidden), seed),
            reader: init_params(reader_dims(vocab, embed, hidden, q_hidden), seed ^ 0x5bd1_e995),
        }
    }

    pub fn q_hidden(&self) -> usize {
        self.encoder.dims.hidden
    }

    /// Encoder tensors followed by reader tensors.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.tensors();
        out.extend(self.reader.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.reader.tensors_mut());
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.reader.validate()?;
        let (e, r) = (&self.encoder.dims, &self.reader.dims);
        if r.input != r.embed + e.hidden {
            return Err(Error::Dimension(format!(
                "reader input width {} != embedding {} + question width {}",
                r.input, r.embed, e.hidden
            )));
        }
        if r.classes != 2 {
            return Err(Error::Dimension(format!(
                "reader head must have 2 classes, found {}",
                r.classes
            )));
        }
        if e.vocab != r.vocab {
            return Err(Error::Dimension(format!(
                "encoder vocabulary {} != reader vocabulary {}",
                e.vocab, r.vocab
            )));
        }
        Ok(())
    }
}

/// Final hidden state of the question LSTM.
pub fn encode_question(qp: &QaParams, question: &[u32]) -> Result<Vec<f64>> {
    Ok(run_question(qp, question)?.last().unwrap().hidden.clone())
}

fn run_question(qp: &QaParams, question: &[u32]) -> Result<Vec<Step>> {
    if question.is_empty() {
        return Err(Error::InvalidArgument("empty question".into()));
    }
    run_cell(&qp.encoder, &embed(&qp.encoder, question)?)
}

/// Reader pass with per-position outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReaderTrace {
    pub question_steps: Vec<Step>,
    pub h_q: Vec<f64>,
    pub steps: Vec<Step>,
    /// `W h_t` for every position.
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

impl ReaderTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Runs the reader over `tokens` conditioned on a given question vector.
pub fn read_with(reader: &LstmParams, h_q: &[f64], tokens: &[u32]) -> Result<(Vec<Step>, Vec<Vec<f64>>)> {
    let width = reader.dims.input - reader.dims.embed;
    if h_q.len() != width {
        return Err(Error::Dimension(format!(
            "question vector has width {}, reader expects {width}",
            h_q.len()
        )));
    }
    let inputs: Vec<Vec<f64>> = embed(reader, tokens)?
        .into_iter()
        .map(|mut x| {
            x.extend_from_slice(h_q);
            x
        })
        .collect();
    let steps = run_cell(reader, &inputs)?;
    let logits = steps.iter().map(|s| reader.w_out.mul_vec(&s.hidden)).collect();
    Ok((steps, logits))
}

pub fn read(qp: &QaParams, question: &[u32], tokens: &[u32]) -> Result<ReaderTrace> {
    let question_steps = run_question(qp, question)?;
    let h_q = question_steps.last().unwrap().hidden.clone();
    let (steps, logits) = read_with(&qp.reader, &h_q, tokens)?;
    let probs = logits.iter().map(|l: &Vec<f64>| softmax_probs(l)).collect();
    Ok(ReaderTrace {
        question_steps,
        h_q,
        steps,
        logits,
        probs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaPrediction {
    /// `(position, entity, p_t)` for each entity occurrence in document order.
    pub occurrences: Vec<(usize, u32, Vec<f64>)>,
    pub answer: u32,
}

pub fn predict(qp: &QaParams, question: &[u32], doc: &Document) -> Result<QaPrediction> {
    if doc.entity_spans.is_empty() {
        return Err(Error::NoEntities);
    }
    let trace = read(qp, question, &doc.tokens)?;
    let occurrences: Vec<(usize, u32, Vec<f64>)> = doc
        .entity_positions()
        .map(|(t, id)| (t, id, trace.probs[t].clone()))
        .collect();
    let mut best = &occurrences[0];
    for occ in &occurrences[1..] {
        if occ.2[ANSWER_CLASS] > best.2[ANSWER_CLASS] {
            best = occ;
        }
    }
    Ok(QaPrediction {
        answer: best.1,
        occurrences,
    })
}

/// Entity with the highest answer probability; ties go to the earliest occurrence.
pub fn answer(qp: &QaParams, question: &[u32], doc: &Document) -> Result<u32> {
    Ok(predict(qp, question, doc)?.answer)
}

/// Fraction of examples whose predicted entity is the gold answer.
pub fn hits_at_1(qp: &QaParams, corpus: &QaCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let hits: Vec<bool> = corpus
        .examples
        .par_iter()
        .map(|ex| match answer(qp, &ex.question, &ex.doc) {
            Ok(a) => Ok(a == ex.answer),
            Err(Error::NoEntities) => Ok(false),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / corpus.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaGrads {
    pub encoder: LstmParams,
    pub reader: LstmParams,
}

impl QaGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = self.encoder.tensors();
        out.extend(self.reader.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.reader.tensors_mut());
        out
    }
}

/// Summed cross-entropy over `targets` (`(position, label)` pairs) and its gradients with
/// respect to both networks, embeddings included.
pub fn qa_loss_grads(
    qp: &QaParams,
    question: &[u32],
    tokens: &[u32],
    targets: &[(usize, usize)],
) -> Result<(f64, QaGrads)> {
    let trace = read(qp, question, tokens)?;
    let h = qp.reader.dims.hidden;
    let mut reader = LstmParams::zeros(qp.reader.dims);
    let mut dh_ext = vec![vec![0.0; h]; trace.len()];
    let mut total = 0.0;
    for &(t, label) in targets {
        if t >= trace.len() {
            return Err(Error::Dimension(format!(
                "target position {t} outside document of length {}",
                trace.len()
            )));
        }
        total += loss(&trace.logits[t], label)?;
        let mut dlogits = trace.probs[t].clone();
        dlogits[label] -= 1.0;
        reader.w_out.add_outer(&dlogits, &trace.steps[t].hidden);
        qp.reader.w_out.mul_vec_t_acc(&dlogits, &mut dh_ext[t]);
    }
    let d_inputs = backward_cell(&qp.reader, &trace.steps, &dh_ext, &mut reader);
    let e = qp.reader.dims.embed;
    let q = qp.q_hidden();
    let mut dh_q = vec![0.0; q];
    for dx in &d_inputs {
        for (acc, g) in dh_q.iter_mut().zip(&dx[e..]) {
            *acc += g;
        }
    }
    let mut reader = Grads {
        params: reader,
        d_inputs,
    };
    reader.scatter_embedding(tokens);

    let mut encoder = LstmParams::zeros(qp.encoder.dims);
    let mut dh_ext_q = vec![vec![0.0; q]; trace.question_steps.len()];
    *dh_ext_q.last_mut().unwrap() = dh_q;
    let d_q = backward_cell(&qp.encoder, &trace.question_steps, &dh_ext_q, &mut encoder);
    let mut encoder = Grads {
        params: encoder,
        d_inputs: d_q,
    };
    encoder.scatter_embedding(question);
    Ok((
        total,
        QaGrads {
            encoder: encoder.params,
            reader: reader.params,
        },
    ))
}

/// Gold answer occurrences labeled 1 plus up to `negatives` sampled non-answer occurrences
/// labeled 0, sorted by position.
pub fn training_targets(ex: &QaExample, negatives: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let (gold, other): (Vec<_>, Vec<_>) =
        ex.doc.entity_positions().partition(|&(_, id)| id == ex.answer);
    let mut targets: Vec<(usize, usize)> = gold.into_iter().map(|(t, _)| (t, 1)).collect();
    targets.extend(
        other
            .choose_multiple(rng, negatives)
            .map(|&(t, _)| (t, 0)),
    );
    targets.sort_unstable();
    targets
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaTrainConfig {
    pub embed: usize,
    pub hidden: usize,
    pub q_hidden: usize,
    pub seed: u64,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// Non-answer entity occurrences sampled per example.
    pub negatives: usize,
}

impl Default for QaTrainConfig {
    fn default() -> Self {
        Self {
            embed: 32,
            hidden: 32,
            q_hidden: 32,
            seed: 0,
            max_epochs: 10,
            patience: 3,
            lr: 1e-3,
            clip_norm: DEFAULT_CLIP_NORM,
            negatives: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaTrainOutcome {
    pub params: QaParams,
    pub best_dev_hits: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub dev_history: Vec<f64>,
}

/// Per-example Adam updates over both networks with early stopping on dev hits@1.
pub fn qa_train(train: &QaCorpus, dev: &QaCorpus, config: &QaTrainConfig) -> Result<QaTrainOutcome> {
    if train.is_empty() || dev.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if train.vocab != dev.vocab {
        return Err(Error::InvalidArgument(
            "train and dev corpora must share a vocabulary".into(),
        ));
    }
    let mut qp = QaParams::init(
        train.vocab.len(),
        config.embed,
        config.hidden,
        config.q_hidden,
        config.seed,
    );
    let mut adam = AdamState::for_tensors(&qp.tensors(), config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut best = (f64::NEG_INFINITY, qp.clone(), 0usize);
    let mut history = Vec::new();
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs.max(1) {
        order.shuffle(&mut rng);
        for &i in &order {
            let ex = &train.examples[i];
            let targets = training_targets(ex, config.negatives, &mut rng);
            if targets.is_empty() {
                continue;
            }
            let (_, mut grads) = qa_loss_grads(&qp, &ex.question, &ex.doc.tokens, &targets)?;
            clip_tensors(grads.tensors_mut(), config.clip_norm);
            adam.step_tensors(qp.tensors_mut(), grads.tensors());
        }
        let hits = hits_at_1(&qp, dev)?;
        history.push(hits);
        if hits > best.0 {
            best = (hits, qp.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    Ok(QaTrainOutcome {
        params: best.1,
        best_dev_hits: best.0,
        best_epoch: best.2,
        epochs_run: history.len(),
        dev_history: history,
    })
}

/// Importance of every word up to `t` for the head at position `t`.
pub fn importance_at(qp: &QaParams, trace: &ReaderTrace, t: usize, method: Method) -> ImportanceMatrix {
    let w_out: &Matrix = &qp.reader.w_out;
    match method {
        Method::Beta => beta_scores_at(w_out, &trace.steps, t),
        Method::Gamma => gamma_scores_at(w_out, &trace.steps, t),
        Method::Gradient => ImportanceMatrix {
            method,
            scores: normalize_columns(gradient_raw_at(
                &qp.reader,
                &trace.steps,
                &trace.probs[t],
                t,
                qp.reader.dims.embed,
            )),
        },
    }
}

/// Tokens `start..=t` with every entity position replaced by the ENT id.
fn entity_window(doc: &Document, start: usize, t: usize) -> Vec<u32> {
    (start..=t)
        .map(|p| {
            if doc.is_entity_position(p) {
                Vocab::ENT
            } else {
                doc.tokens[p]
            }
        })
        .collect()
}

/// Whether `pattern` matches the words ending at position `t` of `doc`. ENT matches any
/// entity token and nothing else; anchored patterns must start at the first word.
pub fn matches_at(pattern: &Pattern, doc: &Document, t: usize) -> bool {
    let k = pattern.tokens.len();
    if k == 0 || k > t + 1 || t >= doc.tokens.len() {
        return false;
    }
    let start = t + 1 - k;
    if pattern.anchored_start && start != 0 {
        return false;
    }
    pattern.tokens.iter().enumerate().all(|(i, &tok)| {
        let p = start + i;
        if doc.is_entity_position(p) {
            tok == Vocab::ENT
        } else {
            tok == doc.tokens[p]
        }
    })
}

/// One binary instance: an entity occurrence with the importance of its own head.
struct Instance {
    ex: usize,
    t: usize,
    imp: ImportanceMatrix,
}

/// Mines answer patterns. Every entity occurrence is a binary task ("is this the answer");
/// candidates end at the entity, and only patterns of the answer class are kept.
pub fn qa_extract_patterns(
    corpus: &QaCorpus,
    qp: &QaParams,
    method: Method,
    config: &MiningConfig,
) -> Result<PatternList> {
    if config.threshold <= 0.0 || config.threshold.is_nan() {
        return Err(Error::InvalidArgument("threshold must be positive".into()));
    }
    let per_example: Vec<Vec<Instance>> = corpus
        .examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            if ex.doc.entity_spans.is_empty() {
                return Ok(Vec::new());
            }
            let trace = read(qp, &ex.question, &ex.doc.tokens)?;
            Ok(ex
                .doc
                .entity_positions()
                .map(|(t, _)| Instance {
                    ex: i,
                    t,
                    imp: importance_at(qp, &trace, t, method),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let instances: Vec<Instance> = per_example.into_iter().flatten().collect();

    let mut candidates: BTreeSet<(Vec<u32>, bool)> = BTreeSet::new();
    for inst in &instances {
        let doc = &corpus.examples[inst.ex].doc;
        for len in 1..=config.max_len.min(inst.t + 1) {
            let start = inst.t + 1 - len;
            if !exceeds_threshold(method, &inst.imp.scores[start], config.threshold) {
                break;
            }
            let window = entity_window(doc, start, inst.t);
            if start == 0 {
                candidates.insert((window.clone(), true));
            }
            candidates.insert((window, false));
        }
    }

    let mut occurrences: HashMap<(Vec<u32>, bool), Vec<[f64; 2]>> = candidates
        .iter()
        .map(|c| (c.clone(), Vec::new()))
        .collect();
    for inst in &instances {
        let ex = &corpus.examples[inst.ex];
        let mut acc = [0.0; 2];
        for len in 1..=config.max_len.min(inst.t + 1) {
            let start = inst.t + 1 - len;
            acc[0] += inst.imp.scores[start][0];
            acc[1] += inst.imp.scores[start][1];
            let window = entity_window(&ex.doc, start, inst.t);
            if start == 0 {
                if let Some(list) = occurrences.get_mut(&(window.clone(), true)) {
                    list.push(acc);
                }
            }
            if let Some(list) = occurrences.get_mut(&(window, false)) {
                list.push(acc);
            }
        }
    }

    let mut patterns = Vec::new();
    for cand in &candidates {
        let contributions = &occurrences[cand];
        if contributions.len() < config.min_support.max(1) {
            continue;
        }
        let s = score_occurrences(method, contributions)?;
        if s.class != ANSWER_CLASS {
            continue;
        }
        patterns.push(Pattern {
            tokens: cand.0.clone(),
            score: s.score,
            class: s.class,
            support: contributions.len(),
            anchored_start: cand.1,
            ends_at_entity: true,
        });
    }

    let keyed: Vec<(Vec<u32>, usize)> = corpus
        .examples
        .iter()
        .map(|ex| {
            let mut key = ex.question.clone();
            key.push(u32::MAX);
            key.extend(&ex.doc.tokens);
            (key, ex.answer as usize)
        })
        .collect();
    let fingerprint = corpus_fingerprint(keyed.iter().map(|(k, a)| (k.as_slice(), *a)));
    let relation = common_relation(corpus).map(|r| r.to_string());
    let mut list = PatternList {
        patterns,
        meta: MiningMeta {
            method,
            threshold: config.threshold,
            min_support: config.min_support,
            max_len: config.max_len,
            fingerprint,
            relation,
        },
    };
    list.sort();
    Ok(list)
}

fn common_relation(corpus: &QaCorpus) -> Option<Relation> {
    let first = corpus.examples.first()?.relation?;
    corpus
        .examples
        .iter()
        .all(|ex| ex.relation == Some(first))
        .then_some(first)
}

/// One pattern list per question relation present in `corpus`.
pub fn qa_extract_by_relation(
    corpus: &QaCorpus,
    qp: &QaParams,
    method: Method,
    config: &MiningConfig,
) -> Result<Vec<PatternList>> {
    let mut out = Vec::new();
    for rel in Relation::ALL {
        let subset = corpus.filter_relation(rel);
        if !subset.is_empty() {
            out.push(qa_extract_patterns(&subset, qp, method, config)?);
        }
    }
    Ok(out)
}

/// First `(rank, entity)` matched by an answer-class pattern, scanning patterns in list
/// order and entity occurrences in document order. Rank is 0-based.
pub fn qa_rules_match(patterns: &PatternList, doc: &Document) -> Option<(usize, u32)> {
    patterns
        .patterns
        .iter()
        .enumerate()
        .filter(|(_, p)| p.class == ANSWER_CLASS)
        .find_map(|(rank, p)| {
            doc.entity_positions()
                .find(|&(t, _)| matches_at(p, doc, t))
                .map(|(_, id)| (rank, id))
        })
}

pub fn qa_rules_answer(patterns: &PatternList, doc: &Document) -> Option<u32> {
    qa_rules_match(patterns, doc).map(|(_, id)| id)
}

/// The list mined for `relation`, falling back to a list without a relation tag.
pub fn list_for(lists: &[PatternList], relation: Option<Relation>) -> Option<&PatternList> {
    let tag = relation.map(|r| r.to_string());
    lists
        .iter()
        .find(|l| tag.is_some() && l.meta.relation == tag)
        .or_else(|| lists.iter().find(|l| l.meta.relation.is_none()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaRulesEvaluation {
    pub hits_at_1: f64,
    /// Fraction of examples where some pattern matched.
    pub coverage: f64,
    /// Rules answer per example.
    pub answers: Vec<Option<u32>>,
}

pub fn qa_rules_evaluate(lists: &[PatternList], corpus: &QaCorpus) -> Result<QaRulesEvaluation> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let answers: Vec<Option<u32>> = corpus
        .examples
        .par_iter()
        .map(|ex| list_for(lists, ex.relation).and_then(|l| qa_rules_answer(l, &ex.doc)))
        .collect();
    let n = corpus.len() as f64;
    let hits = answers
        .iter()
        .zip(&corpus.examples)
        .filter(|(a, ex)| **a == Some(ex.answer))
        .count();
    let covered = answers.iter().filter(|a| a.is_some()).count();
    Ok(QaRulesEvaluation {
        hits_at_1: hits as f64 / n,
        coverage: covered as f64 / n,
        answers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntitySpan;
    use crate::lstm::forward;
    use crate::phrases::MiningMeta;
    use proptest::prelude::*;

    fn fill(params: &mut LstmParams, offset: f64) {
        for (k, t) in params.tensors_mut().into_iter().enumerate() {
            for (idx, v) in t.iter_mut().enumerate() {
                *v = 0.5 * (1.3 * k as f64 + 0.7 * idx as f64 + offset).sin();
            }
        }
    }

    fn hand_model() -> QaParams {
        let mut qp = QaParams::zeros(4, 2, 2, 2);
        fill(&mut qp.encoder, 0.0);
        fill(&mut qp.reader, 0.5);
        qp
    }

    fn doc_with_entities(tokens: Vec<u32>, entities: &[(usize, u32)]) -> Document {
        let mut doc = Document::new(tokens, 0);
        doc.entity_spans = entities
            .iter()
            .map(|&(p, entity)| EntitySpan {
                start: p,
                end: p + 1,
                entity,
            })
            .collect();
        doc
    }

    fn meta() -> MiningMeta {
        MiningMeta {
            method: Method::Gamma,
            threshold: 1.1,
            min_support: 1,
            max_len: 5,
            fingerprint: 0,
            relation: None,
        }
    }

    fn pattern(tokens: Vec<u32>, score: f64, anchored: bool) -> Pattern {
        Pattern {
            tokens,
            score,
            class: ANSWER_CLASS,
            support: 1,
            anchored_start: anchored,
            ends_at_entity: true,
        }
    }

    #[test]
    fn golden_hand_model() {
        // Values from an independent scalar implementation.
        let qp = hand_model();
        qp.validate().unwrap();
        let trace = read(&qp, &[1, 2], &[3, 0, 2]).unwrap();
        let hq = [0.045_300_671_090_712_355, -0.060_632_594_611_579_95];
        let logits = [
            [0.090_182_318_424_919_08, -0.005_909_834_219_228_882_5],
            [0.088_281_540_397_862_75, -0.058_754_021_368_580_26],
            [0.109_928_518_953_640_3, -0.033_009_541_069_035_4],
        ];
        let probs1 = [0.475_995_429_917_169_7, 0.463_307_192_297_284, 0.464_326_202_793_346_5];
        for (a, b) in trace.h_q.iter().zip(hq) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
        for t in 0..3 {
            for i in 0..2 {
                assert!((trace.logits[t][i] - logits[t][i]).abs() < 1e-14);
            }
            assert!((trace.probs[t][1] - probs1[t]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_encoder_gives_zero_question_vector() {
        let qp = QaParams::zeros(5, 3, 4, 2);
        assert_eq!(encode_question(&qp, &[1, 2, 3]).unwrap(), vec![0.0; 2]);
    }

    #[test]
    fn single_token_question_is_one_step() {
        let qp = QaParams::init(6, 3, 3, 3, 4);
        let h = encode_question(&qp, &[4]).unwrap();
        let steps = run_cell(&qp.encoder, &[qp.encoder.embedding.row(4).to_vec()]).unwrap();
        assert_eq!(h, steps[0].hidden);
        assert_eq!(h, encode_question(&qp, &[4]).unwrap());
    }

    #[test]
    fn empty_question_is_an_error() {
        let qp = QaParams::zeros(5, 3, 4, 2);
        assert!(encode_question(&qp, &[]).is_err());
    }

    #[test]
    fn zero_question_vector_matches_zero_padded_plain_lstm() {
        let mut qp = QaParams::init(6, 3, 4, 2, 9);
        for t in qp.encoder.tensors_mut() {
            t.fill(0.0);
        }
        let tokens = [1, 5, 2, 2];
        let trace = read(&qp, &[3], &tokens).unwrap();
        let padded: Vec<Vec<f64>> = tokens
            .iter()
            .map(|&id| {
                let mut x = qp.reader.embedding.row(id as usize).to_vec();
                x.extend([0.0, 0.0]);
                x
            })
            .collect();
        for t in 0..tokens.len() {
            let plain = forward(&qp.reader, &padded[..=t]).unwrap();
            assert_eq!(plain.logits, trace.logits[t]);
            assert_eq!(plain.probs, trace.probs[t]);
        }
    }

    #[test]
    fn reader_rejects_mismatched_question_width() {
        let qp = QaParams::init(6, 3, 4, 2, 9);
        assert!(matches!(
            read_with(&qp.reader, &[0.0; 3], &[1, 2]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn equal_question_vectors_give_identical_traces() {
        let mut qp = QaParams::init(8, 3, 4, 3, 2);
        for t in qp.encoder.tensors_mut() {
            t.fill(0.0);
        }
        let a = read(&qp, &[1, 2, 3], &[4, 5, 6]).unwrap();
        let b = read(&qp, &[7], &[4, 5, 6]).unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn answer_edge_cases() {
        let qp = QaParams::init(10, 3, 3, 3, 1);
        let single = doc_with_entities(vec![2, 3, 4], &[(1, 42)]);
        assert_eq!(answer(&qp, &[5], &single).unwrap(), 42);
        let twice = doc_with_entities(vec![2, 3, 4, 3], &[(1, 7), (3, 7)]);
        assert_eq!(answer(&qp, &[5], &twice).unwrap(), 7);
        let none = Document::new(vec![2, 3], 0);
        assert!(matches!(answer(&qp, &[5], &none), Err(Error::NoEntities)));
    }

    #[test]
    fn ties_go_to_the_earliest_occurrence() {
        // All-zero reader: every position has p = (0.5, 0.5).
        let qp = QaParams::zeros(10, 2, 2, 2);
        let doc = doc_with_entities(vec![2, 3, 4, 5], &[(1, 9), (3, 4)]);
        let pred = predict(&qp, &[1], &doc).unwrap();
        assert_eq!(pred.answer, 9);
        for (_, _, p) in &pred.occurrences {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut qp = QaParams::init(7, 3, 3, 3, 11);
        for t in qp.tensors_mut() {
            for v in t.iter_mut() {
                *v *= 2.0;
            }
        }
        let question = [1, 4, 2];
        let tokens = [3, 5, 6, 3, 1];
        let targets = [(1, 1), (3, 0), (4, 0)];
        let (_, grads) = qa_loss_grads(&qp, &question, &tokens, &targets).unwrap();
        let objective = |p: &QaParams| qa_loss_grads(p, &question, &tokens, &targets).unwrap().0;
        let analytic: Vec<f64> = grads.tensors().into_iter().flatten().copied().collect();
        let mut idx = 0;
        let n_tensors = qp.tensors().len();
        for ti in 0..n_tensors {
            let len = qp.tensors()[ti].len();
            for k in 0..len {
                let orig = qp.tensors()[ti][k];
                let step = 1e-5;
                qp.tensors_mut()[ti][k] = orig + step;
                let up = objective(&qp);
                qp.tensors_mut()[ti][k] = orig - step;
                let down = objective(&qp);
                qp.tensors_mut()[ti][k] = orig;
                let numeric = (up - down) / (2.0 * step);
                let a = analytic[idx];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    err < 1e-5 || (a - numeric).abs() < 1e-8,
                    "tensor {ti} entry {k}: analytic {a} numeric {numeric}"
                );
                idx += 1;
            }
        }
    }

    fn tiny_corpus() -> QaCorpus {
        crate::corpus::gen_qa(3, 5).unwrap()
    }

    #[test]
    fn loss_decreases_on_one_example() {
        let corpus = tiny_corpus();
        let ex = &corpus.examples[0];
        let mut qp = QaParams::init(corpus.vocab.len(), 8, 8, 8, 5);
        let mut adam = AdamState::for_tensors(&qp.tensors(), 1e-2);
        let targets: Vec<(usize, usize)> = ex
            .doc
            .entity_positions()
            .map(|(t, id)| (t, usize::from(id == ex.answer)))
            .collect();
        let first = qa_loss_grads(&qp, &ex.question, &ex.doc.tokens, &targets).unwrap().0;
        let mut last = first;
        for _ in 0..10 {
            let (l, g) = qa_loss_grads(&qp, &ex.question, &ex.doc.tokens, &targets).unwrap();
            last = l;
            adam.step_tensors(qp.tensors_mut(), g.tensors());
        }
        assert!(last < first, "{last} !< {first}");
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = tiny_corpus();
        let (train, dev) = corpus.split_at(16);
        let config = QaTrainConfig {
            embed: 6,
            hidden: 6,
            q_hidden: 6,
            max_epochs: 2,
            ..QaTrainConfig::default()
        };
        let a = qa_train(&train, &dev, &config).unwrap();
        let b = qa_train(&train, &dev, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn targets_hold_gold_and_capped_negatives() {
        let corpus = tiny_corpus();
        let ex = &corpus.examples[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let all = training_targets(ex, 10, &mut rng);
        assert_eq!(all.len(), ex.doc.entity_spans.len());
        assert_eq!(all.iter().filter(|t| t.1 == 1).count(), 1);
        let capped = training_targets(ex, 1, &mut rng);
        assert_eq!(capped.len(), 2);
    }

    #[test]
    fn per_position_telescoping() {
        let qp = QaParams::init(9, 3, 4, 3, 8);
        let trace = read(&qp, &[1, 2], &[3, 4, 5, 6, 7, 8]).unwrap();
        for t in 0..trace.len() {
            for method in [Method::Beta, Method::Gamma] {
                let totals = importance_at(&qp, &trace, t, method).class_totals();
                for i in 0..2 {
                    assert!((totals[i] - trace.logits[t][i]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ent_matches_entities_only() {
        let doc = doc_with_entities(vec![5, 6, 7, 8], &[(0, 1), (3, 2)]);
        let p = pattern(vec![6, 7, Vocab::ENT], 2.0, false);
        assert!(matches_at(&p, &doc, 3));
        // Literal entity surface does not match; ENT does not match a plain word.
        assert!(!matches_at(&pattern(vec![6, 7, 8], 2.0, false), &doc, 3));
        assert!(!matches_at(&pattern(vec![Vocab::ENT, 7], 2.0, false), &doc, 2));
        let anchored = pattern(vec![Vocab::ENT, 6, 7, Vocab::ENT], 2.0, true);
        assert!(matches_at(&anchored, &doc, 3));
        assert!(!matches_at(&pattern(vec![7, Vocab::ENT], 2.0, true), &doc, 3));
    }

    #[test]
    fn rules_answer_follows_rank_order() {
        let doc = doc_with_entities(vec![5, 6, 7, 8, 9], &[(1, 11), (4, 22)]);
        let empty = PatternList {
            patterns: vec![],
            meta: meta(),
        };
        assert_eq!(qa_rules_answer(&empty, &doc), None);
        let list = PatternList {
            patterns: vec![
                pattern(vec![8, Vocab::ENT], 5.0, false),
                pattern(vec![5, Vocab::ENT], 3.0, false),
            ],
            meta: meta(),
        };
        assert_eq!(qa_rules_answer(&list, &doc), Some(22));
        assert_eq!(qa_rules_match(&list, &doc), Some((0, 22)));
    }

    #[test]
    fn extracted_patterns_end_at_entities() {
        let corpus = tiny_corpus();
        let qp = QaParams::init(corpus.vocab.len(), 6, 6, 6, 2);
        let config = MiningConfig {
            threshold: 1.0001,
            min_support: 1,
            ..MiningConfig::default()
        };
        for method in Method::ALL {
            let list = qa_extract_patterns(&corpus, &qp, method, &config).unwrap();
            for p in &list.patterns {
                assert_eq!(*p.tokens.last().unwrap(), Vocab::ENT);
                assert!(p.ends_at_entity);
                assert_eq!(p.class, ANSWER_CLASS);
                assert!(p.support >= 1 && p.len() <= 5);
            }
            let mut keys: Vec<_> = list
                .patterns
                .iter()
                .map(|p| (p.tokens.clone(), p.anchored_start))
                .collect();
            keys.sort();
            let n = keys.len();
            keys.dedup();
            assert_eq!(keys.len(), n);
        }
    }

    #[test]
    fn per_relation_lists_are_tagged() {
        let corpus = tiny_corpus();
        let qp = QaParams::init(corpus.vocab.len(), 6, 6, 6, 2);
        let lists = qa_extract_by_relation(&corpus, &qp, Method::Beta, &MiningConfig::default()).unwrap();
        let tags: Vec<_> = lists.iter().map(|l| l.meta.relation.clone().unwrap()).collect();
        assert_eq!(
            tags,
            ["directed_by", "starred_actors", "release_year", "written_by"]
        );
        assert!(list_for(&lists, Some(Relation::WrittenBy)).is_some());
        assert!(list_for(&lists, None).is_none());
    }

    proptest! {
        #[test]
        fn ent_substitution_is_sound(
            tokens in prop::collection::vec(2u32..6, 1..10),
            mask in prop::collection::vec(any::<bool>(), 10),
            len in 1usize..5,
        ) {
            let entities: Vec<(usize, u32)> = (0..tokens.len())
                .filter(|&p| mask[p])
                .map(|p| (p, 100 + p as u32))
                .collect();
            let doc = doc_with_entities(tokens.clone(), &entities);
            let t = tokens.len() - 1;
            prop_assume!(len <= tokens.len());
            let start = t + 1 - len;
            let window = entity_window(&doc, start, t);
            let p = pattern(window.clone(), 2.0, false);
            prop_assert!(matches_at(&p, &doc, t));
            // Replacing each ENT with the entity token at that slot gives a literal match
            // on a copy of the document without entity marks.
            let plain = Document::new(tokens.clone(), 0);
            let literal: Vec<u32> = window
                .iter()
                .enumerate()
                .map(|(i, &w)| if w == Vocab::ENT { tokens[start + i] } else { w })
                .collect();
            prop_assert!(matches_at(&pattern(literal, 2.0, false), &plain, t));
        }
    }
}
