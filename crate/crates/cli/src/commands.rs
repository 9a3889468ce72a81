use std::fs;
use std::path::Path;

use lstm_distill::corpus::{
    gen_qa, gen_sentiment, load_tsv, load_tsv_with_vocab, parse_qa_tsv, tokenize,
    write_planted_tsv, write_qa_tsv, write_tsv, Corpus, QaCorpus, Vocab,
};
use lstm_distill::heatmap::{render, Format, HeatmapDoc};
use lstm_distill::importance::{importance, to_tsv, word_heat, ImportanceMatrix};
use lstm_distill::lstm::predict;
use lstm_distill::model_io::{load_model, save_model, Model, ModelFile, ModelMeta};
use lstm_distill::phrases::{extract_patterns, parse_patterns_tsv, patterns_to_tsv, MiningConfig, PatternList};
use lstm_distill::qa::{
    self, hits_at_1, importance_at, qa_extract_by_relation, qa_rules_evaluate, qa_train, QaTrainConfig,
};
use lstm_distill::rules::{evaluate, report_tsv, RulesModel};
use lstm_distill::training::{accuracy, train, TrainConfig};
use lstm_distill::{verify, Error};

use crate::*;

pub enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = std::result::Result<(), Failure>;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Importance(a) => importance_cmd(a),
        Command::Extract(a) => extract(a),
        Command::Rules(a) => rules(a),
        Command::QaTrain(a) => qa_train_cmd(a),
        Command::QaExtract(a) => qa_extract(a),
        Command::QaAnswer(a) => qa_answer(a),
        Command::Verify(a) => verify_cmd(a),
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn mining_config(m: &Mining) -> std::result::Result<MiningConfig, Failure> {
    if !(m.threshold > 0.0) {
        return Err(Failure::Usage("--threshold must be positive".into()));
    }
    if m.max_len == 0 {
        return Err(Failure::Usage("--max-len must be at least 1".into()));
    }
    Ok(MiningConfig {
        threshold: m.threshold,
        max_len: m.max_len,
        min_support: m.min_support,
    })
}

fn check_hyper(h: &Hyper) -> Outcome {
    if h.dim == 0 || h.hidden == 0 {
        return Err(Failure::Usage("--dim and --hidden must be positive".into()));
    }
    if !(h.lr > 0.0) {
        return Err(Failure::Usage("--lr must be positive".into()));
    }
    if !(0.0 < h.dev_fraction && h.dev_fraction < 1.0) {
        return Err(Failure::Usage("--dev-fraction must lie in (0, 1)".into()));
    }
    Ok(())
}

/// Number of leading items kept for training when holding out `fraction`.
fn train_size(n: usize, fraction: f64) -> std::result::Result<usize, Failure> {
    let keep = ((n as f64) * (1.0 - fraction)).round() as usize;
    if keep == 0 || keep >= n {
        return Err(Failure::Data(Error::InvalidArgument(format!(
            "cannot hold out a dev split from {n} examples"
        ))));
    }
    Ok(keep)
}

fn synth(a: SynthArgs) -> Outcome {
    match a.kind {
        SynthKind::Sentiment => {
            let (corpus, planted) = gen_sentiment(a.seed, a.docs, a.phrases)?;
            write_tsv(&corpus, &a.out)?;
            if let Some(p) = &a.planted {
                fs::write(p, write_planted_tsv(&planted))?;
            }
            println!("wrote {} documents to {}", corpus.len(), a.out.display());
        }
        SynthKind::Qa => {
            let corpus = gen_qa(a.seed, a.movies)?;
            fs::write(&a.out, write_qa_tsv(&corpus))?;
            println!("wrote {} questions to {}", corpus.len(), a.out.display());
        }
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Outcome {
    check_hyper(&a.hyper)?;
    let corpus = load_tsv(&a.data, a.min_count)?;
    let (train_set, dev) = match &a.dev {
        Some(dev) => (
            corpus.clone(),
            load_tsv_with_vocab(dev, &corpus.vocab, corpus.num_classes)?,
        ),
        None => corpus.split_at(train_size(corpus.len(), a.hyper.dev_fraction)?),
    };
    let h = &a.hyper;
    let config = TrainConfig {
        embed: h.dim,
        hidden: h.hidden,
        seed: h.seed,
        max_epochs: h.epochs,
        patience: h.patience,
        lr: h.lr,
        ..TrainConfig::default()
    };
    let outcome = train(&train_set, &dev, &config)?;
    save_model(
        &a.out,
        &ModelFile {
            vocab: corpus.vocab.clone(),
            meta: ModelMeta {
                seed: h.seed,
                epochs: outcome.epochs_run,
                dev_score: outcome.best_dev_accuracy,
            },
            model: Model::Classifier(outcome.params),
        },
    )?;
    println!(
        "epochs {} best_epoch {} dev_accuracy {:.4}",
        outcome.epochs_run, outcome.best_epoch, outcome.best_dev_accuracy
    );
    Ok(())
}

fn load_classifier(model: &Path, data: &Path) -> std::result::Result<(ModelFile, Corpus), Failure> {
    let file = load_model(model)?;
    let classes = file.classifier()?.dims.classes;
    let corpus = load_tsv_with_vocab(data, &file.vocab, classes)?;
    Ok((file, corpus))
}

fn load_reader(model: &Path, data: &Path) -> std::result::Result<(ModelFile, QaCorpus), Failure> {
    let file = load_model(model)?;
    file.qa()?;
    let corpus = parse_qa_tsv(&fs::read_to_string(data)?, Some(&file.vocab))?;
    Ok((file, corpus))
}

fn eval(a: EvalArgs) -> Outcome {
    let (file, corpus) = load_classifier(&a.model, &a.data)?;
    println!("accuracy {:.4}", accuracy(file.classifier()?, &corpus)?);
    Ok(())
}

fn display_tokens(raw: &str, ids: &[u32], vocab: &Vocab) -> Vec<String> {
    let words = tokenize(raw);
    if words.len() == ids.len() {
        words
    } else {
        vocab.decode(ids).into_iter().map(str::to_owned).collect()
    }
}

fn importance_cmd(a: ImportanceArgs) -> Outcome {
    let file = load_model(&a.model)?;
    let (imp, tokens, class, question): (ImportanceMatrix, Vec<String>, usize, Option<String>) =
        match &file.model {
            Model::Classifier(params) => {
                let corpus = load_tsv_with_vocab(&a.data, &file.vocab, params.dims.classes)?;
                let doc = corpus.docs.get(a.doc).ok_or_else(|| {
                    Failure::Usage(format!("--doc {} out of range ({} documents)", a.doc, corpus.len()))
                })?;
                let class = match a.class {
                    Some(c) => c,
                    None => predict(params, doc)?.0,
                };
                (
                    importance(params, doc, a.method)?,
                    display_tokens(&doc.raw, &doc.tokens, &file.vocab),
                    class,
                    None,
                )
            }
            Model::Qa(qp) => {
                let corpus = parse_qa_tsv(&fs::read_to_string(&a.data)?, Some(&file.vocab))?;
                let ex = corpus.examples.get(a.doc).ok_or_else(|| {
                    Failure::Usage(format!("--doc {} out of range ({} questions)", a.doc, corpus.len()))
                })?;
                let pred = qa::predict(qp, &ex.question, &ex.doc)?;
                let t = pred
                    .occurrences
                    .iter()
                    .find(|o| o.1 == pred.answer)
                    .map(|o| o.0)
                    .expect("answer comes from an occurrence");
                let trace = qa::read(qp, &ex.question, &ex.doc.tokens)?;
                let mut tokens = display_tokens(&ex.doc.raw, &ex.doc.tokens, &file.vocab);
                tokens.truncate(t + 1);
                (
                    importance_at(qp, &trace, t, a.method),
                    tokens,
                    a.class.unwrap_or(qa::ANSWER_CLASS),
                    Some(ex.question_raw.clone()),
                )
            }
        };
    let text = match a.format {
        OutputFormat::Tsv => {
            let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
            to_tsv(&imp, &refs)
        }
        OutputFormat::Html | OutputFormat::Ansi => {
            let heat = word_heat(&imp, class)?;
            let mut doc = HeatmapDoc::new(tokens, heat, a.method)?;
            if let Some(q) = question {
                doc = doc.with_question(q);
            }
            let format = match a.format {
                OutputFormat::Html => Format::Html,
                _ => Format::Ansi,
            };
            render(&doc, format)
        }
    };
    write_or_print(a.out.as_deref(), &text)
}

fn extract(a: ExtractArgs) -> Outcome {
    let config = mining_config(&a.mining)?;
    let (file, corpus) = load_classifier(&a.model, &a.data)?;
    let list = extract_patterns(&corpus, file.classifier()?, a.mining.method, &config)?;
    write_or_print(a.out.as_deref(), &patterns_to_tsv(&list, &file.vocab))?;
    if a.out.is_some() {
        println!("{} patterns", list.len());
    }
    Ok(())
}

fn rules(a: RulesArgs) -> Outcome {
    let (file, corpus) = load_classifier(&a.model, &a.data)?;
    let list = parse_patterns_tsv(&fs::read_to_string(&a.patterns)?, &file.vocab)?;
    let model = RulesModel::new(list, corpus.majority_class());
    let params = file.classifier()?;
    let eval = evaluate(&model, &corpus, Some(params))?;
    println!("accuracy {:.4}", eval.accuracy);
    println!("coverage {:.4}", eval.coverage);
    if let Some(agree) = eval.agreement {
        println!("agreement {agree:.4}");
    }
    println!("lstm_accuracy {:.4}", accuracy(params, &corpus)?);
    if let Some(path) = &a.report {
        fs::write(path, report_tsv(&model, &corpus, &eval, &file.vocab))?;
    }
    Ok(())
}

fn qa_train_cmd(a: QaTrainArgs) -> Outcome {
    check_hyper(&a.hyper)?;
    let corpus = parse_qa_tsv(&fs::read_to_string(&a.data)?, None)?;
    let (train_set, dev) = match &a.dev {
        Some(dev) => (
            corpus.clone(),
            parse_qa_tsv(&fs::read_to_string(dev)?, Some(&corpus.vocab))?,
        ),
        None => corpus.split_at(train_size(corpus.len(), a.hyper.dev_fraction)?),
    };
    let h = &a.hyper;
    let config = QaTrainConfig {
        embed: h.dim,
        hidden: h.hidden,
        q_hidden: h.hidden,
        seed: h.seed,
        max_epochs: h.epochs,
        patience: h.patience,
        lr: h.lr,
        negatives: a.negatives,
        ..QaTrainConfig::default()
    };
    let outcome = qa_train(&train_set, &dev, &config)?;
    save_model(
        &a.out,
        &ModelFile {
            vocab: corpus.vocab.clone(),
            meta: ModelMeta {
                seed: h.seed,
                epochs: outcome.epochs_run,
                dev_score: outcome.best_dev_hits,
            },
            model: Model::Qa(outcome.params),
        },
    )?;
    println!(
        "epochs {} best_epoch {} dev_hits@1 {:.4}",
        outcome.epochs_run, outcome.best_epoch, outcome.best_dev_hits
    );
    Ok(())
}

fn qa_extract(a: QaExtractArgs) -> Outcome {
    let config = mining_config(&a.mining)?;
    let (file, corpus) = load_reader(&a.model, &a.data)?;
    let lists = qa_extract_by_relation(&corpus, file.qa()?, a.mining.method, &config)?;
    let lists = if lists.is_empty() {
        // No relation column: mine a single list over everything.
        vec![qa::qa_extract_patterns(&corpus, file.qa()?, a.mining.method, &config)?]
    } else {
        lists
    };
    fs::create_dir_all(&a.out_dir)?;
    for list in &lists {
        let name = list.meta.relation.as_deref().unwrap_or("all");
        fs::write(a.out_dir.join(format!("{name}.tsv")), patterns_to_tsv(list, &file.vocab))?;
        let top = list
            .patterns
            .first()
            .map(|p| p.render(&file.vocab))
            .unwrap_or_else(|| "-".into());
        println!("{name}\t{} patterns\ttop: {top}", list.len());
    }
    Ok(())
}

fn load_pattern_dir(dir: &Path, vocab: &Vocab) -> std::result::Result<Vec<PatternList>, Failure> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| Ok(parse_patterns_tsv(&fs::read_to_string(p)?, vocab)?))
        .collect()
}

fn qa_answer(a: QaAnswerArgs) -> Outcome {
    let (file, corpus) = load_reader(&a.model, &a.data)?;
    let qp = file.qa()?;
    println!("lstm_hits@1 {:.4}", hits_at_1(qp, &corpus)?);
    let rules = match &a.patterns_dir {
        Some(dir) => {
            let lists = load_pattern_dir(dir, &file.vocab)?;
            let eval = qa_rules_evaluate(&lists, &corpus)?;
            println!("rules_hits@1 {:.4}", eval.hits_at_1);
            println!("rules_coverage {:.4}", eval.coverage);
            Some(eval)
        }
        None => None,
    };
    if a.show {
        let name = |id: Option<u32>, ex: &lstm_distill::corpus::QaExample| -> String {
            id.and_then(|id| ex.doc.entity_spans.iter().find(|s| s.entity == id))
                .map(|s| file.vocab.decode(&ex.doc.tokens[s.start..s.end]).join(" "))
                .unwrap_or_else(|| "-".into())
        };
        for (i, ex) in corpus.examples.iter().enumerate() {
            let lstm = qa::answer(qp, &ex.question, &ex.doc).ok();
            let rule = rules.as_ref().and_then(|r| r.answers[i]);
            println!(
                "{}\t{}\t{}\t{}",
                ex.question_raw,
                name(Some(ex.answer), ex),
                name(lstm, ex),
                name(rule, ex)
            );
        }
    }
    Ok(())
}

fn verify_cmd(a: VerifyArgs) -> Outcome {
    let results = verify::run_all(a.seed);
    for r in &results {
        println!("{r}");
    }
    if results.iter().all(|r| r.passed) {
        println!("all identities passed");
        Ok(())
    } else {
        Err(Failure::Data(Error::InvalidArgument(
            "identity check failed".into(),
        )))
    }
}
