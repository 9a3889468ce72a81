//! Trains the question-conditioned reader on a synthetic movie KB, mines per-relation
//! answer patterns and compares the pattern answerer with the network.

use std::time::Instant;

use lstm_distill::corpus::gen_qa;
use lstm_distill::importance::Method;
use lstm_distill::phrases::MiningConfig;
use lstm_distill::qa::{hits_at_1, qa_extract_by_relation, qa_rules_evaluate, qa_train, QaTrainConfig};

fn main() -> lstm_distill::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let n_movies: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(500);
    let corpus = gen_qa(seed, n_movies)?;
    let (train, dev) = corpus.split_at(corpus.len() * 4 / 5);
    let start = Instant::now();
    let config = QaTrainConfig {
        seed,
        ..QaTrainConfig::default()
    };
    let outcome = qa_train(&train, &dev, &config)?;
    println!(
        "dev hits@1 {:.3} (history {:?}) in {:.1?}",
        outcome.best_dev_hits,
        outcome.dev_history,
        start.elapsed()
    );
    println!("train hits@1 {:.3}", hits_at_1(&outcome.params, &train)?);
    for method in Method::ALL {
        let start = Instant::now();
        let lists = qa_extract_by_relation(&train, &outcome.params, method, &MiningConfig::default())?;
        let eval = qa_rules_evaluate(&lists, &dev)?;
        println!(
            "{method}: rules hits@1 {:.3}, coverage {:.3} ({:.1?})",
            eval.hits_at_1,
            eval.coverage,
            start.elapsed()
        );
        for list in &lists {
            let top: Vec<String> = list
                .patterns
                .iter()
                .take(4)
                .map(|p| format!("{} ({:.2}, {})", p.render(&corpus.vocab), p.score, p.support))
                .collect();
            println!("  {}: {} patterns; {}", list.meta.relation.as_deref().unwrap_or("-"), list.len(), top.join(" | "));
        }
    }
    Ok(())
}
