//! Trains on a planted-phrase corpus, mines patterns with each importance measure and
//! compares the resulting rules classifiers with the network.

use std::time::Instant;

use lstm_distill::corpus::gen_sentiment;
use lstm_distill::importance::Method;
use lstm_distill::phrases::{extract_patterns, MiningConfig};
use lstm_distill::rules::{evaluate, RulesModel};
use lstm_distill::training::{train, TrainConfig};

fn main() -> lstm_distill::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let (corpus, planted) = gen_sentiment(seed, 1000, 10)?;
    let (train_set, dev) = corpus.split_at(800);
    let start = Instant::now();
    let config = TrainConfig {
        embed: 32,
        hidden: 32,
        seed,
        max_epochs: 30,
        patience: std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(3),
        forget_bias: std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(0.0),
        ..TrainConfig::default()
    };
    let mut outcome = train(&train_set, &dev, &config)?;
    if std::env::args().nth(5).as_deref() == Some("final") {
        outcome.params = outcome.final_params.clone();
    }
    println!(
        "dev accuracy {:.3} (history {:?}) in {:.1?}",
        outcome.best_dev_accuracy,
        outcome.dev_history,
        start.elapsed()
    );
    for method in Method::ALL {
        let min_support = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(3);
        let mining = MiningConfig { min_support, ..MiningConfig::default() };
        let list = extract_patterns(&train_set, &outcome.params, method, &mining)?;
        let top: Vec<_> = list.patterns.iter().take(20).collect();
        let recovered = planted
            .iter()
            .filter(|p| {
                let ids = train_set.vocab.encode(&p.tokens);
                top.iter().any(|q| q.tokens == ids && q.class == p.class)
            })
            .count();
        let rules = RulesModel::new(list.clone(), train_set.majority_class());
        let eval = evaluate(&rules, &dev, Some(&outcome.params))?;
        println!(
            "{method}: {} patterns, planted in top 20: {recovered}/10, rules accuracy {:.3}, coverage {:.3}, agreement {:.3}",
            list.len(),
            eval.accuracy,
            eval.coverage,
            eval.agreement.unwrap_or(f64::NAN)
        );
        for p in &planted {
            let ids = train_set.vocab.encode(&p.tokens);
            let rank = list.patterns.iter().position(|q| q.tokens == ids);
            match rank {
                Some(r) => println!("  planted [{}] rank {} score {:.3} class {}/{} support {}", p.text(), r + 1, list.patterns[r].score, list.patterns[r].class, p.class, list.patterns[r].support),
                None => println!("  planted [{}] not a candidate", p.text()),
            }
        }
        for p in top.iter().take(20) {
            println!("    {:>10.3} {} {} [{}]", p.score, p.class, p.support, p.render(&train_set.vocab));
        }
    }
    Ok(())
}
