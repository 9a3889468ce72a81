#![no_main]

use libfuzzer_sys::fuzz_target;
use lstm_distill::corpus::parse_tsv;

fuzz_target!(|input: &str| {
    if let Ok(corpus) = parse_tsv(input, 1) {
        let n = corpus.vocab.len() as u32;
        for doc in &corpus.docs {
            assert!(!doc.tokens.is_empty());
            assert!(doc.tokens.iter().all(|&t| t < n));
            assert!(doc.label < corpus.num_classes);
        }
    }
});
