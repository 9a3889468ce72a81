#![no_main]

use libfuzzer_sys::fuzz_target;
use lstm_distill::corpus::{parse_qa_tsv, write_qa_tsv};

fuzz_target!(|input: &str| {
    if let Ok(corpus) = parse_qa_tsv(input, None) {
        let again = parse_qa_tsv(&write_qa_tsv(&corpus), None).expect("written corpus parses");
        assert_eq!(again.len(), corpus.len());
    }
});
