#![no_main]

use libfuzzer_sys::fuzz_target;
use lstm_distill::corpus::{parse_planted_tsv, write_planted_tsv};

fuzz_target!(|input: &str| {
    if let Ok(planted) = parse_planted_tsv(input) {
        let again = parse_planted_tsv(&write_planted_tsv(&planted)).expect("written phrases parse");
        assert_eq!(again, planted);
    }
});
