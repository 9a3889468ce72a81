#![no_main]

use libfuzzer_sys::fuzz_target;
use lstm_distill::corpus::build_vocab;
use lstm_distill::phrases::{parse_patterns_tsv, patterns_to_tsv};

fuzz_target!(|input: &str| {
    let vocab = build_vocab(["the food was great but not worth the money !"], 1);
    if let Ok(list) = parse_patterns_tsv(input, &vocab) {
        let text = patterns_to_tsv(&list, &vocab);
        let again = parse_patterns_tsv(&text, &vocab).expect("written patterns parse");
        assert_eq!(patterns_to_tsv(&again, &vocab), text);
    }
});
