#![no_main]

use libfuzzer_sys::fuzz_target;
use lstm_distill::corpus::tokenize;

fuzz_target!(|text: &str| {
    for tok in tokenize(text) {
        assert!(!tok.is_empty());
        assert!(!tok.chars().any(char::is_whitespace));
    }
});
