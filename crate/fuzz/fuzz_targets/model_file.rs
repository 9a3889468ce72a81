#![no_main]

use libfuzzer_sys::fuzz_target;
use lstm_distill::model_io::{model_to_string, parse_model};

fuzz_target!(|input: &str| {
    if let Ok(model) = parse_model(input) {
        let text = model_to_string(&model);
        let again = parse_model(&text).expect("written model parses");
        assert_eq!(model_to_string(&again), text);
    }
});
