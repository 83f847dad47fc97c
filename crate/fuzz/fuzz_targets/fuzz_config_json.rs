//! Fuzz the experiment-config JSON parser and validator: arbitrary bytes must
//! produce either a config or a typed error, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use smlab::experiments::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = ExperimentConfig::from_json(text);
    }
});
