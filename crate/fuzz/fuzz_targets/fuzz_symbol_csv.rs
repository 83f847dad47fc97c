//! Fuzz the tabulated-symbol CSV reader: arbitrary bytes must produce either
//! a table or a typed error, never a panic, and a parsed table must be safe
//! to evaluate.

#![no_main]

use libfuzzer_sys::fuzz_target;
use smlab::calculus::parse_symbol_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = parse_symbol_csv(data) {
        // Evaluation must hold up at, between, and beyond the sample points.
        let _ = table.eval(0.0);
        let _ = table.eval(1.0);
        let _ = table.eval(f64::MAX);
        let _ = table.eval(-1.0);
    }
});
