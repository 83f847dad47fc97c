//! Regression pass over the checked-in fuzz corpora: every seed must run
//! through its parser without panicking, whatever the verdict.

use std::fs;
use std::path::PathBuf;

use smlab::calculus::parse_symbol_csv;
use smlab::experiments::ExperimentConfig;

fn corpus_dir(target: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target)
}

#[test]
fn config_json_corpus_parses_without_panicking() {
    let dir = corpus_dir("fuzz_config_json");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).expect("corpus directory must exist") {
        let path = entry.unwrap().path();
        let bytes = fs::read(&path).unwrap();
        if let Ok(text) = std::str::from_utf8(&bytes) {
            let _ = ExperimentConfig::from_json(text);
        }
        seen += 1;
    }
    assert!(seen >= 4, "corpus must stay populated, found {seen} seeds");
}

#[test]
fn symbol_csv_corpus_parses_without_panicking() {
    let dir = corpus_dir("fuzz_symbol_csv");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).expect("corpus directory must exist") {
        let path = entry.unwrap().path();
        let bytes = fs::read(&path).unwrap();
        if let Ok(table) = parse_symbol_csv(bytes.as_slice()) {
            let _ = table.eval(0.0);
            let _ = table.eval(1.0);
            let _ = table.eval(f64::MAX);
        }
        seen += 1;
    }
    assert!(seen >= 4, "corpus must stay populated, found {seen} seeds");
}
