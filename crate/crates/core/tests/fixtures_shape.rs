//! The bundled corpora have the shape the other suites assume.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use oracle_forge::candidates::{build_global_constant_table, GlobalConstantTable};
use oracle_forge::datasets::{build_exception_dataset, ground_truth_assertions, RawSample};
use oracle_forge::oracles::AssertionForm;
use oracle_forge::testlang::{parse_test_method, Expr, LiteralType};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn corpus(name: &str) -> Vec<RawSample> {
    std::fs::read_to_string(fixtures().join("corpus").join(name))
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn taxonomy_tests_parse_without_opaque_statements() {
    for (i, r) in corpus("taxonomy.jsonl").iter().enumerate() {
        let t = parse_test_method(&r.test).unwrap_or_else(|e| panic!("record {i}: {e}"));
        assert!(!t.has_opaque(), "record {i} has an opaque statement");
    }
}

#[test]
fn a_few_int_constants_dominate_the_assertions() {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in corpus("assertions.jsonl") {
        for f in ground_truth_assertions(&r) {
            if let AssertionForm::Equals { expected: Expr::Literal { literal_type: LiteralType::Int, text }, .. } = f {
                *counts.entry(text).or_default() += 1;
            }
        }
    }
    let total: usize = counts.values().sum();
    let mut by_freq: Vec<usize> = counts.into_values().collect();
    by_freq.sort_unstable_by(|a, b| b.cmp(a));
    let top10: usize = by_freq.iter().take(10).sum();
    assert!(total > 50);
    assert!(top10 as f64 >= 0.9 * total as f64, "top-10 ints cover {top10}/{total}");
}

#[test]
fn exception_corpus_is_one_fifth_positive() {
    let (samples, report) = build_exception_dataset(&corpus("exceptions.jsonl"), 0);
    assert_eq!(report.input, 200);
    assert_eq!(samples.len(), 200);
    assert_eq!(samples.iter().filter(|s| s.label == 1).count(), 40);
}

#[test]
fn bundled_vocab_is_the_one_built_from_the_corpus() {
    let truths: Vec<_> = corpus("assertions.jsonl").iter().flat_map(ground_truth_assertions).collect();
    let built = build_global_constant_table(&truths, 8);
    let bundled = GlobalConstantTable::read_from(std::io::BufReader::new(std::fs::File::open(fixtures().join("vocab.tsv")).unwrap())).unwrap();
    assert_eq!(built, bundled);
    let mut a = Vec::new();
    built.write_to(&mut a).unwrap();
    assert_eq!(String::from_utf8(a).unwrap(), std::fs::read_to_string(fixtures().join("vocab.tsv")).unwrap());
}
