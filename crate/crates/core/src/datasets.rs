//! Adapting raw (focal method, test) corpora into the two supervised datasets:
//! exception classification samples and assertion ranking samples.
//!
//! Records are processed independently (and in parallel by the `build_*`
//! helpers) but everything that depends on position — test-name numbering,
//! output order — is derived from the record index, so results do not depend
//! on scheduling.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::candidates::{create_candidate_templates, CandidateError, GlobalConstantTable, Provenance};
use crate::oracles::{normalize_test_name, strip_oracles, AssertionForm, Oracle, Stripped, TestPrefix};
use crate::testlang::{parse_method_signature, parse_test_method, ParseError, UnitContext};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSample {
    /// Full method source, including its implementation.
    pub focal_method: String,
    #[serde(default)]
    pub docstring: String,
    #[serde(default)]
    pub class_name: String,
    pub test: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    fn for_key(key: &str) -> Split {
        let digest = Sha256::digest(key.as_bytes());
        let bucket = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes")) % 100;
        match bucket {
            0..=89 => Split::Train,
            90..=94 => Split::Valid,
            _ => Split::Test,
        }
    }

    /// Projects stay within one split; without a project each record is
    /// assigned on its own.
    pub fn of(raw: &RawSample) -> Split {
        match &raw.project {
            Some(p) => Split::for_key(&format!("project:{p}")),
            None => Split::for_key(&format!("record:{}\n{}", raw.focal_method, raw.test)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExceptionSample {
    pub group_id: String,
    pub split: Split,
    pub test_name: String,
    pub prefix: TestPrefix,
    pub context: UnitContext,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionSample {
    pub group_id: String,
    pub split: Split,
    pub test_name: String,
    pub prefix: TestPrefix,
    pub context: UnitContext,
    pub candidate: AssertionForm,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub global_rank: Option<usize>,
    pub label: u8,
    /// The ground-truth assertion of the group.
    pub truth: AssertionForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    BadRecord,
    TestParseError,
    FocalParseError,
    EmptyPrefix,
    NoOracle,
    ExpectedException,
    OutOfGrammar,
    NoAssignment,
    OutOfVocab,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::BadRecord => "bad-record",
            DropReason::TestParseError => "test-parse-error",
            DropReason::FocalParseError => "focal-parse-error",
            DropReason::EmptyPrefix => "empty-prefix",
            DropReason::NoOracle => "no-oracle",
            DropReason::ExpectedException => "expected-exception",
            DropReason::OutOfGrammar => "out-of-grammar",
            DropReason::NoAssignment => "no-assignment",
            DropReason::OutOfVocab => "out-of-vocab",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub input: u64,
    pub kept: u64,
    pub dropped: BTreeMap<String, u64>,
    pub labels: BTreeMap<String, u64>,
    /// Assertion groups whose ground truth is not among the candidates.
    pub oov: u64,
}

impl BuildReport {
    pub fn dropped_total(&self) -> u64 {
        self.dropped.values().sum()
    }

    pub fn record_drop(&mut self, reason: DropReason) {
        self.input += 1;
        *self.dropped.entry(reason.as_str().to_string()).or_default() += 1;
    }

    fn record_labels(&mut self, labels: impl IntoIterator<Item = u8>) {
        for l in labels {
            *self.labels.entry(l.to_string()).or_default() += 1;
        }
    }

    pub fn record_exception(&mut self, outcome: &Result<ExceptionSample, DropReason>) {
        match outcome {
            Ok(s) => {
                self.input += 1;
                self.kept += 1;
                self.record_labels([s.label]);
            }
            Err(r) => self.record_drop(*r),
        }
    }

    pub fn record_assertion(&mut self, outcome: &AssertionOutcome) {
        self.oov += outcome.oov_groups;
        match &outcome.result {
            Ok(samples) => {
                self.input += 1;
                self.kept += 1;
                self.record_labels(samples.iter().map(|s| s.label));
            }
            Err(r) => self.record_drop(*r),
        }
    }
}

/// Identifies one (record, prefix) pair. The record index is part of the key
/// so identical tests from different records never share a group.
pub fn group_id(index: u64, prefix: &TestPrefix, context: &UnitContext) -> String {
    let mut h = Sha256::new();
    h.update(index.to_le_bytes());
    h.update(prefix.text().as_bytes());
    h.update([0u8]);
    h.update(context.text().as_bytes());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn skip_ws(s: &str) -> &str {
    s.trim_start()
}

/// Splits leading comments off `src`, returning the last `/** ... */` block
/// seen and the remaining text.
fn leading_comments(mut src: &str) -> (Option<&str>, &str) {
    let mut javadoc = None;
    loop {
        src = skip_ws(src);
        if src.starts_with("/*") {
            let Some(end) = src.find("*/") else { return (javadoc, src) };
            if src.starts_with("/**") {
                javadoc = Some(&src[..end + 2]);
            }
            src = &src[end + 2..];
        } else if src.starts_with("//") {
            src = src.find('\n').map_or("", |n| &src[n + 1..]);
        } else {
            return (javadoc, src);
        }
    }
}

/// Drops leading annotations such as `@Override` or `@Deprecated(since = "1")`.
fn skip_annotations(mut src: &str) -> &str {
    loop {
        src = skip_ws(src);
        let Some(rest) = src.strip_prefix('@') else { return src };
        let name_len = rest.find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.')).unwrap_or(rest.len());
        if name_len == 0 || rest.starts_with("interface") {
            return src;
        }
        let mut after = skip_ws(&rest[name_len..]);
        if after.starts_with('(') {
            let mut depth = 0usize;
            let mut end = after.len();
            for (i, c) in after.char_indices() {
                match c {
                    '(' => depth += 1,
                    ')' => {
                        depth -= 1;
                        if depth == 0 {
                            end = i + 1;
                            break;
                        }
                    }
                    _ => {}
                }
            }
            after = &after[end..];
        }
        src = after;
    }
}

/// Keeps the signature and docstring of a focal method and discards its body.
///
/// An empty `docstring` falls back to a javadoc comment leading the source.
pub fn strip_implementation(focal_source: &str, docstring: &str) -> Result<UnitContext, ParseError> {
    let (javadoc, rest) = leading_comments(focal_source);
    let rest = skip_annotations(rest);
    let header_end = rest.find(['{', ';']).unwrap_or(rest.len());
    let signature = parse_method_signature(&rest[..header_end])?;
    let docstring = if docstring.is_empty() { javadoc.unwrap_or("") } else { docstring };
    Ok(UnitContext {
        class_name: String::new(),
        signature,
        docstring: docstring.to_string(),
        implementation_present: false,
    })
}

fn context_of(raw: &RawSample) -> Result<UnitContext, DropReason> {
    let mut ctx = strip_implementation(&raw.focal_method, &raw.docstring).map_err(|_| DropReason::FocalParseError)?;
    ctx.class_name = raw.class_name.clone();
    Ok(ctx)
}

/// One exception sample from one raw record; `index` numbers the test name.
pub fn exception_sample(index: u64, raw: &RawSample) -> Result<ExceptionSample, DropReason> {
    let test = parse_test_method(&raw.test).map_err(|_| DropReason::TestParseError)?;
    let test = normalize_test_name(&test, index);
    let context = context_of(raw)?;
    let (prefix, label) = match strip_oracles(&test) {
        Stripped::Oracles(r) => {
            let label = u8::from(r.is_expected_exception());
            (r.prefix, label)
        }
        Stripped::NoOracle { prefix } => (prefix, 0),
    };
    if prefix.is_empty() {
        return Err(DropReason::EmptyPrefix);
    }
    Ok(ExceptionSample { group_id: group_id(index, &prefix, &context), split: Split::of(raw), test_name: test.name, prefix, context, label })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertionOutcome {
    pub result: Result<Vec<AssertionSample>, DropReason>,
    pub oov_groups: u64,
}

/// Candidate-labelled samples for every in-grammar assertion of one record.
///
/// Each assertion of the test forms its own group. A group whose ground truth
/// is not among the candidates is counted as out-of-vocab and emitted (with
/// all labels 0) only when `keep_oov` is set.
pub fn assertion_samples(index: u64, raw: &RawSample, g: &GlobalConstantTable, keep_oov: bool) -> AssertionOutcome {
    let fail = |r| AssertionOutcome { result: Err(r), oov_groups: 0 };
    let test = match parse_test_method(&raw.test) {
        Ok(t) => normalize_test_name(&t, index),
        Err(_) => return fail(DropReason::TestParseError),
    };
    let context = match context_of(raw) {
        Ok(c) => c,
        Err(r) => return fail(r),
    };
    let result = match strip_oracles(&test) {
        Stripped::NoOracle { .. } => return fail(DropReason::NoOracle),
        Stripped::Oracles(r) if r.is_expected_exception() => return fail(DropReason::ExpectedException),
        Stripped::Oracles(r) => r,
    };
    if result.per_oracle_prefixes.is_empty() {
        return fail(DropReason::OutOfGrammar);
    }
    let split = Split::of(raw);
    let mut samples = Vec::new();
    let mut oov_groups = 0;
    let mut first_failure = None;
    for (prefix, oracle) in &result.per_oracle_prefixes {
        let Oracle::Assertion { form: truth } = oracle else { continue };
        let cs = match create_candidate_templates(g, g.k(), prefix) {
            Ok(cs) => cs,
            Err(CandidateError::NoAssignment | CandidateError::UndeclaredVariable(_)) => {
                first_failure.get_or_insert(DropReason::NoAssignment);
                continue;
            }
        };
        let hit = cs.position(truth);
        if hit.is_none() {
            oov_groups += 1;
            if !keep_oov {
                first_failure.get_or_insert(DropReason::OutOfVocab);
                continue;
            }
        }
        let gid = group_id(index, prefix, &context);
        for (i, c) in cs.candidates().iter().enumerate() {
            samples.push(AssertionSample {
                group_id: gid.clone(),
                split,
                test_name: test.name.clone(),
                prefix: prefix.clone(),
                context: context.clone(),
                candidate: c.form.clone(),
                provenance: c.provenance,
                global_rank: c.global_rank,
                label: u8::from(hit == Some(i)),
                truth: truth.clone(),
            });
        }
    }
    let result = match (samples.is_empty(), first_failure) {
        (true, Some(r)) => Err(r),
        (true, None) => Err(DropReason::NoAssignment),
        (false, _) => Ok(samples),
    };
    AssertionOutcome { result, oov_groups }
}

/// Builds the exception dataset over an in-memory corpus. Record `i` is
/// numbered `first_index + i`.
pub fn build_exception_dataset(corpus: &[RawSample], first_index: u64) -> (Vec<ExceptionSample>, BuildReport) {
    let outcomes: Vec<_> =
        corpus.par_iter().enumerate().map(|(i, raw)| exception_sample(first_index + i as u64, raw)).collect();
    let mut report = BuildReport::default();
    let mut out = Vec::new();
    for o in outcomes {
        report.record_exception(&o);
        out.extend(o.ok());
    }
    (out, report)
}

pub fn build_assertion_dataset(
    corpus: &[RawSample],
    first_index: u64,
    g: &GlobalConstantTable,
    keep_oov: bool,
) -> (Vec<AssertionSample>, BuildReport) {
    let outcomes: Vec<_> = corpus
        .par_iter()
        .enumerate()
        .map(|(i, raw)| assertion_samples(first_index + i as u64, raw, g, keep_oov))
        .collect();
    let mut report = BuildReport::default();
    let mut out = Vec::new();
    for o in outcomes {
        report.record_assertion(&o);
        if let Ok(s) = o.result {
            out.extend(s);
        }
    }
    (out, report)
}

/// Ground-truth assertions of every record, for building the constant table.
pub fn ground_truth_assertions(raw: &RawSample) -> Vec<AssertionForm> {
    let Ok(test) = parse_test_method(&raw.test) else { return Vec::new() };
    match strip_oracles(&test) {
        Stripped::Oracles(r) => r
            .oracles
            .into_iter()
            .filter_map(|o| match o {
                Oracle::Assertion { form } => Some(form),
                Oracle::ExpectedException { .. } => None,
            })
            .collect(),
        Stripped::NoOracle { .. } => Vec::new(),
    }
}
